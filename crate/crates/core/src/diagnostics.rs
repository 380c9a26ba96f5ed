//! Optimization-view quantities for the scaling problem: the cost
//!
//! ```text
//! f(X, Y) = tr(X Φ(Y)) − (1/m) log det X − (1/n) log det Y,
//! ```
//!
//! its gradient and Hessian, the gradient-norm error measure shared by all
//! solvers, spectral rate predictions, sampled Hilbert-metric contraction
//! factors, and sampled geodesic-convexity checks.
//!
//! The solvers' error measure is
//!
//! ```text
//! err(L, R) = √( ‖Σ B_i B_iᵀ − (1/m) I_m‖_F² + ‖Σ B_iᵀ B_i − (1/n) I_n‖_F² ),
//! B = L A Rᵀ,
//! ```
//!
//! which equals the Frobenius norm of ∇f for the scaled collection at the
//! identity pair, and at `(X, Y) = (LᵀL, RᵀR)` coincides with the norm of
//! the gradient of `f` measured in the affine-invariant metric of the
//! cones, `√(tr(∇_Xf·X·∇_Xf·X) + tr(∇_Yf·Y·∇_Yf·Y))`.
//!
//! Dense Hessian materializations use the orthonormal basis of symmetric
//! matrices consisting of `E_ii` and `(E_ij + E_ji)/√2`, ordered
//! lexicographically by `(i, j)` with `i ≤ j`.

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::cones::{geodesic, hilbert_distance, pd_inverse, random_pd, PDMatrix, PDPair, SymMatrix};
use crate::cpmap::{apply_cp, cp_apply_raw, cp_dual_raw, gram_left, gram_right, partial_min_x,
    partial_min_y, KrausCollection};
use crate::error::{Error, Result};
use crate::solvers::FactorPair;

/// Largest dense symmetric-pair dimension `m(m+1)/2 + n(n+1)/2` we are
/// willing to materialize.
pub const MAX_DENSE_DIM: usize = 2000;

fn check_pair_dims(a: &KrausCollection, pair: &PDPair) -> Result<()> {
    if pair.x.dim() != a.m() || pair.y.dim() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: (a.m(), a.n()),
            found: (pair.x.dim(), pair.y.dim()),
        });
    }
    Ok(())
}

/// The gradient-norm error of the scaled collection `L A Rᵀ`.
pub fn gradient_norm(a: &KrausCollection, factors: &FactorPair) -> Result<f64> {
    let (m, n) = (a.m(), a.n());
    let (fm, fn_) = factors.dims();
    if fm != m || fn_ != n {
        return Err(Error::DimensionMismatch {
            expected: (m, n),
            found: (fm, fn_),
        });
    }
    let scaled = factors.scaled_matrices(a);
    let mut left = gram_left(&scaled);
    for i in 0..m {
        left[(i, i)] -= 1.0 / m as f64;
    }
    let mut right = gram_right(&scaled);
    for i in 0..n {
        right[(i, i)] -= 1.0 / n as f64;
    }
    Ok((left.norm_squared() + right.norm_squared()).sqrt())
}

/// The scaling cost `f(X, Y)`. Both the `Φ` and `Φ*` pairings give the
/// same value; the first is used.
pub fn cost(a: &KrausCollection, pair: &PDPair) -> Result<f64> {
    check_pair_dims(a, pair)?;
    let phi = apply_cp(a, pair.y.as_sym())?;
    Ok(pair.x.as_sym().dot(&phi)
        - pair.x.log_det() / a.m() as f64
        - pair.y.log_det() / a.n() as f64)
}

/// The partial gradients
/// `(∇_X f, ∇_Y f) = (Φ(Y) − (1/m)X⁻¹, Φ*(X) − (1/n)Y⁻¹)`.
pub fn cost_gradient(a: &KrausCollection, pair: &PDPair) -> Result<(SymMatrix, SymMatrix)> {
    check_pair_dims(a, pair)?;
    let gx = cp_apply_raw(a.matrices(), pair.y.as_matrix())
        - pd_inverse(&pair.x)?.as_matrix() / a.m() as f64;
    let gy = cp_dual_raw(a.matrices(), pair.x.as_matrix())
        - pd_inverse(&pair.y)?.as_matrix() / a.n() as f64;
    Ok((SymMatrix::new(gx)?, SymMatrix::new(gy)?))
}

/// The Hessian of `f` at an anchor pair, as a linear operator on pairs of
/// symmetric matrices:
///
/// ```text
/// (H₁, H₂) ↦ ( Φ(H₂) + (1/m) X⁻¹H₁X⁻¹,  Φ*(H₁) + (1/n) Y⁻¹H₂Y⁻¹ ).
/// ```
///
/// Linear and self-adjoint under the Frobenius pairing. The operator is
/// well defined at any anchor; its null-space characterization applies at
/// fixed points.
pub struct HessianOperator {
    a: KrausCollection,
    x_inv: DMatrix<f64>,
    y_inv: DMatrix<f64>,
}

impl HessianOperator {
    pub fn new(a: &KrausCollection, anchor: &PDPair) -> Result<Self> {
        check_pair_dims(a, anchor)?;
        Ok(HessianOperator {
            a: a.clone(),
            x_inv: pd_inverse(&anchor.x)?.as_matrix().clone(),
            y_inv: pd_inverse(&anchor.y)?.as_matrix().clone(),
        })
    }

    pub fn apply(&self, h1: &SymMatrix, h2: &SymMatrix) -> Result<(SymMatrix, SymMatrix)> {
        let (m, n) = (self.a.m(), self.a.n());
        if h1.dim() != m || h2.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: (m, n),
                found: (h1.dim(), h2.dim()),
            });
        }
        let out1 = cp_apply_raw(self.a.matrices(), h2.as_matrix())
            + &self.x_inv * h1.as_matrix() * &self.x_inv / m as f64;
        let out2 = cp_dual_raw(self.a.matrices(), h1.as_matrix())
            + &self.y_inv * h2.as_matrix() * &self.y_inv / n as f64;
        Ok((SymMatrix::new(out1)?, SymMatrix::new(out2)?))
    }
}

// ---------------------------------------------------------------------------
// Orthonormal coordinates on pairs of symmetric matrices
// ---------------------------------------------------------------------------

/// Dimension of the space of symmetric `d×d` matrices.
pub fn sym_dim(d: usize) -> usize {
    d * (d + 1) / 2
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Coordinates of a symmetric matrix in the fixed orthonormal basis.
pub fn sym_to_coords(s: &SymMatrix) -> DVector<f64> {
    let d = s.dim();
    let mut out = DVector::zeros(sym_dim(d));
    let mut idx = 0;
    for i in 0..d {
        for j in i..d {
            out[idx] = if i == j {
                s.as_matrix()[(i, i)]
            } else {
                SQRT2 * s.as_matrix()[(i, j)]
            };
            idx += 1;
        }
    }
    out
}

/// Inverse of [`sym_to_coords`].
pub fn coords_to_sym(v: &DVector<f64>, d: usize) -> SymMatrix {
    let mut m = DMatrix::zeros(d, d);
    let mut idx = 0;
    for i in 0..d {
        for j in i..d {
            if i == j {
                m[(i, i)] = v[idx];
            } else {
                m[(i, j)] = v[idx] / SQRT2;
                m[(j, i)] = v[idx] / SQRT2;
            }
            idx += 1;
        }
    }
    SymMatrix::new(m).expect("construction from coordinates is square")
}

/// Stacked coordinates of a pair of symmetric matrices.
pub fn pair_to_coords(h1: &SymMatrix, h2: &SymMatrix) -> DVector<f64> {
    let c1 = sym_to_coords(h1);
    let c2 = sym_to_coords(h2);
    let mut out = DVector::zeros(c1.len() + c2.len());
    out.rows_mut(0, c1.len()).copy_from(&c1);
    out.rows_mut(c1.len(), c2.len()).copy_from(&c2);
    out
}

/// Inverse of [`pair_to_coords`].
pub fn coords_to_pair(v: &DVector<f64>, m: usize, n: usize) -> (SymMatrix, SymMatrix) {
    let mm = sym_dim(m);
    let h1 = coords_to_sym(&DVector::from(v.rows(0, mm).into_owned()), m);
    let h2 = coords_to_sym(&DVector::from(v.rows(mm, sym_dim(n)).into_owned()), n);
    (h1, h2)
}

/// Dense materialization of the Hessian at an anchor, in the fixed
/// orthonormal basis. Symmetric by self-adjointness (re-symmetrized to
/// kill roundoff).
pub fn hessian_matrix(a: &KrausCollection, anchor: &PDPair) -> Result<DMatrix<f64>> {
    let (m, n) = (a.m(), a.n());
    let total = sym_dim(m) + sym_dim(n);
    if total > MAX_DENSE_DIM {
        return Err(Error::DimensionTooLarge {
            size: total,
            max: MAX_DENSE_DIM,
        });
    }
    let op = HessianOperator::new(a, anchor)?;
    let mut out = DMatrix::zeros(total, total);
    let mut basis = DVector::zeros(total);
    for j in 0..total {
        basis[j] = 1.0;
        let (h1, h2) = coords_to_pair(&basis, m, n);
        basis[j] = 0.0;
        let (g1, g2) = op.apply(&h1, &h2)?;
        out.set_column(j, &pair_to_coords(&g1, &g2));
    }
    Ok((&out + out.transpose()) * 0.5)
}

/// Sorted (ascending) eigenvalues of the dense Hessian at `anchor`.
///
/// At a fixed point of a positivity-improving instance the spectrum is
/// nonnegative with exactly one eigenvalue at zero, whose eigenvector is
/// the orbit direction `(X, −Y)`.
pub fn hessian_spectrum(a: &KrausCollection, anchor: &PDPair) -> Result<Vec<f64>> {
    let h = hessian_matrix(a, anchor)?;
    let mut eigs: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(eigs)
}

/// Spectral radius of the linearized relaxed iteration at a fixed point,
/// restricted to the complement of the orbit direction.
///
/// Builds the error-iteration operator `T_ω = I − N_ω⁻¹ ∇²f` from the
/// dense Hessian, where `N_ω` keeps the `(1/ω)`-scaled diagonal blocks and
/// the lower-left block of the Hessian. The orbit direction carries the
/// eigenvalue 1; it is removed by deflating the eigenvalue closest to 1
/// and the maximum modulus of the remaining spectrum is returned. At
/// `ω = 1` this is the asymptotic rate β² of the plain iteration.
pub fn local_rate_from_hessian(a: &KrausCollection, fixed: &PDPair, omega: f64) -> Result<f64> {
    if !(omega > 0.0 && omega < 2.0) {
        return Err(Error::Domain(format!("omega must lie in (0, 2), got {omega}")));
    }
    let g = gradient_norm(a, &FactorPair::from_pd_pair(fixed)?)?;
    if g > 1e-8 {
        return Err(Error::NotConverged { gradient_norm: g });
    }
    let h = hessian_matrix(a, fixed)?;
    let mm = sym_dim(a.m());
    let total = h.nrows();

    let mut n_mat = DMatrix::zeros(total, total);
    for i in 0..total {
        for j in 0..total {
            if (i < mm) == (j < mm) {
                n_mat[(i, j)] = h[(i, j)] / omega;
            } else if i >= mm {
                // lower-left block (mixed second derivative ∇_YX f)
                n_mat[(i, j)] = h[(i, j)];
            }
        }
    }
    let t_mat = DMatrix::identity(total, total)
        - n_mat.lu().solve(&h).ok_or(Error::Singular)?;
    let eigs = t_mat.complex_eigenvalues();

    let orbit_idx = (0..eigs.len())
        .min_by(|&i, &j| {
            let di = (eigs[i] - Complex::new(1.0, 0.0)).norm();
            let dj = (eigs[j] - Complex::new(1.0, 0.0)).norm();
            di.partial_cmp(&dj).unwrap()
        })
        .expect("spectrum is nonempty");
    Ok(eigs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != orbit_idx)
        .map(|(_, l)| l.norm())
        .fold(0.0, f64::max))
}

/// Sampled lower bounds `(Λ̂₁, Λ̂₂)` on the Hilbert-metric Lipschitz
/// constants of the two partial minimizers. Each trial draws a pair of
/// random positive definite matrices (`G Gᵀ + 10⁻³ I`) and records the
/// realized contraction ratio; the maxima over trials are returned.
///
/// These are lower bounds only: the true constants are suprema over the
/// whole cone.
pub fn sample_contraction(a: &KrausCollection, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let tau = 1e-3;
    let (mut l1, mut l2) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let y = random_pd(a.n(), tau, &mut rng);
        let y2 = random_pd(a.n(), tau, &mut rng);
        let dy = hilbert_distance(&y, &y2)?;
        if dy > 1e-9 {
            let img = hilbert_distance(&partial_min_x(a, &y)?, &partial_min_x(a, &y2)?)?;
            l1 = l1.max(img / dy);
        }
        let x = random_pd(a.m(), tau, &mut rng);
        let x2 = random_pd(a.m(), tau, &mut rng);
        let dx = hilbert_distance(&x, &x2)?;
        if dx > 1e-9 {
            let img = hilbert_distance(&partial_min_y(a, &x)?, &partial_min_y(a, &x2)?)?;
            l2 = l2.max(img / dx);
        }
    }
    Ok((l1, l2))
}

/// Outcome of a sampled geodesic-convexity check.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    /// Which inequality was sampled.
    pub check: String,
    pub samples: usize,
    /// Largest observed `lhs − rhs`; negative means the inequality held
    /// with room to spare everywhere.
    pub worst_slack: f64,
    pub violations: usize,
    pub pass: bool,
}

/// Convexity slack beyond which a sample counts as a violation.
pub const CONVEXITY_SLACK: f64 = 1e-9;

/// Samples the joint geodesic-convexity inequality
///
/// ```text
/// f(geodesic(X, X~, ω), geodesic(Y, Y~, ω)) ≤ (1−ω) f(X, Y) + ω f(X~, Y~)
/// ```
///
/// for ω ∈ [0, 1], both for the full cost and for each single pairing term
/// `tr(X A_i Y A_iᵀ)`. Reports the worst slack seen for each.
pub fn geodesic_convexity_check(
    a: &KrausCollection,
    samples: usize,
    seed: u64,
) -> Result<Vec<ConvexityReport>> {
    if samples == 0 {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (m, n) = (a.m(), a.n());
    let mut worst_cost = f64::NEG_INFINITY;
    let mut worst_term = f64::NEG_INFINITY;
    let mut violations_cost = 0;
    let mut violations_term = 0;

    for _ in 0..samples {
        let x = random_pd(m, 0.1, &mut rng);
        let x2 = random_pd(m, 0.1, &mut rng);
        let y = random_pd(n, 0.1, &mut rng);
        let y2 = random_pd(n, 0.1, &mut rng);
        let omega: f64 = rand::Rng::random_range(&mut rng, 0.0..=1.0);
        let xg = geodesic(&x, &x2, omega)?;
        let yg = geodesic(&y, &y2, omega)?;

        let lhs = cost(a, &PDPair::new(xg.clone(), yg.clone()))?;
        let rhs = (1.0 - omega) * cost(a, &PDPair::new(x.clone(), y.clone()))?
            + omega * cost(a, &PDPair::new(x2.clone(), y2.clone()))?;
        let slack = lhs - rhs;
        worst_cost = worst_cost.max(slack);
        if slack > CONVEXITY_SLACK {
            violations_cost += 1;
        }

        for ai in a.matrices() {
            let term = |u: &PDMatrix, v: &PDMatrix| {
                (u.as_matrix() * ai * v.as_matrix() * ai.transpose()).trace()
            };
            let slack = term(&xg, &yg)
                - ((1.0 - omega) * term(&x, &y) + omega * term(&x2, &y2));
            worst_term = worst_term.max(slack);
            if slack > CONVEXITY_SLACK {
                violations_term += 1;
            }
        }
    }

    Ok(vec![
        ConvexityReport {
            check: "cost_function".into(),
            samples,
            worst_slack: worst_cost,
            violations: violations_cost,
            pass: violations_cost == 0,
        },
        ConvexityReport {
            check: "kraus_pairing_term".into(),
            samples: samples * a.k(),
            worst_slack: worst_term,
            violations: violations_term,
            pass: violations_term == 0,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::gauss;
    use crate::cpmap::{apply_cp_dual, gen_gaussian_instance, KrausCollection};
    use crate::solvers::{solve, Method, SolverConfig};
    use crate::trace::TerminalStatus;
    use rand::SeedableRng;

    fn converged_pair(a: &KrausCollection) -> PDPair {
        let cfg = SolverConfig::new(Method::Ffpi)
            .with_max_iter(2000)
            .with_tol(1e-13);
        let out = solve(a, &cfg).unwrap();
        assert_eq!(out.trace.status, TerminalStatus::Converged);
        out.pair
    }

    #[test]
    fn gradient_norm_identity_case() {
        let a = KrausCollection::identity(2);
        let f = FactorPair::identity(2, 2);
        assert!((gradient_norm(&a, &f).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn gradient_norm_zero_at_solution() {
        let a = gen_gaussian_instance(4, 4, 6, 17).unwrap();
        let star = converged_pair(&a);
        let f = FactorPair::from_pd_pair(&star).unwrap();
        assert!(gradient_norm(&a, &f).unwrap() <= 1e-13);
    }

    #[test]
    fn gradient_norm_matches_gradient_routes() {
        let a = gen_gaussian_instance(4, 3, 6, 23).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let pair = PDPair::new(random_pd(4, 0.2, &mut rng), random_pd(3, 0.2, &mut rng));
        let factors = FactorPair::from_pd_pair(&pair).unwrap();
        let err = gradient_norm(&a, &factors).unwrap();

        // route 1: plain Frobenius gradient norm of the scaled problem at
        // the identity pair
        let scaled = KrausCollection::new(factors.scaled_matrices(&a), None).unwrap();
        let (g1, g2) = cost_gradient(&scaled, &PDPair::identity(4, 3)).unwrap();
        let direct = (g1.norm().powi(2) + g2.norm().powi(2)).sqrt();
        assert!((err - direct).abs() <= 1e-11 * (1.0 + err), "{err} vs {direct}");

        // route 2: affine-invariant norm of the gradient of the original
        // problem at (LᵀL, RᵀR)
        let (gx, gy) = cost_gradient(&a, &pair).unwrap();
        let ai = |g: &SymMatrix, p: &PDMatrix| {
            (g.as_matrix() * p.as_matrix() * g.as_matrix() * p.as_matrix()).trace()
        };
        let invariant = (ai(&gx, &pair.x) + ai(&gy, &pair.y)).sqrt();
        assert!(
            (err - invariant).abs() <= 1e-10 * (1.0 + err),
            "{err} vs {invariant}"
        );
    }

    #[test]
    fn cost_identity_and_orbit_constancy() {
        let n = 5;
        let a = KrausCollection::identity(n);
        let p = PDPair::identity(n, n);
        assert!((cost(&a, &p).unwrap() - n as f64).abs() <= 1e-13);

        let a = gen_gaussian_instance(3, 4, 6, 29).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let pair = PDPair::new(random_pd(3, 0.2, &mut rng), random_pd(4, 0.2, &mut rng));
        let base = cost(&a, &pair).unwrap();
        for mu in [0.5, 3.0] {
            let scaled = PDPair::new(pair.x.scale(mu), pair.y.scale(1.0 / mu));
            let val = cost(&a, &scaled).unwrap();
            assert!((val - base).abs() <= 1e-11 * (1.0 + base.abs()), "{val} vs {base}");
        }
    }

    #[test]
    fn cost_agrees_between_primal_and_dual_pairing() {
        let a = gen_gaussian_instance(4, 3, 5, 37).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let pair = PDPair::new(random_pd(4, 0.2, &mut rng), random_pd(3, 0.2, &mut rng));
        let primal = cost(&a, &pair).unwrap();
        let dual_pairing = apply_cp_dual(&a, pair.x.as_sym())
            .unwrap()
            .dot(pair.y.as_sym())
            - pair.x.log_det() / 4.0
            - pair.y.log_det() / 3.0;
        assert!((primal - dual_pairing).abs() <= 1e-12 * (1.0 + primal.abs()));
    }

    #[test]
    fn cost_decreases_along_plain_iteration() {
        let a = gen_gaussian_instance(4, 4, 6, 41).unwrap();
        let mut pair = PDPair::identity(4, 4);
        let mut last = cost(&a, &pair).unwrap();
        for _ in 0..20 {
            pair = crate::solvers::fpi_step(&a, &pair).unwrap();
            let next = cost(&a, &pair).unwrap();
            assert!(next <= last + 1e-12, "{next} > {last}");
            last = next;
        }
    }

    #[test]
    fn gradient_vanishes_at_partial_minimizer_and_fixed_point() {
        let a = gen_gaussian_instance(4, 3, 6, 43).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let y = random_pd(3, 0.2, &mut rng);
        let x = partial_min_x(&a, &y).unwrap();
        let scale = apply_cp(&a, y.as_sym()).unwrap().norm();
        let (gx, _) = cost_gradient(&a, &PDPair::new(x, y)).unwrap();
        assert!(gx.norm() <= 1e-12 * (1.0 + scale), "{} vs scale {scale}", gx.norm());

        let a = gen_gaussian_instance(4, 4, 6, 47).unwrap();
        let star = converged_pair(&a);
        let (gx, gy) = cost_gradient(&a, &star).unwrap();
        let scale_x = apply_cp(&a, star.y.as_sym()).unwrap().norm();
        let scale_y = apply_cp_dual(&a, star.x.as_sym()).unwrap().norm();
        assert!(gx.norm() <= 1e-12 * (1.0 + scale_x));
        assert!(gy.norm() <= 1e-12 * (1.0 + scale_y));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = gen_gaussian_instance(3, 4, 6, 53).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let pair = PDPair::new(random_pd(3, 0.5, &mut rng), random_pd(4, 0.5, &mut rng));
        let (gx, gy) = cost_gradient(&a, &pair).unwrap();
        let h1 = SymMatrix::from_fn(3, |_, _| gauss(&mut rng));
        let h2 = SymMatrix::from_fn(4, |_, _| gauss(&mut rng));
        let analytic = gx.dot(&h1) + gy.dot(&h2);

        let h = 1e-5;
        let shift = |s: f64| {
            let x = PDMatrix::from_matrix(pair.x.as_matrix() + h1.as_matrix() * (s * h)).unwrap();
            let y = PDMatrix::from_matrix(pair.y.as_matrix() + h2.as_matrix() * (s * h)).unwrap();
            cost(&a, &PDPair::new(x, y)).unwrap()
        };
        let numeric = (shift(1.0) - shift(-1.0)) / (2.0 * h);
        assert!(
            (analytic - numeric).abs() <= 1e-6 * (1.0 + analytic.abs()),
            "{analytic} vs {numeric}"
        );
    }

    #[test]
    fn hessian_orbit_direction_in_null_space() {
        let a = gen_gaussian_instance(4, 4, 6, 59).unwrap();
        let star = converged_pair(&a);
        let op = HessianOperator::new(&a, &star).unwrap();
        let minus_y = SymMatrix::new(-star.y.as_matrix().clone()).unwrap();
        let (o1, o2) = op.apply(star.x.as_sym(), &minus_y).unwrap();
        assert!(o1.norm() <= 1e-10, "{}", o1.norm());
        assert!(o2.norm() <= 1e-10, "{}", o2.norm());
    }

    #[test]
    fn hessian_self_adjoint_and_diagonal_block() {
        let a = gen_gaussian_instance(3, 4, 6, 61).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let anchor = PDPair::new(random_pd(3, 0.2, &mut rng), random_pd(4, 0.2, &mut rng));
        let op = HessianOperator::new(&a, &anchor).unwrap();
        let h1 = SymMatrix::from_fn(3, |_, _| gauss(&mut rng));
        let h2 = SymMatrix::from_fn(4, |_, _| gauss(&mut rng));
        let g1 = SymMatrix::from_fn(3, |_, _| gauss(&mut rng));
        let g2 = SymMatrix::from_fn(4, |_, _| gauss(&mut rng));
        let hg = op.apply(&h1, &h2).unwrap();
        let gh = op.apply(&g1, &g2).unwrap();
        let lhs = hg.0.dot(&g1) + hg.1.dot(&g2);
        let rhs = gh.0.dot(&h1) + gh.1.dot(&h2);
        assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));

        // first diagonal block alone: (H₁, 0) ↦ (1/m) X⁻¹H₁X⁻¹ + Φ(0)
        let zero = SymMatrix::zeros(4);
        let (d1, _) = op.apply(&h1, &zero).unwrap();
        let xinv = pd_inverse(&anchor.x).unwrap();
        let expect = xinv.as_matrix() * h1.as_matrix() * xinv.as_matrix() / 3.0;
        assert!((d1.as_matrix() - &expect).norm() <= 1e-12 * (1.0 + expect.norm()));
    }

    #[test]
    fn hessian_matches_finite_difference_of_gradient() {
        let a = gen_gaussian_instance(3, 3, 5, 67).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let anchor = PDPair::new(random_pd(3, 0.5, &mut rng), random_pd(3, 0.5, &mut rng));
        let op = HessianOperator::new(&a, &anchor).unwrap();
        let h1 = SymMatrix::from_fn(3, |_, _| gauss(&mut rng));
        let h2 = SymMatrix::from_fn(3, |_, _| gauss(&mut rng));
        let (a1, a2) = op.apply(&h1, &h2).unwrap();

        let h = 1e-5;
        let grad_at = |s: f64| {
            let x = PDMatrix::from_matrix(anchor.x.as_matrix() + h1.as_matrix() * (s * h)).unwrap();
            let y = PDMatrix::from_matrix(anchor.y.as_matrix() + h2.as_matrix() * (s * h)).unwrap();
            cost_gradient(&a, &PDPair::new(x, y)).unwrap()
        };
        let (gp, gq) = grad_at(1.0);
        let (gm, gn) = grad_at(-1.0);
        let n1 = (gp.as_matrix() - gm.as_matrix()) / (2.0 * h);
        let n2 = (gq.as_matrix() - gn.as_matrix()) / (2.0 * h);
        assert!((a1.as_matrix() - &n1).norm() <= 1e-5 * (1.0 + n1.norm()));
        assert!((a2.as_matrix() - &n2).norm() <= 1e-5 * (1.0 + n2.norm()));
    }

    #[test]
    fn hessian_spectrum_identity_instance_explicit() {
        // For the single-operator identity collection at its balanced
        // fixed point X = Y = 2^{-1/2} I the operator sends (H₁, H₂) to
        // (H₂ + H₁, H₁ + H₂), whose matrix is [[I, I], [I, I]] with
        // eigenvalues {0, 0, 0, 2, 2, 2}.
        let a = KrausCollection::identity(2);
        let s = 1.0 / 2.0f64.sqrt();
        let star = PDPair::new(PDMatrix::identity(2).scale(s), PDMatrix::identity(2).scale(s));
        let eigs = hessian_spectrum(&a, &star).unwrap();
        let expect = [0.0, 0.0, 0.0, 2.0, 2.0, 2.0];
        for (got, want) in eigs.iter().zip(expect) {
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn coords_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let s = SymMatrix::from_fn(5, |_, _| gauss(&mut rng));
        let v = sym_to_coords(&s);
        let back = coords_to_sym(&v, 5);
        assert!((back.as_matrix() - s.as_matrix()).norm() <= 1e-15);
        // the basis is orthonormal: coordinates preserve the norm
        assert!((v.norm() - s.norm()).abs() <= 1e-13);
    }

    #[test]
    fn local_rate_requires_fixed_point() {
        let a = gen_gaussian_instance(3, 3, 5, 71).unwrap();
        let anchor = PDPair::identity(3, 3);
        assert!(matches!(
            local_rate_from_hessian(&a, &anchor, 1.0),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn contraction_identity_instance_is_isometry() {
        let a = KrausCollection::identity(3);
        let (l1, l2) = sample_contraction(&a, 20, 3).unwrap();
        assert!((l1 - 1.0).abs() <= 1e-10, "{l1}");
        assert!((l2 - 1.0).abs() <= 1e-10, "{l2}");
    }

    #[test]
    fn contraction_gaussian_instance_contracts() {
        let a = gen_gaussian_instance(4, 4, 6, 73).unwrap();
        let (l1, l2) = sample_contraction(&a, 30, 5).unwrap();
        assert!(l1 < 1.0, "{l1}");
        assert!(l2 < 1.0, "{l2}");
        assert!(l1 > 0.0 && l2 > 0.0);
    }

    #[test]
    fn convexity_endpoints_are_equalities() {
        let a = gen_gaussian_instance(3, 2, 4, 79).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let x = random_pd(3, 0.1, &mut rng);
        let x2 = random_pd(3, 0.1, &mut rng);
        let y = random_pd(2, 0.1, &mut rng);
        let y2 = random_pd(2, 0.1, &mut rng);
        for omega in [0.0, 1.0] {
            let xg = geodesic(&x, &x2, omega).unwrap();
            let yg = geodesic(&y, &y2, omega).unwrap();
            let lhs = cost(&a, &PDPair::new(xg, yg)).unwrap();
            let rhs = (1.0 - omega) * cost(&a, &PDPair::new(x.clone(), y.clone())).unwrap()
                + omega * cost(&a, &PDPair::new(x2.clone(), y2.clone())).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn convexity_smoke() {
        let a = gen_gaussian_instance(4, 3, 5, 83).unwrap();
        let reports = geodesic_convexity_check(&a, 50, 7).unwrap();
        for r in &reports {
            assert!(r.pass, "{}: worst slack {}", r.check, r.worst_slack);
        }
    }
}
