//! Primitive operations on symmetric positive definite matrices.
//!
//! This module provides the cone geometry everything else is built on:
//! Cholesky factors with a fixed lower-triangular convention, inverses
//! through triangular solves, fractional matrix powers, the Hilbert
//! projective metric
//!
//! ```text
//! d_H(X, X~) = log( λ_max(W) / λ_min(W) ),   W = X~^{-1/2} X X~^{-1/2},
//! ```
//!
//! weighted geodesics
//!
//! ```text
//! geodesic(X, X~, ω) = X^{1/2} (X^{-1/2} X~ X^{-1/2})^ω X^{1/2},
//! ```
//!
//! and the balancing map that picks the orbit representative with
//! `‖X‖_F = ‖Y‖_F`.
//!
//! Conventions used throughout the crate:
//! * every symmetric matrix is re-symmetrized as `(M + Mᵀ)/2` when it is
//!   constructed, so drift out of the symmetric subspace cannot accumulate;
//! * "positive definite" means "the lower Cholesky factorization with
//!   positive diagonal succeeds"; there is no separate eigenvalue threshold;
//! * fractional powers go through a symmetric eigendecomposition;
//! * `d_H` is evaluated through the congruence `G^{-1} X G^{-T}` with
//!   `G Gᵀ = X~`, which has the same spectrum as `X~^{-1/2} X X~^{-1/2}`
//!   and avoids matrix square roots.
//!
//! All types are immutable after construction and all operations are pure,
//! so values can be shared and moved freely across threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A square real matrix that is symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a square matrix, enforcing symmetry as `(M + Mᵀ)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: (m.nrows(), m.nrows()),
                found: (m.nrows(), m.ncols()),
            });
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(SymMatrix { data: sym })
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix {
            data: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            data: DMatrix::zeros(dim, dim),
        }
    }

    /// Builds from an entry function; the result is symmetrized.
    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        let m = DMatrix::from_fn(dim, dim, f);
        SymMatrix {
            data: (&m + m.transpose()) * 0.5,
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    /// Frobenius inner product `tr(AᵀB) = tr(AB)`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.data.dot(other.as_matrix())
    }
}

/// A symmetric positive definite matrix together with its lower Cholesky
/// factor, computed once at construction. Failing to factor is how
/// "not positive definite" is detected everywhere in this crate.
#[derive(Debug, Clone)]
pub struct PDMatrix {
    sym: SymMatrix,
    chol: DMatrix<f64>,
}

impl PDMatrix {
    /// Validates positive definiteness by attempting a Cholesky
    /// factorization.
    pub fn new(sym: SymMatrix) -> Result<Self> {
        let chol = chol_lower_raw(sym.as_matrix())?;
        Ok(PDMatrix { sym, chol })
    }

    /// Symmetrizes and validates a raw square matrix.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn identity(dim: usize) -> Self {
        PDMatrix {
            sym: SymMatrix::identity(dim),
            chol: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.sym.dim()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.sym.as_matrix()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.sym
    }

    pub fn into_sym(self) -> SymMatrix {
        self.sym
    }

    /// The lower Cholesky factor `G` with `G Gᵀ = M` computed at
    /// construction.
    pub(crate) fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Scales by a positive scalar; the stored factor scales by `√μ`.
    pub fn scale(&self, mu: f64) -> PDMatrix {
        assert!(mu > 0.0, "scale factor must be positive");
        PDMatrix {
            sym: SymMatrix {
                data: self.sym.as_matrix() * mu,
            },
            chol: &self.chol * mu.sqrt(),
        }
    }

    /// `log det M`, read off the Cholesky diagonal.
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.sym.norm()
    }
}

/// A lower triangular matrix with strictly positive diagonal.
#[derive(Debug, Clone)]
pub struct LowerTriangular {
    data: DMatrix<f64>,
}

impl LowerTriangular {
    /// Takes the lower triangle of `m`; rejects nonpositive diagonals.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: (m.nrows(), m.nrows()),
                found: (m.nrows(), m.ncols()),
            });
        }
        let dim = m.nrows();
        let mut data = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                data[(i, j)] = m[(i, j)];
            }
            if !(data[(i, i)] > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
        }
        Ok(LowerTriangular { data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Inverse by forward substitution against the identity.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        self.data
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or(Error::Singular)
    }
}

/// Lower Cholesky factor of a raw symmetric matrix. Fails with
/// [`Error::NotPositiveDefinite`] when a pivot is not strictly positive.
pub(crate) fn chol_lower_raw(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.unpack())
        .ok_or(Error::NotPositiveDefinite)
}

/// Inverse of a lower triangular factor by forward substitution.
pub(crate) fn lower_inverse_raw(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::Singular)
}

/// The unique factorization `M = G Gᵀ` with `G` lower triangular and
/// positive diagonal.
pub fn chol_lower(m: &PDMatrix) -> LowerTriangular {
    LowerTriangular {
        data: m.chol_factor().clone(),
    }
}

/// `M⁻¹` through the stored Cholesky factor and two triangular solves;
/// the result is re-symmetrized.
pub fn pd_inverse(m: &PDMatrix) -> Result<PDMatrix> {
    let ginv = lower_inverse_raw(m.chol_factor())?;
    PDMatrix::from_matrix(ginv.transpose() * ginv)
}

/// `M^p = U diag(λ_i^p) Uᵀ` from a symmetric eigendecomposition.
pub fn sym_power(m: &PDMatrix, p: f64) -> Result<PDMatrix> {
    let eig = m.as_matrix().clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let powered = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.powf(p)),
    );
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&powered) * eig.eigenvectors.transpose();
    PDMatrix::from_matrix(rebuilt)
}

fn check_same_dim(x: &PDMatrix, y: &PDMatrix) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: (x.dim(), x.dim()),
            found: (y.dim(), y.dim()),
        });
    }
    Ok(())
}

/// Hilbert projective distance `log(λ_max/λ_min)` of the congruence
/// `G⁻¹ X G⁻ᵀ` with `G Gᵀ = X~`. Symmetric in its arguments, invariant
/// under positive scalar multiplication of either one.
pub fn hilbert_distance(x: &PDMatrix, x_tilde: &PDMatrix) -> Result<f64> {
    check_same_dim(x, x_tilde)?;
    let g = x_tilde.chol_factor();
    let z = g
        .solve_lower_triangular(x.as_matrix())
        .ok_or(Error::Singular)?;
    let w = g
        .solve_lower_triangular(&z.transpose())
        .ok_or(Error::Singular)?
        .transpose();
    let w = (&w + w.transpose()) * 0.5;
    let eig = w.symmetric_eigen();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite);
    }
    Ok((hi / lo).ln().max(0.0))
}

/// The weighted geodesic `X^{1/2} (X^{-1/2} X~ X^{-1/2})^ω X^{1/2}`.
///
/// For `ω ∈ [0, 1]` this interpolates between `X` (at 0) and `X~` (at 1);
/// outside that range it extrapolates. The result is positive definite for
/// every real `ω`.
pub fn geodesic(x: &PDMatrix, x_tilde: &PDMatrix, omega: f64) -> Result<PDMatrix> {
    check_same_dim(x, x_tilde)?;
    let eig_x = x.as_matrix().clone().symmetric_eigen();
    if eig_x.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let u = &eig_x.eigenvectors;
    let sqrt = DVector::from_iterator(
        eig_x.eigenvalues.len(),
        eig_x.eigenvalues.iter().map(|&l| l.sqrt()),
    );
    let inv_sqrt = DVector::from_iterator(sqrt.len(), sqrt.iter().map(|&s| 1.0 / s));
    let x_half = u * DMatrix::from_diagonal(&sqrt) * u.transpose();
    let x_neg_half = u * DMatrix::from_diagonal(&inv_sqrt) * u.transpose();

    let inner = &x_neg_half * x_tilde.as_matrix() * &x_neg_half;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig_inner = inner.symmetric_eigen();
    if eig_inner.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let powered = DVector::from_iterator(
        eig_inner.eigenvalues.len(),
        eig_inner.eigenvalues.iter().map(|&l| l.powf(omega)),
    );
    let mid =
        &eig_inner.eigenvectors * DMatrix::from_diagonal(&powered) * eig_inner.eigenvectors.transpose();
    PDMatrix::from_matrix(&x_half * mid * &x_half)
}

/// A point in the product of two positive definite cones.
#[derive(Debug, Clone)]
pub struct PDPair {
    pub x: PDMatrix,
    pub y: PDMatrix,
}

impl PDPair {
    pub fn new(x: PDMatrix, y: PDMatrix) -> Self {
        PDPair { x, y }
    }

    pub fn identity(m: usize, n: usize) -> Self {
        PDPair {
            x: PDMatrix::identity(m),
            y: PDMatrix::identity(n),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x.dim(), self.y.dim())
    }
}

/// The representative of the orbit `(μX, μ⁻¹Y)` with equal Frobenius
/// norms. Idempotent.
pub fn balance(pair: &PDPair) -> PDPair {
    let nx = pair.x.norm();
    let ny = pair.y.norm();
    let s = (ny / nx).sqrt();
    PDPair {
        x: pair.x.scale(s),
        y: pair.y.scale(1.0 / s),
    }
}

/// One standard Gaussian draw (f64).
pub(crate) fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// A random positive definite matrix `G Gᵀ + shift·I` with standard
/// Gaussian `G`. The shift must be positive; small shifts give harder,
/// more anisotropic samples.
pub fn random_pd<R: Rng + ?Sized>(dim: usize, shift: f64, rng: &mut R) -> PDMatrix {
    assert!(shift > 0.0, "shift must be positive");
    let g = DMatrix::from_fn(dim, dim, |_, _| gauss(rng));
    let m = &g * g.transpose() + DMatrix::identity(dim, dim) * shift;
    PDMatrix::from_matrix(m).expect("Gram matrix plus positive shift is positive definite")
}
