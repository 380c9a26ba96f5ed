//! The five scaling iterations and the relaxation-parameter machinery.
//!
//! Methods:
//! * `Osi` — alternating one-sided normalization of the scaled collection
//!   itself, accumulating the scaling factors on the fly;
//! * `Ffpi` — the equivalent fixed-point iteration on the positive
//!   definite pair `(X, Y) = (LᵀL, RᵀR)`, `X ← (1/m)Φ(Y)⁻¹`,
//!   `Y ← (1/n)Φ*(X)⁻¹`;
//! * `PdOr` — Euclidean overrelaxation `(1−ω)X + ω·(1/m)Φ(Y)⁻¹` (may leave
//!   the cone for ω > 1);
//! * `CholeskyOr` — the same relaxation taken on lower-triangular factors;
//! * `GeodesicOr` — relaxation along geodesics of the positive definite
//!   cone, which stays in the cone for every real ω.
//!
//! Every method reports the same error measure: the gradient norm of the
//! scaled collection `L A Rᵀ` built from the accumulated factors and the
//! original input, so traces are comparable across methods and immune to
//! drift of internally scaled copies.
//!
//! The relaxation parameter can be fixed or adaptive. The adaptive policy
//! runs ω = 1 for the first `p` iterations, estimates the plain iteration's
//! rate from the error decay, `β̂² = (err_p / err_{p−ℓ})^{1/ℓ}`, and then
//! switches to `ω̂ = 2 / (1 + √(1 − β̂²))`.
//!
//! A solver run is single-threaded and deterministic; distinct runs share
//! no mutable state and may execute concurrently.

use nalgebra::DMatrix;
use serde::Serialize;
use std::time::Instant;

use crate::cones::{
    balance, chol_lower_raw, geodesic, lower_inverse_raw, pd_inverse, PDMatrix, PDPair,
};
use crate::cpmap::{cp_apply_raw, cp_dual_raw, gram_left, gram_right, partial_min_x, partial_min_y,
    KrausCollection};
use crate::diagnostics::gradient_norm;
use crate::error::{Error, Result};
use crate::trace::{IterationTrace, TerminalStatus, TraceRecord};

/// Iteration scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Osi,
    Ffpi,
    PdOr,
    CholeskyOr,
    GeodesicOr,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Osi,
        Method::Ffpi,
        Method::PdOr,
        Method::CholeskyOr,
        Method::GeodesicOr,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Osi => "osi",
            Method::Ffpi => "ffpi",
            Method::PdOr => "pd_or",
            Method::CholeskyOr => "cholesky_or",
            Method::GeodesicOr => "geodesic_or",
        }
    }

    /// Whether the relaxation parameter has any effect.
    pub fn uses_omega(&self) -> bool {
        matches!(self, Method::PdOr | Method::CholeskyOr | Method::GeodesicOr)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "osi" => Ok(Method::Osi),
            "ffpi" => Ok(Method::Ffpi),
            "pd_or" => Ok(Method::PdOr),
            "cholesky_or" => Ok(Method::CholeskyOr),
            "geodesic_or" => Ok(Method::GeodesicOr),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Relaxation parameter policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaPolicy {
    /// Use this ω from the first iteration on.
    Fixed(f64),
    /// Run ω = 1 up to iteration `activation`, estimate
    /// `β̂² = (err_p / err_{p−lag})^{1/lag}` there, and use the optimal ω
    /// for that estimate afterwards.
    Adaptive { activation: usize, lag: usize },
}

impl OmegaPolicy {
    /// Adaptive policy with the default lag of 2.
    pub fn adaptive(activation: usize) -> Self {
        OmegaPolicy::Adaptive { activation, lag: 2 }
    }
}

/// Full solver configuration.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub method: Method,
    pub omega: OmegaPolicy,
    pub max_iter: usize,
    /// Stop once the gradient norm is at or below this.
    pub tol: f64,
    /// Record a balanced iterate snapshot every this many iterations
    /// (0 disables snapshots).
    pub snapshot_every: usize,
    /// On a cone violation with ω > 1, halve (ω − 1) and retry the step
    /// once before giving up.
    pub safeguard: bool,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        SolverConfig {
            method,
            omega: OmegaPolicy::Fixed(1.0),
            max_iter: 200,
            tol: 1e-13,
            snapshot_every: 0,
            safeguard: false,
        }
    }

    pub fn with_omega(mut self, omega: OmegaPolicy) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_snapshots(mut self, every: usize) -> Self {
        self.snapshot_every = every;
        self
    }

    pub fn with_safeguard(mut self, on: bool) -> Self {
        self.safeguard = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        match self.omega {
            OmegaPolicy::Fixed(w) => {
                if !(w > 0.0) {
                    return Err(Error::InvalidConfig("fixed omega must be positive".into()));
                }
            }
            OmegaPolicy::Adaptive { activation, lag } => {
                if lag < 2 || activation < lag {
                    return Err(Error::InvalidConfig(
                        "adaptive policy needs activation >= lag >= 2".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A pair of invertible scaling factors with `X = LᵀL`, `Y = RᵀR`.
/// Cholesky-based iterations keep both factors lower triangular.
#[derive(Debug, Clone)]
pub struct FactorPair {
    l: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl FactorPair {
    pub fn new(l: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if l.nrows() != l.ncols() {
            return Err(Error::DimensionMismatch {
                expected: (l.nrows(), l.nrows()),
                found: (l.nrows(), l.ncols()),
            });
        }
        if r.nrows() != r.ncols() {
            return Err(Error::DimensionMismatch {
                expected: (r.nrows(), r.nrows()),
                found: (r.nrows(), r.ncols()),
            });
        }
        Ok(FactorPair { l, r })
    }

    pub fn identity(m: usize, n: usize) -> Self {
        FactorPair {
            l: DMatrix::identity(m, m),
            r: DMatrix::identity(n, n),
        }
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.l.nrows(), self.r.nrows())
    }

    /// The canonical lower-triangular factors of a positive definite pair:
    /// `L = chol(X⁻¹)⁻¹` is lower triangular with positive diagonal and
    /// satisfies `LᵀL = X`. This is the unique such factor, which makes
    /// factor sequences comparable across methods.
    pub fn from_pd_pair(pair: &PDPair) -> Result<Self> {
        let l = lower_inverse_raw(pd_inverse(&pair.x)?.chol_factor())?;
        let r = lower_inverse_raw(pd_inverse(&pair.y)?.chol_factor())?;
        Ok(FactorPair { l, r })
    }

    /// The positive definite pair `(LᵀL, RᵀR)`.
    pub fn pd_pair(&self) -> Result<PDPair> {
        let x = PDMatrix::from_matrix(self.l.transpose() * &self.l)?;
        let y = PDMatrix::from_matrix(self.r.transpose() * &self.r)?;
        Ok(PDPair::new(x, y))
    }

    /// The scaled collection `L A Rᵀ` as raw matrices.
    pub fn scaled_matrices(&self, a: &KrausCollection) -> Vec<DMatrix<f64>> {
        let rt = self.r.transpose();
        a.matrices().iter().map(|ai| &self.l * ai * &rt).collect()
    }
}

// ---------------------------------------------------------------------------
// Single-step maps. These are pure: on error the input is untouched, which
// is what the safeguard retry relies on.
// ---------------------------------------------------------------------------

/// One full sweep of the plain fixed-point iteration.
pub fn fpi_step(a: &KrausCollection, pair: &PDPair) -> Result<PDPair> {
    let x = partial_min_x(a, &pair.y)?;
    let y = partial_min_y(a, &x)?;
    Ok(PDPair::new(x, y))
}

/// One sweep of Euclidean overrelaxation:
/// `X' = (1−ω)X + ω·(1/m)Φ(Y)⁻¹`, then the analogous Y update using `X'`.
/// Fails with [`Error::NotPositiveDefinite`] when a combination leaves the
/// cone.
pub fn pd_or_step(a: &KrausCollection, pair: &PDPair, omega: f64) -> Result<PDPair> {
    let sx = partial_min_x(a, &pair.y)?;
    let x_new = PDMatrix::from_matrix(
        pair.x.as_matrix() * (1.0 - omega) + sx.as_matrix() * omega,
    )?;
    let sy = partial_min_y(a, &x_new)?;
    let y_new = PDMatrix::from_matrix(
        pair.y.as_matrix() * (1.0 - omega) + sy.as_matrix() * omega,
    )?;
    Ok(PDPair::new(x_new, y_new))
}

/// One sweep of geodesic overrelaxation:
/// `X' = geodesic(X, (1/m)Φ(Y)⁻¹, ω)`, then the analogous Y update.
/// Stays in the cone for every real ω.
pub fn geodesic_or_step(a: &KrausCollection, pair: &PDPair, omega: f64) -> Result<PDPair> {
    let sx = partial_min_x(a, &pair.y)?;
    let x_new = geodesic(&pair.x, &sx, omega)?;
    let sy = partial_min_y(a, &x_new)?;
    let y_new = geodesic(&pair.y, &sy, omega)?;
    Ok(PDPair::new(x_new, y_new))
}

/// One sweep of factor-space overrelaxation:
/// `L' = (1−ω)L + (ω/√m)C⁻¹` with `C` the lower Cholesky factor of
/// `Σ A_i RᵀR A_iᵀ`, then the analogous R update using `L'`. A combined
/// factor with a nonpositive diagonal entry is a cone violation.
pub fn cholesky_or_step(a: &KrausCollection, factors: &FactorPair, omega: f64) -> Result<FactorPair> {
    let (m, n) = (a.m() as f64, a.n() as f64);
    let y = factors.r.transpose() * &factors.r;
    let c = chol_lower_raw(&cp_apply_raw(a.matrices(), &y))?;
    let c_inv = lower_inverse_raw(&c)?;
    let l_new = &factors.l * (1.0 - omega) + c_inv * (omega / m.sqrt());
    if l_new.diagonal().iter().any(|&d| !(d > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }

    let x = l_new.transpose() * &l_new;
    let d = chol_lower_raw(&cp_dual_raw(a.matrices(), &x))?;
    let d_inv = lower_inverse_raw(&d)?;
    let r_new = &factors.r * (1.0 - omega) + d_inv * (omega / n.sqrt());
    if r_new.diagonal().iter().any(|&d| !(d > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(FactorPair { l: l_new, r: r_new })
}

/// State of the normalization iteration that rescales the collection
/// itself. Keeps the current scaled tuple and the accumulated factors.
pub struct OsiState {
    scaled: Vec<DMatrix<f64>>,
    acc: FactorPair,
    m: usize,
    n: usize,
}

impl OsiState {
    pub fn new(a: &KrausCollection) -> Self {
        OsiState {
            scaled: a.matrices().to_vec(),
            acc: FactorPair::identity(a.m(), a.n()),
            m: a.m(),
            n: a.n(),
        }
    }

    /// One sweep: normalize the left Gram sum, then the right one, rescale
    /// the tuple and fold the one-step factors into the accumulators.
    pub fn step(&mut self) -> Result<()> {
        let gl = gram_left(&self.scaled);
        let c = chol_lower_raw(&gl)?;
        let l_bar = lower_inverse_raw(&c)? / (self.m as f64).sqrt();
        let half: Vec<DMatrix<f64>> = self.scaled.iter().map(|ai| &l_bar * ai).collect();

        let gr = gram_right(&half);
        let d = chol_lower_raw(&gr)?;
        let r_bar = lower_inverse_raw(&d)? / (self.n as f64).sqrt();
        let r_bar_t = r_bar.transpose();

        self.scaled = half.iter().map(|ai| ai * &r_bar_t).collect();
        self.acc = FactorPair {
            l: &l_bar * &self.acc.l,
            r: &r_bar * &self.acc.r,
        };
        Ok(())
    }

    /// The internally scaled tuple (subject to numerical drift; the error
    /// measure uses the accumulated factors instead).
    pub fn scaled_matrices(&self) -> &[DMatrix<f64>] {
        &self.scaled
    }

    pub fn accumulated(&self) -> &FactorPair {
        &self.acc
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

trait StepState {
    fn step(&mut self, a: &KrausCollection, omega: f64) -> Result<()>;
    fn factors(&self) -> Result<FactorPair>;
    fn pair(&self) -> Result<PDPair>;
}

impl StepState for OsiState {
    fn step(&mut self, _a: &KrausCollection, _omega: f64) -> Result<()> {
        OsiState::step(self)
    }

    fn factors(&self) -> Result<FactorPair> {
        Ok(self.acc.clone())
    }

    fn pair(&self) -> Result<PDPair> {
        self.acc.pd_pair()
    }
}

struct PdState {
    pair: PDPair,
    method: Method,
}

impl StepState for PdState {
    fn step(&mut self, a: &KrausCollection, omega: f64) -> Result<()> {
        let next = match self.method {
            Method::Ffpi => fpi_step(a, &self.pair)?,
            Method::PdOr => pd_or_step(a, &self.pair, omega)?,
            Method::GeodesicOr => geodesic_or_step(a, &self.pair, omega)?,
            _ => unreachable!("PdState only drives pair-based methods"),
        };
        self.pair = next;
        Ok(())
    }

    fn factors(&self) -> Result<FactorPair> {
        FactorPair::from_pd_pair(&self.pair)
    }

    fn pair(&self) -> Result<PDPair> {
        Ok(self.pair.clone())
    }
}

struct CholState {
    factors: FactorPair,
}

impl StepState for CholState {
    fn step(&mut self, a: &KrausCollection, omega: f64) -> Result<()> {
        self.factors = cholesky_or_step(a, &self.factors, omega)?;
        Ok(())
    }

    fn factors(&self) -> Result<FactorPair> {
        Ok(self.factors.clone())
    }

    fn pair(&self) -> Result<PDPair> {
        self.factors.pd_pair()
    }
}

fn is_cone_violation(e: &Error) -> bool {
    matches!(e, Error::NotPositiveDefinite | Error::Singular)
}

fn drive<S: StepState>(
    a: &KrausCollection,
    cfg: &SolverConfig,
    state: &mut S,
) -> Result<IterationTrace> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.max_iter + 1);
    let mut snapshots = Vec::new();
    let mut status = TerminalStatus::MaxIter;
    let mut adaptive: Option<AdaptiveOmega> = None;

    let err0 = gradient_norm(a, &state.factors()?)?;
    records.push(TraceRecord {
        t: 0,
        err: err0,
        omega: 1.0,
        wall_nanos: 0,
    });
    if cfg.snapshot_every > 0 {
        snapshots.push((0, balance(&state.pair()?)));
    }

    let clock = Instant::now();
    if err0 <= cfg.tol {
        status = TerminalStatus::Converged;
    } else {
        for t in 1..=cfg.max_iter {
            let omega = match cfg.omega {
                OmegaPolicy::Fixed(w) => w,
                OmegaPolicy::Adaptive { activation, lag } => {
                    if t <= activation {
                        1.0
                    } else {
                        if adaptive.is_none() {
                            adaptive = Some(adaptive_omega(&records, activation, lag)?);
                        }
                        adaptive.as_ref().unwrap().omega
                    }
                }
            };

            let mut omega_used = omega;
            let mut outcome = state.step(a, omega);
            if let Err(e) = &outcome {
                if is_cone_violation(e) && cfg.safeguard && omega > 1.0 {
                    omega_used = 1.0 + (omega - 1.0) * 0.5;
                    outcome = state.step(a, omega_used);
                }
            }
            match outcome {
                Ok(()) => {}
                Err(e) if is_cone_violation(&e) => {
                    status = TerminalStatus::ConeViolation;
                    break;
                }
                Err(e) => return Err(e),
            }

            let err = gradient_norm(a, &state.factors()?)?;
            if !err.is_finite() {
                status = TerminalStatus::ConeViolation;
                break;
            }
            records.push(TraceRecord {
                t,
                err,
                omega: omega_used,
                wall_nanos: clock.elapsed().as_nanos(),
            });
            if cfg.snapshot_every > 0 && t % cfg.snapshot_every == 0 {
                snapshots.push((t, balance(&state.pair()?)));
            }
            if err <= cfg.tol {
                status = TerminalStatus::Converged;
                break;
            }
        }
    }

    Ok(IterationTrace {
        records,
        status,
        omega_hat: adaptive,
        snapshots,
    })
}

fn check_pair_dims(a: &KrausCollection, pair: &PDPair) -> Result<()> {
    if pair.x.dim() != a.m() || pair.y.dim() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: (a.m(), a.n()),
            found: (pair.x.dim(), pair.y.dim()),
        });
    }
    Ok(())
}

/// Runs the one-sided normalization iteration on the collection itself.
/// The relaxation policy in `cfg` is ignored (the method has no ω).
pub fn osi_run(a: &KrausCollection, cfg: &SolverConfig) -> Result<(FactorPair, IterationTrace)> {
    let mut state = OsiState::new(a);
    let trace = drive(a, cfg, &mut state)?;
    Ok((state.acc, trace))
}

/// Runs the plain fixed-point iteration from `start`. Ignores the
/// relaxation policy.
pub fn pd_fpi_run(
    a: &KrausCollection,
    start: &PDPair,
    cfg: &SolverConfig,
) -> Result<(PDPair, IterationTrace)> {
    check_pair_dims(a, start)?;
    let mut state = PdState {
        pair: start.clone(),
        method: Method::Ffpi,
    };
    let trace = drive(a, cfg, &mut state)?;
    Ok((state.pair, trace))
}

/// Runs Euclidean overrelaxation from `start`.
pub fn pd_or_run(
    a: &KrausCollection,
    start: &PDPair,
    cfg: &SolverConfig,
) -> Result<(PDPair, IterationTrace)> {
    check_pair_dims(a, start)?;
    let mut state = PdState {
        pair: start.clone(),
        method: Method::PdOr,
    };
    let trace = drive(a, cfg, &mut state)?;
    Ok((state.pair, trace))
}

/// Runs geodesic overrelaxation from `start`.
pub fn geodesic_or_run(
    a: &KrausCollection,
    start: &PDPair,
    cfg: &SolverConfig,
) -> Result<(PDPair, IterationTrace)> {
    check_pair_dims(a, start)?;
    let mut state = PdState {
        pair: start.clone(),
        method: Method::GeodesicOr,
    };
    let trace = drive(a, cfg, &mut state)?;
    Ok((state.pair, trace))
}

/// Runs factor-space overrelaxation from `start` (use the identity pair
/// for the standard initialization).
pub fn cholesky_or_run(
    a: &KrausCollection,
    start: &FactorPair,
    cfg: &SolverConfig,
) -> Result<(FactorPair, IterationTrace)> {
    let (m, n) = start.dims();
    if m != a.m() || n != a.n() {
        return Err(Error::DimensionMismatch {
            expected: (a.m(), a.n()),
            found: (m, n),
        });
    }
    let mut state = CholState {
        factors: start.clone(),
    };
    let trace = drive(a, cfg, &mut state)?;
    Ok((state.factors, trace))
}

/// Outcome of a run through the unified entry point.
pub struct SolverOutcome {
    pub factors: FactorPair,
    pub pair: PDPair,
    pub trace: IterationTrace,
}

/// Unified entry point with the standard identity initialization.
pub fn solve(a: &KrausCollection, cfg: &SolverConfig) -> Result<SolverOutcome> {
    match cfg.method {
        Method::Osi => {
            let (factors, trace) = osi_run(a, cfg)?;
            let pair = factors.pd_pair()?;
            Ok(SolverOutcome { factors, pair, trace })
        }
        Method::CholeskyOr => {
            let start = FactorPair::identity(a.m(), a.n());
            let (factors, trace) = cholesky_or_run(a, &start, cfg)?;
            let pair = factors.pd_pair()?;
            Ok(SolverOutcome { factors, pair, trace })
        }
        Method::Ffpi | Method::PdOr | Method::GeodesicOr => {
            let start = PDPair::identity(a.m(), a.n());
            let (pair, trace) = match cfg.method {
                Method::Ffpi => pd_fpi_run(a, &start, cfg)?,
                Method::PdOr => pd_or_run(a, &start, cfg)?,
                _ => geodesic_or_run(a, &start, cfg)?,
            };
            let factors = FactorPair::from_pd_pair(&pair)?;
            Ok(SolverOutcome { factors, pair, trace })
        }
    }
}

// ---------------------------------------------------------------------------
// Rate formulas and estimators
// ---------------------------------------------------------------------------

/// Predicted asymptotic rate of the relaxed iteration as a function of ω
/// and the plain iteration's rate β²:
///
/// ```text
/// ρ(ω) = 1 − ω + ½ω²β² + ωβ√(1 − ω + ¼ω²β²)   for 0 < ω ≤ ω_opt,
/// ρ(ω) = ω − 1                                  for ω_opt ≤ ω < 2,
/// ```
///
/// continuous at the breakpoint, with `ρ(1) = β²`.
pub fn predicted_rate(omega: f64, beta_sq: f64) -> Result<f64> {
    if !(omega > 0.0 && omega < 2.0) {
        return Err(Error::Domain(format!("omega must lie in (0, 2), got {omega}")));
    }
    let w_opt = optimal_omega(beta_sq)?;
    if omega >= w_opt {
        Ok(omega - 1.0)
    } else if beta_sq == 0.0 {
        Ok(1.0 - omega)
    } else {
        let beta = beta_sq.sqrt();
        // The discriminant 1 − ω + ¼ω²β² vanishes at ω_opt; evaluate it in
        // the factored form ¼β²(ω_opt − ω)(ω₊ − ω) with ω₊ the second root,
        // which does not cancel near the breakpoint.
        let s = (1.0 - beta_sq).sqrt();
        let upper_root = 2.0 * (1.0 + s) / beta_sq;
        let disc = (0.25 * beta_sq * (w_opt - omega) * (upper_root - omega)).max(0.0);
        Ok(1.0 - omega + 0.5 * omega * omega * beta_sq + omega * beta * disc.sqrt())
    }
}

/// The relaxation parameter minimizing the predicted rate:
/// `ω_opt = 2 / (1 + √(1 − β²)) ∈ [1, 2)`.
pub fn optimal_omega(beta_sq: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta_sq) {
        return Err(Error::Domain(format!(
            "beta squared must lie in [0, 1), got {beta_sq}"
        )));
    }
    Ok(2.0 / (1.0 + (1.0 - beta_sq).sqrt()))
}

/// Result of the adaptive relaxation estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AdaptiveOmega {
    /// The relaxation parameter to use from the next iteration on.
    pub omega: f64,
    /// The rate estimate it was derived from.
    pub beta_sq: f64,
    /// Set when the raw estimate was at or above 1 (no observed decay)
    /// and had to be clamped to keep ω below 2.
    pub clamped: bool,
}

const BETA_SQ_CLAMP: f64 = 1.0 - 1e-8;

/// Estimates `β̂² = (err_p / err_{p−lag})^(1/lag)` from trace records and
/// maps it to `ω̂ = optimal_omega(β̂²)`. Estimates at or above 1 are
/// clamped to keep ω̂ < 2.
pub fn adaptive_omega(records: &[TraceRecord], activation: usize, lag: usize) -> Result<AdaptiveOmega> {
    if lag < 1 || activation < lag {
        return Err(Error::InvalidConfig(
            "adaptive estimate needs activation >= lag >= 1".into(),
        ));
    }
    let err_at = |t: usize| records.iter().find(|r| r.t == t).map(|r| r.err);
    let (new, old) = match (err_at(activation), err_at(activation - lag)) {
        (Some(new), Some(old)) if new > 0.0 && old > 0.0 => (new, old),
        _ => {
            return Err(Error::InsufficientHistory {
                needed: activation + 1,
                available: records.len(),
            })
        }
    };
    let raw = (new / old).powf(1.0 / lag as f64);
    let clamped = !(raw < BETA_SQ_CLAMP);
    let beta_sq = if clamped { BETA_SQ_CLAMP } else { raw };
    Ok(AdaptiveOmega {
        omega: optimal_omega(beta_sq)?,
        beta_sq,
        clamped,
    })
}

/// Measured tail rate: the geometric mean of `err_{t+1}/err_t` over the
/// trailing `window` steps whose errors sit above the noise floor of
/// `100 × machine epsilon`.
pub fn measure_rate(records: &[TraceRecord], window: usize) -> Result<f64> {
    if window == 0 {
        return Err(Error::InvalidConfig("window must be at least 1".into()));
    }
    let floor = 100.0 * f64::EPSILON;
    let usable: Vec<f64> = records
        .iter()
        .map(|r| r.err)
        .filter(|&e| e > floor)
        .collect();
    if usable.len() < window + 1 {
        return Err(Error::InsufficientHistory {
            needed: window + 1,
            available: usable.len(),
        });
    }
    let tail = &usable[usable.len() - window - 1..];
    Ok((tail[window] / tail[0]).powf(1.0 / window as f64))
}

impl IterationTrace {
    /// [`measure_rate`] applied to this trace.
    pub fn tail_rate(&self, window: usize) -> Result<f64> {
        measure_rate(&self.records, window)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::{hilbert_distance, random_pd};
    use crate::cpmap::{gen_gaussian_instance, KrausCollection};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn predicted_rate_known_values() {
        assert!(close(predicted_rate(1.0, 0.5).unwrap(), 0.5, 1e-15));
        assert!(close(predicted_rate(1.0, 0.0).unwrap(), 0.0, 1e-15));
        // past the breakpoint the rate is ω − 1
        assert!(close(predicted_rate(1.8182, 0.99).unwrap(), 0.8182, 1e-12));
        assert!(close(optimal_omega(0.99).unwrap(), 2.0 / 1.1, 1e-13));
        assert!(close(optimal_omega(0.0).unwrap(), 1.0, 0.0));
        assert!(close(optimal_omega(0.75).unwrap(), 4.0 / 3.0, 1e-15));
        assert!(predicted_rate(0.0, 0.5).is_err());
        assert!(predicted_rate(2.0, 0.5).is_err());
        assert!(optimal_omega(1.0).is_err());
        assert!(optimal_omega(-0.1).is_err());
    }

    #[test]
    fn predicted_rate_continuous_at_breakpoint() {
        for &b in &[0.1, 0.3, 0.5, 0.75, 0.9, 0.99] {
            let w = optimal_omega(b).unwrap();
            let left = predicted_rate(w - 1e-9, b).unwrap();
            let right = w - 1.0;
            assert!(close(left, right, 1e-4), "b={b}: {left} vs {right}");
            // the discriminant of the first branch vanishes at the
            // breakpoint, where the branch reduces to 1 − ω + ½ω²β²
            let branch1 = 1.0 - w + 0.5 * w * w * b;
            assert!(close(branch1, right, 1e-12), "b={b}: {branch1} vs {right}");
        }
    }

    fn geometric_records(c: f64, q: f64, len: usize) -> Vec<TraceRecord> {
        (0..len)
            .map(|t| TraceRecord {
                t,
                err: c * q.powi(t as i32),
                omega: 1.0,
                wall_nanos: t as u128,
            })
            .collect()
    }

    #[test]
    fn adaptive_omega_examples() {
        // err_8 = 1e-4, err_10 = 2.5e-5 → β̂² = 0.5, ω̂ = 2/(1+√0.5)
        let mut records = geometric_records(1.0, 0.5, 9);
        records.push(TraceRecord { t: 9, err: 5e-5, omega: 1.0, wall_nanos: 0 });
        records[8].err = 1e-4;
        records.push(TraceRecord { t: 10, err: 2.5e-5, omega: 1.0, wall_nanos: 0 });
        let est = adaptive_omega(&records, 10, 2).unwrap();
        assert!(close(est.beta_sq, 0.5, 1e-12));
        assert!(close(est.omega, 2.0 / (1.0 + 0.5f64.sqrt()), 1e-12));
        assert!(close(est.omega, 1.17157, 1e-5));
        assert!(!est.clamped);

        // exact geometric decay err_t = c q^{2t} gives β̂² = q² for any lag
        let q: f64 = 0.8;
        let records = geometric_records(3.0, q * q, 12);
        for lag in [2usize, 3, 4] {
            let est = adaptive_omega(&records, 10, lag).unwrap();
            assert!(close(est.beta_sq, q * q, 1e-12), "lag {lag}");
        }
    }

    #[test]
    fn adaptive_omega_clamps_without_decay() {
        let records = geometric_records(1e-3, 1.05, 12);
        let est = adaptive_omega(&records, 10, 2).unwrap();
        assert!(est.clamped);
        assert!(est.omega < 2.0);
    }

    #[test]
    fn adaptive_omega_needs_history() {
        let records = geometric_records(1.0, 0.5, 5);
        assert!(matches!(
            adaptive_omega(&records, 10, 2),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn measure_rate_geometric() {
        let records = geometric_records(2.0, 0.7, 30);
        let rate = measure_rate(&records, 10).unwrap();
        assert!(close(rate, 0.7, 1e-12));
        assert!(matches!(
            measure_rate(&records[..5], 10),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn osi_identity_instance_converges_in_one_iteration() {
        let n = 4;
        let a = KrausCollection::identity(n);
        let cfg = SolverConfig::new(Method::Osi);
        let (factors, trace) = osi_run(&a, &cfg).unwrap();
        assert_eq!(trace.status, TerminalStatus::Converged);
        assert_eq!(trace.iterations(), 1);
        assert!(trace.final_err() <= 1e-14);
        // the balanced representative is X = Y = n^{-1/2} I
        let balanced = balance(&factors.pd_pair().unwrap());
        let target = DMatrix::identity(n, n) / (n as f64).sqrt();
        assert!((balanced.x.as_matrix() - &target).norm() <= 1e-12);
        assert!((balanced.y.as_matrix() - &target).norm() <= 1e-12);
    }

    #[test]
    fn fpi_identity_instance_first_sweep() {
        let n = 3;
        let a = KrausCollection::identity(n);
        let start = PDPair::identity(n, n);
        let next = fpi_step(&a, &start).unwrap();
        assert!((next.x.as_matrix() - DMatrix::identity(n, n) / n as f64).norm() <= 1e-15);
        assert!((next.y.as_matrix() - DMatrix::identity(n, n)).norm() <= 1e-14);
        // thereafter the orbit is constant
        let again = fpi_step(&a, &next).unwrap();
        assert!((again.x.as_matrix() - next.x.as_matrix()).norm() <= 1e-14);
        assert!((again.y.as_matrix() - next.y.as_matrix()).norm() <= 1e-14);
    }

    #[test]
    fn all_methods_agree_at_omega_one() {
        let a = gen_gaussian_instance(4, 5, 7, 31).unwrap();
        let iters = 30;
        let base = SolverConfig::new(Method::Ffpi)
            .with_max_iter(iters)
            .with_tol(1e-16);
        let (_, t_fpi) = pd_fpi_run(&a, &PDPair::identity(4, 5), &base).unwrap();
        let cfg = SolverConfig::new(Method::PdOr)
            .with_omega(OmegaPolicy::Fixed(1.0))
            .with_max_iter(iters)
            .with_tol(1e-16);
        let (_, t_pd) = pd_or_run(&a, &PDPair::identity(4, 5), &cfg).unwrap();
        let cfg = SolverConfig::new(Method::GeodesicOr)
            .with_omega(OmegaPolicy::Fixed(1.0))
            .with_max_iter(iters)
            .with_tol(1e-16);
        let (_, t_geo) = geodesic_or_run(&a, &PDPair::identity(4, 5), &cfg).unwrap();
        let cfg = SolverConfig::new(Method::CholeskyOr)
            .with_omega(OmegaPolicy::Fixed(1.0))
            .with_max_iter(iters)
            .with_tol(1e-16);
        let (_, t_chol) = cholesky_or_run(&a, &FactorPair::identity(4, 5), &cfg).unwrap();

        for t in 0..=iters {
            let reference = t_fpi.err_at(t).unwrap();
            for (name, trace) in [("pd_or", &t_pd), ("geodesic_or", &t_geo), ("cholesky_or", &t_chol)]
            {
                let err = trace.err_at(t).unwrap();
                assert!(
                    (err - reference).abs() <= 1e-10,
                    "{name} at t={t}: {err} vs {reference}"
                );
            }
        }
    }

    #[test]
    fn fixed_point_is_preserved_by_one_step() {
        let a = gen_gaussian_instance(4, 4, 6, 5).unwrap();
        let cfg = SolverConfig::new(Method::Ffpi).with_max_iter(500).with_tol(1e-14);
        let out = solve(&a, &cfg).unwrap();
        assert_eq!(out.trace.status, TerminalStatus::Converged);
        let star = out.pair;
        for omega in [0.5, 1.0, 1.3] {
            let stepped = pd_or_step(&a, &star, omega).unwrap();
            assert!(hilbert_distance(&stepped.x, &star.x).unwrap() <= 1e-10);
            assert!(hilbert_distance(&stepped.y, &star.y).unwrap() <= 1e-10);
            let stepped = geodesic_or_step(&a, &star, omega).unwrap();
            assert!(hilbert_distance(&stepped.x, &star.x).unwrap() <= 1e-10);
            assert!(hilbert_distance(&stepped.y, &star.y).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn orbital_equivariance_of_geodesic_step() {
        let a = gen_gaussian_instance(3, 4, 6, 13).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let pair = PDPair::new(random_pd(3, 0.1, &mut rng), random_pd(4, 0.1, &mut rng));
        let mu = 3.0;
        let scaled = PDPair::new(pair.x.scale(mu), pair.y.scale(1.0 / mu));
        let step = geodesic_or_step(&a, &pair, 1.4).unwrap();
        let step_scaled = geodesic_or_step(&a, &scaled, 1.4).unwrap();
        let dx = (step_scaled.x.as_matrix() - step.x.as_matrix() * mu).norm();
        let dy = (step_scaled.y.as_matrix() - step.y.as_matrix() / mu).norm();
        assert!(dx <= 1e-12 * (1.0 + step.x.norm() * mu), "dx {dx:.3e}");
        assert!(dy <= 1e-12 * (1.0 + step.y.norm() / mu), "dy {dy:.3e}");
    }

    #[test]
    fn cone_violation_is_a_status_not_a_crash() {
        let a = KrausCollection::identity(2);
        let bad_y = PDMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.8]))
            .unwrap();
        let start = PDPair::new(PDMatrix::identity(2), bad_y);
        let cfg = SolverConfig::new(Method::PdOr)
            .with_omega(OmegaPolicy::Fixed(1.6))
            .with_max_iter(10)
            .with_tol(1e-14);
        let (_, trace) = pd_or_run(&a, &start, &cfg).unwrap();
        assert_eq!(trace.status, TerminalStatus::ConeViolation);
        assert_eq!(trace.iterations(), 0);
    }

    #[test]
    fn safeguard_halves_overshoot_and_continues() {
        let a = KrausCollection::identity(2);
        let bad_y = PDMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.8]))
            .unwrap();
        let start = PDPair::new(PDMatrix::identity(2), bad_y);
        let cfg = SolverConfig::new(Method::PdOr)
            .with_omega(OmegaPolicy::Fixed(1.6))
            .with_max_iter(10)
            .with_tol(1e-14)
            .with_safeguard(true);
        let (_, trace) = pd_or_run(&a, &start, &cfg).unwrap();
        // the retried step used the halved overshoot and the run went on
        assert!(trace.iterations() >= 1);
        assert!(close(trace.records[1].omega, 1.3, 1e-15));
    }

    #[test]
    fn trace_csv_stable_columns() {
        let a = gen_gaussian_instance(3, 3, 5, 2).unwrap();
        let cfg = SolverConfig::new(Method::GeodesicOr)
            .with_omega(OmegaPolicy::adaptive(4))
            .with_max_iter(12)
            .with_tol(1e-15);
        let run = |settle: &SolverConfig| solve(&a, settle).unwrap().trace.to_csv();
        let strip_wall = |csv: String| {
            csv.lines()
                .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(strip_wall(run(&cfg)), strip_wall(run(&cfg)));
        let csv = run(&cfg);
        assert!(csv.starts_with("t,err,omega,wall_nanos\n"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::new(Method::PdOr);
        cfg.tol = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig::new(Method::PdOr).with_omega(OmegaPolicy::Fixed(-0.5));
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig::new(Method::PdOr).with_omega(OmegaPolicy::Adaptive {
            activation: 1,
            lag: 2,
        });
        assert!(cfg.validate().is_err());
    }
}
