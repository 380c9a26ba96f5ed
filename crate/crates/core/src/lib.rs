//! Operator scaling on positive definite cones.
//!
//! Given a tuple `A = (A_1, …, A_k)` of real `m×n` matrices, operator
//! scaling looks for invertible `L` and `R` such that the jointly scaled
//! tuple `B = L A Rᵀ` is doubly balanced:
//!
//! ```text
//! Σ B_i B_iᵀ = (1/m) I_m     and     Σ B_iᵀ B_i = (1/n) I_n.
//! ```
//!
//! This crate implements the alternating normalization iteration that
//! solves the problem, three overrelaxed accelerations of it (Euclidean,
//! Cholesky-factor and geodesic), the adaptive choice of the relaxation
//! parameter, and the surrounding geometry and diagnostics: the Hilbert
//! projective metric and its geodesics on the positive definite cone, the
//! log-det cost with its gradient and Hessian, spectral rate predictions,
//! sampled contraction factors and geodesic-convexity checks, plus
//! deterministic instance generators (Gaussian frames, dense Gaussian
//! tuples, rotated Hilbert matrices) with a JSON file format.
//!
//! Crate layout:
//! * [`cones`] — symmetric/positive definite matrix types, Cholesky and
//!   fractional powers, Hilbert distance, geodesics, orbit balancing;
//! * [`cpmap`] — Kraus collections, the induced completely positive map
//!   and its dual, partial minimizers, instance generators and a
//!   randomized positivity-improving check;
//! * [`solvers`] — the five iterations, single-step maps, relaxation
//!   policies, rate formulas and estimators;
//! * [`diagnostics`] — cost, gradient, Hessian, dense rate analysis,
//!   contraction sampling, convexity sampling;
//! * [`trace`] — per-iteration records with CSV/JSON export.
//!
//! All randomness is drawn from explicitly seeded ChaCha20 streams, so
//! identical seeds reproduce identical instances and traces bit for bit
//! (wall-clock columns aside).

pub mod cones;
pub mod cpmap;
pub mod diagnostics;
pub mod error;
pub mod solvers;
pub mod trace;

pub use cones::{
    balance, chol_lower, geodesic, hilbert_distance, pd_inverse, random_pd, sym_power,
    LowerTriangular, PDMatrix, PDPair, SymMatrix,
};
pub use cpmap::{
    apply_cp, apply_cp_dual, check_positivity_improving, frame_to_kraus, gen_frame_instance,
    gen_gaussian_instance, gen_hilbert_instance, partial_min_x, partial_min_y, FrameInstance,
    KrausCollection, PositivityCheck,
};
pub use diagnostics::{
    cost, cost_gradient, geodesic_convexity_check, gradient_norm, hessian_matrix,
    hessian_spectrum, local_rate_from_hessian, sample_contraction, ConvexityReport,
    HessianOperator,
};
pub use error::{Error, Result};
pub use solvers::{
    adaptive_omega, cholesky_or_run, cholesky_or_step, fpi_step, geodesic_or_run,
    geodesic_or_step, measure_rate, optimal_omega, osi_run, pd_fpi_run, pd_or_run, pd_or_step,
    predicted_rate, solve, AdaptiveOmega, FactorPair, Method, OmegaPolicy, OsiState,
    SolverConfig, SolverOutcome,
};
pub use trace::{IterationTrace, TerminalStatus, TraceRecord};
