//! Per-iteration records produced by the solvers, plus their CSV/JSON
//! export formats.

use serde::Serialize;

use crate::cones::PDPair;
use crate::solvers::{AdaptiveOmega, SolverConfig};

/// One row of a solver trace. `wall_nanos` is the cumulative time spent in
/// the iteration loop when the row was recorded (instance I/O excluded).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRecord {
    pub t: usize,
    pub err: f64,
    pub omega: f64,
    pub wall_nanos: u128,
}

/// How a solver run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    /// The gradient norm dropped below the configured tolerance.
    Converged,
    /// The iteration budget ran out first.
    MaxIter,
    /// An iterate left the positive definite cone; the run stopped at the
    /// last valid iterate.
    ConeViolation,
}

impl TerminalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalStatus::Converged => "converged",
            TerminalStatus::MaxIter => "max_iter",
            TerminalStatus::ConeViolation => "cone_violation",
        }
    }
}

/// Full record of a solver run. Row `t = 0` holds the error of the
/// starting point. When snapshots are enabled they store the balanced
/// orbit representative of the iterate.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
    pub status: TerminalStatus,
    /// Estimate produced by the adaptive relaxation policy, if it ran.
    pub omega_hat: Option<AdaptiveOmega>,
    pub snapshots: Vec<(usize, PDPair)>,
}

impl IterationTrace {
    pub fn errs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.err).collect()
    }

    pub fn err_at(&self, t: usize) -> Option<f64> {
        self.records.iter().find(|r| r.t == t).map(|r| r.err)
    }

    pub fn final_err(&self) -> f64 {
        self.records.last().map(|r| r.err).unwrap_or(f64::NAN)
    }

    pub fn min_err(&self) -> f64 {
        self.records.iter().map(|r| r.err).fold(f64::INFINITY, f64::min)
    }

    /// Number of completed iterations (the largest recorded `t`).
    pub fn iterations(&self) -> usize {
        self.records.last().map(|r| r.t).unwrap_or(0)
    }

    /// First iteration whose error is at or below `threshold`.
    pub fn first_t_below(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.err <= threshold).map(|r| r.t)
    }

    /// CSV export with the fixed header `t,err,omega,wall_nanos`. All
    /// columns except the timing one are bit-stable for identical inputs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,err,omega,wall_nanos\n");
        for r in &self.records {
            out.push_str(&format!("{},{:e},{},{}\n", r.t, r.err, r.omega, r.wall_nanos));
        }
        out
    }

    /// JSON export with a config echo and the terminal status.
    pub fn to_json(&self, config: &SolverConfig) -> String {
        #[derive(Serialize)]
        struct TraceFile<'a> {
            config: &'a SolverConfig,
            status: TerminalStatus,
            omega_hat: &'a Option<AdaptiveOmega>,
            iterations: usize,
            final_err: f64,
            records: &'a [TraceRecord],
        }
        serde_json::to_string_pretty(&TraceFile {
            config,
            status: self.status,
            omega_hat: &self.omega_hat,
            iterations: self.iterations(),
            final_err: self.final_err(),
            records: &self.records,
        })
        .expect("trace serialization cannot fail")
    }
}
