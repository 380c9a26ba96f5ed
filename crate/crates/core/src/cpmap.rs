//! Kraus collections, the completely positive map they induce, and
//! problem-instance generators.
//!
//! A collection `A = (A_1, …, A_k)` of real `m×n` matrices defines the CP
//! map `Φ(Y) = Σ A_i Y A_iᵀ` and its trace-pairing dual
//! `Φ*(X) = Σ A_iᵀ X A_i`. The scaling iterations alternate the partial
//! minimizers
//!
//! ```text
//! partial_min_x(Y) = (1/m) Φ(Y)⁻¹,    partial_min_y(X) = (1/n) Φ*(X)⁻¹.
//! ```
//!
//! Collections are validated eagerly at construction: both Gram sums
//! `Σ A_i A_iᵀ` and `Σ A_iᵀ A_i` must pass a Cholesky attempt, otherwise
//! one-sided normalization is impossible and every solver would fail
//! deep inside its loop.
//!
//! All randomized generators take an explicit seed and drive a ChaCha20
//! stream (`rand_chacha::ChaCha20Rng`), so identical `(dims, seed)` produce
//! bit-identical instances on every platform.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::cones::{chol_lower_raw, gauss, pd_inverse, PDMatrix, SymMatrix};
use crate::error::{Error, Result};

/// A tuple of Kraus operators defining a completely positive map.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausCollection {
    m: usize,
    n: usize,
    matrices: Vec<DMatrix<f64>>,
    label: Option<String>,
}

/// On-disk instance format: `{m, n, k, matrices, label}` with each matrix
/// stored as a row-major nested array.
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    m: usize,
    n: usize,
    k: usize,
    matrices: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl KrausCollection {
    /// Validates shapes and the invertibility of both Gram sums.
    pub fn new(matrices: Vec<DMatrix<f64>>, label: Option<String>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::InvalidConfig("need at least one Kraus operator".into()));
        }
        let (m, n) = (matrices[0].nrows(), matrices[0].ncols());
        if m == 0 || n == 0 {
            return Err(Error::InvalidConfig("Kraus operators must be nonempty".into()));
        }
        for a in &matrices {
            if a.nrows() != m || a.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: (m, n),
                    found: (a.nrows(), a.ncols()),
                });
            }
        }
        if chol_lower_raw(&gram_left(&matrices)).is_err() {
            return Err(Error::AssumptionViolated(
                "sum of A_i A_iᵀ is not positive definite".into(),
            ));
        }
        if chol_lower_raw(&gram_right(&matrices)).is_err() {
            return Err(Error::AssumptionViolated(
                "sum of A_iᵀ A_i is not positive definite".into(),
            ));
        }
        Ok(KrausCollection { m, n, matrices, label })
    }

    /// The single-operator collection `(I_n)`.
    pub fn identity(n: usize) -> Self {
        KrausCollection {
            m: n,
            n,
            matrices: vec![DMatrix::identity(n, n)],
            label: Some(format!("identity(n={n})")),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// The collection `L A Rᵀ` scaled by an invertible pair.
    pub fn scaled(&self, l: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Self> {
        if l.nrows() != self.m || l.ncols() != self.m {
            return Err(Error::DimensionMismatch {
                expected: (self.m, self.m),
                found: (l.nrows(), l.ncols()),
            });
        }
        if r.nrows() != self.n || r.ncols() != self.n {
            return Err(Error::DimensionMismatch {
                expected: (self.n, self.n),
                found: (r.nrows(), r.ncols()),
            });
        }
        let rt = r.transpose();
        let matrices = self.matrices.iter().map(|a| l * a * &rt).collect();
        KrausCollection::new(matrices, self.label.clone())
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            m: self.m,
            n: self.n,
            k: self.k(),
            matrices: self
                .matrices
                .iter()
                .map(|a| (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect())
                .collect(),
            label: self.label.clone(),
        };
        serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(s)?;
        if file.matrices.len() != file.k {
            return Err(Error::Io(format!(
                "instance declares k={} but holds {} matrices",
                file.k,
                file.matrices.len()
            )));
        }
        let mut matrices = Vec::with_capacity(file.k);
        for rows in &file.matrices {
            if rows.len() != file.m || rows.iter().any(|r| r.len() != file.n) {
                return Err(Error::Io("matrix shape does not match declared m, n".into()));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            matrices.push(DMatrix::from_row_slice(file.m, file.n, &flat));
        }
        KrausCollection::new(matrices, file.label)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// `Σ A_i A_iᵀ` (an `m×m` matrix).
pub(crate) fn gram_left(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let m = mats[0].nrows();
    let mut acc = DMatrix::zeros(m, m);
    for a in mats {
        acc += a * a.transpose();
    }
    (&acc + acc.transpose()) * 0.5
}

/// `Σ A_iᵀ A_i` (an `n×n` matrix).
pub(crate) fn gram_right(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = mats[0].ncols();
    let mut acc = DMatrix::zeros(n, n);
    for a in mats {
        acc += a.transpose() * a;
    }
    (&acc + acc.transpose()) * 0.5
}

/// `Σ A_i Y A_iᵀ` on raw storage.
pub(crate) fn cp_apply_raw(mats: &[DMatrix<f64>], y: &DMatrix<f64>) -> DMatrix<f64> {
    let m = mats[0].nrows();
    let mut acc = DMatrix::zeros(m, m);
    for a in mats {
        acc += a * y * a.transpose();
    }
    (&acc + acc.transpose()) * 0.5
}

/// `Σ A_iᵀ X A_i` on raw storage.
pub(crate) fn cp_dual_raw(mats: &[DMatrix<f64>], x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = mats[0].ncols();
    let mut acc = DMatrix::zeros(n, n);
    for a in mats {
        acc += a.transpose() * x * a;
    }
    (&acc + acc.transpose()) * 0.5
}

/// The CP map `Φ(Y) = Σ A_i Y A_iᵀ`.
pub fn apply_cp(a: &KrausCollection, y: &SymMatrix) -> Result<SymMatrix> {
    if y.dim() != a.n {
        return Err(Error::DimensionMismatch {
            expected: (a.n, a.n),
            found: (y.dim(), y.dim()),
        });
    }
    SymMatrix::new(cp_apply_raw(&a.matrices, y.as_matrix()))
}

/// The dual map `Φ*(X) = Σ A_iᵀ X A_i`.
pub fn apply_cp_dual(a: &KrausCollection, x: &SymMatrix) -> Result<SymMatrix> {
    if x.dim() != a.m {
        return Err(Error::DimensionMismatch {
            expected: (a.m, a.m),
            found: (x.dim(), x.dim()),
        });
    }
    SymMatrix::new(cp_dual_raw(&a.matrices, x.as_matrix()))
}

/// The partial minimizer in the first block: `(1/m) Φ(Y)⁻¹`.
///
/// Homogeneous of degree −1: `partial_min_x(μY) = μ⁻¹ partial_min_x(Y)`.
pub fn partial_min_x(a: &KrausCollection, y: &PDMatrix) -> Result<PDMatrix> {
    let phi = apply_cp(a, y.as_sym())?;
    let phi_pd = PDMatrix::new(phi)?;
    Ok(pd_inverse(&phi_pd)?.scale(1.0 / a.m as f64))
}

/// The partial minimizer in the second block: `(1/n) Φ*(X)⁻¹`.
pub fn partial_min_y(a: &KrausCollection, x: &PDMatrix) -> Result<PDMatrix> {
    let phi = apply_cp_dual(a, x.as_sym())?;
    let phi_pd = PDMatrix::new(phi)?;
    Ok(pd_inverse(&phi_pd)?.scale(1.0 / a.n as f64))
}

/// A frame of `k` vectors in `ℝⁿ` with the seed it was drawn from.
#[derive(Debug, Clone)]
pub struct FrameInstance {
    n: usize,
    k: usize,
    vectors: Vec<DVector<f64>>,
    seed: u64,
}

impl FrameInstance {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Draws `k` i.i.d. standard Gaussian vectors in `ℝⁿ`. Requires `k ≥ n`,
/// otherwise the frame Gram matrix cannot have full rank.
pub fn gen_frame_instance(n: usize, k: usize, seed: u64) -> Result<FrameInstance> {
    if n == 0 {
        return Err(Error::InvalidConfig("frame dimension must be positive".into()));
    }
    if k < n {
        return Err(Error::InvalidConfig(format!(
            "frame needs k >= n vectors, got k={k} < n={n}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let vectors = (0..k)
        .map(|_| DVector::from_fn(n, |_, _| gauss(&mut rng)))
        .collect();
    Ok(FrameInstance { n, k, vectors, seed })
}

/// Embeds a frame into operator scaling: `A_i = e_i x_iᵀ ∈ ℝ^{k×n}`, so
/// the induced `Φ(Z) = diag(x_iᵀ Z x_i)` is diagonal.
pub fn frame_to_kraus(frame: &FrameInstance) -> Result<KrausCollection> {
    if frame.vectors.iter().any(|x| x.norm() == 0.0) {
        return Err(Error::InvalidConfig("frame vectors must be nonzero".into()));
    }
    let (n, k) = (frame.n, frame.k);
    let matrices = frame
        .vectors
        .iter()
        .enumerate()
        .map(|(i, x)| {
            DMatrix::from_fn(k, n, |r, c| if r == i { x[c] } else { 0.0 })
        })
        .collect();
    KrausCollection::new(
        matrices,
        Some(format!("frame(n={n},k={k},seed={})", frame.seed)),
    )
}

/// Haar-uniform random orthogonal matrix: QR of a Gaussian matrix with the
/// R-diagonal signs folded into Q.
fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| gauss(rng));
    let qr = g.qr();
    let r_diag = qr.r().diagonal();
    let mut q = qr.q();
    for j in 0..n {
        if r_diag[j] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Ill-conditioned instance: `A_i = Q_i H` with `H` the `n×n` Hilbert
/// matrix (`H_ij = 1/(i+j−1)`, one-based) and `Q_i` Haar-uniform
/// orthogonal. All operators share the singular values of `H`.
pub fn gen_hilbert_instance(n: usize, k: usize, seed: u64) -> Result<KrausCollection> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidConfig("need n >= 1 and k >= 1".into()));
    }
    let h = DMatrix::from_fn(n, n, |i, j| 1.0 / ((i + j + 1) as f64));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let matrices = (0..k).map(|_| random_orthogonal(n, &mut rng) * &h).collect();
    KrausCollection::new(
        matrices,
        Some(format!("hilbert(n={n},k={k},seed={seed})")),
    )
}

/// Dense instance with i.i.d. standard Gaussian entries.
pub fn gen_gaussian_instance(m: usize, n: usize, k: usize, seed: u64) -> Result<KrausCollection> {
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::InvalidConfig("need m, n, k >= 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let matrices = (0..k)
        .map(|_| DMatrix::from_fn(m, n, |_, _| gauss(&mut rng)))
        .collect();
    KrausCollection::new(
        matrices,
        Some(format!("gaussian(m={m},n={n},k={k},seed={seed})")),
    )
}

/// Verdict of the randomized positivity-improving check.
#[derive(Debug, Clone)]
pub enum PositivityCheck {
    /// No sampled rank-one input left the cone. This does not certify the
    /// property; it is a necessary check only.
    LikelyYes,
    /// A unit vector `v` with `Φ(v vᵀ)` not positive definite.
    Counterexample(DVector<f64>),
}

impl PositivityCheck {
    pub fn is_likely_yes(&self) -> bool {
        matches!(self, PositivityCheck::LikelyYes)
    }
}

/// Samples random unit vectors `v` and tests whether `Φ(v vᵀ)` passes a
/// Cholesky attempt. Returns the first failing `v` as a counterexample.
///
/// A `LikelyYes` answer is not a certificate: maps that fail the property
/// only on a measure-zero set of directions will pass every sample.
pub fn check_positivity_improving(
    a: &KrausCollection,
    trials: usize,
    seed: u64,
) -> PositivityCheck {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..trials.max(1) {
        let mut v = DVector::from_fn(a.n, |_, _| gauss(&mut rng));
        let norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        v /= norm;
        let rank_one = &v * v.transpose();
        let image = cp_apply_raw(&a.matrices, &rank_one);
        if chol_lower_raw(&image).is_err() {
            return PositivityCheck::Counterexample(v);
        }
    }
    PositivityCheck::LikelyYes
}
