//! Second-moment algebra for zero-mean (or offset) jointly Gaussian variables.
//!
//! Units: every variance in this crate is expressed in vacuum-noise units.
//! A vacuum quadrature has variance [`VACUUM_VARIANCE`] = 1, and a conjugate
//! pair `(X, Y)` obeys `ΔX·ΔY ≥ 1`. This is the only place the convention is
//! stated; all other modules rely on it.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Variance of a vacuum quadrature.
pub const VACUUM_VARIANCE: f64 = 1.0;

/// Smallest eigenvalue accepted for a covariance matrix.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Largest asymmetry `|cov[i][j] - cov[j][i]|` that is silently repaired.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Quadratic forms below zero by at most this much are clamped to zero.
pub const ROUNDING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error("unknown variable label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate variable label `{0}`")]
    DuplicateLabel(String),
    #[error(
        "dimension mismatch: {labels} labels, mean of length {mean}, covariance {rows}x{cols}"
    )]
    DimensionMismatch {
        labels: usize,
        mean: usize,
        rows: usize,
        cols: usize,
    },
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("covariance is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("cannot condition on a constant variable with nonzero correlation {0:e}")]
    DegenerateConditioning(f64),
    #[error("sample count must be at least 1")]
    EmptySample,
}

/// A linear combination `constant + Σ coefficient·variable`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearForm {
    pub terms: BTreeMap<String, f64>,
    #[serde(default)]
    pub constant: f64,
}

impl LinearForm {
    pub fn constant(value: f64) -> Self {
        Self {
            terms: BTreeMap::new(),
            constant: value,
        }
    }

    /// `coefficient · label`
    pub fn term(label: &str, coefficient: f64) -> Self {
        Self::default().plus(label, coefficient)
    }

    /// Single variable with unit coefficient.
    pub fn var(label: &str) -> Self {
        Self::term(label, 1.0)
    }

    /// Adds `coefficient · label`, merging with an existing term.
    pub fn plus(mut self, label: &str, coefficient: f64) -> Self {
        *self.terms.entry(label.to_owned()).or_insert(0.0) += coefficient;
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(k, v)| (k.clone(), v * factor))
                .collect(),
            constant: self.constant * factor,
        }
    }

    pub fn coefficient(&self, label: &str) -> f64 {
        self.terms.get(label).copied().unwrap_or(0.0)
    }

    pub fn is_deterministic(&self) -> bool {
        self.terms.values().all(|c| *c == 0.0)
    }

    /// Evaluates the form on one realization `values` laid out per `state`.
    pub fn evaluate(&self, state: &GaussianVector, values: &[f64]) -> Result<f64, GaussianError> {
        let coeffs = state.coefficients(self)?;
        Ok(self.constant + coeffs.iter().zip(values).map(|(a, x)| a * x).sum::<f64>())
    }
}

impl Add for LinearForm {
    type Output = LinearForm;
    fn add(mut self, rhs: LinearForm) -> LinearForm {
        for (k, v) in rhs.terms {
            *self.terms.entry(k).or_insert(0.0) += v;
        }
        self.constant += rhs.constant;
        self
    }
}

impl Sub for LinearForm {
    type Output = LinearForm;
    fn sub(self, rhs: LinearForm) -> LinearForm {
        self + (-rhs)
    }
}

impl Neg for LinearForm {
    type Output = LinearForm;
    fn neg(self) -> LinearForm {
        self.scaled(-1.0)
    }
}

impl Mul<LinearForm> for f64 {
    type Output = LinearForm;
    fn mul(self, rhs: LinearForm) -> LinearForm {
        rhs.scaled(self)
    }
}

/// Serialized layout of a [`GaussianVector`]; `cov` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianVectorRecord {
    pub labels: Vec<String>,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Jointly Gaussian variables with labels, means and a validated covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianVectorRecord", into = "GaussianVectorRecord")]
pub struct GaussianVector {
    labels: Vec<String>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    repaired_asymmetry: f64,
}

impl GaussianVector {
    /// Validates labels, dimensions, symmetry and positive semidefiniteness.
    ///
    /// Asymmetries up to [`SYMMETRY_TOLERANCE`] are repaired by replacing the
    /// matrix with `(cov + covᵀ)/2`; the magnitude is kept in
    /// [`GaussianVector::repaired_asymmetry`].
    pub fn new(
        labels: Vec<String>,
        mean: Vec<f64>,
        cov: DMatrix<f64>,
    ) -> Result<Self, GaussianError> {
        let n = labels.len();
        if mean.len() != n || cov.nrows() != n || cov.ncols() != n {
            return Err(GaussianError::DimensionMismatch {
                labels: n,
                mean: mean.len(),
                rows: cov.nrows(),
                cols: cov.ncols(),
            });
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(GaussianError::DuplicateLabel(label.clone()));
            }
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(GaussianError::NonFinite("mean"));
        }
        if cov.iter().any(|c| !c.is_finite()) {
            return Err(GaussianError::NonFinite("covariance"));
        }

        let asymmetry = (&cov - cov.transpose()).amax();
        if asymmetry > SYMMETRY_TOLERANCE {
            return Err(GaussianError::Asymmetric(asymmetry));
        }
        let cov = if asymmetry > 0.0 {
            (&cov + cov.transpose()) * 0.5
        } else {
            cov
        };

        let state = Self {
            labels,
            mean: DVector::from_vec(mean),
            cov,
            repaired_asymmetry: asymmetry,
        };
        let min_eig = state.min_eigenvalue();
        if min_eig < -PSD_TOLERANCE {
            return Err(GaussianError::NotPositiveSemidefinite(min_eig));
        }
        Ok(state)
    }

    pub fn zero_mean(labels: &[&str], cov: DMatrix<f64>) -> Result<Self, GaussianError> {
        let n = labels.len();
        Self::new(
            labels.iter().map(|s| (*s).to_owned()).collect(),
            vec![0.0; n],
            cov,
        )
    }

    /// Mutually uncorrelated variables with the given variances.
    pub fn independent(variables: &[(&str, f64)]) -> Result<Self, GaussianError> {
        let labels: Vec<&str> = variables.iter().map(|(l, _)| *l).collect();
        let diag = DVector::from_iterator(variables.len(), variables.iter().map(|(_, v)| *v));
        Self::zero_mean(&labels, DMatrix::from_diagonal(&diag))
    }

    /// Copy with new means, in label order.
    pub fn with_mean(&self, mean: Vec<f64>) -> Result<Self, GaussianError> {
        Self::new(self.labels.clone(), mean, self.cov.clone())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn repaired_asymmetry(&self) -> f64 {
        self.repaired_asymmetry
    }

    pub fn index_of(&self, label: &str) -> Result<usize, GaussianError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| GaussianError::UnknownLabel(label.to_owned()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.cov
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Coefficient vector of `form` in label order.
    pub fn coefficients(&self, form: &LinearForm) -> Result<DVector<f64>, GaussianError> {
        let mut a = DVector::zeros(self.dim());
        for (label, c) in &form.terms {
            a[self.index_of(label)?] += c;
        }
        Ok(a)
    }

    pub fn mean_of(&self, form: &LinearForm) -> Result<f64, GaussianError> {
        Ok(form.constant + self.coefficients(form)?.dot(&self.mean))
    }

    /// `aᵀ·cov·b`.
    pub fn covariance_of(&self, a: &LinearForm, b: &LinearForm) -> Result<f64, GaussianError> {
        let a = self.coefficients(a)?;
        let b = self.coefficients(b)?;
        Ok(a.dot(&(&self.cov * b)))
    }

    /// `aᵀ·cov·a`, clamped at zero when rounding pushes it slightly negative.
    pub fn variance_of(&self, form: &LinearForm) -> Result<f64, GaussianError> {
        let v = self.covariance_of(form, form)?;
        Ok(clamp_rounding(v))
    }

    /// Residual variance of `a` after optimal linear estimation from `b`.
    pub fn conditional_variance(
        &self,
        a: &LinearForm,
        b: &LinearForm,
    ) -> Result<f64, GaussianError> {
        let v_a = self.variance_of(a)?;
        let v_b = self.variance_of(b)?;
        let c = self.covariance_of(a, b)?;
        conditional_variance_from_moments(v_a, v_b, c)
    }

    /// Factorization used for sampling.
    pub fn sampler(&self) -> GaussianSampler {
        GaussianSampler {
            mean: self.mean.clone(),
            factor: semidefinite_cholesky(&self.cov),
        }
    }

    /// `n` i.i.d. draws as an `n × dim` matrix, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>, GaussianError> {
        if n == 0 {
            return Err(GaussianError::EmptySample);
        }
        let sampler = self.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = DMatrix::zeros(n, self.dim());
        let mut row = vec![0.0; self.dim()];
        for i in 0..n {
            sampler.draw_into(&mut rng, &mut row);
            for (j, x) in row.iter().enumerate() {
                out[(i, j)] = *x;
            }
        }
        Ok(out)
    }
}

impl TryFrom<GaussianVectorRecord> for GaussianVector {
    type Error = GaussianError;

    fn try_from(r: GaussianVectorRecord) -> Result<Self, Self::Error> {
        let n = r.labels.len();
        if r.cov.len() != n || r.cov.iter().any(|row| row.len() != n) {
            return Err(GaussianError::DimensionMismatch {
                labels: n,
                mean: r.mean.len(),
                rows: r.cov.len(),
                cols: r.cov.first().map_or(0, Vec::len),
            });
        }
        let cov = DMatrix::from_fn(n, n, |i, j| r.cov[i][j]);
        Self::new(r.labels, r.mean, cov)
    }
}

impl From<GaussianVector> for GaussianVectorRecord {
    fn from(g: GaussianVector) -> Self {
        let n = g.dim();
        Self {
            cov: (0..n)
                .map(|i| (0..n).map(|j| g.cov[(i, j)]).collect())
                .collect(),
            mean: g.mean.iter().copied().collect(),
            labels: g.labels,
        }
    }
}

/// `v_a − c²/v_b`, with the constant-conditioner rule: `v_b = 0` and `c = 0`
/// leaves `v_a` unchanged, `v_b = 0` with `c ≠ 0` is inconsistent.
pub fn conditional_variance_from_moments(v_a: f64, v_b: f64, c: f64) -> Result<f64, GaussianError> {
    if v_b == 0.0 {
        if c == 0.0 {
            return Ok(v_a);
        }
        return Err(GaussianError::DegenerateConditioning(c));
    }
    Ok(clamp_rounding(v_a - c * c / v_b))
}

fn clamp_rounding(v: f64) -> f64 {
    if v < 0.0 && v >= -ROUNDING_FLOOR * (1.0 + v.abs()) {
        0.0
    } else {
        v.max(0.0)
    }
}

/// Lower-triangular `L` with `L·Lᵀ = cov`; pivots at rounding level are
/// treated as exact zeros so that degenerate coordinates stay deterministic.
fn semidefinite_cholesky(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    let scale = cov.diagonal().amax().max(VACUUM_VARIANCE);
    let pivot_floor = 1e-12 * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let d = cov[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d <= pivot_floor {
            continue;
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let s = cov[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / root;
        }
    }
    l
}

/// Precomputed factor for repeated draws.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Writes one draw into `out` (length `dim`).
    pub fn draw_into<R: rand::Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let n = self.dim();
        let out = &mut out[..n];
        for slot in out.iter_mut() {
            *slot = StandardNormal.sample(rng);
        }
        // Row i of L only reads z_0..z_i, so filling from the bottom keeps
        // the untransformed normals available.
        for i in (0..n).rev() {
            let mut acc = self.mean[i];
            for (k, zk) in out.iter().enumerate().take(i + 1) {
                let lik = self.factor[(i, k)];
                if lik != 0.0 {
                    acc += lik * zk;
                }
            }
            out[i] = acc;
        }
    }
}

/// Per-task seed derived from a base seed with SplitMix64 finalization of
/// `seed + golden·(index + 1)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
