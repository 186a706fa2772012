//! Measurement, reconstruction and their composition as linear forms over a
//! joint Gaussian state, with the physical validity bounds each stage obeys.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{GaussianError, GaussianVector, GaussianVectorRecord, LinearForm};

/// Additive slack on every validity inequality so that stages sitting exactly
/// on a bound validate under floating-point round-off.
pub const VALIDITY_TOLERANCE: f64 = 1e-9;

/// Allowed `|h·g − 1|` for a unity-gain channel.
pub const UNITY_GAIN_TOLERANCE: f64 = 1e-9;

pub const X_IN: &str = "X_in";
pub const Y_IN: &str = "Y_in";
pub const B_X: &str = "B_X";
pub const B_Y: &str = "B_Y";
pub const C_X: &str = "C_X";
pub const C_Y: &str = "C_Y";
pub const X_M: &str = "X_m";
pub const X_R: &str = "X_r";
pub const Y_M: &str = "Y_m";
pub const Y_R: &str = "Y_r";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    Y,
}

impl fmt::Display for Quadrature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quadrature::X => f.write_str("X"),
            Quadrature::Y => f.write_str("Y"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error(
        "measurement Heisenberg bound violated: ΔB_X·ΔB_Y = {product:.6} < |g_X·g_Y| = {bound:.6}"
    )]
    MeasurementBound { product: f64, bound: f64 },
    #[error("measurement equivalent-noise bound violated: N_X^m·N_Y^m = {product:.6} < 1")]
    EquivalentNoiseBound { product: f64 },
    #[error("reconstruction Heisenberg bound violated: ΔC_X·ΔC_Y = {product:.6} < 1")]
    ReconstructionBound { product: f64 },
    #[error("noise budget measurement bound violated: v_Xm·v_Ym = {product:.6} < 1")]
    BudgetMeasurementBound { product: f64 },
    #[error("noise budget reconstruction bound violated: v_Xr·v_Yr = {product:.6} < 1")]
    BudgetReconstructionBound { product: f64 },
    #[error("noise budget correlation exceeds Cauchy-Schwarz on {quadrature}: c² = {c_squared:.6} > {limit:.6}")]
    CorrelationBound {
        quadrature: Quadrature,
        c_squared: f64,
        limit: f64,
    },
    #[error("negative or non-finite variance `{0}`")]
    InvalidVariance(&'static str),
    #[error("input uncertainty bound violated: var_X·var_Y = {product:.6} < 1")]
    InputUncertainty { product: f64 },
    #[error("gain `{0}` must be nonzero and finite")]
    ZeroGain(&'static str),
    #[error("cross-quadrature gains f_X, f_Y must be zero (rotate the measurement frame first)")]
    UnsupportedRotation,
    #[error("unity gain required on {quadrature}: h·g = {gain}")]
    NonUnityGain { quadrature: Quadrature, gain: f64 },
    #[error("noise vector `{which}` must have labels {expected:?}")]
    NoiseLabels {
        which: &'static str,
        expected: [&'static str; 2],
    },
    #[error("joint covariance of input, measurement and reconstruction noise is not positive semidefinite (smallest eigenvalue {0:e})")]
    JointNotPositiveSemidefinite(f64),
    #[error("negative equivalent noise {0}")]
    NegativeNoise(f64),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

fn check_noise_labels(
    noise: &GaussianVector,
    which: &'static str,
    expected: [&'static str; 2],
) -> Result<(), ChannelError> {
    let labels = noise.labels();
    if labels.len() != 2 || labels[0] != expected[0] || labels[1] != expected[1] {
        return Err(ChannelError::NoiseLabels { which, expected });
    }
    Ok(())
}

fn check_gain(value: f64, name: &'static str) -> Result<(), ChannelError> {
    if value == 0.0 || !value.is_finite() {
        return Err(ChannelError::ZeroGain(name));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementStageRecord {
    #[serde(rename = "g_X")]
    pub g_x: f64,
    #[serde(rename = "g_Y")]
    pub g_y: f64,
    #[serde(rename = "f_X", default)]
    pub f_x: f64,
    #[serde(rename = "f_Y", default)]
    pub f_y: f64,
    #[serde(rename = "noise_B")]
    pub noise_b: GaussianVectorRecord,
}

/// `M_X = g_X·X_in + f_X·Y_in + B_X`, `M_Y = g_Y·Y_in + f_Y·X_in + B_Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasurementStageRecord", into = "MeasurementStageRecord")]
pub struct MeasurementStage {
    g_x: f64,
    g_y: f64,
    f_x: f64,
    f_y: f64,
    noise_b: GaussianVector,
}

impl MeasurementStage {
    pub fn new(
        g_x: f64,
        g_y: f64,
        f_x: f64,
        f_y: f64,
        noise_b: GaussianVector,
    ) -> Result<Self, ChannelError> {
        check_gain(g_x, "g_X")?;
        check_gain(g_y, "g_Y")?;
        if !f_x.is_finite() || !f_y.is_finite() {
            return Err(ChannelError::UnsupportedRotation);
        }
        check_noise_labels(&noise_b, "noise_B", [B_X, B_Y])?;
        let stage = Self {
            g_x,
            g_y,
            f_x,
            f_y,
            noise_b,
        };
        if !stage.is_rotated() {
            let product = (stage.var_b(0) * stage.var_b(1)).sqrt();
            let bound = (g_x * g_y).abs();
            if product < bound - VALIDITY_TOLERANCE {
                return Err(ChannelError::MeasurementBound { product, bound });
            }
        }
        Ok(stage)
    }

    /// Uncorrelated measurement noises with the given variances, `f = 0`.
    pub fn simple(g_x: f64, g_y: f64, var_bx: f64, var_by: f64) -> Result<Self, ChannelError> {
        let noise = GaussianVector::independent(&[(B_X, var_bx), (B_Y, var_by)])?;
        Self::new(g_x, g_y, 0.0, 0.0, noise)
    }

    pub fn gains(&self) -> (f64, f64) {
        (self.g_x, self.g_y)
    }

    pub fn cross_gains(&self) -> (f64, f64) {
        (self.f_x, self.f_y)
    }

    pub fn noise(&self) -> &GaussianVector {
        &self.noise_b
    }

    fn is_rotated(&self) -> bool {
        self.f_x != 0.0 || self.f_y != 0.0
    }

    fn var_b(&self, i: usize) -> f64 {
        self.noise_b.cov()[(i, i)]
    }

    /// Measurement noise referred to the input, `(ΔB/|g|)²` per quadrature.
    pub fn equivalent_input_noise(&self) -> Result<(f64, f64), ChannelError> {
        if self.is_rotated() {
            return Err(ChannelError::UnsupportedRotation);
        }
        let n_x = self.var_b(0) / (self.g_x * self.g_x);
        let n_y = self.var_b(1) / (self.g_y * self.g_y);
        let product = n_x * n_y;
        if product.sqrt() < 1.0 - VALIDITY_TOLERANCE {
            return Err(ChannelError::EquivalentNoiseBound { product });
        }
        Ok((n_x, n_y))
    }
}

impl TryFrom<MeasurementStageRecord> for MeasurementStage {
    type Error = ChannelError;
    fn try_from(r: MeasurementStageRecord) -> Result<Self, ChannelError> {
        Self::new(r.g_x, r.g_y, r.f_x, r.f_y, r.noise_b.try_into()?)
    }
}

impl From<MeasurementStage> for MeasurementStageRecord {
    fn from(m: MeasurementStage) -> Self {
        Self {
            g_x: m.g_x,
            g_y: m.g_y,
            f_x: m.f_x,
            f_y: m.f_y,
            noise_b: m.noise_b.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionStageRecord {
    #[serde(rename = "h_X")]
    pub h_x: f64,
    #[serde(rename = "h_Y")]
    pub h_y: f64,
    #[serde(rename = "noise_C")]
    pub noise_c: GaussianVectorRecord,
}

/// `X_out = h_X·M_X + C_X`, `Y_out = h_Y·M_Y + C_Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "ReconstructionStageRecord",
    into = "ReconstructionStageRecord"
)]
pub struct ReconstructionStage {
    h_x: f64,
    h_y: f64,
    noise_c: GaussianVector,
}

impl ReconstructionStage {
    pub fn new(h_x: f64, h_y: f64, noise_c: GaussianVector) -> Result<Self, ChannelError> {
        check_gain(h_x, "h_X")?;
        check_gain(h_y, "h_Y")?;
        check_noise_labels(&noise_c, "noise_C", [C_X, C_Y])?;
        let product = (noise_c.cov()[(0, 0)] * noise_c.cov()[(1, 1)]).sqrt();
        if product < 1.0 - VALIDITY_TOLERANCE {
            return Err(ChannelError::ReconstructionBound { product });
        }
        Ok(Self { h_x, h_y, noise_c })
    }

    pub fn simple(h_x: f64, h_y: f64, var_cx: f64, var_cy: f64) -> Result<Self, ChannelError> {
        let noise = GaussianVector::independent(&[(C_X, var_cx), (C_Y, var_cy)])?;
        Self::new(h_x, h_y, noise)
    }

    pub fn gains(&self) -> (f64, f64) {
        (self.h_x, self.h_y)
    }

    pub fn noise(&self) -> &GaussianVector {
        &self.noise_c
    }
}

impl TryFrom<ReconstructionStageRecord> for ReconstructionStage {
    type Error = ChannelError;
    fn try_from(r: ReconstructionStageRecord) -> Result<Self, ChannelError> {
        Self::new(r.h_x, r.h_y, r.noise_c.try_into()?)
    }
}

impl From<ReconstructionStage> for ReconstructionStageRecord {
    fn from(s: ReconstructionStage) -> Self {
        Self {
            h_x: s.h_x,
            h_y: s.h_y,
            noise_c: s.noise_c.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputStateRecord {
    #[serde(rename = "var_X")]
    pub var_x: f64,
    #[serde(rename = "var_Y")]
    pub var_y: f64,
    #[serde(default)]
    pub mean_x: f64,
    #[serde(default)]
    pub mean_y: f64,
}

/// Input signal: quadrature variances and the coherent amplitude `(x_a, y_a)`,
/// with `α = (x_a + i·y_a)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InputStateRecord", into = "InputStateRecord")]
pub struct InputState {
    var_x: f64,
    var_y: f64,
    mean_x: f64,
    mean_y: f64,
}

impl InputState {
    pub fn new(var_x: f64, var_y: f64, mean_x: f64, mean_y: f64) -> Result<Self, ChannelError> {
        if !(var_x > 0.0 && var_x.is_finite()) {
            return Err(ChannelError::InvalidVariance("var_X"));
        }
        if !(var_y > 0.0 && var_y.is_finite()) {
            return Err(ChannelError::InvalidVariance("var_Y"));
        }
        if !mean_x.is_finite() || !mean_y.is_finite() {
            return Err(ChannelError::InvalidVariance("mean"));
        }
        let product = var_x * var_y;
        if product < 1.0 - VALIDITY_TOLERANCE {
            return Err(ChannelError::InputUncertainty { product });
        }
        Ok(Self {
            var_x,
            var_y,
            mean_x,
            mean_y,
        })
    }

    pub fn coherent(x_a: f64, y_a: f64) -> Self {
        Self {
            var_x: 1.0,
            var_y: 1.0,
            mean_x: x_a,
            mean_y: y_a,
        }
    }

    pub fn vacuum() -> Self {
        Self::coherent(0.0, 0.0)
    }

    pub fn variances(&self) -> (f64, f64) {
        (self.var_x, self.var_y)
    }

    pub fn amplitude(&self) -> (f64, f64) {
        (self.mean_x, self.mean_y)
    }

    pub fn is_minimum_uncertainty(&self) -> bool {
        (self.var_x * self.var_y - 1.0).abs() <= VALIDITY_TOLERANCE
    }
}

impl TryFrom<InputStateRecord> for InputState {
    type Error = ChannelError;
    fn try_from(r: InputStateRecord) -> Result<Self, ChannelError> {
        Self::new(r.var_x, r.var_y, r.mean_x, r.mean_y)
    }
}

impl From<InputState> for InputStateRecord {
    fn from(s: InputState) -> Self {
        Self {
            var_x: s.var_x,
            var_y: s.var_y,
            mean_x: s.mean_x,
            mean_y: s.mean_y,
        }
    }
}

/// Rows `B_X, B_Y`, columns `C_X, C_Y`: `cross[i][j] = ⟨B_i C_j⟩`.
pub type CrossCovariance = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfigRecord {
    pub measurement: MeasurementStageRecord,
    pub reconstruction: ReconstructionStageRecord,
    #[serde(rename = "cross_cov_BC", default)]
    pub cross_cov_bc: CrossCovariance,
    pub input: InputStateRecord,
}

/// Full teleportation channel description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelConfigRecord", into = "ChannelConfigRecord")]
pub struct ChannelConfig {
    measurement: MeasurementStage,
    reconstruction: ReconstructionStage,
    cross_cov_bc: CrossCovariance,
    input: InputState,
    joint: GaussianVector,
}

/// Output of [`ChannelConfig::compose`].
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub out_x: LinearForm,
    pub out_y: LinearForm,
    /// `D_X = h_X·B_X + C_X`
    pub noise_x: LinearForm,
    pub noise_y: LinearForm,
    pub total_gain_x: f64,
    pub total_gain_y: f64,
    pub state: GaussianVector,
}

impl ChannelConfig {
    pub fn new(
        measurement: MeasurementStage,
        reconstruction: ReconstructionStage,
        cross_cov_bc: CrossCovariance,
        input: InputState,
    ) -> Result<Self, ChannelError> {
        if cross_cov_bc.iter().flatten().any(|c| !c.is_finite()) {
            return Err(ChannelError::Gaussian(GaussianError::NonFinite(
                "cross_cov_BC",
            )));
        }
        let joint = joint_state(&measurement, &reconstruction, &cross_cov_bc, &input)?;
        Ok(Self {
            measurement,
            reconstruction,
            cross_cov_bc,
            input,
            joint,
        })
    }

    /// Unit gains, uncorrelated shot-noise-limited measurement and
    /// reconstruction (`v_m = v_r = 1`, `c = 0`), coherent input.
    pub fn shot_noise(input: InputState) -> Self {
        Self::new(
            MeasurementStage::simple(1.0, 1.0, 1.0, 1.0).expect("shot-noise measurement"),
            ReconstructionStage::simple(1.0, 1.0, 1.0, 1.0).expect("shot-noise reconstruction"),
            [[0.0; 2]; 2],
            input,
        )
        .expect("shot-noise channel")
    }

    /// Unity-gain channel whose noise budget is `budget`.
    pub fn from_budget(budget: &NoiseBudget, input: InputState) -> Result<Self, ChannelError> {
        Self::new(
            MeasurementStage::simple(1.0, 1.0, budget.v_xm, budget.v_ym)?,
            ReconstructionStage::simple(1.0, 1.0, budget.v_xr, budget.v_yr)?,
            [[budget.c_xm_xr, 0.0], [0.0, budget.c_ym_yr]],
            input,
        )
    }

    /// Unit gains with measurement and reconstruction noises perfectly
    /// anticorrelated on both quadratures, so `D_X = D_Y = 0`. This is the
    /// infinite-squeezing limit of the shared EPR resource.
    pub fn ideal(input: InputState) -> Self {
        // B_Y enters the output with a + sign, so C_Y = −B_Y as well.
        Self::new(
            MeasurementStage::simple(1.0, 1.0, 1.0, 1.0).expect("ideal measurement"),
            ReconstructionStage::simple(1.0, 1.0, 1.0, 1.0).expect("ideal reconstruction"),
            [[-1.0, 0.0], [0.0, -1.0]],
            input,
        )
        .expect("ideal channel")
    }

    pub fn measurement(&self) -> &MeasurementStage {
        &self.measurement
    }

    pub fn reconstruction(&self) -> &ReconstructionStage {
        &self.reconstruction
    }

    pub fn cross_cov_bc(&self) -> &CrossCovariance {
        &self.cross_cov_bc
    }

    pub fn input(&self) -> &InputState {
        &self.input
    }

    /// Joint state over `X_in, Y_in, B_X, B_Y, C_X, C_Y`.
    pub fn joint_state(&self) -> &GaussianVector {
        &self.joint
    }

    pub fn total_gains(&self) -> (f64, f64) {
        let (g_x, g_y) = self.measurement.gains();
        let (h_x, h_y) = self.reconstruction.gains();
        (h_x * g_x, h_y * g_y)
    }

    pub fn compose(&self) -> Composition {
        let (g_x, g_y) = self.measurement.gains();
        let (f_x, f_y) = self.measurement.cross_gains();
        let (h_x, h_y) = self.reconstruction.gains();
        let noise_x = LinearForm::term(B_X, h_x).plus(C_X, 1.0);
        let noise_y = LinearForm::term(B_Y, h_y).plus(C_Y, 1.0);
        let out_x = LinearForm::term(X_IN, h_x * g_x).plus(Y_IN, h_x * f_x) + noise_x.clone();
        let out_y = LinearForm::term(Y_IN, h_y * g_y).plus(X_IN, h_y * f_y) + noise_y.clone();
        Composition {
            out_x,
            out_y,
            noise_x,
            noise_y,
            total_gain_x: h_x * g_x,
            total_gain_y: h_y * g_y,
            state: self.joint.clone(),
        }
    }

    /// Noise budget in the unity-gain frame `X_out = X_in + X_m + X_r`.
    pub fn to_unity_gain_budget(&self) -> Result<NoiseBudget, ChannelError> {
        if self.measurement.is_rotated() {
            return Err(ChannelError::UnsupportedRotation);
        }
        let (gt_x, gt_y) = self.total_gains();
        if (gt_x - 1.0).abs() > UNITY_GAIN_TOLERANCE {
            return Err(ChannelError::NonUnityGain {
                quadrature: Quadrature::X,
                gain: gt_x,
            });
        }
        if (gt_y - 1.0).abs() > UNITY_GAIN_TOLERANCE {
            return Err(ChannelError::NonUnityGain {
                quadrature: Quadrature::Y,
                gain: gt_y,
            });
        }
        let (h_x, h_y) = self.reconstruction.gains();
        let b = self.measurement.noise().cov();
        let c = self.reconstruction.noise().cov();
        NoiseBudget::new(
            h_x * h_x * b[(0, 0)],
            h_y * h_y * b[(1, 1)],
            c[(0, 0)],
            c[(1, 1)],
            h_x * self.cross_cov_bc[0][0],
            h_y * self.cross_cov_bc[1][1],
        )
    }
}

fn joint_state(
    m: &MeasurementStage,
    r: &ReconstructionStage,
    cross: &CrossCovariance,
    input: &InputState,
) -> Result<GaussianVector, ChannelError> {
    let b = m.noise().cov();
    let c = r.noise().cov();
    let mut cov = DMatrix::zeros(6, 6);
    cov[(0, 0)] = input.var_x;
    cov[(1, 1)] = input.var_y;
    for i in 0..2 {
        for j in 0..2 {
            cov[(2 + i, 2 + j)] = b[(i, j)];
            cov[(4 + i, 4 + j)] = c[(i, j)];
            cov[(2 + i, 4 + j)] = cross[i][j];
            cov[(4 + j, 2 + i)] = cross[i][j];
        }
    }
    let mean = vec![
        input.mean_x,
        input.mean_y,
        m.noise().mean()[0],
        m.noise().mean()[1],
        r.noise().mean()[0],
        r.noise().mean()[1],
    ];
    let labels = [X_IN, Y_IN, B_X, B_Y, C_X, C_Y]
        .iter()
        .map(|s| (*s).to_owned())
        .collect();
    GaussianVector::new(labels, mean, cov).map_err(|e| match e {
        GaussianError::NotPositiveSemidefinite(v) => ChannelError::JointNotPositiveSemidefinite(v),
        other => ChannelError::Gaussian(other),
    })
}

impl TryFrom<ChannelConfigRecord> for ChannelConfig {
    type Error = ChannelError;
    fn try_from(r: ChannelConfigRecord) -> Result<Self, ChannelError> {
        Self::new(
            r.measurement.try_into()?,
            r.reconstruction.try_into()?,
            r.cross_cov_bc,
            r.input.try_into()?,
        )
    }
}

impl From<ChannelConfig> for ChannelConfigRecord {
    fn from(c: ChannelConfig) -> Self {
        Self {
            measurement: c.measurement.into(),
            reconstruction: c.reconstruction.into(),
            cross_cov_bc: c.cross_cov_bc,
            input: c.input.into(),
        }
    }
}

/// Signal transfer coefficients `T = var/(var + N)` for each quadrature.
pub fn transfer_coefficients(
    n_x: f64,
    n_y: f64,
    input: &InputState,
) -> Result<(f64, f64), ChannelError> {
    for n in [n_x, n_y] {
        if n.is_nan() || n < 0.0 {
            return Err(ChannelError::NegativeNoise(n));
        }
    }
    let (vx, vy) = input.variances();
    Ok((vx / (vx + n_x), vy / (vy + n_y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudgetRecord {
    #[serde(rename = "v_Xm")]
    pub v_xm: f64,
    #[serde(rename = "v_Ym")]
    pub v_ym: f64,
    #[serde(rename = "v_Xr")]
    pub v_xr: f64,
    #[serde(rename = "v_Yr")]
    pub v_yr: f64,
    #[serde(rename = "c_XmXr", default)]
    pub c_xm_xr: f64,
    #[serde(rename = "c_YmYr", default)]
    pub c_ym_yr: f64,
}

/// Unity-gain noise budget: measurement (`m`) and reconstruction (`r`)
/// added-noise variances per quadrature and their real correlations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseBudgetRecord", into = "NoiseBudgetRecord")]
pub struct NoiseBudget {
    pub(crate) v_xm: f64,
    pub(crate) v_ym: f64,
    pub(crate) v_xr: f64,
    pub(crate) v_yr: f64,
    pub(crate) c_xm_xr: f64,
    pub(crate) c_ym_yr: f64,
}

impl NoiseBudget {
    pub fn new(
        v_xm: f64,
        v_ym: f64,
        v_xr: f64,
        v_yr: f64,
        c_xm_xr: f64,
        c_ym_yr: f64,
    ) -> Result<Self, ChannelError> {
        for (v, name) in [
            (v_xm, "v_Xm"),
            (v_ym, "v_Ym"),
            (v_xr, "v_Xr"),
            (v_yr, "v_Yr"),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ChannelError::InvalidVariance(name));
            }
        }
        if !c_xm_xr.is_finite() || !c_ym_yr.is_finite() {
            return Err(ChannelError::InvalidVariance("correlation"));
        }
        let product = v_xm * v_ym;
        if product.sqrt() < 1.0 - VALIDITY_TOLERANCE {
            return Err(ChannelError::BudgetMeasurementBound { product });
        }
        let product = v_xr * v_yr;
        if product.sqrt() < 1.0 - VALIDITY_TOLERANCE {
            return Err(ChannelError::BudgetReconstructionBound { product });
        }
        for (quadrature, c, limit) in [
            (Quadrature::X, c_xm_xr, v_xm * v_xr),
            (Quadrature::Y, c_ym_yr, v_ym * v_yr),
        ] {
            let c_squared = c * c;
            if c_squared - limit > 1e-12 * limit.max(1.0) {
                return Err(ChannelError::CorrelationBound {
                    quadrature,
                    c_squared,
                    limit,
                });
            }
        }
        Ok(Self {
            v_xm,
            v_ym,
            v_xr,
            v_yr,
            c_xm_xr,
            c_ym_yr,
        })
    }

    /// Both stages independently at the shot-noise limit.
    pub fn shot_noise() -> Self {
        Self::new(1.0, 1.0, 1.0, 1.0, 0.0, 0.0).expect("shot-noise budget")
    }

    pub fn measurement_variances(&self) -> (f64, f64) {
        (self.v_xm, self.v_ym)
    }

    pub fn reconstruction_variances(&self) -> (f64, f64) {
        (self.v_xr, self.v_yr)
    }

    pub fn correlations(&self) -> (f64, f64) {
        (self.c_xm_xr, self.c_ym_yr)
    }

    /// `v_Cx = v_Xr·v_Xm − c²`
    pub fn v_cx(&self) -> f64 {
        self.v_xr * self.v_xm - self.c_xm_xr * self.c_xm_xr
    }

    pub fn v_cy(&self) -> f64 {
        self.v_yr * self.v_ym - self.c_ym_yr * self.c_ym_yr
    }

    /// `(N_X^out, N_Y^out)` with `N = v_m + v_r + 2c`.
    pub fn equivalent_output_noise(&self) -> (f64, f64) {
        (
            (self.v_xm + self.v_xr + 2.0 * self.c_xm_xr).max(0.0),
            (self.v_ym + self.v_yr + 2.0 * self.c_ym_yr).max(0.0),
        )
    }

    /// The implied zero-mean state over `X_m, X_r, Y_m, Y_r`.
    pub fn state(&self) -> Result<GaussianVector, GaussianError> {
        let cov = DMatrix::from_row_slice(
            4,
            4,
            &[
                self.v_xm,
                self.c_xm_xr,
                0.0,
                0.0,
                self.c_xm_xr,
                self.v_xr,
                0.0,
                0.0,
                0.0,
                0.0,
                self.v_ym,
                self.c_ym_yr,
                0.0,
                0.0,
                self.c_ym_yr,
                self.v_yr,
            ],
        );
        GaussianVector::zero_mean(&[X_M, X_R, Y_M, Y_R], cov)
    }
}

impl TryFrom<NoiseBudgetRecord> for NoiseBudget {
    type Error = ChannelError;
    fn try_from(r: NoiseBudgetRecord) -> Result<Self, ChannelError> {
        Self::new(r.v_xm, r.v_ym, r.v_xr, r.v_yr, r.c_xm_xr, r.c_ym_yr)
    }
}

impl From<NoiseBudget> for NoiseBudgetRecord {
    fn from(b: NoiseBudget) -> Self {
        Self {
            v_xm: b.v_xm,
            v_ym: b.v_ym,
            v_xr: b.v_xr,
            v_yr: b.v_yr,
            c_xm_xr: b.c_xm_xr,
            c_ym_yr: b.c_ym_yr,
        }
    }
}
