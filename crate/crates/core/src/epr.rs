//! Teleportation over an imperfect shared EPR resource.
//!
//! Two minimum-uncertainty squeezed beams (squeezed variance `s`,
//! anti-squeezed variance `1/s`) are combined on a balanced beamsplitter. Each
//! output beam travels a line of intensity transmission `η`, picking up
//! vacuum noise `√(1−η)`. Beam 1 is the measurement-side noise, beam 2 the
//! reconstruction-side noise:
//!
//! ```text
//! X_m =  √η·X_1 + √(1−η)·X'_v      X_r = √η·X_2 + √(1−η)·X_v
//! Y_m = −√η·Y_1 − √(1−η)·Y'_v      Y_r = √η·Y_2 + √(1−η)·Y_v
//! ```
//!
//! with `X_1 ± X_2`, `Y_1 ± Y_2` built from the two squeezed sources. The
//! output noise is `N_X^out = N_Y^out = 2(1 − η + η·s)`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelConfig, ChannelError, InputState, NoiseBudget, X_IN, Y_IN};
use crate::criteria::{epr_criterion, is_epr_violation, CriteriaError};
use crate::format::sig12;
use crate::gaussian::{GaussianError, GaussianVector, LinearForm};

pub const X_SQ1: &str = "X_sq1";
pub const Y_SQ1: &str = "Y_sq1";
pub const X_SQ2: &str = "X_sq2";
pub const Y_SQ2: &str = "Y_sq2";
pub const X_V: &str = "X_v";
pub const X_V_PRIME: &str = "X'_v";
pub const Y_V: &str = "Y_v";
pub const Y_V_PRIME: &str = "Y'_v";

/// Column order of the sweep CSV.
pub const SWEEP_CSV_HEADER: &str = "eta,s,squeezing_db,n_out,n_product,t_sum,fidelity,epr_violated";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EprError {
    #[error("transmission efficiency eta = {0} outside [0, 1]")]
    Efficiency(f64),
    #[error("squeezed variance s = {0} must be finite and non-negative")]
    SqueezedVariance(f64),
    #[error("perfect squeezing (s = 0) with eta = {0} > 0 has unbounded anti-squeezed noise; no finite noise budget exists")]
    UnboundedAntiSqueezing(f64),
    #[error("grid needs at least one point")]
    EmptyGrid,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprScenarioRecord {
    pub eta: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EprScenarioRecord", into = "EprScenarioRecord")]
pub struct EprScenario {
    eta: f64,
    s: f64,
}

/// One point of the `(η, s)` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eta: f64,
    pub s: f64,
    pub n_out: f64,
    pub t_sum: f64,
    #[serde(rename = "F")]
    pub fidelity: f64,
    pub epr_violated: bool,
}

impl SweepPoint {
    pub fn squeezing_db(&self) -> f64 {
        -10.0 * self.s.log10()
    }

    pub fn n_product(&self) -> f64 {
        self.n_out * self.n_out
    }

    pub fn csv_row(&self) -> String {
        [
            sig12(self.eta),
            sig12(self.s),
            sig12(self.squeezing_db()),
            sig12(self.n_out),
            sig12(self.n_product()),
            sig12(self.t_sum),
            sig12(self.fidelity),
            self.epr_violated.to_string(),
        ]
        .join(",")
    }
}

/// The mode-level description used by the Monte Carlo oracle.
#[derive(Debug, Clone)]
pub struct EprModes {
    /// Independent modes: input quadratures, squeezed sources and vacua.
    pub state: GaussianVector,
    pub x_m: LinearForm,
    pub x_r: LinearForm,
    pub y_m: LinearForm,
    pub y_r: LinearForm,
}

impl EprScenario {
    /// `s > 1` (anti-squeezed sources) is accepted; see
    /// [`EprScenario::is_anti_squeezed`].
    pub fn new(eta: f64, s: f64) -> Result<Self, EprError> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(EprError::Efficiency(eta));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(EprError::SqueezedVariance(s));
        }
        Ok(Self { eta, s })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn is_anti_squeezed(&self) -> bool {
        self.s > 1.0
    }

    pub fn squeezing_db(&self) -> f64 {
        -10.0 * self.s.log10()
    }

    /// `N_X^out = N_Y^out = 2(1 − η + η·s)`
    pub fn n_out(&self) -> f64 {
        2.0 * (1.0 - self.eta + self.eta * self.s)
    }

    /// `T_X^out + T_Y^out = 2/(3 − 2η + 2η·s)` for a vacuum-variance input.
    pub fn t_sum(&self) -> f64 {
        2.0 / (3.0 - 2.0 * self.eta + 2.0 * self.eta * self.s)
    }

    /// `F = 1/(2 − η + η·s)`
    pub fn fidelity(&self) -> f64 {
        1.0 / (2.0 - self.eta + self.eta * self.s)
    }

    fn has_finite_budget(&self) -> bool {
        self.s > 0.0 || self.eta == 0.0
    }

    pub fn to_noise_budget(&self) -> Result<NoiseBudget, EprError> {
        if self.eta == 0.0 {
            return Ok(NoiseBudget::shot_noise());
        }
        if !self.has_finite_budget() {
            return Err(EprError::UnboundedAntiSqueezing(self.eta));
        }
        let (eta, s) = (self.eta, self.s);
        let anti = 1.0 / s;
        // Each beam carries (s + 1/s)/2 on both quadratures; the beams are
        // correlated by (s − 1/s)/2, with the sign flipped on Y by Y_m = −Y_1.
        let v = eta * (s + anti) / 2.0 + (1.0 - eta);
        let c = eta * (s - anti) / 2.0;
        Ok(NoiseBudget::new(v, v, v, v, c, c)?)
    }

    /// `(V_Xr|Xm·V_Yr|Ym, V_Xm|Xr·V_Ym|Yr)`. At `s = 0` the anti-squeezed
    /// variance diverges and each conditional variance tends to
    /// `2(1 − η + η·s)`, which is used directly.
    pub fn conditional_variance_products(&self) -> Result<(f64, f64), EprError> {
        if self.has_finite_budget() {
            Ok(epr_criterion(&self.to_noise_budget()?)?.products)
        } else {
            let p = self.n_out() * self.n_out();
            Ok((p, p))
        }
    }

    pub fn epr_violated(&self) -> Result<bool, EprError> {
        Ok(is_epr_violation(self.conditional_variance_products()?))
    }

    pub fn closed_form(&self) -> Result<SweepPoint, EprError> {
        Ok(SweepPoint {
            eta: self.eta,
            s: self.s,
            n_out: self.n_out(),
            t_sum: self.t_sum(),
            fidelity: self.fidelity(),
            epr_violated: self.epr_violated()?,
        })
    }

    /// Unity-gain channel realizing this scenario.
    pub fn to_channel_config(&self, input: InputState) -> Result<ChannelConfig, EprError> {
        Ok(ChannelConfig::from_budget(&self.to_noise_budget()?, input)?)
    }

    /// Independent input, source and vacuum modes with the noise forms.
    pub fn modes(&self, input: &InputState) -> Result<EprModes, EprError> {
        if !self.has_finite_budget() {
            return Err(EprError::UnboundedAntiSqueezing(self.eta));
        }
        let (eta, s) = (self.eta, self.s);
        let anti = if s > 0.0 { 1.0 / s } else { 1.0 };
        let (var_x, var_y) = input.variances();
        let (x_a, y_a) = input.amplitude();
        let labels = [
            X_IN, Y_IN, X_SQ1, Y_SQ1, X_SQ2, Y_SQ2, X_V, X_V_PRIME, Y_V, Y_V_PRIME,
        ];
        let variances = [var_x, var_y, s, anti, anti, s, 1.0, 1.0, 1.0, 1.0];
        let mut mean = vec![0.0; labels.len()];
        mean[0] = x_a;
        mean[1] = y_a;
        let state = GaussianVector::new(
            labels.iter().map(|l| (*l).to_owned()).collect(),
            mean,
            DMatrix::from_diagonal(&DVector::from_row_slice(&variances)),
        )?;

        let x1 = FRAC_1_SQRT_2 * (LinearForm::var(X_SQ1) + LinearForm::var(X_SQ2));
        let x2 = FRAC_1_SQRT_2 * (LinearForm::var(X_SQ1) - LinearForm::var(X_SQ2));
        let y1 = FRAC_1_SQRT_2 * (LinearForm::var(Y_SQ1) + LinearForm::var(Y_SQ2));
        let y2 = FRAC_1_SQRT_2 * (LinearForm::var(Y_SQ1) - LinearForm::var(Y_SQ2));
        let (t, r) = (eta.sqrt(), (1.0 - eta).sqrt());

        Ok(EprModes {
            state,
            x_m: t * x1 + LinearForm::term(X_V_PRIME, r),
            x_r: t * x2 + LinearForm::term(X_V, r),
            y_m: -(t * y1 + LinearForm::term(Y_V_PRIME, r)),
            y_r: t * y2 + LinearForm::term(Y_V, r),
        })
    }
}

impl TryFrom<EprScenarioRecord> for EprScenario {
    type Error = EprError;
    fn try_from(r: EprScenarioRecord) -> Result<Self, EprError> {
        Self::new(r.eta, r.s)
    }
}

impl From<EprScenario> for EprScenarioRecord {
    fn from(s: EprScenario) -> Self {
        Self { eta: s.eta, s: s.s }
    }
}

/// `steps` evenly spaced values from `min` to `max` inclusive; one step
/// yields `[min]`.
pub fn linspace(min: f64, max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..steps)
            .map(|i| min + (max - min) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

/// Evaluates every `(η, s)` pair, `η` outer and `s` inner.
pub fn sweep(eta_grid: &[f64], s_grid: &[f64]) -> Result<Vec<SweepPoint>, EprError> {
    if eta_grid.is_empty() || s_grid.is_empty() {
        return Err(EprError::EmptyGrid);
    }
    let scenarios = eta_grid
        .iter()
        .flat_map(|&eta| s_grid.iter().map(move |&s| EprScenario::new(eta, s)))
        .collect::<Result<Vec<_>, _>>()?;
    scenarios.par_iter().map(EprScenario::closed_form).collect()
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for p in points {
        writeln!(out, "{}", p.csv_row())?;
    }
    Ok(())
}
