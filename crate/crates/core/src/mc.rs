//! Monte Carlo cross-check of the analytic results.
//!
//! Draws from the joint Gaussian state, realizes each sample of the output
//! noise and the measurement/reconstruction noises, and estimates `N_X`,
//! `N_Y`, the fidelity and the conditional-variance products. Standard errors
//! come from a delete-one-block jackknife over [`JACKKNIFE_BLOCKS`] blocks,
//! each seeded with `derive_seed(seed, block)` and run in parallel.
//!
//! The fidelity is estimated as the mean overlap `exp(−|β − α|²/4)` between
//! the input coherent state and a coherent state displaced by one draw of the
//! added noise, which is the P-representation of the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    ChannelConfig, ChannelError, InputState, NoiseBudget, B_X, B_Y, C_X, C_Y, X_IN, Y_IN,
};
use crate::criteria::{
    conditional_variance_products, fidelity_general, fidelity_integrand, CriteriaError,
};
use crate::epr::{EprError, EprScenario};
use crate::gaussian::{derive_seed, GaussianError, GaussianSampler, GaussianVector, LinearForm};

pub const MIN_SAMPLES: usize = 1000;
pub const JACKKNIFE_BLOCKS: usize = 100;
/// `|z|` at or above this fails the comparison.
pub const Z_GATE: f64 = 5.0;
/// Differences this small relative to `max(1, |analytic|)` count as exact.
pub const EXACT_AGREEMENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("at least {MIN_SAMPLES} samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("sample vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("conditioning on a constant sample with non-zero covariance {0}")]
    DegenerateConditioning(f64),
    #[error("amplitude must be finite")]
    NonFiniteAmplitude,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Epr(#[from] EprError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum McChannel {
    Channel(Box<ChannelConfig>),
    Epr(EprScenario),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRunConfig {
    pub samples: usize,
    pub seed: u64,
    pub channel: McChannel,
    /// Coherent amplitude `(x_a, y_a)` of the teleported state.
    pub input_amplitude: (f64, f64),
}

impl McRunConfig {
    /// Uses the channel's own input amplitude, or vacuum for an EPR scenario.
    pub fn new(channel: McChannel, samples: usize, seed: u64) -> Result<Self, McError> {
        if samples < MIN_SAMPLES {
            return Err(McError::TooFewSamples(samples));
        }
        let input_amplitude = match &channel {
            McChannel::Channel(c) => c.input().amplitude(),
            McChannel::Epr(_) => (0.0, 0.0),
        };
        Ok(Self {
            samples,
            seed,
            channel,
            input_amplitude,
        })
    }

    pub fn with_amplitude(mut self, x_a: f64, y_a: f64) -> Result<Self, McError> {
        if !x_a.is_finite() || !y_a.is_finite() {
            return Err(McError::NonFiniteAmplitude);
        }
        self.input_amplitude = (x_a, y_a);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    pub analytic: f64,
    pub z_score: f64,
}

impl Estimate {
    fn new(estimate: f64, std_error: f64, analytic: f64) -> Self {
        let diff = estimate - analytic;
        let z_score = if diff.abs() <= EXACT_AGREEMENT * analytic.abs().max(1.0) {
            0.0
        } else if std_error > 0.0 {
            diff / std_error
        } else {
            diff.signum() * f64::INFINITY
        };
        Self {
            estimate,
            std_error,
            analytic,
            z_score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub samples: usize,
    pub seed: u64,
    #[serde(rename = "est_N_X")]
    pub n_x: Estimate,
    #[serde(rename = "est_N_Y")]
    pub n_y: Estimate,
    #[serde(rename = "est_F")]
    pub fidelity: Estimate,
    #[serde(rename = "est_cv_product_r_given_m")]
    pub cv_product_r_given_m: Estimate,
    #[serde(rename = "est_cv_product_m_given_r")]
    pub cv_product_m_given_r: Estimate,
}

impl McReport {
    pub fn estimates(&self) -> [(&'static str, &Estimate); 5] {
        [
            ("N_X", &self.n_x),
            ("N_Y", &self.n_y),
            ("F", &self.fidelity),
            ("cv_product_r_given_m", &self.cv_product_r_given_m),
            ("cv_product_m_given_r", &self.cv_product_m_given_r),
        ]
    }

    pub fn max_abs_z(&self) -> f64 {
        self.estimates()
            .iter()
            .map(|(_, e)| e.z_score.abs())
            .fold(0.0, f64::max)
    }

    pub fn within_gate(&self) -> bool {
        self.max_abs_z() < Z_GATE
    }
}

/// `v_a − c²/v_b` from two equally long samples, with the constant-conditioner
/// rule: a constant `b` leaves `var(a)`.
pub fn estimate_conditional_variance(a: &[f64], b: &[f64]) -> Result<f64, McError> {
    if a.len() != b.len() {
        return Err(McError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < MIN_SAMPLES {
        return Err(McError::TooFewSamples(a.len()));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut v_a, mut v_b, mut c) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        v_a += dx * dx;
        v_b += dy * dy;
        c += dx * dy;
    }
    let d = n - 1.0;
    conditional(v_a / d, v_b / d, c / d)
}

fn conditional(v_a: f64, v_b: f64, c: f64) -> Result<f64, McError> {
    if v_b == 0.0 {
        return if c == 0.0 {
            Ok(v_a)
        } else {
            Err(McError::DegenerateConditioning(c))
        };
    }
    Ok(v_a - c * c / v_b)
}

// Per-sample quantities, in accumulation order.
const D_X: usize = 0;
const D_Y: usize = 1;
const XM: usize = 2;
const XR: usize = 3;
const YM: usize = 4;
const YR: usize = 5;
const W: usize = 6;
const Q: usize = 7;

/// Affine functional `constant + coefficients·sample`.
#[derive(Debug, Clone)]
struct Affine {
    constant: f64,
    coefficients: Vec<(usize, f64)>,
}

impl Affine {
    fn new(state: &GaussianVector, form: &LinearForm) -> Result<Self, GaussianError> {
        let coefficients = state
            .coefficients(form)?
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (i, *c))
            .collect();
        Ok(Self {
            constant: form.constant,
            coefficients,
        })
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .fold(self.constant, |acc, &(i, c)| acc + c * x[i])
    }
}

/// Everything needed to draw one sample of the protocol.
#[derive(Debug, Clone)]
struct ProtocolModel {
    sampler: GaussianSampler,
    out_x: Affine,
    out_y: Affine,
    x_in: usize,
    y_in: usize,
    gains: (f64, f64),
    amplitude: (f64, f64),
    noises: [Affine; 4],
    shift: [f64; Q],
}

struct Analytic {
    n_x: f64,
    n_y: f64,
    fidelity: f64,
    products: (f64, f64),
}

impl ProtocolModel {
    #[allow(clippy::too_many_arguments)]
    fn build(
        state: GaussianVector,
        out_x: &LinearForm,
        out_y: &LinearForm,
        gains: (f64, f64),
        noises: [&LinearForm; 4],
        amplitude: (f64, f64),
        budget: &NoiseBudget,
    ) -> Result<(Self, Analytic), McError> {
        let d_x = out_x.clone() - gains.0 * LinearForm::var(X_IN);
        let d_y = out_y.clone() - gains.1 * LinearForm::var(Y_IN);
        let mean_dx = state.mean_of(&d_x)?;
        let mean_dy = state.mean_of(&d_y)?;
        // β − α for the displaced coherent state.
        let off_x = (gains.0 - 1.0) * amplitude.0 + mean_dx;
        let off_y = (gains.1 - 1.0) * amplitude.1 + mean_dy;
        let (n_x, n_y) = budget.equivalent_output_noise();
        let analytic = Analytic {
            n_x,
            n_y,
            fidelity: fidelity_general(n_x, n_y, off_x, off_y)?,
            products: conditional_variance_products(budget)?,
        };
        let mut shift = [0.0; Q];
        shift[D_X] = mean_dx;
        shift[D_Y] = mean_dy;
        for (k, form) in noises.iter().enumerate() {
            shift[XM + k] = state.mean_of(form)?;
        }
        let model = Self {
            out_x: Affine::new(&state, out_x)?,
            out_y: Affine::new(&state, out_y)?,
            x_in: state.index_of(X_IN)?,
            y_in: state.index_of(Y_IN)?,
            gains,
            amplitude,
            noises: [
                Affine::new(&state, noises[0])?,
                Affine::new(&state, noises[1])?,
                Affine::new(&state, noises[2])?,
                Affine::new(&state, noises[3])?,
            ],
            shift,
            sampler: state.sampler(),
        };
        Ok((model, analytic))
    }

    fn for_channel(
        config: &ChannelConfig,
        amplitude: (f64, f64),
    ) -> Result<(Self, Analytic), McError> {
        let budget = config.to_unity_gain_budget()?;
        let comp = config.compose();
        let (h_x, h_y) = config.reconstruction().gains();
        let mut mean: Vec<f64> = comp.state.mean().iter().copied().collect();
        mean[comp.state.index_of(X_IN)?] = amplitude.0;
        mean[comp.state.index_of(Y_IN)?] = amplitude.1;
        let state = comp.state.with_mean(mean)?;
        let x_m = LinearForm::term(B_X, h_x);
        let y_m = LinearForm::term(B_Y, h_y);
        let x_r = LinearForm::var(C_X);
        let y_r = LinearForm::var(C_Y);
        Self::build(
            state,
            &comp.out_x,
            &comp.out_y,
            (comp.total_gain_x, comp.total_gain_y),
            [&x_m, &x_r, &y_m, &y_r],
            amplitude,
            &budget,
        )
    }

    fn for_epr(scenario: &EprScenario, amplitude: (f64, f64)) -> Result<(Self, Analytic), McError> {
        let budget = scenario.to_noise_budget()?;
        let input = InputState::coherent(amplitude.0, amplitude.1);
        let m = scenario.modes(&input)?;
        let out_x = LinearForm::var(X_IN) + m.x_m.clone() + m.x_r.clone();
        let out_y = LinearForm::var(Y_IN) + m.y_m.clone() + m.y_r.clone();
        Self::build(
            m.state.clone(),
            &out_x,
            &out_y,
            (1.0, 1.0),
            [&m.x_m, &m.x_r, &m.y_m, &m.y_r],
            amplitude,
            &budget,
        )
    }

    fn block(&self, samples: usize, seed: u64) -> Moments {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; self.sampler.dim()];
        let mut m = Moments::default();
        let (x_a, y_a) = self.amplitude;
        let mut q = [0.0; Q];
        for _ in 0..samples {
            self.sampler.draw_into(&mut rng, &mut x);
            let d_x = self.out_x.eval(&x) - self.gains.0 * x[self.x_in];
            let d_y = self.out_y.eval(&x) - self.gains.1 * x[self.y_in];
            q[D_X] = d_x;
            q[D_Y] = d_y;
            for (k, form) in self.noises.iter().enumerate() {
                q[XM + k] = form.eval(&x);
            }
            let beta_x = self.gains.0 * x_a + d_x;
            let beta_y = self.gains.1 * y_a + d_y;
            q[W] = fidelity_integrand(beta_x, beta_y, x_a, y_a);
            for (qi, shift) in q.iter_mut().zip(&self.shift).take(W) {
                *qi -= shift;
            }
            m.push(&q);
        }
        m
    }
}

/// Shifted first and second moments of the per-sample quantities.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    sum: [f64; Q],
    cross: [[f64; Q]; Q],
}

impl Moments {
    fn push(&mut self, q: &[f64; Q]) {
        self.n += 1.0;
        for i in 0..Q {
            self.sum[i] += q[i];
            for j in i..Q {
                self.cross[i][j] += q[i] * q[j];
            }
        }
    }

    fn add(&mut self, o: &Moments, sign: f64) {
        self.n += sign * o.n;
        for i in 0..Q {
            self.sum[i] += sign * o.sum[i];
            for j in i..Q {
                self.cross[i][j] += sign * o.cross[i][j];
            }
        }
    }

    fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n
    }

    fn cov(&self, i: usize, j: usize) -> f64 {
        let (i, j) = (i.min(j), i.max(j));
        (self.cross[i][j] - self.sum[i] * self.sum[j] / self.n) / (self.n - 1.0)
    }

    /// `[N_X, N_Y, F, r|m product, m|r product]`
    fn statistics(&self) -> Result<[f64; 5], McError> {
        let r_given_m = conditional(self.cov(XR, XR), self.cov(XM, XM), self.cov(XM, XR))?
            * conditional(self.cov(YR, YR), self.cov(YM, YM), self.cov(YM, YR))?;
        let m_given_r = conditional(self.cov(XM, XM), self.cov(XR, XR), self.cov(XM, XR))?
            * conditional(self.cov(YM, YM), self.cov(YR, YR), self.cov(YM, YR))?;
        Ok([
            self.cov(D_X, D_X),
            self.cov(D_Y, D_Y),
            self.mean(W),
            r_given_m,
            m_given_r,
        ])
    }
}

/// Runs the simulation and compares against the analytic values.
pub fn simulate_protocol(config: &McRunConfig) -> Result<McReport, McError> {
    if config.samples < MIN_SAMPLES {
        return Err(McError::TooFewSamples(config.samples));
    }
    let (model, analytic) = match &config.channel {
        McChannel::Channel(c) => ProtocolModel::for_channel(c, config.input_amplitude)?,
        McChannel::Epr(e) => ProtocolModel::for_epr(e, config.input_amplitude)?,
    };

    let base = config.samples / JACKKNIFE_BLOCKS;
    let extra = config.samples % JACKKNIFE_BLOCKS;
    let blocks: Vec<Moments> = (0..JACKKNIFE_BLOCKS)
        .into_par_iter()
        .map(|k| {
            let size = base + usize::from(k < extra);
            model.block(size, derive_seed(config.seed, k as u64))
        })
        .collect();

    let mut total = Moments::default();
    for b in &blocks {
        total.add(b, 1.0);
    }
    let full = total.statistics()?;
    let leave_out = blocks
        .iter()
        .map(|b| {
            let mut m = total;
            m.add(b, -1.0);
            m.statistics()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let nb = JACKKNIFE_BLOCKS as f64;
    let se: Vec<f64> = (0..5)
        .map(|i| {
            let mean = leave_out.iter().map(|t| t[i]).sum::<f64>() / nb;
            let ss: f64 = leave_out.iter().map(|t| (t[i] - mean).powi(2)).sum();
            ((nb - 1.0) / nb * ss).sqrt()
        })
        .collect();

    Ok(McReport {
        samples: config.samples,
        seed: config.seed,
        n_x: Estimate::new(full[0], se[0], analytic.n_x),
        n_y: Estimate::new(full[1], se[1], analytic.n_y),
        fidelity: Estimate::new(full[2], se[2], analytic.fidelity),
        cv_product_r_given_m: Estimate::new(full[3], se[3], analytic.products.0),
        cv_product_m_given_r: Estimate::new(full[4], se[4], analytic.products.1),
    })
}
