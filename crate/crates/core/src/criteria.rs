//! Teleportation criteria: coherent-state fidelity, equivalent-noise product,
//! transfer-coefficient sum and the EPR conditional-variance test, plus a
//! numerical verifier for the inequality chain linking the EPR test to the
//! noise product.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use twofloat::TwoFloat;

use crate::channel::{
    transfer_coefficients, ChannelConfig, ChannelError, InputState, NoiseBudget, X_M, X_R, Y_M, Y_R,
};
use crate::gaussian::{derive_seed, GaussianError, LinearForm};

/// Fidelity of measure-and-resend with shot-noise-limited stages.
pub const CLASSICAL_FIDELITY: f64 = 0.5;

/// Fidelity reached at `N_X^out = N_Y^out = 1`.
pub const EPR_FIDELITY: f64 = 2.0 / 3.0;

/// A quantum verdict needs to beat its bound by more than this.
pub const VERDICT_TOLERANCE: f64 = 1e-9;

/// Relative agreement required of the two sides of the conditional-variance
/// product identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

/// Slack on the final `N_X^out·N_Y^out ≥ 1` bound and the intermediate steps.
pub const CHAIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriteriaError {
    #[error("negative equivalent noise {0}")]
    NegativeNoise(f64),
    #[error("fidelity {0} outside (0, 1]")]
    FidelityOutOfRange(f64),
    #[error("inequality chain applies only to budgets without EPR violation (products {0:?})")]
    EprViolated((f64, f64)),
    #[error("inequality chain verification failed: {reason}")]
    VerificationFailure {
        reason: String,
        trace: Box<InequalityTrace>,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// Fidelity for a Gaussian reconstruction with noises `(N_X, N_Y)` and mean
/// offsets `(x_a − x_b, y_a − y_b)` from the input coherent amplitude.
pub fn fidelity_general(
    n_x: f64,
    n_y: f64,
    offset_x: f64,
    offset_y: f64,
) -> Result<f64, CriteriaError> {
    for n in [n_x, n_y] {
        if n.is_nan() || n < 0.0 {
            return Err(CriteriaError::NegativeNoise(n));
        }
    }
    let (sx, sy) = (2.0 + n_x, 2.0 + n_y);
    let exponent = -offset_x * offset_x / (2.0 * sx) - offset_y * offset_y / (2.0 * sy);
    Ok(2.0 / (sx * sy).sqrt() * exponent.exp())
}

/// Unity-gain fidelity, offsets zero.
pub fn fidelity_unity_gain(n_x: f64, n_y: f64) -> Result<f64, CriteriaError> {
    fidelity_general(n_x, n_y, 0.0, 0.0)
}

/// Symmetric unity-gain noise `N = 2/F − 2` giving fidelity `F`.
pub fn symmetric_noise_for_fidelity(fidelity: f64) -> Result<f64, CriteriaError> {
    if !(fidelity > 0.0 && fidelity <= 1.0) {
        return Err(CriteriaError::FidelityOutOfRange(fidelity));
    }
    Ok(2.0 / fidelity - 2.0)
}

pub fn is_above_classical_fidelity(fidelity: f64) -> bool {
    fidelity > CLASSICAL_FIDELITY + VERDICT_TOLERANCE
}

pub fn is_above_epr_fidelity(fidelity: f64) -> bool {
    fidelity > EPR_FIDELITY + VERDICT_TOLERANCE
}

pub fn is_noise_product_below_one(n_x: f64, n_y: f64) -> bool {
    n_x * n_y < 1.0 - VERDICT_TOLERANCE
}

pub fn is_t_sum_above_one(t_x: f64, t_y: f64) -> bool {
    t_x + t_y > 1.0 + VERDICT_TOLERANCE
}

/// Overlap `|⟨β|α⟩|²` for `β = (x + iy)/2`, `α = (x_a + i·y_a)/2`.
pub fn fidelity_integrand(x: f64, y: f64, x_a: f64, y_a: f64) -> f64 {
    let (dx, dy) = (x - x_a, y - y_a);
    (-(dx * dx) / 4.0 - (dy * dy) / 4.0).exp()
}

/// Intermediate quantities of the argument that a budget without EPR
/// violation cannot reach `N_X^out·N_Y^out < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityTrace {
    pub budget: NoiseBudget,
    pub v_cx: f64,
    pub v_cy: f64,
    /// `(v_Cx·v_Cy, v_Xm·v_Ym, v_Xr·v_Yr)`
    pub lhs_products: (f64, f64, f64),
    /// `v_Cx·v_Cy` expanded in sums and differences of the variances.
    pub identity_rhs: f64,
    pub identity_rel_error: f64,
    /// `[2(v_Xm·v_Ym + v_Xr·v_Yr) + (v_Xr − v_Xm)²·v_Cy + (v_Yr − v_Ym)²·v_Cx] / ((v_Xr + v_Xm)(v_Ym + v_Yr))`
    pub chain_bound: f64,
    /// `n` evaluated with the actual `v_Cx`, `v_Cy`.
    pub n_value: f64,
    /// `n` at its minimum over `v_Cy` once `v_Cx ≥ 1/v_Cy` is used.
    pub n_min: f64,
    pub n_product: f64,
}

impl InequalityTrace {
    pub fn new(budget: &NoiseBudget) -> Self {
        let (v_xm, v_ym) = budget.measurement_variances();
        let (v_xr, v_yr) = budget.reconstruction_variances();
        let (c_x, c_y) = budget.correlations();
        let v_cx = budget.v_cx();
        let v_cy = budget.v_cy();

        // Both sides in double-double arithmetic: the expanded terms can
        // exceed v_Cx·v_Cy by many orders of magnitude and cancel.
        let t = TwoFloat::from;
        let dd_cx = t(v_xr) * t(v_xm) - t(c_x) * t(c_x);
        let dd_cy = t(v_yr) * t(v_ym) - t(c_y) * t(c_y);
        let lhs = dd_cx * dd_cy;
        let sum_x = t(v_xr) + t(v_xm);
        let sum_y = t(v_yr) + t(v_ym);
        let p_x = (sum_x + t(2.0 * c_x)) * (sum_x - t(2.0 * c_x));
        let p_y = (sum_y + t(2.0 * c_y)) * (sum_y - t(2.0 * c_y));
        let q_x = (t(v_xr) - t(v_xm)) * (t(v_xr) - t(v_xm));
        let q_y = (t(v_yr) - t(v_ym)) * (t(v_yr) - t(v_ym));
        let rhs = p_x * p_y * 0.0625 - q_x * dd_cy * 0.25 - q_y * dd_cx * 0.25 - q_x * q_y * 0.0625;
        let scale = f64::from(lhs).abs().max(f64::from(rhs).abs());
        let identity_rel_error = if scale == 0.0 {
            0.0
        } else {
            f64::from((lhs - rhs).abs()) / scale
        };
        let (lhs, rhs) = (f64::from(lhs), f64::from(rhs));
        let (q_x, q_y) = ((v_xr - v_xm).powi(2), (v_yr - v_ym).powi(2));

        let denominator = (v_xr + v_xm) * (v_ym + v_yr);
        let spread = q_x * v_cy + q_y * v_cx;
        let chain_bound = (2.0 * (v_xm * v_ym + v_xr * v_yr) + spread) / denominator;
        let d = (v_xm - v_xr) * (v_ym - v_yr);
        let n_value = d + spread;
        let n_min = d + 2.0 * d.abs();
        let (n_x, n_y) = budget.equivalent_output_noise();

        Self {
            budget: *budget,
            v_cx,
            v_cy,
            lhs_products: (lhs, v_xm * v_ym, v_xr * v_yr),
            identity_rhs: rhs,
            identity_rel_error,
            chain_bound,
            n_value,
            n_min,
            n_product: n_x * n_y,
        }
    }
}

/// Result of the EPR conditional-variance test on a budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EprOutcome {
    /// `(V_Xr|Xm·V_Yr|Ym, V_Xm|Xr·V_Ym|Yr)`
    pub products: (f64, f64),
    pub violated: bool,
    pub trace: InequalityTrace,
}

/// Conditional-variance products of a budget, computed on its implied state.
pub fn conditional_variance_products(budget: &NoiseBudget) -> Result<(f64, f64), CriteriaError> {
    let state = budget.state()?;
    let (xm, xr) = (LinearForm::var(X_M), LinearForm::var(X_R));
    let (ym, yr) = (LinearForm::var(Y_M), LinearForm::var(Y_R));
    let r_given_m = state.conditional_variance(&xr, &xm)? * state.conditional_variance(&yr, &ym)?;
    let m_given_r = state.conditional_variance(&xm, &xr)? * state.conditional_variance(&ym, &yr)?;
    Ok((r_given_m, m_given_r))
}

/// Apparent Heisenberg violation: either product below 1.
pub fn is_epr_violation(products: (f64, f64)) -> bool {
    products.0 < 1.0 - VERDICT_TOLERANCE || products.1 < 1.0 - VERDICT_TOLERANCE
}

pub fn epr_criterion(budget: &NoiseBudget) -> Result<EprOutcome, CriteriaError> {
    let products = conditional_variance_products(budget)?;
    Ok(EprOutcome {
        products,
        violated: is_epr_violation(products),
        trace: InequalityTrace::new(budget),
    })
}

fn chain_failure(reason: String, trace: InequalityTrace) -> CriteriaError {
    CriteriaError::VerificationFailure {
        reason,
        trace: Box::new(trace),
    }
}

/// Checks, for a budget without EPR violation, every step from the
/// conditional-variance products to `N_X^out·N_Y^out ≥ 1`.
pub fn verify_inequality_chain(budget: &NoiseBudget) -> Result<InequalityTrace, CriteriaError> {
    let outcome = epr_criterion(budget)?;
    if outcome.violated {
        return Err(CriteriaError::EprViolated(outcome.products));
    }
    let t = outcome.trace;
    let rel = |x: f64| CHAIN_TOLERANCE * x.abs().max(1.0);

    if t.identity_rel_error > IDENTITY_TOLERANCE {
        let reason = format!(
            "product identity mismatch: {} vs {} (relative {:e})",
            t.lhs_products.0, t.identity_rhs, t.identity_rel_error
        );
        return Err(chain_failure(reason, t));
    }
    if t.n_product < t.chain_bound - rel(t.chain_bound) {
        let reason = format!(
            "noise product {} below intermediate bound {}",
            t.n_product, t.chain_bound
        );
        return Err(chain_failure(reason, t));
    }
    if t.n_value < t.n_min - rel(t.n_min.max(t.n_value)) {
        let reason = format!("n = {} below its minimum {}", t.n_value, t.n_min);
        return Err(chain_failure(reason, t));
    }
    if t.n_min < 0.0 {
        let reason = format!("minimized n = {} is negative", t.n_min);
        return Err(chain_failure(reason, t));
    }
    if t.n_product < 1.0 - CHAIN_TOLERANCE {
        let reason = format!("noise product {} below 1", t.n_product);
        return Err(chain_failure(reason, t));
    }
    Ok(t)
}

/// Draws a budget with variances log-uniform in `[1e-2, 1e2]` and
/// correlations uniform within Cauchy–Schwarz; `None` if the draw breaks a
/// stage bound.
pub fn random_budget<R: Rng + ?Sized>(rng: &mut R) -> Option<NoiseBudget> {
    let mut v = || 10f64.powf(rng.random_range(-2.0..=2.0));
    let (v_xm, v_ym, v_xr, v_yr) = (v(), v(), v(), v());
    let lim_x = (v_xm * v_xr).sqrt();
    let lim_y = (v_ym * v_yr).sqrt();
    let c_x = rng.random_range(-lim_x..=lim_x);
    let c_y = rng.random_range(-lim_y..=lim_y);
    NoiseBudget::new(v_xm, v_ym, v_xr, v_yr, c_x, c_y).ok()
}

/// Aggregate of a randomized inequality-chain run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub trials: usize,
    pub seed: u64,
    pub identity_max_rel_error: f64,
    pub bound_violations: usize,
    /// Smallest `N_X^out·N_Y^out − 1` seen.
    pub worst_case_margin: f64,
    /// Random draws rejected for breaking a stage bound or violating EPR.
    pub rejected_draws: usize,
    pub first_failure: Option<String>,
}

impl VerifySummary {
    fn empty(seed: u64) -> Self {
        Self {
            trials: 0,
            seed,
            identity_max_rel_error: 0.0,
            bound_violations: 0,
            worst_case_margin: f64::INFINITY,
            rejected_draws: 0,
            first_failure: None,
        }
    }

    fn record(&mut self, result: Result<InequalityTrace, CriteriaError>) {
        self.trials += 1;
        let trace = match result {
            Ok(t) => t,
            Err(CriteriaError::VerificationFailure { reason, trace }) => {
                self.bound_violations += 1;
                self.first_failure.get_or_insert(reason);
                *trace
            }
            Err(other) => {
                self.bound_violations += 1;
                self.first_failure.get_or_insert(other.to_string());
                return;
            }
        };
        self.identity_max_rel_error = self.identity_max_rel_error.max(trace.identity_rel_error);
        self.worst_case_margin = self.worst_case_margin.min(trace.n_product - 1.0);
    }

    fn merge(&mut self, other: VerifySummary) {
        self.trials += other.trials;
        self.identity_max_rel_error = self
            .identity_max_rel_error
            .max(other.identity_max_rel_error);
        self.bound_violations += other.bound_violations;
        self.worst_case_margin = self.worst_case_margin.min(other.worst_case_margin);
        self.rejected_draws += other.rejected_draws;
        if self.first_failure.is_none() {
            self.first_failure = other.first_failure;
        }
    }
}

/// Verifies a fixed list of budgets.
pub fn verify_budgets<'a>(
    budgets: impl IntoIterator<Item = &'a NoiseBudget>,
    seed: u64,
) -> VerifySummary {
    let mut summary = VerifySummary::empty(seed);
    for b in budgets {
        summary.record(verify_inequality_chain(b));
    }
    summary
}

const VERIFY_CHUNK: usize = 1000;

/// Verifies `trials` random budgets without EPR violation. Work is split in
/// chunks of 1000 seeded with `derive_seed(seed, chunk)`; the merge order is
/// fixed so the summary does not depend on scheduling.
pub fn verify_random(trials: usize, seed: u64) -> VerifySummary {
    let chunks = trials.div_ceil(VERIFY_CHUNK);
    let partial: Vec<VerifySummary> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let quota = VERIFY_CHUNK.min(trials - k * VERIFY_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
            let mut s = VerifySummary::empty(seed);
            while s.trials < quota {
                let Some(b) = random_budget(&mut rng) else {
                    s.rejected_draws += 1;
                    continue;
                };
                match verify_inequality_chain(&b) {
                    Err(CriteriaError::EprViolated(_)) => s.rejected_draws += 1,
                    result => s.record(result),
                }
            }
            s
        })
        .collect();
    let mut total = VerifySummary::empty(seed);
    for s in partial {
        total.merge(s);
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub fidelity_above_half: bool,
    pub fidelity_above_two_thirds: bool,
    pub n_product_below_one: bool,
    /// `None` when the input is not a minimum-uncertainty state.
    pub t_sum_above_one: Option<bool>,
    pub epr_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    #[serde(rename = "N_X_out")]
    pub n_x_out: f64,
    #[serde(rename = "N_Y_out")]
    pub n_y_out: f64,
    #[serde(rename = "T_X_out")]
    pub t_x_out: f64,
    #[serde(rename = "T_Y_out")]
    pub t_y_out: f64,
    pub fidelity: f64,
    /// `(V_Xr|Xm·V_Yr|Ym, V_Xm|Xr·V_Ym|Yr)`
    pub cv_products: (f64, f64),
    pub verdicts: Verdicts,
}

impl CriteriaReport {
    /// Assembles a report from equivalent output noises, the input, the mean
    /// offsets of the reconstruction and the conditional-variance products.
    pub fn from_parts(
        n_x: f64,
        n_y: f64,
        input: &InputState,
        offsets: (f64, f64),
        cv_products: (f64, f64),
    ) -> Result<Self, CriteriaError> {
        let fidelity = fidelity_general(n_x, n_y, offsets.0, offsets.1)?;
        let (t_x, t_y) = transfer_coefficients(n_x, n_y, input)?;
        let verdicts = Verdicts {
            fidelity_above_half: is_above_classical_fidelity(fidelity),
            fidelity_above_two_thirds: is_above_epr_fidelity(fidelity),
            n_product_below_one: is_noise_product_below_one(n_x, n_y),
            t_sum_above_one: input
                .is_minimum_uncertainty()
                .then_some(is_t_sum_above_one(t_x, t_y)),
            epr_violation: is_epr_violation(cv_products),
        };
        Ok(Self {
            n_x_out: n_x,
            n_y_out: n_y,
            t_x_out: t_x,
            t_y_out: t_y,
            fidelity,
            cv_products,
            verdicts,
        })
    }

    /// Report for a unity-gain budget with the reconstruction centred on the
    /// input amplitude.
    pub fn from_budget(budget: &NoiseBudget, input: &InputState) -> Result<Self, CriteriaError> {
        let (n_x, n_y) = budget.equivalent_output_noise();
        let products = conditional_variance_products(budget)?;
        Self::from_parts(n_x, n_y, input, (0.0, 0.0), products)
    }

    pub fn t_sum(&self) -> f64 {
        self.t_x_out + self.t_y_out
    }

    pub fn n_product(&self) -> f64 {
        self.n_x_out * self.n_y_out
    }

    pub const CSV_HEADER: &'static str = "N_X_out,N_Y_out,T_X_out,T_Y_out,fidelity,cv_product_r_given_m,cv_product_m_given_r,fidelity_above_half,fidelity_above_two_thirds,n_product_below_one,t_sum_above_one,epr_violation";

    /// One CSV row matching [`CriteriaReport::CSV_HEADER`]; an inapplicable
    /// T-sum verdict is written as `na`.
    pub fn to_csv_row(&self) -> String {
        use crate::format::sig12;
        let v = &self.verdicts;
        let t_sum = match v.t_sum_above_one {
            Some(b) => b.to_string(),
            None => "na".to_owned(),
        };
        [
            sig12(self.n_x_out),
            sig12(self.n_y_out),
            sig12(self.t_x_out),
            sig12(self.t_y_out),
            sig12(self.fidelity),
            sig12(self.cv_products.0),
            sig12(self.cv_products.1),
            v.fidelity_above_half.to_string(),
            v.fidelity_above_two_thirds.to_string(),
            v.n_product_below_one.to_string(),
            t_sum,
            v.epr_violation.to_string(),
        ]
        .join(",")
    }
}

/// Evaluates every criterion on a unity-gain channel.
pub fn full_report(config: &ChannelConfig) -> Result<CriteriaReport, CriteriaError> {
    let budget = config.to_unity_gain_budget()?;
    let (n_x, n_y) = budget.equivalent_output_noise();
    let comp = config.compose();
    let (x_a, y_a) = config.input().amplitude();
    let x_b = comp.state.mean_of(&comp.out_x)?;
    let y_b = comp.state.mean_of(&comp.out_y)?;
    let products = conditional_variance_products(&budget)?;
    CriteriaReport::from_parts(n_x, n_y, config.input(), (x_a - x_b, y_a - y_b), products)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{MeasurementStage, ReconstructionStage};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn fidelity_examples() {
        assert_eq!(fidelity_general(0.0, 0.0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(fidelity_general(2.0, 2.0, 0.0, 0.0).unwrap(), 0.5);
        let f = fidelity_general(0.0, 0.0, 2.0, 0.0).unwrap();
        assert!(close(f, (-1.0f64).exp(), 1e-15));
        assert!(close(f, 0.36788, 5e-6));
        let f = fidelity_general(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(close(f, 2.0 / 3.0, 1e-15));
        assert_eq!(
            fidelity_general(-1.0, 0.0, 0.0, 0.0),
            Err(CriteriaError::NegativeNoise(-1.0))
        );
    }

    /// Fidelity by direct 2-D quadrature of the overlap against the Gaussian
    /// reconstruction density, independent of the closed form.
    fn fidelity_by_quadrature(n_x: f64, n_y: f64, ox: f64, oy: f64) -> f64 {
        let axis = |n: f64, offset: f64| {
            // ∫ N(x; x_b, n) exp(−(x − x_a)²/4) dx on a fine grid
            let (x_a, x_b) = (0.0, -offset);
            let sd = n.sqrt();
            let lo = x_b - 12.0 * sd - 1.0;
            let hi = x_b + 12.0 * sd + 1.0;
            let steps = 40_000;
            let h = (hi - lo) / steps as f64;
            (0..=steps)
                .map(|i| {
                    let x = lo + h * i as f64;
                    let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                    let p = (-(x - x_b).powi(2) / (2.0 * n)).exp()
                        / (2.0 * std::f64::consts::PI * n).sqrt();
                    w * p * (-(x - x_a).powi(2) / 4.0).exp()
                })
                .sum::<f64>()
                * h
        };
        axis(n_x, ox) * axis(n_y, oy)
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for &(nx, ny, ox, oy) in &[
            (2.0, 2.0, 0.0, 0.0),
            (1.0, 1.0, 0.0, 0.0),
            (0.3, 1.7, 0.5, -1.2),
            (4.0, 0.5, 2.0, 1.0),
        ] {
            let closed = fidelity_general(nx, ny, ox, oy).unwrap();
            let quad = fidelity_by_quadrature(nx, ny, ox, oy);
            assert!(close(closed, quad, 1e-9), "{closed} vs {quad}");
        }
    }

    #[test]
    fn integrand_examples() {
        assert_eq!(fidelity_integrand(1.3, -0.4, 1.3, -0.4), 1.0);
        assert!(close(
            fidelity_integrand(2.0, 0.0, 0.0, 0.0),
            (-1.0f64).exp(),
            1e-15
        ));
        assert_eq!(fidelity_integrand(1e3, 1e3, 0.0, 0.0), 0.0);
    }

    #[test]
    fn fidelity_decreases_with_noise_and_offset() {
        let h = 1e-6;
        for i in 0..40 {
            let n = 0.1 * i as f64;
            for j in 0..20 {
                let o = 0.25 * j as f64;
                let f = fidelity_general(n, 0.7, o, 0.3).unwrap();
                // ∂F/∂N has the sign of o² − (2 + N): extra noise helps a
                // badly centred reconstruction.
                let up = fidelity_general(n + h, 0.7, o, 0.3).unwrap();
                let margin = o * o - (2.0 + n);
                if margin < -1e-3 {
                    assert!(up < f);
                    assert!(
                        fidelity_general(0.7, n + h, 0.3, o).unwrap()
                            < fidelity_general(0.7, n, 0.3, o).unwrap()
                    );
                } else if margin > 1e-3 {
                    assert!(up > f);
                }
                assert!(fidelity_general(n, 0.7, o + h, 0.3).unwrap() < f);
                assert!(
                    fidelity_general(n, 0.7, o, 0.3).unwrap()
                        <= fidelity_general(n, 0.7, 0.0, 0.0).unwrap()
                );
            }
        }
    }

    #[test]
    fn shot_noise_budget_does_not_violate() {
        let outcome = epr_criterion(&NoiseBudget::shot_noise()).unwrap();
        assert_eq!(outcome.products, (1.0, 1.0));
        assert!(!outcome.violated);
        let trace = verify_inequality_chain(&NoiseBudget::shot_noise()).unwrap();
        assert_eq!(trace.n_product, 4.0);
    }

    #[test]
    fn saturating_symmetric_budgets_satisfy_the_bound() {
        // v_m = v_r = v with c² = v² − v puts each conditional variance at
        // v − c²/v = 1, so both products sit exactly on 1.
        for v in [1.0f64, 1.5, 2.0, 5.0, 10.0] {
            for sign in [1.0, -1.0] {
                let c = sign * (v * v - v).sqrt();
                let b = NoiseBudget::new(v, v, v, v, c, c).unwrap();
                let outcome = epr_criterion(&b).unwrap();
                assert!(
                    close(outcome.products.0, 1.0, 1e-12),
                    "{:?}",
                    outcome.products
                );
                assert!(
                    close(outcome.products.1, 1.0, 1e-12),
                    "{:?}",
                    outcome.products
                );
                let trace = verify_inequality_chain(&b).unwrap();
                let expected = (2.0 * v + 2.0 * c).powi(2);
                assert!(close(trace.n_product, expected, 1e-9 * expected));
                assert!(trace.n_product >= 1.0);
            }
        }
    }

    #[test]
    fn violating_budget_is_rejected_by_the_verifier() {
        let b = NoiseBudget::new(2.0, 2.0, 2.0, 2.0, -1.9, -1.9).unwrap();
        assert!(epr_criterion(&b).unwrap().violated);
        assert!(matches!(
            verify_inequality_chain(&b),
            Err(CriteriaError::EprViolated(_))
        ));
    }

    #[test]
    fn identity_holds_on_random_budgets_of_both_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = 0;
        let (mut pos, mut neg) = (0, 0);
        while seen < 10_000 {
            let Some(b) = random_budget(&mut rng) else {
                continue;
            };
            let t = InequalityTrace::new(&b);
            let (cx, _) = b.correlations();
            if cx > 0.0 {
                pos += 1
            } else {
                neg += 1
            }
            // Normalise by the largest expanded term so near-zero products are comparable.
            let (v_xm, v_ym) = b.measurement_variances();
            let (v_xr, v_yr) = b.reconstruction_variances();
            let scale = ((v_xm + v_xr) * (v_ym + v_yr)).powi(2) / 16.0;
            assert!(
                (t.lhs_products.0 - t.identity_rhs).abs()
                    <= 1e-9 * scale.max(t.lhs_products.0.abs()),
                "{b:?}"
            );
            seen += 1;
        }
        assert!(pos > 1000 && neg > 1000);
    }

    #[test]
    fn random_verification_is_clean_and_deterministic() {
        let a = verify_random(3000, 17);
        assert_eq!(a.trials, 3000);
        assert_eq!(a.bound_violations, 0, "{:?}", a.first_failure);
        assert!(a.identity_max_rel_error < IDENTITY_TOLERANCE);
        assert!(a.worst_case_margin >= -CHAIN_TOLERANCE);
        assert_eq!(a, verify_random(3000, 17));
    }

    #[test]
    fn noise_product_below_one_implies_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut found = 0;
        for _ in 0..100_000 {
            let Some(b) = random_budget(&mut rng) else {
                continue;
            };
            let (nx, ny) = b.equivalent_output_noise();
            if nx * ny < 1.0 - 1e-9 {
                found += 1;
                assert!(epr_criterion(&b).unwrap().violated, "{b:?}");
            }
        }
        assert!(found > 50, "only {found} sub-unity budgets");
    }

    #[test]
    fn report_examples() {
        let ideal = full_report(&ChannelConfig::ideal(InputState::coherent(0.7, -1.1))).unwrap();
        assert_eq!(ideal.fidelity, 1.0);
        assert_eq!(ideal.t_sum(), 2.0);
        assert_eq!(ideal.n_product(), 0.0);
        let v = ideal.verdicts;
        assert!(v.fidelity_above_half && v.fidelity_above_two_thirds && v.n_product_below_one);
        assert_eq!(v.t_sum_above_one, Some(true));
        assert!(v.epr_violation);

        let shot = full_report(&ChannelConfig::shot_noise(InputState::vacuum())).unwrap();
        assert_eq!(shot.fidelity, 0.5);
        assert_eq!(shot.n_product(), 4.0);
        assert!(!shot.verdicts.fidelity_above_half);
        assert!(!shot.verdicts.epr_violation);
    }

    #[test]
    fn t_sum_verdict_needs_minimum_uncertainty_input() {
        let input = InputState::new(2.0, 2.0, 0.0, 0.0).unwrap();
        let r = CriteriaReport::from_budget(&NoiseBudget::shot_noise(), &input).unwrap();
        assert_eq!(r.verdicts.t_sum_above_one, None);
        assert!(close(r.t_x_out, 0.5, 1e-15));
        assert!(r.to_csv_row().contains(",na,"));
    }

    #[test]
    fn gain_mismatch_lowers_fidelity() {
        let input = InputState::coherent(3.0, 0.0);
        let mk = |g: f64| {
            ChannelConfig::new(
                MeasurementStage::simple(g, 1.0, g * g, 1.0).unwrap(),
                ReconstructionStage::simple(1.0, 1.0, 1.0, 1.0).unwrap(),
                [[0.0; 2]; 2],
                input,
            )
            .unwrap()
        };
        assert!(full_report(&mk(1.0)).is_ok());
        assert!(matches!(
            full_report(&mk(1.2)),
            Err(CriteriaError::Channel(ChannelError::NonUnityGain { .. }))
        ));
    }

    #[test]
    fn symmetric_threshold_consistency() {
        for i in 0..=400 {
            let n = i as f64 / 100.0;
            let r = CriteriaReport::from_parts(n, n, &InputState::vacuum(), (0.0, 0.0), (1.0, 1.0))
                .unwrap();
            let v = r.verdicts;
            assert_eq!(v.fidelity_above_two_thirds, n < 1.0, "N = {n}");
            assert_eq!(v.n_product_below_one, n < 1.0, "N = {n}");
            assert_eq!(v.t_sum_above_one, Some(n < 1.0), "N = {n}");
        }
    }

    #[test]
    fn report_json_field_names() {
        let r = full_report(&ChannelConfig::shot_noise(InputState::vacuum())).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in [
            "N_X_out",
            "N_Y_out",
            "T_X_out",
            "T_Y_out",
            "fidelity",
            "cv_products",
            "verdicts",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in [
            "fidelity_above_half",
            "fidelity_above_two_thirds",
            "n_product_below_one",
            "t_sum_above_one",
            "epr_violation",
        ] {
            assert!(v["verdicts"].get(key).is_some(), "{key}");
        }
        assert_eq!(
            CriteriaReport::CSV_HEADER.split(',').count(),
            r.to_csv_row().split(',').count()
        );
    }
}
