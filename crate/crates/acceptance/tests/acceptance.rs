//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails or exceeds its runtime limit.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cvtele::channel::{transfer_coefficients, InputState, NoiseBudget};
use cvtele::criteria::{
    fidelity_unity_gain, is_above_classical_fidelity, is_above_epr_fidelity,
    is_noise_product_below_one, is_t_sum_above_one, random_budget, symmetric_noise_for_fidelity,
    verify_random, CriteriaReport,
};
use cvtele::epr::{sweep, EprScenario};
use cvtele::mc::{simulate_protocol, McChannel, McRunConfig, Z_GATE};
use cvtele::ChannelConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BOUNDARY_TOL: f64 = 1e-12;
const CLASSICAL_TOL: f64 = 1e-12;
const THRESHOLD_GRID: usize = 401;
const CHAIN_TRIALS: usize = 100_000;
const CHAIN_TOL: f64 = 1e-9;
const IDENTITY_TOL: f64 = 1e-9;
const REGION_GRID: usize = 101;
const MC_SAMPLES: usize = 1_000_000;
const MC_SEED: u64 = 20_240_601;
const EXPERIMENT_FIDELITY: f64 = 0.58;
const EXPERIMENT_NOISE: f64 = 1.448;
const EXPERIMENT_TOL: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn boundary_point() -> Outcome {
    let p = sweep(&[0.5], &[0.0]).expect("sweep")[0];
    let pass = (p.n_out - 1.0).abs() <= BOUNDARY_TOL
        && (p.t_sum - 1.0).abs() <= BOUNDARY_TOL
        && (p.fidelity - 2.0 / 3.0).abs() <= BOUNDARY_TOL;
    check(
        pass,
        format!(
            "N_out = {:e}, T_sum = {:e}, F = {:e}",
            p.n_out, p.t_sum, p.fidelity
        ),
    )
}

fn classical_boundary() -> Outcome {
    let b = NoiseBudget::new(1.0, 1.0, 1.0, 1.0, 0.0, 0.0).expect("budget");
    let (nx, ny) = b.equivalent_output_noise();
    let r = CriteriaReport::from_budget(&b, &InputState::vacuum()).expect("report");
    let pass = (nx - 2.0).abs() <= CLASSICAL_TOL
        && (ny - 2.0).abs() <= CLASSICAL_TOL
        && (r.fidelity - 0.5).abs() <= CLASSICAL_TOL;
    check(pass, format!("N_X = {nx}, N_Y = {ny}, F = {}", r.fidelity))
}

fn threshold_consistency() -> Outcome {
    let mut disagreements = Vec::new();
    for k in 0..THRESHOLD_GRID {
        let n = 4.0 * k as f64 / (THRESHOLD_GRID - 1) as f64;
        let f = fidelity_unity_gain(n, n).expect("fidelity");
        let (tx, ty) = transfer_coefficients(n, n, &InputState::vacuum()).expect("T");
        let verdicts = [
            is_above_epr_fidelity(f),
            is_noise_product_below_one(n, n),
            is_t_sum_above_one(tx, ty),
        ];
        if verdicts.iter().any(|v| *v != verdicts[0]) {
            disagreements.push(n);
        }
    }
    check(
        disagreements.is_empty(),
        format!(
            "{} grid points, disagreements at {disagreements:?}",
            THRESHOLD_GRID
        ),
    )
}

fn inequality_chain() -> Outcome {
    let s = verify_random(CHAIN_TRIALS, 7);
    let pass = s.trials == CHAIN_TRIALS
        && s.bound_violations == 0
        && s.worst_case_margin >= -CHAIN_TOL
        && s.identity_max_rel_error <= IDENTITY_TOL;
    check(
        pass,
        format!(
            "{} budgets, {} violations, worst N-product margin {:e}, identity max rel error {:e}{}",
            s.trials,
            s.bound_violations,
            s.worst_case_margin,
            s.identity_max_rel_error,
            s.first_failure
                .map(|f| format!(", first failure: {f}"))
                .unwrap_or_default()
        ),
    )
}

fn quantum_region() -> Outcome {
    let step = (REGION_GRID - 1) as f64;
    let mut mismatches = Vec::new();
    let mut outside_corner = Vec::new();
    for i in 0..REGION_GRID {
        for j in 0..REGION_GRID {
            let (eta, s) = (i as f64 / step, j as f64 / step);
            let p = EprScenario::new(eta, s)
                .expect("scenario")
                .closed_form()
                .expect("point");
            let quantum = 2.0 * (1.0 - eta + eta * s) < 1.0;
            if p.epr_violated != quantum {
                mismatches.push((eta, s));
            }
            if p.epr_violated && (eta <= 0.5 || s >= 0.5) {
                outside_corner.push((eta, s));
            }
        }
    }
    let example = mismatches.first().map(|&(eta, s)| {
        let (p, q) = EprScenario::new(eta, s)
            .unwrap()
            .conditional_variance_products()
            .unwrap();
        format!(
            "; e.g. eta = {eta}, s = {s}: N_out = {:.4}, cv products = ({p:.4}, {q:.4})",
            2.0 * (1.0 - eta + eta * s)
        )
    });
    check(
        mismatches.is_empty() && outside_corner.is_empty(),
        format!(
            "{} of {} grid points where the EPR verdict differs from N_out < 1, {} violations with eta <= 0.5 or s >= 0.5{}",
            mismatches.len(),
            REGION_GRID * REGION_GRID,
            outside_corner.len(),
            example.unwrap_or_default()
        ),
    )
}

fn mc_matrix() -> Vec<(String, McRunConfig)> {
    let mut runs = Vec::new();
    for (k, (eta, s)) in [(0.7, 0.3), (0.95, 0.05), (0.4, 0.6)]
        .into_iter()
        .enumerate()
    {
        let sc = EprScenario::new(eta, s).expect("scenario");
        let cfg = McRunConfig::new(McChannel::Epr(sc), MC_SAMPLES, MC_SEED + k as u64)
            .and_then(|c| c.with_amplitude(0.8, -1.3))
            .expect("config");
        runs.push((format!("epr eta={eta} s={s}"), cfg));
    }
    let shot = ChannelConfig::shot_noise(InputState::coherent(2.0, 0.5));
    runs.push((
        "shot noise".into(),
        McRunConfig::new(McChannel::Channel(Box::new(shot)), MC_SAMPLES, MC_SEED + 10).unwrap(),
    ));
    let ideal = ChannelConfig::ideal(InputState::coherent(-1.0, 3.0));
    runs.push((
        "ideal".into(),
        McRunConfig::new(
            McChannel::Channel(Box::new(ideal)),
            MC_SAMPLES,
            MC_SEED + 11,
        )
        .unwrap(),
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(MC_SEED);
    while runs.len() < 12 {
        let Some(b) = random_budget(&mut rng) else {
            continue;
        };
        let cfg = ChannelConfig::from_budget(&b, InputState::coherent(0.5, 0.25)).expect("channel");
        let k = runs.len() as u64;
        runs.push((
            format!("random budget {}", runs.len() - 4),
            McRunConfig::new(
                McChannel::Channel(Box::new(cfg)),
                MC_SAMPLES,
                MC_SEED + 100 + k,
            )
            .unwrap(),
        ));
    }
    runs
}

fn monte_carlo() -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    let runs = mc_matrix();
    for (name, cfg) in &runs {
        match simulate_protocol(cfg) {
            Ok(r) => {
                for (q, e) in r.estimates() {
                    let z = e.z_score.abs();
                    if z.is_nan() || z >= Z_GATE {
                        failures.push(format!("{name} {q} z = {}", e.z_score));
                    }
                    if z > worst.0 {
                        worst = (z, format!("{name} {q}"));
                    }
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{} channels x 5 quantities, max |z| = {:.3} ({}){}",
            runs.len(),
            worst.0,
            worst.1,
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failures: {failures:?}")
            }
        ),
    )
}

fn experimental_datum() -> Outcome {
    let n = symmetric_noise_for_fidelity(EXPERIMENT_FIDELITY).expect("noise");
    let f = fidelity_unity_gain(n, n).expect("fidelity");
    let above_half = is_above_classical_fidelity(f);
    let below_one = is_noise_product_below_one(n, n);
    let pass = (n - EXPERIMENT_NOISE).abs() <= EXPERIMENT_TOL && above_half && !below_one;
    check(
        pass,
        format!("N_out = {n:.6}, F > 1/2: {above_half}, N product < 1: {below_one}"),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 7] = [
        (
            "boundary point eta = 0.5, s = 0",
            Duration::from_secs(1),
            boundary_point,
        ),
        (
            "classical fidelity boundary",
            Duration::from_secs(1),
            classical_boundary,
        ),
        (
            "quantum threshold consistency",
            Duration::from_secs(1),
            threshold_consistency,
        ),
        (
            "inequality chain on random budgets",
            Duration::from_secs(30),
            inequality_chain,
        ),
        (
            "quantum region of the EPR sweep",
            Duration::from_secs(10),
            quantum_region,
        ),
        (
            "Monte Carlo concordance",
            Duration::from_secs(60),
            monte_carlo,
        ),
        (
            "experimental fidelity 0.58",
            Duration::from_secs(1),
            experimental_datum,
        ),
    ];
    let mut failed = 0;
    for (k, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} | {} | {:.3} s (limit {} s)",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            name,
            outcome.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
