//! Command-line front end: `report`, `sweep`, `verify` and `mc`.
//!
//! Exit codes: 0 success, 1 unparseable arguments or config, 2 physically
//! invalid config, 3 I/O failure, 4 inequality-chain failure, 5 Monte Carlo
//! disagreement (`|z| ≥ 5`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::channel::{
    ChannelConfig, ChannelConfigRecord, InputState, InputStateRecord, NoiseBudget,
    NoiseBudgetRecord,
};
use crate::criteria::{
    epr_criterion, full_report, verify_budgets, verify_random, CriteriaReport, VerifySummary,
};
use crate::epr::{linspace, sweep, write_sweep_csv, EprScenario};
use crate::format::{round_json, sig12};
use crate::mc::{simulate_protocol, McChannel, McReport, McRunConfig, Z_GATE};

#[derive(Debug, Parser)]
#[command(
    name = "cvtele",
    version,
    about = "Continuous-variable teleportation criteria"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate every criterion for one configuration.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the EPR scenario over an (eta, s) grid as CSV.
    Sweep {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the inequality chain on random or given noise budgets.
    Verify {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Verify this budget instead of random ones.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare Monte Carlo estimates with the analytic values.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    eta_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    eta_max: f64,
    #[arg(long, default_value_t = 101)]
    eta_steps: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    s_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    s_max: f64,
    #[arg(long, default_value_t = 11)]
    s_steps: usize,
}

/// Configuration file contents, discriminated by `"type"`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ConfigDocument {
    Channel(ChannelConfigRecord),
    Epr {
        eta: f64,
        s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input: Option<InputStateRecord>,
    },
    Budget {
        #[serde(flatten)]
        budget: NoiseBudgetRecord,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input: Option<InputStateRecord>,
    },
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Config {
    Channel(Box<ChannelConfig>),
    Epr(EprScenario, InputState),
    Budget(NoiseBudget, InputState),
}

#[derive(Debug)]
enum CliError {
    Parse(String),
    Invalid(String),
    Io(String),
    Verification(String),
    McGate(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
            CliError::Verification(_) => 4,
            CliError::McGate(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Parse(m)
            | CliError::Invalid(m)
            | CliError::Io(m)
            | CliError::Verification(m)
            | CliError::McGate(m) => m,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

impl ConfigDocument {
    pub fn validate(self) -> Result<Config, String> {
        let input = |r: Option<InputStateRecord>| {
            r.map_or(Ok(InputState::vacuum()), InputState::try_from)
                .map_err(|e| e.to_string())
        };
        match self {
            ConfigDocument::Channel(r) => ChannelConfig::try_from(r)
                .map(|c| Config::Channel(Box::new(c)))
                .map_err(|e| e.to_string()),
            ConfigDocument::Epr { eta, s, input: i } => {
                let sc = EprScenario::new(eta, s).map_err(|e| e.to_string())?;
                Ok(Config::Epr(sc, input(i)?))
            }
            ConfigDocument::Budget { budget, input: i } => {
                let b = NoiseBudget::try_from(budget).map_err(|e| e.to_string())?;
                Ok(Config::Budget(b, input(i)?))
            }
        }
    }
}

impl Config {
    pub fn report(&self) -> Result<CriteriaReport, String> {
        match self {
            Config::Channel(c) => full_report(c).map_err(|e| e.to_string()),
            Config::Budget(b, input) => {
                CriteriaReport::from_budget(b, input).map_err(|e| e.to_string())
            }
            Config::Epr(sc, input) => {
                // Closed form, so perfect squeezing (no finite budget) works too.
                let n = sc.n_out();
                let products = sc
                    .conditional_variance_products()
                    .map_err(|e| e.to_string())?;
                CriteriaReport::from_parts(n, n, input, (0.0, 0.0), products)
                    .map_err(|e| e.to_string())
            }
        }
    }

    fn mc_channel(&self) -> Result<(McChannel, (f64, f64)), CliError> {
        Ok(match self {
            Config::Channel(c) => (McChannel::Channel(c.clone()), c.input().amplitude()),
            Config::Epr(sc, input) => (McChannel::Epr(*sc), input.amplitude()),
            Config::Budget(b, input) => (
                McChannel::Channel(Box::new(
                    ChannelConfig::from_budget(b, *input).map_err(invalid)?,
                )),
                input.amplitude(),
            ),
        })
    }
}

pub fn load_config(path: &Path) -> Result<Config, String> {
    read_document(path)
        .map_err(|e| e.message().to_owned())?
        .validate()
}

fn read_document(path: &Path) -> Result<ConfigDocument, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("cannot parse {}: {e}", path.display())))
}

fn read_config(path: &Path) -> Result<Config, CliError> {
    read_document(path)?
        .validate()
        .map_err(|e| CliError::Invalid(format!("invalid configuration {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable");
    serde_json::to_string_pretty(&round_json(v)).expect("json") + "\n"
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write output: {e}"))),
    }
}

fn grid(min: f64, max: f64, steps: usize, name: &str) -> Result<Vec<f64>, CliError> {
    if steps == 0 {
        return Err(CliError::Invalid(format!(
            "--{name}-steps must be at least 1"
        )));
    }
    if !min.is_finite() || !max.is_finite() || min > max {
        return Err(CliError::Invalid(format!(
            "--{name}-min must not exceed --{name}-max"
        )));
    }
    Ok(linspace(min, max, steps))
}

/// Human-readable comparison table for a Monte Carlo run.
pub fn render_mc_table(report: &McReport) -> String {
    let mut s = format!(
        "{:<22} {:>20} {:>20} {:>20} {:>10}\n",
        "quantity", "estimate", "std_error", "analytic", "z"
    );
    for (name, e) in report.estimates() {
        s += &format!(
            "{:<22} {:>20} {:>20} {:>20} {:>10.3}\n",
            name,
            sig12(e.estimate),
            sig12(e.std_error),
            sig12(e.analytic),
            e.z_score
        );
    }
    s += &format!(
        "samples {} seed {} max |z| {:.3} (gate {Z_GATE})\n",
        report.samples,
        report.seed,
        report.max_abs_z()
    );
    s
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Report { config, out } => {
            let cfg = read_config(&config)?;
            let report = cfg.report().map_err(invalid)?;
            emit(&to_json(&report), out.as_deref(), stdout)
        }
        Command::Sweep { grid: g, out } => {
            let etas = grid(g.eta_min, g.eta_max, g.eta_steps, "eta")?;
            let ss = grid(g.s_min, g.s_max, g.s_steps, "s")?;
            let points = sweep(&etas, &ss).map_err(invalid)?;
            let mut buf = Vec::new();
            write_sweep_csv(&points, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
            emit(
                &String::from_utf8(buf).expect("utf8"),
                out.as_deref(),
                stdout,
            )
        }
        Command::Verify {
            trials,
            seed,
            config,
            out,
        } => {
            let summary: VerifySummary = match config {
                Some(path) => match read_config(&path)? {
                    Config::Budget(b, _) => {
                        if epr_criterion(&b).map_err(invalid)?.violated {
                            return Err(CliError::Invalid(
                                "the inequality chain needs a budget without EPR violation".into(),
                            ));
                        }
                        verify_budgets([&b], seed)
                    }
                    _ => return Err(CliError::Invalid("verify --config expects a budget".into())),
                },
                None => verify_random(trials, seed),
            };
            emit(&to_json(&summary), out.as_deref(), stdout)?;
            if summary.bound_violations > 0 {
                return Err(CliError::Verification(format!(
                    "{} of {} budgets failed: {}",
                    summary.bound_violations,
                    summary.trials,
                    summary.first_failure.unwrap_or_default()
                )));
            }
            Ok(())
        }
        Command::Mc {
            config,
            samples,
            seed,
            out,
        } => {
            let cfg = read_config(&config)?;
            let (channel, (x_a, y_a)) = cfg.mc_channel()?;
            let run = McRunConfig::new(channel, samples, seed)
                .map_err(|e| CliError::Parse(e.to_string()))?
                .with_amplitude(x_a, y_a)
                .map_err(invalid)?;
            let report = simulate_protocol(&run).map_err(invalid)?;
            stdout
                .write_all(render_mc_table(&report).as_bytes())
                .map_err(|e| CliError::Io(e.to_string()))?;
            if let Some(path) = out {
                emit(&to_json(&report), Some(&path), stdout)?;
            }
            if !report.within_gate() {
                return Err(CliError::McGate(format!(
                    "Monte Carlo disagrees with analytic values: max |z| = {:.3}",
                    report.max_abs_z()
                )));
            }
            Ok(())
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.code()
        }
    }
}
