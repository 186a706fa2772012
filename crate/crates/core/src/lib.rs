//! Quantitative criteria for continuous-variable quantum teleportation.
//!
//! Quadratures are in units where the vacuum variance is 1. Modules:
//!
//! * [`gaussian`]: jointly Gaussian variables, linear forms, conditioning,
//!   sampling.
//! * [`channel`]: measure-and-reconstruct channel, output noise, transfer
//!   coefficients, unity-gain noise budgets.
//! * [`criteria`]: fidelity, T-V and EPR criteria and the check that channels
//!   without EPR correlations obey `N_X·N_Y ≥ 1`.
//! * [`epr`]: teleportation with squeezed EPR beams over lossy lines.
//! * [`mc`]: Monte Carlo oracle for all of the above.
//! * [`cli`]: the `cvtele` command.

pub mod channel;
pub mod cli;
pub mod criteria;
pub mod epr;
pub mod format;
pub mod gaussian;
pub mod mc;

pub use channel::{ChannelConfig, InputState, MeasurementStage, NoiseBudget, ReconstructionStage};
pub use criteria::{full_report, CriteriaReport, InequalityTrace, VerifySummary};
pub use epr::{EprScenario, SweepPoint};
pub use gaussian::{GaussianVector, LinearForm};
pub use mc::{simulate_protocol, McChannel, McReport, McRunConfig};
