use std::path::PathBuf;

use bellforge_core::quantum_model::StateVariant;
use bellforge_core::trial_simulator::WindowPolicy;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "bellforge",
    version,
    about = "Bell-test predictions, loophole audits and pulsed-source simulation"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned text, 6 significant digits.
    Text,
    /// `key = value` sections, full precision.
    Kv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Probabilities, J and optionally S for a state and analyzer settings.
    Predict(PredictArgs),
    /// Maximize J (or S) over the analyzer angles and optionally r.
    Optimize(OptimizeArgs),
    /// Evaluate the hidden-variable model with setting-dependent detection zones.
    Hvdz(HvdzArgs),
    /// Detection and locality verdicts for experiment records.
    Audit(AuditArgs),
    /// Generate time-tagged event streams for a pulsed setup.
    Simulate(SimulateArgs),
    /// Count coincidences in a stream file and check the setup timing.
    Analyze(AnalyzeArgs),
    /// Re-derive every derivable table cell and compare with the records.
    Table(TableArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StateArg {
    Psi,
    Phi,
}

impl From<StateArg> for StateVariant {
    fn from(s: StateArg) -> Self {
        match s {
            StateArg::Psi => StateVariant::PsiE,
            StateArg::Phi => StateVariant::PhiE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    /// Pair events by pulse index inside the natural-time windows.
    Natural,
    /// Pair events by a floating coincidence window.
    Floating,
}

impl From<PolicyArg> for WindowPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Natural => WindowPolicy::NaturalTime,
            PolicyArg::Floating => WindowPolicy::Floating,
        }
    }
}

#[derive(Debug, Args)]
pub struct DetectionArgs {
    /// Detection efficiency at A (and at B unless --eta-b is given).
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long)]
    pub eta_b: Option<f64>,
    /// Background click probability per trial at A (and at B unless --background-b is given).
    #[arg(long, default_value_t = 0.0)]
    pub background: f64,
    #[arg(long)]
    pub background_b: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AngleArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a_prime: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b_prime: Option<f64>,
    /// Read and print angles in degrees instead of radians.
    #[arg(long)]
    pub degrees: bool,
}

#[derive(Debug, Args)]
pub struct OptimizerArgs {
    /// Seed for the optimizer's random restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub angle_points: usize,
    #[arg(long, default_value_t = 32)]
    pub r_points: usize,
    #[arg(long, default_value_t = 4)]
    pub random_starts: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_enum, default_value_t = StateArg::Psi)]
    pub state: StateArg,
    /// Amplitude ratio of the state's two components.
    #[arg(long, allow_hyphen_values = true)]
    pub r: f64,
    #[command(flatten)]
    pub angles: AngleArgs,
    #[command(flatten)]
    pub detection: DetectionArgs,
    /// Also print CHSH S; with --optimize, maximize S instead of J.
    #[arg(long)]
    pub chsh: bool,
    /// Replace the given angles with optimized ones.
    #[arg(long)]
    pub optimize: bool,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, value_enum, default_value_t = StateArg::Psi)]
    pub state: StateArg,
    /// Fix r; when omitted r is searched over [0, 1].
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<f64>,
    #[command(flatten)]
    pub detection: DetectionArgs,
    /// Maximize CHSH S instead of J.
    #[arg(long)]
    pub chsh: bool,
    /// Print angles in degrees.
    #[arg(long)]
    pub degrees: bool,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["q_from_s", "q_required", "q"])))]
pub struct HvdzArgs {
    /// Smallest q whose CHSH value reaches S.
    #[arg(long, value_name = "S")]
    pub q_from_s: Option<f64>,
    /// Smallest q that reproduces the given J (needs --p-a).
    #[arg(long, value_name = "J", allow_hyphen_values = true, requires = "p_a")]
    pub q_required: Option<f64>,
    /// Evaluate the model at this q (needs --p-a).
    #[arg(long, requires = "p_a")]
    pub q: Option<f64>,
    /// Single-click probability at A's first setting.
    #[arg(long)]
    pub p_a: Option<f64>,
    /// Single-click probability at B's first setting; selects the exact model.
    #[arg(long)]
    pub p_b: Option<f64>,
    /// Overlap displacement of the fourth target (defaults to p_a).
    #[arg(long)]
    pub d24: Option<f64>,
    /// Also estimate J by Monte Carlo with this many trials (needs --seed).
    #[arg(long, requires = "seed")]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    /// Experiment record file; the built-in records are used when absent.
    #[arg(long, env = "BELLFORGE_DATA")]
    pub records: Option<PathBuf>,
    /// Seed for the optimizer's random restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub records: RecordArgs,
    /// Restrict to these records (repeatable); all records when absent.
    #[arg(long)]
    pub name: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[command(flatten)]
    pub records: RecordArgs,
}

#[derive(Debug, Args)]
pub struct SetupArgs {
    /// Setup file with a `[setup]` section.
    #[arg(long)]
    pub config: PathBuf,
    /// Section to read from the setup file.
    #[arg(long, default_value = "setup")]
    pub section: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    #[arg(long)]
    pub pulses: u64,
    #[arg(long)]
    pub seed: u64,
    /// Stream file to write; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("what").required(true).multiple(true).args(["input", "timing"])))]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Stream file produced by `simulate` or an external tagger.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Natural)]
    pub policy: PolicyArg,
    /// Print the space-like separation check for the setup.
    #[arg(long)]
    pub timing: bool,
}
