use std::path::PathBuf;

use catalysis_core::conference::SessionKind;
use catalysis_core::fitting::ModelKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "catalysis",
    version,
    about = "Collaboration catalysis at conferences: simulation, fitting and schedule analysis",
    propagate_version = true
)]
pub struct Cli {
    /// Directory receiving the outputs and manifest.json.
    #[arg(short, long, global = true, default_value = "catalysis-out")]
    pub out: PathBuf,
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic conference from a known model.
    Synth(SynthArgs),
    /// Per-pair effective interaction and outcome.
    Interactions(ConferenceArg),
    /// Integrate a model over a conference schedule.
    Simulate(SimulateArgs),
    /// Sample the potential landscape and its stationary points.
    Potential(PotentialArgs),
    /// Fit one candidate model by maximum likelihood.
    Fit(FitArgs),
    /// Fit several candidate models and compare them by AIC.
    Select(SelectArgs),
    /// Cumulative collaborations against total interaction, with a
    /// simulated band.
    Curve(CurveArgs),
    /// Interaction gap, rank tests and mini-session odds.
    Stats(StatsArgs),
    /// Search alternative group assignments by simulated annealing.
    Anneal(AnnealArgs),
    /// Compare the realised schedule with alternative assignments.
    Counterfactual(CounterfactualArgs),
    /// Print the command reference as Markdown.
    #[command(hide = true)]
    Reference,
}

#[derive(Debug, Args)]
pub struct ConferenceArg {
    /// Conference file (JSON).
    pub conference: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings (JSON); flags below override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Number of fellows.
    #[arg(long)]
    pub fellows: Option<usize>,
    /// Number of facilitators, one per discussion group.
    #[arg(long)]
    pub facilitators: Option<usize>,
    #[arg(long)]
    pub discussion_sessions: Option<usize>,
    #[arg(long)]
    pub small_group_sessions: Option<usize>,
    /// Generating model file (`{"model": ..., "params": ...}`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Random seed (falls back to the spec file's, else drawn and recorded).
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Built-in parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Nonlinear model of the worked conference example.
    WorkedExample,
    /// Linear model with the worked example's shared parameters.
    WorkedExampleLinear,
    /// Landscape whose barrier vanishes at I = I_c = 1 (I_max = 5).
    Bifurcation,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ModelSource {
    /// Model file: `{"model": <name>, "params": [...] or {name: value}}`.
    /// Fit results are accepted as they are.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Built-in parameter set.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Conference file (JSON).
    pub conference: PathBuf,
    #[command(flatten)]
    pub model: ModelSource,
    /// Integration step in minutes.
    #[arg(long, default_value_t = catalysis_core::dynamics::DEFAULT_STEP)]
    pub step: f64,
    /// Record the full trajectory of this pair (`ID,ID`); repeatable.
    #[arg(long = "pair", value_name = "ID,ID")]
    pub pairs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PotentialArgs {
    #[command(flatten)]
    pub model: ModelSource,
    /// Intensities to sample (default: 0, I_c/2, I_c, I_cint, I_max).
    #[arg(long, value_delimiter = ',')]
    pub intensity: Vec<f64>,
    /// Evenly spaced P samples on [0, 1].
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Extra random starts on top of the grid.
    #[arg(long, default_value_t = 0)]
    pub random_starts: usize,
    /// Refine this many best starts with Nelder-Mead (0 = all).
    #[arg(long, default_value_t = catalysis_core::fitting::DEFAULT_REFINE)]
    pub refine: usize,
    /// Integration step in minutes.
    #[arg(long, default_value_t = catalysis_core::dynamics::DEFAULT_STEP)]
    pub step: f64,
    /// Nelder-Mead iteration cap per start.
    #[arg(long, default_value_t = 2000)]
    pub max_iterations: usize,
    /// Seed for the random starts (drawn and recorded when omitted).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Conference file (JSON).
    pub conference: PathBuf,
    /// Candidate model: random_uniform, constant_p, linear_k0, linear_itot,
    /// linear_k0_itot, threshold, linear_ode or nonlinear_catalysis.
    #[arg(long)]
    pub model: ModelKind,
    /// Start points (JSON array of parameter vectors) replacing the
    /// default grid.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Also write per-pair predicted probabilities.
    #[arg(long)]
    pub emit_predictions: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Conference file (JSON).
    pub conference: PathBuf,
    /// Candidate models (default: all eight).
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<ModelKind>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Conference file (JSON).
    pub conference: PathBuf,
    #[command(flatten)]
    pub model: ModelSource,
    /// Bins along the interaction axis.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Simulated conferences for the band.
    #[arg(long, default_value_t = 100)]
    pub sims: usize,
    /// Weight of K0 on the horizontal axis (default: a times the total
    /// session minutes for the ODE models, else 0).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Random seed (drawn and recorded when omitted).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Conference files, pooled.
    #[arg(required = true)]
    pub conferences: Vec<PathBuf>,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    /// Confidence level of the intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Random seed (drawn and recorded when omitted).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Discussion,
    SmallGroup,
    Other,
}

impl From<KindArg> for SessionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Discussion => SessionKind::Discussion,
            KindArg::SmallGroup => SessionKind::SmallGroup,
            KindArg::Other => SessionKind::Other,
        }
    }
}

#[derive(Debug, Args)]
#[group(id = "sessions_source", required = true, multiple = false)]
pub struct SessionSelection {
    /// Reassign every session of this kind.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Reassign these sessions (comma-separated ids).
    #[arg(long, value_delimiter = ',')]
    pub sessions: Vec<String>,
}

#[derive(Debug, Args)]
pub struct AnnealArgs {
    /// Conference file (JSON).
    pub conference: PathBuf,
    #[command(flatten)]
    pub selection: SessionSelection,
    /// Assignment constraints and energy weights (JSON).
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Annealing schedule (JSON).
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Number of solutions to return.
    #[arg(long, default_value_t = 50)]
    pub solutions: usize,
    /// Run one independent chain per solution instead of keeping the best
    /// distinct states of a single chain.
    #[arg(long)]
    pub chains: bool,
    /// Random seed (drawn and recorded when omitted).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CounterfactualArgs {
    /// Conference file (JSON).
    pub conference: PathBuf,
    /// Solutions for the discussion sessions (from `anneal`).
    #[arg(long)]
    pub discussion: PathBuf,
    /// Solutions for the small-group sessions (from `anneal`).
    #[arg(long)]
    pub small_group: PathBuf,
}
