use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loft_core::analysis::{DEFAULT_TOP_K, DEFAULT_VARIANCE_FRACTION};
use loft_core::dataio::Regime;
use loft_core::matcore::Centering;
use loft_core::objective::Ablation;
use loft_core::optimizer::{Init, Schedule};

const HEAD_FORMAT: &str = "\
Head files use the FMAT layout for the C x d weight matrix (magic \"FMAT1\\n\", \
u32 rows, u32 cols, u8 flags = 0, row-major f32 values, all little-endian) \
followed by C little-endian f32 biases.";

#[derive(Debug, Parser)]
#[command(name = "loft", version, about = "Forget classes by projecting features onto a learned subspace")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Accumulate a feature covariance in one pass and write it as FCOV.
    Cov(CovArgs),
    /// Optimize a projector against remaining and forgetting covariances.
    Fit(FitArgs),
    /// Spectrum of a covariance, or reconstruction errors under a projector.
    Analyze(AnalyzeArgs),
    /// Accuracies and membership-inference score of a head, optionally behind a projector.
    #[command(after_help = HEAD_FORMAT)]
    Eval(EvalArgs),
    /// Fold a projector into a head's weights.
    #[command(after_help = HEAD_FORMAT)]
    Absorb(AbsorbArgs),
    /// Train a softmax probe head on labelled features.
    #[command(after_help = HEAD_FORMAT)]
    Probe(ProbeArgs),
    /// Generate a synthetic class-structured feature set.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl From<OnOff> for Centering {
    fn from(v: OnOff) -> Self {
        match v {
            OnOff::On => Centering::Centered,
            OnOff::Off => Centering::Uncentered,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CovArgs {
    /// Feature file (FMAT, or CSV with a header when the name ends in .csv).
    #[arg(long, required_unless_present = "merge")]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Subtract the sample mean before accumulating.
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub center: OnOff,
    /// Only use rows with these labels.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<u32>,
    /// FCOV files pooled into the result, weighted by sample count.
    #[arg(long, num_args = 1..)]
    pub merge: Vec<PathBuf>,
}

/// Which objective term `--ablate` removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblateTerm {
    /// Drop the remaining-set term; only forgetting is optimized.
    Rm,
    /// Drop the forgetting terms; only retention is optimized.
    Fg,
}

impl From<AblateTerm> for Ablation {
    fn from(t: AblateTerm) -> Self {
        match t {
            AblateTerm::Rm => Ablation::DropRemain,
            AblateTerm::Fg => Ablation::DropForget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Pca,
    Random,
}

impl From<InitArg> for Init {
    fn from(v: InitArg) -> Self {
        match v {
            InitArg::Pca => Init::Pca,
            InitArg::Random => Init::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Constant,
    Cosine,
}

impl From<ScheduleArg> for Schedule {
    fn from(v: ScheduleArg) -> Self {
        match v {
            ScheduleArg::Constant => Schedule::Constant,
            ScheduleArg::Cosine => Schedule::Cosine,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub cov_rm: PathBuf,
    #[arg(long)]
    pub cov_fg: PathBuf,
    /// Pooled covariance of earlier forgetting rounds.
    #[arg(long)]
    pub cov_fgp: Option<PathBuf>,
    /// Subspace dimension. Takes precedence over --variance-fraction.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Pick the smallest dimension whose remaining-set eigenvalues explain this
    /// fraction of the trace [default: 0.95].
    #[arg(long)]
    pub variance_fraction: Option<f64>,
    /// Projector output (FPRJ).
    #[arg(long)]
    pub out: PathBuf,
    /// JSON run report [default: the projector path with a .json extension].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-step text log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.05)]
    pub wd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = InitArg::Pca)]
    pub init: InitArg,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Constant)]
    pub schedule: ScheduleArg,
    /// Remove one objective term.
    #[arg(long, value_enum)]
    pub ablate: Option<AblateTerm>,
}

impl FitArgs {
    pub fn variance_fraction_or_default(&self) -> f64 {
        self.variance_fraction.unwrap_or(DEFAULT_VARIANCE_FRACTION)
    }
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Covariance whose spectrum is reported.
    #[arg(long, conflicts_with_all = ["features", "projector"], required_unless_present = "features")]
    pub cov: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    /// Also report the dimension that explains this fraction of the trace.
    #[arg(long, requires = "cov")]
    pub variance_fraction: Option<f64>,
    /// Feature files whose reconstruction errors are reported, one split each.
    #[arg(long, num_args = 1.., requires = "projector")]
    pub features: Vec<PathBuf>,
    #[arg(long)]
    pub projector: Option<PathBuf>,
    /// Center features with this covariance's mean instead of their own.
    #[arg(long, requires = "projector")]
    pub mean_from: Option<PathBuf>,
    /// Per-sample errors as CSV.
    #[arg(long, requires = "projector")]
    pub csv: Option<PathBuf>,
    /// Machine-readable report.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub head: PathBuf,
    /// Projector applied before the head; omit to evaluate the head alone.
    #[arg(long)]
    pub projector: Option<PathBuf>,
    #[arg(long)]
    pub rm_train: PathBuf,
    #[arg(long)]
    pub fg_train: PathBuf,
    #[arg(long)]
    pub rm_test: PathBuf,
    #[arg(long)]
    pub fg_test: PathBuf,
    /// Known training members for calibrating the attack threshold
    /// [default: --rm-train].
    #[arg(long, requires = "calib_nonmember")]
    pub calib_member: Option<PathBuf>,
    /// Known non-members for calibrating the attack threshold
    /// [default: --rm-test].
    #[arg(long, requires = "calib_member")]
    pub calib_nonmember: Option<PathBuf>,
    /// Metrics JSON of a reference model; adds per-metric gaps and their mean.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Write the metrics as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Attach the metrics to an existing fit report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AbsorbArgs {
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub projector: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    /// Labelled feature files; all rows are used for training.
    #[arg(long, required = true, num_args = 1..)]
    pub features: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of classes [default: largest label + 1].
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Pretrained,
    Exact,
}

impl From<RegimeArg> for Regime {
    fn from(v: RegimeArg) -> Self {
        match v {
            RegimeArg::Pretrained => Regime::Pretrained,
            RegimeArg::Exact => Regime::Exact,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub regime: RegimeArg,
    /// Feature dimension.
    #[arg(long = "d", default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    /// Comma-separated class ids of the forgetting set.
    #[arg(long, value_delimiter = ',', required = true)]
    pub forget: Vec<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dimension of the subspace holding the class structure.
    #[arg(long, default_value_t = 8)]
    pub top_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long)]
    pub out_rm: PathBuf,
    #[arg(long)]
    pub out_fg: PathBuf,
    /// Samples per class in an independent test draw from the same model.
    #[arg(long, requires_all = ["out_rm_test", "out_fg_test"])]
    pub test_per_class: Option<usize>,
    #[arg(long, requires = "test_per_class")]
    pub out_rm_test: Option<PathBuf>,
    #[arg(long, requires = "test_per_class")]
    pub out_fg_test: Option<PathBuf>,
}
