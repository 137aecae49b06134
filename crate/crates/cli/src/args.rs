use clap::{ArgAction, Args, Parser, Subcommand};
use genscl::data::AugmentConfig;
use genscl::loss::gradcheck::Mutation;
use genscl::loss::KdWeight;
use genscl::mixing::MixKind;
use genscl::trainer::LossKind;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Parser)]
#[command(name = "gscl", version, about = "Generalized supervised contrastive learning toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic template dataset.
    GenData(GenDataArgs),
    /// Pretrain a teacher classifier with cross-entropy.
    TrainTeacher(TrainTeacherArgs),
    /// Contrastive pretraining of encoder and projection head.
    Train(TrainArgs),
    /// Linear evaluation of a frozen encoder.
    LinearEval(LinearEvalArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Merge per-epoch mean_pos_dot series from metrics files.
    Diagnose(DiagnoseArgs),
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct Common {
    /// key=value file whose entries act as flags; explicit flags win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Print the effective configuration as key=value lines and exit.
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    /// Image height and width.
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise_std: f64,
    #[arg(long, env = "GSCL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct AugmentArgs {
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub crop: bool,
    #[arg(long, default_value_t = 1)]
    pub crop_pad: usize,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub flip: bool,
    #[arg(long, default_value_t = 0.5)]
    pub flip_prob: f64,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub noise: bool,
    #[arg(long, default_value_t = 0.02)]
    pub noise_std: f64,
}

impl AugmentArgs {
    pub fn config(&self) -> AugmentConfig {
        AugmentConfig {
            crop: self.crop,
            crop_pad: self.crop_pad,
            flip: self.flip,
            flip_prob: self.flip_prob,
            noise: self.noise,
            noise_std: self.noise_std,
        }
    }

    fn entries(&self, out: &mut Vec<(&'static str, String)>) {
        out.push(("crop", self.crop.to_string()));
        out.push(("crop-pad", self.crop_pad.to_string()));
        out.push(("flip", self.flip.to_string()));
        out.push(("flip-prob", self.flip_prob.to_string()));
        out.push(("noise", self.noise.to_string()));
        out.push(("noise-std", self.noise_std.to_string()));
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainTeacherArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Softening temperature applied to the frozen teacher's logits.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, env = "GSCL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub augment: AugmentArgs,
    #[command(flatten)]
    pub common: Common,
}

/// Where KD teacher predictions come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TeacherSource {
    /// `(1 − ε)·ỹ + ε/C` from the view's own soft label.
    Oracle,
    Checkpoint(PathBuf),
}

impl FromStr for TeacherSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("empty teacher".into());
        }
        Ok(match s {
            "oracle" => TeacherSource::Oracle,
            path => TeacherSource::Checkpoint(PathBuf::from(path)),
        })
    }
}

impl std::fmt::Display for TeacherSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TeacherSource::Oracle => f.write_str("oracle"),
            TeacherSource::Checkpoint(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV: epoch,loss,mean_pos_dot,tangent_factor,lr.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = LossKind::GenScl)]
    pub loss: LossKind,
    #[arg(long, default_value_t = MixKind::None)]
    pub mix: MixKind,
    /// Teacher-similarity weight, or `teacher-only`.
    #[arg(long, default_value_t = KdWeight::Weight(0.0))]
    pub alpha_kd: KdWeight,
    /// Teacher checkpoint path, or `oracle`.
    #[arg(long)]
    pub teacher: Option<TeacherSource>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 2)]
    pub warmup_epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta_alpha: f64,
    #[arg(long, env = "GSCL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 32)]
    pub embed: usize,
    #[arg(long, default_value_t = 16)]
    pub proj: usize,
    /// Label similarity above which a pair counts as positive in the logged diagnostic.
    #[arg(long, default_value_t = genscl::loss::DEFAULT_POSITIVE_THRESHOLD)]
    pub pos_threshold: f64,
    #[command(flatten)]
    pub augment: AugmentArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct LinearEvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, env = "GSCL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MutationArg(pub Mutation);

impl FromStr for MutationArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(MutationArg(Mutation::None)),
            "sign-flip" => Ok(MutationArg(Mutation::SignFlip)),
            other => Err(format!("unknown mutation {other:?} (none|sign-flip)")),
        }
    }
}

impl std::fmt::Display for MutationArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self.0 {
            Mutation::None => "none",
            Mutation::SignFlip => "sign-flip",
        })
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, env = "GSCL_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Finite-difference step for the per-anchor check.
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    /// Finite-difference step for the whole-batch check.
    #[arg(long, default_value_t = 1e-5)]
    pub batch_step: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Corrupt the analytic gradient to exercise the failure path.
    #[arg(long, default_value_t = MutationArg(Mutation::None))]
    pub mutate: MutationArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct DiagnoseArgs {
    /// Metrics CSV files, comma separated or repeated.
    #[arg(long = "input", value_delimiter = ',', required = true, action = ArgAction::Append)]
    pub inputs: Vec<PathBuf>,
    /// Column names for the merged file; defaults to the input file stems.
    #[arg(long = "name", value_delimiter = ',', action = ArgAction::Append)]
    pub names: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

fn path(p: &std::path::Path) -> String {
    p.display().to_string()
}

fn join(ps: &[PathBuf]) -> String {
    ps.iter().map(|p| path(p)).collect::<Vec<_>>().join(",")
}

/// The effective settings of a subcommand, in the config-file vocabulary.
pub trait DumpConfig {
    fn entries(&self) -> Vec<(&'static str, String)>;

    fn dump(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

impl DumpConfig for GenDataArgs {
    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("classes", self.classes.to_string()),
            ("per-class", self.per_class.to_string()),
            ("size", self.size.to_string()),
            ("channels", self.channels.to_string()),
            ("noise-std", self.noise_std.to_string()),
            ("seed", self.seed.to_string()),
            ("out", path(&self.out)),
        ]
    }
}

impl DumpConfig for TrainTeacherArgs {
    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("data", path(&self.data)),
            ("out", path(&self.out)),
            ("epochs", self.epochs.to_string()),
            ("batch-size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("weight-decay", self.weight_decay.to_string()),
            ("hidden", self.hidden.to_string()),
            ("temperature", self.temperature.to_string()),
            ("seed", self.seed.to_string()),
        ];
        self.augment.entries(&mut out);
        out
    }
}

impl DumpConfig for TrainArgs {
    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![("data", path(&self.data)), ("out", path(&self.out))];
        if let Some(m) = &self.metrics {
            out.push(("metrics", path(m)));
        }
        out.extend([
            ("loss", self.loss.to_string()),
            ("mix", self.mix.to_string()),
            ("alpha-kd", self.alpha_kd.to_string()),
        ]);
        if let Some(t) = &self.teacher {
            out.push(("teacher", t.to_string()));
        }
        out.extend([
            ("epochs", self.epochs.to_string()),
            ("batch-size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("weight-decay", self.weight_decay.to_string()),
            ("warmup-epochs", self.warmup_epochs.to_string()),
            ("tau", self.tau.to_string()),
            ("beta-alpha", self.beta_alpha.to_string()),
            ("seed", self.seed.to_string()),
            ("hidden", self.hidden.to_string()),
            ("embed", self.embed.to_string()),
            ("proj", self.proj.to_string()),
            ("pos-threshold", self.pos_threshold.to_string()),
        ]);
        self.augment.entries(&mut out);
        out
    }
}

impl DumpConfig for LinearEvalArgs {
    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("checkpoint", path(&self.checkpoint)),
            ("train", path(&self.train)),
            ("test", path(&self.test)),
            ("epochs", self.epochs.to_string()),
            ("batch-size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("weight-decay", self.weight_decay.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

impl DumpConfig for GradcheckArgs {
    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
            ("step", self.step.to_string()),
            ("batch-step", self.batch_step.to_string()),
            ("tolerance", self.tolerance.to_string()),
            ("mutate", self.mutate.to_string()),
        ]
    }
}

impl DumpConfig for DiagnoseArgs {
    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![("input", join(&self.inputs))];
        if !self.names.is_empty() {
            out.push(("name", self.names.join(",")));
        }
        out.push(("out", path(&self.out)));
        out
    }
}
