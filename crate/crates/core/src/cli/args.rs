//! Flag definitions and config-file merging.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::sampling::{SpatialTransform, TemporalMode};
use crate::scoring::Normalization;

#[derive(Debug, Parser)]
#[command(name = "ugc-vqa", version, about = "Blind video quality assessment and efficiency bench")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: logical cores). Outputs do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Output path (default: stdout).
    #[arg(long, visible_alias = "out", global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON object whose keys are flag names; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    #[value(name = "siamese+finetune")]
    SiameseFinetune,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    None,
    Zscore,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::None => Normalization::None,
            NormArg::Zscore => Normalization::Zscore,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract clip-level features to CSV or JSON.
    Extract(ExtractArgs),
    /// Train a branch net or a forest and write a checkpoint.
    Train(TrainArgs),
    /// Score a feature table with a checkpoint.
    Predict(PredictArgs),
    /// Correlate predictions with MOS.
    Eval(EvalArgs),
    /// Weighted fusion of several prediction files.
    Fuse(FuseArgs),
    /// Time a named pipeline on a canonical clip spec.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Y4M files, frame directories, or directories holding either.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// one_per_30, two_per_30, one_fps, five_fps, all, frankenstone_reduce[:N]
    #[arg(long, default_value = "five_fps")]
    pub temporal: TemporalMode,
    /// resize:WxH, pad_square:S, fragment or fragment:GxP (default: native).
    #[arg(long)]
    pub spatial: Option<SpatialTransform>,
    /// Frame rate assumed for PGM/PPM frame directories.
    #[arg(long, default_value_t = 30)]
    pub fps: u32,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature CSVs, one per dataset; the last one is the fine-tuning target.
    #[arg(long, required = true, num_args = 1..)]
    pub features: Vec<PathBuf>,
    /// MOS CSVs, paired with --features by position.
    #[arg(long, required = true, num_args = 1..)]
    pub mos: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "siamese+finetune")]
    pub mode: TrainMode,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Siamese epochs (default: --epochs).
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    /// Fine-tuning epochs (default: --epochs).
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Pairs per siamese step.
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Clips per fine-tuning step (default: the whole target dataset).
    #[arg(long)]
    pub finetune_batch_size: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0.05)]
    pub margin: f64,
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 300)]
    pub trees: usize,
    #[arg(long, default_value_t = 12)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 2)]
    pub min_leaf: usize,
    /// Training log path (default: <output>.log.json, or stderr).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// `clip_id,score` CSV.
    #[arg(long)]
    pub pred: PathBuf,
    /// `clip_id,mos` CSV.
    #[arg(long)]
    pub mos: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub pred: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub weights: Vec<f64>,
    #[arg(long, value_enum, default_value = "none")]
    pub normalization: NormArg,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// identity, features, features_forest or fragments_net
    #[arg(long, default_value = "features_forest")]
    pub pipeline: String,
    /// 30-FHD, 60-HD or 30-4K
    #[arg(long, default_value = "30-FHD")]
    pub spec: String,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1000.0)]
    pub budget_ms: f64,
}

/// Global flags that take a value, for locating the subcommand token.
const GLOBAL_VALUE_FLAGS: [&str; 6] = ["--seed", "--threads", "--output", "--out", "--format", "--config"];

fn to_string(a: &OsString) -> String {
    a.to_string_lossy().into_owned()
}

/// Position of the subcommand name in `args` (index 0 is the program).
fn subcommand_position(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = to_string(&args[i]);
        if GLOBAL_VALUE_FLAGS.contains(&a.as_str()) {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    args.iter().enumerate().find_map(|(i, a)| {
        let s = to_string(a);
        if s == "--config" {
            args.get(i + 1).map(PathBuf::from)
        } else {
            s.strip_prefix("--config=").map(PathBuf::from)
        }
    })
}

fn scalar(v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(format!("unsupported value {other}")),
    }
}

/// Turns config keys into flags placed right after the subcommand name, so
/// explicit flags (which follow) override them.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("config {}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
    let Value::Object(map) = value else {
        return Err(format!("config {} must be a JSON object", path.display()));
    };
    let Some(pos) = subcommand_position(&args) else {
        return Ok(args);
    };
    let sub = to_string(&args[pos]);
    let root = Cli::command();
    let Some(sub_cmd) = root.find_subcommand(&sub) else {
        return Ok(args);
    };
    let known: Vec<String> = root
        .get_arguments()
        .chain(sub_cmd.get_arguments())
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();

    let mut injected: Vec<OsString> = Vec::new();
    for (key, v) in map {
        if key == "config" {
            continue;
        }
        if !known.contains(&key) {
            return Err(format!("config key '{key}' is not a flag of '{sub}'"));
        }
        let flag = OsString::from(format!("--{key}"));
        match v {
            Value::Array(items) => {
                injected.push(flag);
                for item in &items {
                    injected.push(scalar(item)?.into());
                }
            }
            other => {
                injected.push(flag);
                injected.push(scalar(&other).map_err(|e| format!("config key '{key}': {e}"))?.into());
            }
        }
    }
    let mut out = vec![args[0].clone(), args[pos].clone()];
    out.extend(injected);
    out.extend(args.iter().enumerate().filter(|(i, _)| *i != 0 && *i != pos).map(|(_, a)| a.clone()));
    Ok(out)
}
