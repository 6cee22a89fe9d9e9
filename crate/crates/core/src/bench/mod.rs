//! Efficiency harness: analytic cost model, timed runs and the runtime gate.
//!
//! Cost counts only multiply-accumulate work. Comparisons, copies and index
//! arithmetic are free, so sampling-only stages contribute 0 MACs and tree
//! ensembles contribute 0 learned parameters (their node count is reported
//! separately).

mod pipelines;

use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clip_io::{ClipSpec, VideoClip};

pub use pipelines::{
    FeatureForestPipeline, FeaturePipeline, FragmentNetPipeline, IdentityPipeline, PIPELINE_NAMES, reference_pipeline,
};

pub type RunError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{phase} run {run} failed: {source}")]
    RunFailed {
        phase: &'static str,
        run: usize,
        #[source]
        source: RunError,
    },
    #[error("report is for {report} but the gate is for {gate}")]
    SpecMismatch { report: String, gate: String },
    #[error("clip is {got} but spec {spec} needs {expected}")]
    ClipMismatch { spec: String, expected: String, got: String },
    #[error("invalid bench config: {0}")]
    InvalidConfig(String),
    #[error("unknown pipeline '{0}'")]
    UnknownPipeline(String),
    #[error("pipeline setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Cost is paid once per processed frame.
    PerFrame,
    PerClip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StageOp {
    Resize {
        w_in: usize,
        h_in: usize,
        w_out: usize,
        h_out: usize,
    },
    Conv2d {
        c_in: usize,
        c_out: usize,
        k_h: usize,
        k_w: usize,
        h_out: usize,
        w_out: usize,
    },
    Linear {
        d_in: usize,
        d_out: usize,
        tokens: usize,
        bias: bool,
    },
    Elementwise {
        n: usize,
    },
    Feature {
        name: String,
        plane_size: usize,
    },
    /// Gathers, crops and mosaics: no multiplies.
    Copy {
        n: usize,
    },
}

impl StageOp {
    pub fn linear(d_in: usize, d_out: usize, tokens: usize) -> Self {
        StageOp::Linear {
            d_in,
            d_out,
            tokens,
            bias: true,
        }
    }

    pub fn macs(&self) -> u128 {
        let m = |v: &[usize]| v.iter().map(|&x| x as u128).product::<u128>();
        match self {
            StageOp::Resize { w_out, h_out, .. } => 4 * m(&[*w_out, *h_out]),
            StageOp::Conv2d {
                c_in,
                c_out,
                k_h,
                k_w,
                h_out,
                w_out,
            } => m(&[*c_in, *c_out, *k_h, *k_w, *h_out, *w_out]),
            StageOp::Linear { d_in, d_out, tokens, .. } => m(&[*d_in, *d_out, *tokens]),
            StageOp::Elementwise { n } => *n as u128,
            StageOp::Feature { name, plane_size } => match name.as_str() {
                // One 3x3 pass.
                "si" | "ti" | "sharpness" => 9 * *plane_size as u128,
                _ => *plane_size as u128,
            },
            StageOp::Copy { .. } => 0,
        }
    }

    pub fn params(&self) -> u128 {
        match self {
            StageOp::Conv2d {
                c_in, c_out, k_h, k_w, ..
            } => (*c_in * *c_out * *k_h * *k_w + *c_out) as u128,
            StageOp::Linear { d_in, d_out, bias, .. } => (*d_in * *d_out + if *bias { *d_out } else { 0 }) as u128,
            _ => 0,
        }
    }

    fn dims(&self) -> Vec<usize> {
        match self {
            StageOp::Resize { w_in, h_in, w_out, h_out } => vec![*w_in, *h_in, *w_out, *h_out],
            StageOp::Conv2d {
                c_in,
                c_out,
                k_h,
                k_w,
                h_out,
                w_out,
            } => vec![*c_in, *c_out, *k_h, *k_w, *h_out, *w_out],
            StageOp::Linear { d_in, d_out, tokens, .. } => vec![*d_in, *d_out, *tokens],
            StageOp::Elementwise { n } | StageOp::Copy { n } => vec![*n],
            StageOp::Feature { plane_size, .. } => vec![*plane_size],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    #[serde(flatten)]
    pub op: StageOp,
    pub scope: Scope,
}

impl Stage {
    pub fn per_frame(op: StageOp) -> Self {
        Stage { op, scope: Scope::PerFrame }
    }

    pub fn per_clip(op: StageOp) -> Self {
        Stage { op, scope: Scope::PerClip }
    }
}

/// Declared cost structure of a clip-to-score pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PipelineDescriptor {
    pub stages: Vec<Stage>,
    /// Frames that survive temporal sampling.
    pub frames_per_clip: usize,
}

impl PipelineDescriptor {
    pub fn new(frames_per_clip: usize, stages: Vec<Stage>) -> Result<Self, BenchError> {
        let d = PipelineDescriptor {
            stages,
            frames_per_clip,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if let Some(s) = self.stages.iter().find(|s| s.op.dims().contains(&0)) {
            return Err(BenchError::InvalidConfig(format!("zero dimension in {:?}", s.op)));
        }
        if self.frames_per_clip == 0 && self.stages.iter().any(|s| s.scope == Scope::PerFrame) {
            return Err(BenchError::InvalidConfig("per-frame stages with 0 frames per clip".into()));
        }
        Ok(())
    }

    /// Concatenates stages; both sides must agree on frames per clip.
    pub fn concat(mut self, other: PipelineDescriptor) -> Self {
        assert!(
            self.stages.is_empty() || other.stages.is_empty() || self.frames_per_clip == other.frames_per_clip,
            "frames per clip differ"
        );
        self.frames_per_clip = self.frames_per_clip.max(other.frames_per_clip);
        self.stages.extend(other.stages);
        self
    }
}

/// Exact multiply-accumulate count per clip.
pub fn mac_count(desc: &PipelineDescriptor) -> u128 {
    desc.stages
        .iter()
        .map(|s| match s.scope {
            Scope::PerFrame => s.op.macs() * desc.frames_per_clip as u128,
            Scope::PerClip => s.op.macs(),
        })
        .sum()
}

/// Giga-MACs per clip.
pub fn count_macs(desc: &PipelineDescriptor) -> f64 {
    mac_count(desc) as f64 / 1e9
}

/// Exact learned-parameter count.
pub fn param_count(desc: &PipelineDescriptor) -> u128 {
    desc.stages.iter().map(|s| s.op.params()).sum()
}

/// Millions of learned parameters.
pub fn count_params(desc: &PipelineDescriptor) -> f64 {
    param_count(desc) as f64 / 1e6
}

/// Something that turns an in-memory clip into a score.
pub trait Pipeline: Sync {
    fn name(&self) -> &str;
    fn descriptor(&self, clip: &VideoClip) -> PipelineDescriptor;
    fn run(&self, clip: &VideoClip) -> Result<f64, RunError>;
    /// Node count for tree ensembles, which have no learned weights.
    fn tree_nodes(&self) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub warmup: usize,
    pub runs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { warmup: 3, runs: 10 }
    }
}

pub const DEFAULT_BUDGET_MS: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub pipeline: String,
    pub spec: String,
    pub runtime_ms: f64,
    pub runs: Vec<f64>,
    pub warmup_runs: usize,
    pub macs_g: f64,
    pub params_m: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tree_nodes: Option<usize>,
    /// Against [`DEFAULT_BUDGET_MS`]; see [`check_constraint`] for other gates.
    pub pass: bool,
}

impl BenchReport {
    pub fn median_ms(&self) -> f64 {
        let mut v = self.runs.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 }
    }

    pub fn min_ms(&self) -> f64 {
        self.runs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_ms(&self) -> f64 {
        self.runs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Table-style CSV summary of several reports.
pub fn write_summary_csv(reports: &[BenchReport], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pipeline", "spec", "runtime_ms", "params_m", "macs_g", "pass"])?;
    for r in reports {
        w.write_record([
            r.pipeline.clone(),
            r.spec.clone(),
            format!("{:.3}", r.runtime_ms),
            format!("{:.6}", r.params_m),
            format!("{:.6}", r.macs_g),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn check_clip(spec: &ClipSpec, clip: &VideoClip) -> Result<(), BenchError> {
    let got = (clip.frame_count(), clip.width(), clip.height());
    if got != (spec.frame_count, spec.width, spec.height) {
        return Err(BenchError::ClipMismatch {
            spec: spec.label.clone(),
            expected: format!("{}x{}x{}", spec.frame_count, spec.width, spec.height),
            got: format!("{}x{}x{}", got.0, got.1, got.2),
        });
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs `warmup` untimed passes, then `runs` timed passes on the same clip.
/// Measurements are strictly sequential; the pipeline may parallelize inside.
pub fn time_pipeline(
    pipeline: &dyn Pipeline,
    spec: &ClipSpec,
    clip: &VideoClip,
    cfg: BenchConfig,
) -> Result<BenchReport, BenchError> {
    if cfg.runs == 0 {
        return Err(BenchError::InvalidConfig("runs must be >= 1".into()));
    }
    check_clip(spec, clip)?;
    for run in 0..cfg.warmup {
        pipeline
            .run(clip)
            .map_err(|source| BenchError::RunFailed { phase: "warmup", run, source })?;
    }
    let mut runs = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let start = Instant::now();
        let score = pipeline.run(clip);
        let elapsed = start.elapsed();
        std::hint::black_box(&score);
        score.map_err(|source| BenchError::RunFailed { phase: "timed", run, source })?;
        runs.push(elapsed.as_secs_f64() * 1e3);
    }
    let desc = pipeline.descriptor(clip);
    let runtime_ms = mean(&runs);
    Ok(BenchReport {
        pipeline: pipeline.name().to_string(),
        spec: spec.label.clone(),
        runtime_ms,
        runs,
        warmup_runs: cfg.warmup,
        macs_g: count_macs(&desc),
        params_m: count_params(&desc),
        tree_nodes: pipeline.tree_nodes(),
        pass: runtime_ms <= DEFAULT_BUDGET_MS,
    })
}

/// A named step of a pipeline, for per-stage timing.
pub struct TimedStage<'a> {
    pub name: String,
    pub run: Box<dyn Fn(&VideoClip) -> Result<(), RunError> + Sync + 'a>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    /// Mean per-stage time, each stage timed in its own runs.
    pub stages: Vec<(String, f64)>,
    /// Mean time of all stages back to back.
    pub total_ms: f64,
}

impl StageTimings {
    pub fn stage_sum_ms(&self) -> f64 {
        self.stages.iter().map(|s| s.1).sum()
    }
}

/// Times each stage separately and the whole chain, so no instrumentation
/// sits inside the end-to-end measurement.
pub fn time_stages(stages: &[TimedStage<'_>], clip: &VideoClip, cfg: BenchConfig) -> Result<StageTimings, BenchError> {
    if cfg.runs == 0 {
        return Err(BenchError::InvalidConfig("runs must be >= 1".into()));
    }
    let fail = |phase, run| move |source| BenchError::RunFailed { phase, run, source };
    let mut per_stage = Vec::with_capacity(stages.len());
    for s in stages {
        for run in 0..cfg.warmup {
            (s.run)(clip).map_err(fail("warmup", run))?;
        }
        let mut t = Vec::with_capacity(cfg.runs);
        for run in 0..cfg.runs {
            let start = Instant::now();
            (s.run)(clip).map_err(fail("timed", run))?;
            t.push(start.elapsed().as_secs_f64() * 1e3);
        }
        per_stage.push((s.name.clone(), mean(&t)));
    }
    let mut totals = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let start = Instant::now();
        for s in stages {
            (s.run)(clip).map_err(fail("timed", run))?;
        }
        totals.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(StageTimings {
        stages: per_stage,
        total_ms: mean(&totals),
    })
}

/// Spins for `d` on the current thread; a controlled delay for calibration.
pub fn busy_wait(d: Duration) {
    let start = Instant::now();
    while start.elapsed() < d {
        std::hint::spin_loop();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintGate {
    pub spec: String,
    pub budget_ms: f64,
}

impl ConstraintGate {
    pub fn new(spec: impl Into<String>, budget_ms: f64) -> Result<Self, BenchError> {
        if !(budget_ms > 0.0 && budget_ms.is_finite()) {
            return Err(BenchError::InvalidConfig(format!("budget {budget_ms} ms")));
        }
        Ok(ConstraintGate {
            spec: spec.into(),
            budget_ms,
        })
    }

    /// 30 FHD frames in one second.
    pub fn canonical() -> Self {
        ConstraintGate {
            spec: ClipSpec::fhd_30().label,
            budget_ms: DEFAULT_BUDGET_MS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    /// `budget - runtime`; negative on failure.
    pub margin_ms: f64,
}

pub fn check_constraint(report: &BenchReport, gate: &ConstraintGate) -> Result<Verdict, BenchError> {
    if report.spec != gate.spec {
        return Err(BenchError::SpecMismatch {
            report: report.spec.clone(),
            gate: gate.spec.clone(),
        });
    }
    Ok(Verdict {
        pass: report.runtime_ms <= gate.budget_ms,
        margin_ms: gate.budget_ms - report.runtime_ms,
    })
}
