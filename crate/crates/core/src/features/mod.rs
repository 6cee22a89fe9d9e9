//! Signal features per frame, mean-aggregated to one vector per clip.
//!
//! Features fall into three branch families consumed by the regressors:
//! semantic-proxy (luminance, contrast, colorfulness), aesthetic
//! (colorfulness, contrast, sharpness, ssim_first) and technical
//! (si, ti, sharpness, ssim_pair).

mod metrics;

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clip_io::{Plane, VideoClip};
use crate::sampling::{SampledView, SamplingError, TemporalPlan};

pub use metrics::{avg_luminance, colorfulness, contrast, sharpness, si, ssim, ti};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("plane {width}x{height} is smaller than {min}x{min}")]
    PlaneTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("planes differ in size: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("empty temporal plan")]
    EmptyPlan,
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("feature table: {0}")]
    Table(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Column order used by CSV output and [`FeatureVector::values`].
pub const FEATURE_NAMES: [&str; 9] = [
    "si",
    "ti",
    "colorfulness",
    "avg_luminance",
    "sharpness",
    "contrast",
    "ti_first",
    "ssim_pair",
    "ssim_first",
];

pub const SEMANTIC_DIM: usize = 3;
pub const AESTHETIC_DIM: usize = 4;
pub const TECHNICAL_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureFlags {
    /// Only one frame was sampled, so temporal features are 0.
    pub single_frame: bool,
    /// Frames carry no chroma, so colorfulness is 0.
    pub degraded_color: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub si: f64,
    pub ti: f64,
    pub colorfulness: f64,
    pub avg_luminance: f64,
    pub sharpness: f64,
    pub contrast: f64,
    pub ti_first: f64,
    pub ssim_pair: f64,
    pub ssim_first: f64,
    #[serde(default)]
    pub flags: FeatureFlags,
}

impl FeatureVector {
    pub fn values(&self) -> [f64; 9] {
        [
            self.si,
            self.ti,
            self.colorfulness,
            self.avg_luminance,
            self.sharpness,
            self.contrast,
            self.ti_first,
            self.ssim_pair,
            self.ssim_first,
        ]
    }

    pub fn from_values(v: [f64; 9]) -> Self {
        FeatureVector {
            si: v[0],
            ti: v[1],
            colorfulness: v[2],
            avg_luminance: v[3],
            sharpness: v[4],
            contrast: v[5],
            ti_first: v[6],
            ssim_pair: v[7],
            ssim_first: v[8],
            flags: FeatureFlags::default(),
        }
    }

    pub fn semantic(&self) -> [f64; SEMANTIC_DIM] {
        [self.avg_luminance, self.contrast, self.colorfulness]
    }

    pub fn aesthetic(&self) -> [f64; AESTHETIC_DIM] {
        [self.colorfulness, self.contrast, self.sharpness, self.ssim_first]
    }

    pub fn technical(&self) -> [f64; TECHNICAL_DIM] {
        [self.si, self.ti, self.sharpness, self.ssim_pair]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Mean that returns the common value exactly when all inputs are equal.
fn stable_mean(values: &[f64]) -> f64 {
    match values.first() {
        None => 0.0,
        Some(&first) => {
            first + values.iter().map(|&v| v - first).sum::<f64>() / values.len() as f64
        }
    }
}

struct FrameStats {
    si: f64,
    colorfulness: Option<f64>,
    avg_luminance: f64,
    sharpness: f64,
    contrast: f64,
}

struct PairStats {
    ti: f64,
    ssim_pair: f64,
    ti_first: f64,
    ssim_first: f64,
}

/// Shared aggregation over `n` frames; `luma(k)` and `color(k)` index sampled frames.
fn aggregate<'a>(
    n: usize,
    luma: impl Fn(usize) -> &'a Plane + Sync,
    color: impl Fn(usize) -> Option<f64> + Sync,
) -> Result<FeatureVector, FeatureError> {
    if n == 0 {
        return Err(FeatureError::EmptyPlan);
    }
    let frames: Vec<FrameStats> = (0..n)
        .into_par_iter()
        .map(|k| {
            let p = luma(k);
            Ok(FrameStats {
                si: si(p)?,
                colorfulness: color(k),
                avg_luminance: avg_luminance(p)?,
                sharpness: sharpness(p)?,
                contrast: contrast(p)?,
            })
        })
        .collect::<Result<_, FeatureError>>()?;
    let pairs: Vec<PairStats> = (1..n)
        .into_par_iter()
        .map(|k| {
            let (cur, prev, first) = (luma(k), luma(k - 1), luma(0));
            Ok(PairStats {
                ti: ti(cur, prev)?,
                ssim_pair: ssim(cur, prev)?,
                ti_first: ti(cur, first)?,
                ssim_first: ssim(cur, first)?,
            })
        })
        .collect::<Result<_, FeatureError>>()?;

    let mean_of = |f: &dyn Fn(&FrameStats) -> f64| {
        stable_mean(&frames.iter().map(f).collect::<Vec<_>>())
    };
    let pair_mean = |f: &dyn Fn(&PairStats) -> f64| {
        stable_mean(&pairs.iter().map(f).collect::<Vec<_>>())
    };
    let degraded_color = frames.iter().any(|f| f.colorfulness.is_none());
    Ok(FeatureVector {
        si: mean_of(&|f| f.si),
        ti: pair_mean(&|p| p.ti),
        colorfulness: if degraded_color {
            0.0
        } else {
            mean_of(&|f| f.colorfulness.unwrap_or(0.0))
        },
        avg_luminance: mean_of(&|f| f.avg_luminance),
        sharpness: mean_of(&|f| f.sharpness),
        contrast: mean_of(&|f| f.contrast),
        ti_first: pair_mean(&|p| p.ti_first),
        ssim_pair: pair_mean(&|p| p.ssim_pair),
        ssim_first: pair_mean(&|p| p.ssim_first),
        flags: FeatureFlags {
            single_frame: n == 1,
            degraded_color,
        },
    })
}

/// Extracts features from the plan's frames at native resolution.
///
/// Frames are processed in parallel; the reduction runs in plan order so the
/// result does not depend on the thread count.
pub fn extract_clip_features(
    clip: &VideoClip,
    plan: &TemporalPlan,
) -> Result<FeatureVector, FeatureError> {
    plan.validate(clip.frame_count())?;
    let idx = &plan.indices;
    aggregate(
        idx.len(),
        |k| clip.frame(idx[k]).luma(),
        |k| clip.frame(idx[k]).to_rgb().map(|rgb| colorfulness(&rgb)),
    )
}

/// Extracts features from already transformed frames.
pub fn extract_view_features(view: &SampledView) -> Result<FeatureVector, FeatureError> {
    aggregate(
        view.frames.len(),
        |k| &view.frames[k].luma,
        |k| view.frames[k].rgb.as_ref().map(colorfulness),
    )
}

/// Clip-level feature rows keyed by clip id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureTable {
    pub rows: Vec<(String, FeatureVector)>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, clip_id: &str) -> Option<&FeatureVector> {
        self.rows.iter().find(|(id, _)| id == clip_id).map(|(_, v)| v)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["clip_id"];
        header.extend(FEATURE_NAMES);
        w.write_record(&header)?;
        for (id, v) in &self.rows {
            let mut rec = vec![id.clone()];
            rec.extend(v.values().iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self, FeatureError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let expected: Vec<&str> = std::iter::once("clip_id").chain(FEATURE_NAMES).collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(FeatureError::Table(format!(
                "expected header {}, found {}",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut values = [0.0; 9];
            for (slot, field) in values.iter_mut().zip(rec.iter().skip(1)) {
                *slot = field.trim().parse().map_err(|_| {
                    FeatureError::Table(format!("row {}: bad number {field:?}", line + 1))
                })?;
            }
            rows.push((rec[0].to_string(), FeatureVector::from_values(values)));
        }
        Ok(FeatureTable { rows })
    }

    pub fn write_json(&self, out: impl Write) -> Result<(), FeatureError> {
        #[derive(Serialize)]
        struct Row<'a> {
            clip_id: &'a str,
            #[serde(flatten)]
            features: &'a FeatureVector,
        }
        let rows: Vec<Row> = self
            .rows
            .iter()
            .map(|(id, f)| Row {
                clip_id: id,
                features: f,
            })
            .collect();
        serde_json::to_writer_pretty(out, &rows)?;
        Ok(())
    }
}
