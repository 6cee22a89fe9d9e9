//! Synthetic labelled corpus for training and sanity checks.
//!
//! Each clip is rendered from random content parameters (brightness,
//! contrast, texture frequency, sensor noise, motion, saturation). Features
//! are extracted from the rendered frames, and MOS is a fixed increasing
//! function of a weighted feature score plus Gaussian label noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clip_io::{ChromaLayout, ClipError, Fps, Frame, Plane, VideoClip};
use crate::features::{FEATURE_NAMES, FeatureError, FeatureTable, FeatureVector, extract_clip_features};
use crate::sampling::{TemporalMode, temporal_sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub clips: usize,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub mos_min: f64,
    pub mos_max: f64,
    /// Label noise standard deviation as a fraction of the MOS range.
    pub noise_frac: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            clips: 400,
            width: 48,
            height: 48,
            frames: 8,
            seed: 2024,
            mos_min: 1.0,
            mos_max: 5.0,
            noise_frac: 0.05,
        }
    }
}

/// Weights on standardized features that define the clean quality score,
/// in [`FEATURE_NAMES`] order.
pub const QUALITY_WEIGHTS: [f64; 9] = [0.2, -0.9, 0.6, 0.3, 0.0, 0.8, 0.0, 0.5, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentParams {
    pub brightness: f64,
    pub contrast: f64,
    pub frequency: f64,
    pub noise: f64,
    pub motion: f64,
    pub saturation: f64,
}

impl ContentParams {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        ContentParams {
            brightness: rng.random_range(0.25..0.75),
            contrast: rng.random_range(0.03..0.3),
            frequency: rng.random_range(0.02..0.25),
            noise: rng.random_range(0.0..0.08),
            motion: rng.random_range(0.0..3.0),
            saturation: rng.random_range(0.0..0.25),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    pub params: ContentParams,
    pub features: FeatureVector,
    /// Noise-free label.
    pub clean_mos: f64,
    pub mos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub items: Vec<CorpusItem>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Clip(#[from] ClipError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("invalid corpus config: {0}")]
    Invalid(String),
}

fn item_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0xD6E8_FEB8_6659_FD93)
}

fn render(cfg: &CorpusConfig, p: &ContentParams, rng: &mut ChaCha8Rng) -> Result<VideoClip, ClipError> {
    let (w, h) = (cfg.width, cfg.height);
    let noise = Normal::new(0.0, p.noise.max(1e-12)).map_err(|e| ClipError::Invalid(e.to_string()))?;
    let tau = std::f64::consts::TAU;
    let phase_y: f64 = rng.random_range(0.0..tau);
    let hue: f64 = rng.random_range(0.0..tau);
    let frames = (0..cfg.frames)
        .map(|t| {
            let shift = p.motion * t as f64;
            let mut luma = Plane::from_fn(w, h, |x, y| {
                let xs = (x as f64 + shift) * p.frequency * tau;
                let ys = y as f64 * p.frequency * 0.7 * tau + phase_y;
                (p.brightness + p.contrast * xs.sin() * ys.cos()) as f32
            });
            for v in luma.data_mut() {
                *v = (*v as f64 + noise.sample(rng)).clamp(0.0, 1.0) as f32;
            }
            let chroma = |offset: f64| {
                Plane::from_fn(w, h, |x, y| {
                    let s = ((x + y) as f64 * p.frequency * 0.5 * tau + offset).sin();
                    (0.5 + p.saturation * s).clamp(0.0, 1.0) as f32
                })
            };
            Frame::new(luma, Some((chroma(hue), chroma(hue + 2.0))), 8)
        })
        .collect();
    VideoClip::new(w, h, Fps::integer(30), ChromaLayout::Yuv444, frames)
}

/// Renders clip `index` of the corpus described by `cfg`.
pub fn corpus_clip(cfg: &CorpusConfig, index: usize) -> Result<(ContentParams, VideoClip), ClipError> {
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed(cfg.seed, index));
    let params = ContentParams::draw(&mut rng);
    let clip = render(cfg, &params, &mut rng)?;
    Ok((params, clip))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Renders every clip, extracts all-frame features and assigns labels.
/// Deterministic for a given config at any thread count.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Corpus, CorpusError> {
    if cfg.clips < 2 || cfg.frames < 2 || cfg.width < 8 || cfg.height < 8 {
        return Err(CorpusError::Invalid("need >= 2 clips of >= 2 frames at >= 8x8".into()));
    }
    if !(cfg.mos_max > cfg.mos_min) || !(cfg.noise_frac >= 0.0) {
        return Err(CorpusError::Invalid("MOS range or noise".into()));
    }
    let rendered: Vec<(ContentParams, FeatureVector)> = (0..cfg.clips)
        .into_par_iter()
        .map(|i| {
            let (params, clip) = corpus_clip(cfg, i)?;
            let plan = temporal_sample(&clip, TemporalMode::All);
            Ok((params, extract_clip_features(&clip, &plan)?))
        })
        .collect::<Result<_, CorpusError>>()?;

    // Standardize over the corpus, then squash the weighted score into range.
    let n = rendered.len() as f64;
    let rows: Vec<[f64; 9]> = rendered.iter().map(|(_, f)| f.values()).collect();
    let mut mean = [0.0; 9];
    let mut sd = [0.0; 9];
    for r in &rows {
        for k in 0..9 {
            mean[k] += r[k] / n;
        }
    }
    for r in &rows {
        for k in 0..9 {
            sd[k] += (r[k] - mean[k]).powi(2) / n;
        }
    }
    let raw: Vec<f64> = rows
        .iter()
        .map(|r| {
            (0..9)
                .filter(|&k| sd[k] > 0.0)
                .map(|k| QUALITY_WEIGHTS[k] * (r[k] - mean[k]) / sd[k].sqrt())
                .sum()
        })
        .collect();
    let rm = raw.iter().sum::<f64>() / n;
    let rs = (raw.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);

    let span = cfg.mos_max - cfg.mos_min;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED));
    let label_noise = Normal::new(0.0, (cfg.noise_frac * span).max(1e-300)).expect("finite sigma");
    let items = rendered
        .into_iter()
        .zip(raw)
        .enumerate()
        .map(|(i, ((params, features), r))| {
            let clean_mos = cfg.mos_min + span * sigmoid(1.5 * (r - rm) / rs);
            let noisy = if cfg.noise_frac > 0.0 {
                clean_mos + label_noise.sample(&mut rng)
            } else {
                clean_mos
            };
            CorpusItem {
                id: format!("clip_{i:04}"),
                params,
                features,
                clean_mos,
                mos: noisy.clamp(cfg.mos_min, cfg.mos_max),
            }
        })
        .collect();
    Ok(Corpus { config: *cfg, items })
}

impl Corpus {
    pub fn features(&self) -> Vec<FeatureVector> {
        self.items.iter().map(|i| i.features).collect()
    }

    pub fn mos(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.mos).collect()
    }

    /// Rows as plain feature arrays, for the forest.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.items.iter().map(|i| i.features.values().to_vec()).collect()
    }

    pub fn feature_table(&self) -> FeatureTable {
        FeatureTable {
            rows: self.items.iter().map(|i| (i.id.clone(), i.features)).collect(),
        }
    }

    /// `clip_id,mos` CSV.
    pub fn write_mos_csv(&self, out: impl std::io::Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["clip_id", "mos"])?;
        for i in &self.items {
            w.write_record([i.id.as_str(), &i.mos.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Deterministic split: the first `train` items and the rest.
    pub fn split(&self, train: usize) -> (&[CorpusItem], &[CorpusItem]) {
        self.items.split_at(train.min(self.items.len()))
    }
}

/// Indices of weights that drive labels, for documentation and tests.
pub fn label_features() -> Vec<&'static str> {
    FEATURE_NAMES
        .iter()
        .zip(QUALITY_WEIGHTS)
        .filter(|(_, w)| *w != 0.0)
        .map(|(n, _)| *n)
        .collect()
}
