//! Five-level score machinery and weighted ensemble fusion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("score {score} outside [{min}, {max}]")]
    OutOfRange { score: f64, min: f64, max: f64 },
    #[error("invalid score range [{0}, {1}]")]
    InvalidRange(f64, f64),
    #[error("invalid level distribution: {0}")]
    InvalidDistribution(String),
    #[error("model {0} has zero-variance scores")]
    DegenerateScores(usize),
    #[error("invalid fusion spec: {0}")]
    InvalidFusion(String),
    #[error("score lists differ in length")]
    LengthMismatch,
}

pub const LEVEL_NAMES: [&str; 5] = ["bad", "poor", "fair", "good", "excellent"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub min: f64,
    pub max: f64,
}

impl ScoreRange {
    pub fn new(min: f64, max: f64) -> Result<Self, ScoringError> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(ScoringError::InvalidRange(min, max));
        }
        Ok(ScoreRange { min, max })
    }

    /// The 1-5 MOS scale.
    pub fn mos() -> Self {
        ScoreRange { min: 1.0, max: 5.0 }
    }

    /// Upper edge of level `i` (1-based).
    pub fn upper(&self, level: usize) -> f64 {
        self.min + level as f64 / 5.0 * (self.max - self.min)
    }

    /// Center of level `i` (1-based).
    pub fn midpoint(&self, level: usize) -> f64 {
        self.min + (level as f64 - 0.5) / 5.0 * (self.max - self.min)
    }
}

/// Level `i` in 1..=5 such that `m + (i-1)/5 (M-m) < s <= m + i/5 (M-m)`;
/// `s == m` maps to level 1.
pub fn bin_score(s: f64, range: ScoreRange) -> Result<usize, ScoringError> {
    if !(s >= range.min && s <= range.max) {
        return Err(ScoringError::OutOfRange {
            score: s,
            min: range.min,
            max: range.max,
        });
    }
    Ok((1..=5).find(|&i| s <= range.upper(i)).unwrap_or(5))
}

/// Probabilities over the five levels, bad..excellent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDistribution {
    p: [f64; 5],
}

impl LevelDistribution {
    pub fn new(p: [f64; 5]) -> Result<Self, ScoringError> {
        if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(ScoringError::InvalidDistribution(format!("{p:?} has entries outside [0, 1]")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ScoringError::InvalidDistribution(format!("{p:?} sums to {sum}")));
        }
        Ok(LevelDistribution { p })
    }

    pub fn uniform() -> Self {
        LevelDistribution { p: [0.2; 5] }
    }

    pub fn probabilities(&self) -> &[f64; 5] {
        &self.p
    }
}

/// Max-subtracted softmax over five level logits.
pub fn softmax_levels(logits: [f64; 5]) -> LevelDistribution {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|x| (x - max).exp());
    let sum: f64 = e.iter().sum();
    LevelDistribution { p: e.map(|v| v / sum) }
}

/// Probability-weighted level index, in [1, 5].
pub fn expected_score(dist: &LevelDistribution) -> f64 {
    dist.p
        .iter()
        .enumerate()
        .map(|(i, &p)| (i + 1) as f64 * p)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    Zscore,
}

/// Per-model weights for [`fuse_scores`]; serialized as
/// `{"weights":[7,8],"normalization":"none"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub weights: Vec<f64>,
    #[serde(default)]
    pub normalization: Normalization,
}

impl FusionSpec {
    pub fn new(weights: Vec<f64>, normalization: Normalization) -> Result<Self, ScoringError> {
        let spec = FusionSpec {
            weights,
            normalization,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ScoringError::InvalidFusion("weights must be finite and non-negative".into()));
        }
        if self.weights.iter().sum::<f64>() <= 0.0 {
            return Err(ScoringError::InvalidFusion("weights sum to zero".into()));
        }
        Ok(())
    }
}

fn zscore(v: &[f64], model: usize) -> Result<Vec<f64>, ScoringError> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var == 0.0 || !var.is_finite() {
        return Err(ScoringError::DegenerateScores(model));
    }
    let sd = var.sqrt();
    Ok(v.iter().map(|x| (x - mean) / sd).collect())
}

/// Per-clip weighted mean `sum(w_k s_k) / sum(w_k)` across models.
pub fn fuse_scores(score_lists: &[Vec<f64>], spec: &FusionSpec) -> Result<Vec<f64>, ScoringError> {
    spec.validate()?;
    if score_lists.is_empty() || score_lists.len() != spec.weights.len() {
        return Err(ScoringError::InvalidFusion(format!(
            "{} score lists for {} weights",
            score_lists.len(),
            spec.weights.len()
        )));
    }
    let n = score_lists[0].len();
    if n == 0 || score_lists.iter().any(|l| l.len() != n) {
        return Err(ScoringError::LengthMismatch);
    }
    let lists: Vec<Vec<f64>> = match spec.normalization {
        Normalization::None => score_lists.to_vec(),
        Normalization::Zscore => score_lists
            .iter()
            .enumerate()
            .map(|(k, l)| zscore(l, k))
            .collect::<Result<_, _>>()?,
    };
    // Anchored at the first model so agreeing models reproduce their score exactly.
    let total: f64 = spec.weights.iter().sum();
    Ok((0..n)
        .map(|i| {
            let anchor = lists[0][i];
            anchor
                + lists
                    .iter()
                    .zip(&spec.weights)
                    .map(|(l, w)| w * (l[i] - anchor))
                    .sum::<f64>()
                    / total
        })
        .collect())
}
