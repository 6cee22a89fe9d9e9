//! Learned quality regressors.
//!
//! Two model families map [`FeatureVector`]s to scores:
//!
//! - [`BranchNet`], a three-branch MLP whose aesthetic and technical branches
//!   are gated by the semantic branch, trained with pair pretraining
//!   ([`train_siamese`]) and relative-loss fine-tuning ([`finetune_mos`]);
//! - [`ForestModel`], a bagged CART forest ([`fit_forest`]).
//!
//! Either is saved as a versioned JSON [`Checkpoint`].

mod forest;
mod loss;
mod net;
mod train;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{ForestConfig, ForestModel, Node, Tree, fit_forest, predict_forest};
pub use loss::{
    LossWeights, PairLabel, RelLoss, rel_loss, rel_loss_with_grad, siamese_rank_loss, total_loss, total_loss_with_grad,
};
pub use net::{BranchInputs, BranchNet, BranchScores, ForwardCache, Matrix, NetDims, ScgbParams, scgb_fuse};
pub use train::{
    TrainConfig, TrainReport, TrainSet, evaluate_total_loss, finetune_mos, predict_branches, total_loss_and_grad,
    train_siamese,
};

use crate::features::FeatureVector;

#[derive(Debug, Error, PartialEq)]
pub enum RegressorError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical error: {0}")]
    NumericalError(String),
    #[error("no dataset has two items with different MOS")]
    NoTrainablePairs,
    #[error("empty training data")]
    EmptyInput,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Per-feature z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; 9],
    pub std: [f64; 9],
}

impl Standardizer {
    /// Zero-variance features keep unit scale.
    pub fn fit(rows: &[FeatureVector]) -> Result<Self, RegressorError> {
        if rows.is_empty() {
            return Err(RegressorError::EmptyInput);
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; 9];
        let mut std = [0.0; 9];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.values()) {
                *m += v / n;
            }
        }
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r.values()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut std {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        if mean.iter().chain(&std).any(|v| !v.is_finite()) {
            return Err(RegressorError::NumericalError("non-finite feature statistics".into()));
        }
        Ok(Standardizer { mean, std })
    }

    /// Standardizes a row and splits it into branch inputs.
    pub fn transform(&self, fv: &FeatureVector) -> BranchInputs {
        let mut z = fv.values();
        for ((v, m), s) in z.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
        let s = FeatureVector::from_values(z);
        BranchInputs {
            semantic: s.semantic().to_vec(),
            aesthetic: s.aesthetic().to_vec(),
            technical: s.technical().to_vec(),
        }
    }
}

/// Affine map from the net's relative score to the MOS scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scale: f64,
    pub offset: f64,
}

impl Calibration {
    pub const IDENTITY: Calibration = Calibration { scale: 1.0, offset: 0.0 };

    /// Least-squares fit of `mos ~ scale * raw + offset`.
    pub fn fit(raw: &[f64], mos: &[f64]) -> Self {
        let n = raw.len() as f64;
        if raw.len() < 2 || raw.len() != mos.len() {
            return Calibration::IDENTITY;
        }
        let mr = raw.iter().sum::<f64>() / n;
        let mm = mos.iter().sum::<f64>() / n;
        let sxx: f64 = raw.iter().map(|r| (r - mr) * (r - mr)).sum();
        if sxx == 0.0 {
            return Calibration { scale: 0.0, offset: mm };
        }
        let sxy: f64 = raw.iter().zip(mos).map(|(r, m)| (r - mr) * (m - mm)).sum();
        let scale = sxy / sxx;
        Calibration {
            scale,
            offset: mm - scale * mr,
        }
    }

    pub fn apply(&self, raw: f64) -> f64 {
        self.scale * raw + self.offset
    }
}

/// A trained net with its input standardizer and output calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchModel {
    pub dims: NetDims,
    pub params: Vec<f64>,
    pub seed: u64,
    pub gate_dropout: f64,
    pub standardizer: Standardizer,
    pub calibration: Calibration,
}

impl BranchModel {
    pub fn new(net: &BranchNet, seed: u64, standardizer: Standardizer, calibration: Calibration) -> Self {
        BranchModel {
            dims: net.dims(),
            params: net.params().to_vec(),
            seed,
            gate_dropout: net.gate_dropout,
            standardizer,
            calibration,
        }
    }

    pub fn net(&self) -> Result<BranchNet, RegressorError> {
        let mut net = BranchNet::from_params(self.dims, self.params.clone())?;
        net.gate_dropout = self.gate_dropout;
        Ok(net)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Checkpoint {
    BranchNet(BranchModel),
    Forest(ForestModel),
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    #[serde(flatten)]
    checkpoint: Checkpoint,
}

impl Checkpoint {
    pub fn write_json(&self, out: impl Write) -> Result<(), RegressorError> {
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            checkpoint: self.clone(),
        };
        serde_json::to_writer(out, &file).map_err(|e| RegressorError::Checkpoint(e.to_string()))
    }

    pub fn read_json(input: impl Read) -> Result<Self, RegressorError> {
        let v: serde_json::Value =
            serde_json::from_reader(input).map_err(|e| RegressorError::Checkpoint(e.to_string()))?;
        match v.get("version").and_then(|x| x.as_u64()) {
            Some(ver) if ver == CHECKPOINT_VERSION as u64 => {}
            other => {
                return Err(RegressorError::Checkpoint(format!(
                    "unsupported checkpoint version {other:?}, expected {CHECKPOINT_VERSION}"
                )));
            }
        }
        let file: CheckpointFile =
            serde_json::from_value(v).map_err(|e| RegressorError::Checkpoint(e.to_string()))?;
        if let Checkpoint::BranchNet(m) = &file.checkpoint {
            m.net()?;
        }
        Ok(file.checkpoint)
    }

    /// Scores one feature row.
    pub fn predict(&self, fv: &FeatureVector) -> Result<f64, RegressorError> {
        match self {
            Checkpoint::BranchNet(m) => {
                let net = m.net()?;
                let (_, raw) = net.forward(&m.standardizer.transform(fv))?;
                Ok(m.calibration.apply(raw))
            }
            Checkpoint::Forest(f) => predict_forest(f, &fv.values()),
        }
    }

    /// Scores many rows; the net is rebuilt once.
    pub fn predict_many(&self, rows: &[FeatureVector]) -> Result<Vec<f64>, RegressorError> {
        match self {
            Checkpoint::BranchNet(m) => {
                let net = m.net()?;
                rows.iter()
                    .map(|fv| Ok(m.calibration.apply(net.forward(&m.standardizer.transform(fv))?.1)))
                    .collect()
            }
            Checkpoint::Forest(f) => rows.iter().map(|fv| predict_forest(f, &fv.values())).collect(),
        }
    }
}

/// Options for [`fit_branch_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFitOptions {
    pub dims: NetDims,
    pub init_seed: u64,
    /// Siamese pretraining schedule; skipped when `None`.
    pub pretrain: Option<TrainConfig>,
    pub finetune: TrainConfig,
}

/// Standardizes, optionally pretrains on pairs from every set, fine-tunes on
/// `target` and calibrates to its MOS scale.
pub fn fit_branch_model(
    pretrain_sets: &[(&str, &[FeatureVector], &[f64])],
    target: (&[FeatureVector], &[f64]),
    opts: &BranchFitOptions,
) -> Result<(BranchModel, Vec<TrainReport>), RegressorError> {
    let (rows, mos) = target;
    if rows.is_empty() {
        return Err(RegressorError::EmptyInput);
    }
    let standardizer = Standardizer::fit(rows)?;
    let to_set = |name: &str, r: &[FeatureVector], m: &[f64]| {
        TrainSet::new(name, r.iter().map(|fv| standardizer.transform(fv)).collect(), m.to_vec())
    };
    let mut net = BranchNet::init(opts.dims, opts.init_seed);
    let mut reports = Vec::new();
    if let Some(cfg) = &opts.pretrain {
        let sets = pretrain_sets
            .iter()
            .map(|(n, r, m)| to_set(n, r, m))
            .collect::<Result<Vec<_>, _>>()?;
        reports.push(train_siamese(&sets, &mut net, cfg)?);
    }
    let set = to_set("target", rows, mos)?;
    reports.push(finetune_mos(&set, &mut net, &opts.finetune)?);
    let raw: Vec<f64> = predict_branches(&net, &set)?.iter().map(|s| s.final_score()).collect();
    let calibration = Calibration::fit(&raw, mos);
    Ok((BranchModel::new(&net, opts.init_seed, standardizer, calibration), reports))
}
