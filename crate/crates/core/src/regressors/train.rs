//! Gradient-descent trainers: siamese pair pretraining and MOS fine-tuning.
//!
//! Both run on one thread with a single seeded generator driving sampling and
//! gate dropout, so a run is bit-reproducible regardless of the rayon pool.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RegressorError;
use super::loss::{LossWeights, PairLabel, siamese_margin_grad, siamese_rank_loss, total_loss, total_loss_with_grad};
use super::net::{BranchInputs, BranchNet, BranchScores};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Pairs per step for siamese training, clips per step for fine-tuning.
    pub batch_size: usize,
    pub seed: u64,
    pub rank_margin: f64,
    pub rank_weight: f64,
    pub linearity_weight: f64,
    /// Decoupled weight decay applied as `p -= lr * wd * p`.
    pub weight_decay: f64,
    pub gate_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            rank_margin: 0.05,
            rank_weight: 1.0,
            linearity_weight: 1.0,
            weight_decay: 0.05,
            gate_dropout: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RegressorError> {
        let bad = |m: String| Err(RegressorError::InvalidConfig(m));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning rate {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size 0".into());
        }
        if !(0.0..1.0).contains(&self.gate_dropout) {
            return bad(format!("gate dropout {}", self.gate_dropout));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight decay {}", self.weight_decay));
        }
        if !(self.rank_margin.is_finite() && self.rank_weight >= 0.0 && self.linearity_weight >= 0.0) {
            return bad("loss weights must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            margin: self.rank_margin,
            rank: self.rank_weight,
            linearity: self.linearity_weight,
        }
    }
}

/// Standardized inputs and MOS for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    pub name: String,
    pub inputs: Vec<BranchInputs>,
    pub mos: Vec<f64>,
}

impl TrainSet {
    pub fn new(name: impl Into<String>, inputs: Vec<BranchInputs>, mos: Vec<f64>) -> Result<Self, RegressorError> {
        if inputs.len() != mos.len() {
            return Err(RegressorError::DimensionMismatch(format!(
                "{} inputs for {} MOS values",
                inputs.len(),
                mos.len()
            )));
        }
        if mos.iter().any(|m| !m.is_finite()) {
            return Err(RegressorError::NumericalError("non-finite MOS".into()));
        }
        Ok(TrainSet {
            name: name.into(),
            inputs,
            mos,
        })
    }

    pub fn len(&self) -> usize {
        self.mos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mos.is_empty()
    }

    fn has_pairs(&self) -> bool {
        self.mos.iter().any(|&m| m != self.mos[0])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Pairs drawn from each dataset, by name, in input order.
    pub pairs_per_dataset: Vec<(String, usize)>,
    pub steps: usize,
}

fn apply_update(net: &mut BranchNet, grad: &[f64], cfg: &TrainConfig) -> Result<(), RegressorError> {
    let lr = cfg.learning_rate;
    let decay = lr * cfg.weight_decay;
    for (p, g) in net.params_mut().iter_mut().zip(grad) {
        *p -= lr * g + decay * *p;
    }
    if net.params().iter().any(|p| !p.is_finite()) {
        return Err(RegressorError::NumericalError("parameters diverged".into()));
    }
    Ok(())
}

/// Draws an index pair with distinct MOS from one dataset.
fn draw_pair(set: &TrainSet, rng: &mut ChaCha8Rng) -> (usize, usize) {
    loop {
        let i = rng.random_range(0..set.len());
        let j = rng.random_range(0..set.len());
        if set.mos[i] != set.mos[j] {
            return (i, j);
        }
    }
}

/// Pretrains on within-dataset pairs with the logistic pair loss on the final
/// score. One epoch draws as many pairs as there are clips in total.
pub fn train_siamese(
    datasets: &[TrainSet],
    net: &mut BranchNet,
    cfg: &TrainConfig,
) -> Result<TrainReport, RegressorError> {
    cfg.validate()?;
    if let Some(s) = datasets.iter().find(|s| s.len() < 2) {
        return Err(RegressorError::InsufficientData(format!("dataset '{}' has {} items", s.name, s.len())));
    }
    let usable: Vec<usize> = (0..datasets.len()).filter(|&d| datasets[d].has_pairs()).collect();
    if usable.is_empty() {
        return Err(RegressorError::NoTrainablePairs);
    }
    net.gate_dropout = cfg.gate_dropout;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let usable_total: usize = usable.iter().map(|&d| datasets[d].len()).sum();
    let per_epoch = usable_total.max(cfg.batch_size);
    let mut report = TrainReport {
        pairs_per_dataset: datasets.iter().map(|s| (s.name.clone(), 0)).collect(),
        ..Default::default()
    };

    let mut grad = vec![0.0; net.param_count()];
    for _ in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        let mut drawn = 0;
        while drawn < per_epoch {
            let batch = cfg.batch_size.min(per_epoch - drawn);
            grad.fill(0.0);
            for _ in 0..batch {
                // Datasets are chosen in proportion to their size.
                let mut pick = rng.random_range(0..usable_total);
                let d = *usable
                    .iter()
                    .find(|&&d| {
                        let hit = pick < datasets[d].len();
                        if !hit {
                            pick -= datasets[d].len();
                        }
                        hit
                    })
                    .expect("pick within total");
                let set = &datasets[d];
                let (i, j) = draw_pair(set, &mut rng);
                report.pairs_per_dataset[d].1 += 1;
                let label = PairLabel::from_mos(set.mos[i], set.mos[j]).expect("distinct MOS");
                let (w, l) = match label {
                    PairLabel::ABetter => (i, j),
                    PairLabel::BBetter => (j, i),
                };
                let cw = net.forward_cached(&set.inputs[w], Some(&mut rng))?;
                let cl = net.forward_cached(&set.inputs[l], Some(&mut rng))?;
                let (sw, sl) = (cw.scores.final_score(), cl.scores.final_score());
                epoch_loss += siamese_rank_loss(sw, sl, PairLabel::ABetter);
                let g = siamese_margin_grad(sw - sl) / batch as f64 / 3.0;
                net.backward(&cw, [g; 3], &mut grad);
                net.backward(&cl, [-g; 3], &mut grad);
            }
            apply_update(net, &grad, cfg)?;
            report.steps += 1;
            drawn += batch;
        }
        report.epoch_loss.push(epoch_loss / per_epoch as f64);
    }
    Ok(report)
}

/// Splits shuffled indices into batches, folding a trailing singleton into
/// the previous batch so every batch has at least two clips.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let size = size.max(2);
    let mut out: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = (start + size).min(order.len());
        if order.len() - end == 1 {
            end += 1;
        }
        out.push(&order[start..end]);
        start = end;
    }
    out
}

/// Branch scores for every clip without dropout.
pub fn predict_branches(net: &BranchNet, set: &TrainSet) -> Result<Vec<BranchScores>, RegressorError> {
    set.inputs.iter().map(|x| net.forward(x).map(|(s, _)| s)).collect()
}

/// Full-batch loss and gradient with dropout disabled.
pub fn total_loss_and_grad(
    net: &BranchNet,
    set: &TrainSet,
    w: &LossWeights,
) -> Result<(f64, Vec<f64>), RegressorError> {
    let caches = set
        .inputs
        .iter()
        .map(|x| net.forward_cached(x, None))
        .collect::<Result<Vec<_>, _>>()?;
    let scores: Vec<BranchScores> = caches.iter().map(|c| c.scores).collect();
    let (loss, dq) = total_loss_with_grad(&scores, &set.mos, w)?;
    let mut grad = vec![0.0; net.param_count()];
    for (c, d) in caches.iter().zip(dq) {
        net.backward(c, d, &mut grad);
    }
    Ok((loss, grad))
}

/// Full-batch loss with dropout disabled.
pub fn evaluate_total_loss(net: &BranchNet, set: &TrainSet, w: &LossWeights) -> Result<f64, RegressorError> {
    total_loss(&predict_branches(net, set)?, &set.mos, w)
}

/// Minimizes the three-branch relative loss on shuffled mini-batches.
pub fn finetune_mos(set: &TrainSet, net: &mut BranchNet, cfg: &TrainConfig) -> Result<TrainReport, RegressorError> {
    cfg.validate()?;
    if set.len() < 2 {
        return Err(RegressorError::InsufficientData(format!("dataset '{}' has {} items", set.name, set.len())));
    }
    if !set.has_pairs() {
        return Err(RegressorError::NoTrainablePairs);
    }
    net.gate_dropout = cfg.gate_dropout;
    let w = cfg.loss_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut report = TrainReport {
        pairs_per_dataset: vec![(set.name.clone(), 0)],
        ..Default::default()
    };
    let mut grad = vec![0.0; net.param_count()];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for batch in batches(&order, cfg.batch_size) {
            let caches = batch
                .iter()
                .map(|&i| net.forward_cached(&set.inputs[i], Some(&mut rng)))
                .collect::<Result<Vec<_>, _>>()?;
            let scores: Vec<BranchScores> = caches.iter().map(|c| c.scores).collect();
            let mos: Vec<f64> = batch.iter().map(|&i| set.mos[i]).collect();
            let (loss, dq) = total_loss_with_grad(&scores, &mos, &w)?;
            grad.fill(0.0);
            for (c, d) in caches.iter().zip(dq) {
                net.backward(c, d, &mut grad);
            }
            apply_update(net, &grad, cfg)?;
            epoch_loss += loss;
            n_batches += 1;
            report.steps += 1;
            report.pairs_per_dataset[0].1 += mos
                .iter()
                .enumerate()
                .map(|(k, a)| mos[k + 1..].iter().filter(|b| *b != a).count())
                .sum::<usize>();
        }
        report.epoch_loss.push(epoch_loss / n_batches as f64);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::net::NetDims;

    fn synthetic(n: usize, seed: u64, scale: (f64, f64)) -> TrainSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::new();
        let mut mos = Vec::new();
        for _ in 0..n {
            let mut v = |k: usize| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
            let x = BranchInputs {
                semantic: v(3),
                aesthetic: v(4),
                technical: v(4),
            };
            let t = (x.technical[0] + 1.0) / 2.0;
            mos.push(scale.0 + t * (scale.1 - scale.0));
            inputs.push(x);
        }
        TrainSet::new("synthetic", inputs, mos).unwrap()
    }

    #[test]
    fn zero_epochs_and_zero_lr_leave_net_unchanged() {
        let set = synthetic(20, 1, (1.0, 5.0));
        let net0 = BranchNet::init(NetDims::default(), 4);
        let mut net = net0.clone();
        train_siamese(std::slice::from_ref(&set), &mut net, &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
        assert_eq!(net.params(), net0.params());
        finetune_mos(
            &set,
            &mut net,
            &TrainConfig {
                learning_rate: 0.0,
                epochs: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(net.params(), net0.params());
    }

    #[test]
    fn constant_mos_everywhere() {
        let mut set = synthetic(6, 2, (1.0, 5.0));
        set.mos = vec![3.0; 6];
        let mut net = BranchNet::init(NetDims::default(), 0);
        let cfg = TrainConfig::default();
        assert_eq!(train_siamese(&[set.clone()], &mut net, &cfg), Err(RegressorError::NoTrainablePairs));
        assert_eq!(finetune_mos(&set, &mut net, &cfg), Err(RegressorError::NoTrainablePairs));
    }

    #[test]
    fn finetune_reduces_loss_and_is_deterministic() {
        let set = synthetic(60, 3, (1.0, 5.0));
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 16,
            seed: 9,
            ..Default::default()
        };
        let w = cfg.loss_weights();
        let mut a = BranchNet::init(NetDims::default(), 1);
        let before = evaluate_total_loss(&a, &set, &w).unwrap();
        let report = finetune_mos(&set, &mut a, &cfg).unwrap();
        let after = evaluate_total_loss(&a, &set, &w).unwrap();
        assert!(after < before, "{before} -> {after}");
        assert_eq!(report.epoch_loss.len(), 30);
        let mut b = BranchNet::init(NetDims::default(), 1);
        finetune_mos(&set, &mut b, &cfg).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn siamese_counts_pairs_per_dataset() {
        let sets = [synthetic(10, 1, (1.0, 5.0)), synthetic(30, 2, (0.0, 100.0))];
        let mut net = BranchNet::init(NetDims::default(), 0);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            ..Default::default()
        };
        let r = train_siamese(&sets, &mut net, &cfg).unwrap();
        let total: usize = r.pairs_per_dataset.iter().map(|p| p.1).sum();
        assert_eq!(total, 80);
        assert!(r.pairs_per_dataset.iter().all(|p| p.1 > 0));
    }

    #[test]
    fn batching_never_leaves_singletons() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![4, 5]);
        assert_eq!(batches(&order, 1).len(), 4);
    }

    #[test]
    fn full_batch_grad_matches_differences() {
        let set = synthetic(8, 5, (1.0, 5.0));
        let mut net = BranchNet::init(NetDims::new(2, 2, 2), 3);
        let w = LossWeights::default();
        let (_, g) = total_loss_and_grad(&net, &set, &w).unwrap();
        let h = 1e-6;
        for i in 0..net.param_count() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = evaluate_total_loss(&net, &set, &w).unwrap();
            net.params_mut()[i] = orig - h;
            let down = evaluate_total_loss(&net, &set, &w).unwrap();
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(g[i].abs()).max(1e-3), "{i}: {fd} vs {}", g[i]);
        }
    }
}
