//! Relative (rank + linearity) loss and the logistic pair loss.

use super::RegressorError;
use super::net::BranchScores;

/// Weights and margin for [`rel_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub margin: f64,
    pub rank: f64,
    pub linearity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            margin: 0.05,
            rank: 1.0,
            linearity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelLoss {
    pub value: f64,
    /// Mean hinge over ordered pairs (0 when there are none).
    pub rank: f64,
    /// `1 - PLCC`, or 0 when skipped.
    pub linearity: f64,
    /// Set when the MOS batch is constant and PLCC is undefined.
    pub plcc_skipped: bool,
}

fn check_batch(pred: &[f64], mos: &[f64]) -> Result<(), RegressorError> {
    if pred.len() != mos.len() {
        return Err(RegressorError::DimensionMismatch(format!(
            "{} predictions for {} MOS values",
            pred.len(),
            mos.len()
        )));
    }
    if pred.len() < 2 {
        return Err(RegressorError::InsufficientData(format!("batch of {}", pred.len())));
    }
    if pred.iter().chain(mos).any(|v| !v.is_finite()) {
        return Err(RegressorError::NumericalError("non-finite loss input".into()));
    }
    Ok(())
}

/// Loss value and its gradient with respect to `pred`.
pub fn rel_loss_with_grad(
    pred: &[f64],
    mos: &[f64],
    w: &LossWeights,
) -> Result<(RelLoss, Vec<f64>), RegressorError> {
    check_batch(pred, mos)?;
    let n = pred.len();
    let mut grad = vec![0.0; n];

    let mut pairs = 0usize;
    let mut hinge = 0.0;
    let mut active: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if mos[i] > mos[j] {
                pairs += 1;
                let h = w.margin - (pred[i] - pred[j]);
                if h > 0.0 {
                    hinge += h;
                    active.push((i, j));
                }
            }
        }
    }
    let rank = if pairs == 0 { 0.0 } else { hinge / pairs as f64 };
    if pairs > 0 {
        let step = w.rank / pairs as f64;
        for (i, j) in active {
            grad[i] -= step;
            grad[j] += step;
        }
    }

    let nf = n as f64;
    let mp = pred.iter().sum::<f64>() / nf;
    let mm = mos.iter().sum::<f64>() / nf;
    let sxx: f64 = pred.iter().map(|p| (p - mp) * (p - mp)).sum();
    let syy: f64 = mos.iter().map(|m| (m - mm) * (m - mm)).sum();
    let plcc_skipped = syy == 0.0;
    let linearity = if plcc_skipped {
        0.0
    } else if sxx == 0.0 {
        // Flat predictions carry no linear signal; treat PLCC as 0.
        1.0
    } else {
        let sxy: f64 = pred.iter().zip(mos).map(|(p, m)| (p - mp) * (m - mm)).sum();
        let denom = (sxx * syy).sqrt();
        let r = sxy / denom;
        for i in 0..n {
            let dr = (mos[i] - mm) / denom - r * (pred[i] - mp) / sxx;
            grad[i] -= w.linearity * dr;
        }
        1.0 - r
    };

    let value = w.rank * rank + w.linearity * linearity;
    Ok((
        RelLoss {
            value,
            rank,
            linearity,
            plcc_skipped,
        },
        grad,
    ))
}

/// Margin rank loss plus `1 - PLCC`.
pub fn rel_loss(pred: &[f64], mos: &[f64], w: &LossWeights) -> Result<RelLoss, RegressorError> {
    rel_loss_with_grad(pred, mos, w).map(|(l, _)| l)
}

/// Sum of [`rel_loss`] over the semantic, aesthetic and technical scores.
pub fn total_loss(scores: &[BranchScores], mos: &[f64], w: &LossWeights) -> Result<f64, RegressorError> {
    total_loss_with_grad(scores, mos, w).map(|(v, _)| v)
}

/// Total loss and per-sample gradients `[d q_s, d q_a, d q_t]`.
pub fn total_loss_with_grad(
    scores: &[BranchScores],
    mos: &[f64],
    w: &LossWeights,
) -> Result<(f64, Vec<[f64; 3]>), RegressorError> {
    let mut grads = vec![[0.0; 3]; scores.len()];
    let mut total = 0.0;
    for b in 0..3 {
        let pred: Vec<f64> = scores.iter().map(|s| s.as_array()[b]).collect();
        let (l, g) = rel_loss_with_grad(&pred, mos, w)?;
        total += l.value;
        for (dst, v) in grads.iter_mut().zip(g) {
            dst[b] = v;
        }
    }
    Ok((total, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairLabel {
    ABetter,
    BBetter,
}

impl PairLabel {
    /// Label for a MOS pair, `None` on ties.
    pub fn from_mos(a: f64, b: f64) -> Option<Self> {
        if a > b {
            Some(PairLabel::ABetter)
        } else if b > a {
            Some(PairLabel::BBetter)
        } else {
            None
        }
    }
}

/// `ln(1 + exp(-d))`, overflow-safe.
fn softplus_neg(d: f64) -> f64 {
    (-d).max(0.0) + (-d.abs()).exp().ln_1p()
}

/// `ln(1 + exp(-(s_winner - s_loser)))`.
pub fn siamese_rank_loss(score_a: f64, score_b: f64, label: PairLabel) -> f64 {
    let d = match label {
        PairLabel::ABetter => score_a - score_b,
        PairLabel::BBetter => score_b - score_a,
    };
    softplus_neg(d)
}

/// Derivative of the pair loss with respect to `s_winner - s_loser`.
pub(crate) fn siamese_margin_grad(d: f64) -> f64 {
    // -sigmoid(-d)
    if d >= 0.0 {
        let e = (-d).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + d.exp())
    }
}
