//! Correlation and error metrics between predicted scores and MOS.
//!
//! SROCC uses average ranks for ties, KROCC is Kendall's tau-b, PLCC is raw
//! Pearson with no logistic pre-fit. Undefined correlations are errors, not NaN.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 samples, have {0}")]
    TooShort(usize),
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("clip {0:?} has no matching row")]
    JoinError(String),
    #[error("clip {0:?} appears more than once")]
    DuplicateId(String),
    #[error("score table: {0}")]
    Table(String),
}

/// Predictions paired with ground truth.
#[derive(Debug, Clone, Copy)]
pub struct EvalPair<'a> {
    pub predictions: &'a [f64],
    pub mos: &'a [f64],
}

impl<'a> EvalPair<'a> {
    pub fn new(predictions: &'a [f64], mos: &'a [f64]) -> Result<Self, MetricError> {
        if predictions.len() != mos.len() {
            return Err(MetricError::LengthMismatch(predictions.len(), mos.len()));
        }
        if predictions.len() < 2 {
            return Err(MetricError::TooShort(predictions.len()));
        }
        if let Some(i) = predictions
            .iter()
            .zip(mos)
            .position(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            return Err(MetricError::NonFinite(i));
        }
        Ok(EvalPair { predictions, mos })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson_raw(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::UndefinedCorrelation("constant vector"));
    }
    // sqrt(a * a) == a in binary floating point, so identical inputs give exactly 1.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their average.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn plcc(pair: EvalPair) -> Result<f64, MetricError> {
    pearson_raw(pair.predictions, pair.mos)
}

pub fn srocc(pair: EvalPair) -> Result<f64, MetricError> {
    pearson_raw(&average_ranks(pair.predictions), &average_ranks(pair.mos))
}

pub fn rmse(pair: EvalPair) -> f64 {
    let sq: f64 = pair
        .predictions
        .iter()
        .zip(pair.mos)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (sq / pair.predictions.len() as f64).sqrt()
}

/// Number of tied pairs among runs of equal values in a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for v in sorted {
        if prev.as_ref() == Some(&v) {
            run += 1;
        } else {
            total += run * (run.saturating_sub(1)) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * run.saturating_sub(1) / 2
}

/// Merge sort counting strictly inverted pairs.
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b in O(n log n).
pub fn krocc(pair: EvalPair) -> Result<f64, MetricError> {
    // Adding +0.0 maps -0.0 to 0.0, so the two sort together as one tie.
    let canon = |v: &[f64]| v.iter().map(|a| a + 0.0).collect::<Vec<f64>>();
    let (x, y) = (canon(pair.predictions), canon(pair.mos));
    let n = x.len() as u64;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let ties_x = tied_pairs(order.iter().map(|&i| x[i]));
    let ties_xy = tied_pairs(order.iter().map(|&i| (x[i], y[i])));
    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let discordant = count_inversions(&mut ys, &mut buf);
    let ties_y = tied_pairs(ys.iter().copied());

    let n0 = n * (n - 1) / 2;
    if ties_x == n0 || ties_y == n0 {
        return Err(MetricError::UndefinedCorrelation("all pairs tied"));
    }
    // Concordant minus discordant over pairs untied in both coordinates.
    let c_minus_d = n0 as i64 - ties_x as i64 - ties_y as i64 + ties_xy as i64 - 2 * discordant as i64;
    let denom = ((n0 - ties_x) as f64 * (n0 - ties_y) as f64).sqrt();
    Ok((c_minus_d as f64 / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub srocc: f64,
    pub krocc: f64,
    pub plcc: f64,
    pub rmse: f64,
}

impl MetricReport {
    pub fn compute(pair: EvalPair) -> Result<Self, MetricError> {
        Ok(MetricReport {
            srocc: srocc(pair)?,
            krocc: krocc(pair)?,
            plcc: plcc(pair)?,
            rmse: rmse(pair),
        })
    }

    /// JSON object with every value printed to 6 decimals.
    pub fn to_json(&self) -> String {
        format!(
            "{{\"srocc\":{:.6},\"krocc\":{:.6},\"plcc\":{:.6},\"rmse\":{:.6}}}",
            self.srocc, self.krocc, self.plcc, self.rmse
        )
    }

    pub fn to_csv(&self) -> String {
        format!(
            "srocc,krocc,plcc,rmse\n{:.6},{:.6},{:.6},{:.6}\n",
            self.srocc, self.krocc, self.plcc, self.rmse
        )
    }
}

/// Two-column `clip_id,<value>` table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    pub column: String,
    pub rows: Vec<(String, f64)>,
}

impl ScoreTable {
    pub fn new(column: impl Into<String>, rows: Vec<(String, f64)>) -> Self {
        ScoreTable {
            column: column.into(),
            rows,
        }
    }

    /// Reads a table whose header is `clip_id,<column>`; rejects duplicate ids.
    pub fn read_csv(input: impl Read, column: &str) -> Result<Self, MetricError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r
            .headers()
            .map_err(|e| MetricError::Table(e.to_string()))?
            .clone();
        if header.len() != 2 || &header[0] != "clip_id" || &header[1] != column {
            return Err(MetricError::Table(format!(
                "expected header clip_id,{column}, found {}",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        let mut seen = HashMap::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| MetricError::Table(e.to_string()))?;
            let id = rec[0].to_string();
            let value: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| MetricError::Table(format!("clip {id:?}: bad number {:?}", &rec[1])))?;
            if seen.insert(id.clone(), ()).is_some() {
                return Err(MetricError::DuplicateId(id));
            }
            rows.push((id, value));
        }
        Ok(ScoreTable {
            column: column.to_string(),
            rows,
        })
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "clip_id,{}", self.column)?;
        for (id, v) in &self.rows {
            writeln!(out, "{id},{v}")?;
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|(_, v)| v).copied().collect()
    }

    pub fn to_map(&self) -> HashMap<&str, f64> {
        self.rows.iter().map(|(id, v)| (id.as_str(), *v)).collect()
    }
}

/// Joins every prediction to its MOS by clip id (in id order) and returns aligned vectors.
pub fn join_scores(
    predictions: &ScoreTable,
    mos: &ScoreTable,
) -> Result<(Vec<String>, Vec<f64>, Vec<f64>), MetricError> {
    let lookup = mos.to_map();
    let mut rows: Vec<&(String, f64)> = predictions.rows.iter().collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut ids = Vec::with_capacity(rows.len());
    let mut pred = Vec::with_capacity(rows.len());
    let mut target = Vec::with_capacity(rows.len());
    for (id, p) in rows {
        let m = lookup
            .get(id.as_str())
            .ok_or_else(|| MetricError::JoinError(id.clone()))?;
        ids.push(id.clone());
        pred.push(*p);
        target.push(*m);
    }
    Ok((ids, pred, target))
}

/// Evaluates a `clip_id,score` prediction file against a `clip_id,mos` file.
pub fn evaluate(predictions_csv: impl Read, mos_csv: impl Read) -> Result<MetricReport, MetricError> {
    let pred = ScoreTable::read_csv(predictions_csv, "score")?;
    let mos = ScoreTable::read_csv(mos_csv, "mos")?;
    let (_, p, m) = join_scores(&pred, &mos)?;
    MetricReport::compute(EvalPair::new(&p, &m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair<'a>(x: &'a [f64], y: &'a [f64]) -> EvalPair<'a> {
        EvalPair::new(x, y).unwrap()
    }

    #[test]
    fn signed_zeros_tie() {
        let x = [0.0, -0.0, 1.0, 2.0];
        let y = [-6.0, 4.0, 1.0, 3.0];
        assert_eq!(krocc(pair(&x, &y)).unwrap(), tau_b_pairs(&x, &y));
        assert_eq!(average_ranks(&x)[..2], [1.5, 1.5]);
    }

    /// O(n^2) tau-b by direct pair classification.
    fn tau_b_pairs(x: &[f64], y: &[f64]) -> f64 {
        let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
                if dx == 0.0 && dy == 0.0 {
                } else if dx == 0.0 {
                    tx += 1;
                } else if dy == 0.0 {
                    ty += 1;
                } else if (dx > 0.0) == (dy > 0.0) {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
        (c - d) as f64 / (((c + d + tx) * (c + d + ty)) as f64).sqrt()
    }

    #[test]
    fn monotone_and_reversed() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(srocc(pair(&x, &[10.0, 20.0, 30.0])).unwrap(), 1.0);
        assert_eq!(srocc(pair(&x, &[30.0, 20.0, 10.0])).unwrap(), -1.0);
        let five = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(krocc(pair(&five, &[2.0, 4.0, 6.0, 8.0, 9.0])).unwrap(), 1.0);
    }

    #[test]
    fn srocc_with_ties_hand_computed() {
        // Ranks x = (1, 2.5, 2.5, 4), y = (1, 3, 2, 4).
        // Centered: x = (-1.5, 0, 0, 1.5), y = (-1.5, 0.5, -0.5, 1.5);
        // sxy = 4.5, sxx = 4.5, syy = 5 -> r = 4.5 / sqrt(22.5).
        let r = srocc(pair(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0])).unwrap();
        assert!((r - 4.5 / 22.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn krocc_hand_enumerated() {
        // Pairs: (0,1) tied in x; (0,2) concordant; (1,2) concordant.
        // tau-b = 2 / sqrt((3 - 1) * 3).
        let x = [1.0, 1.0, 2.0];
        let y = [1.0, 2.0, 3.0];
        let expected = 2.0 / 6.0f64.sqrt();
        assert!((krocc(pair(&x, &y)).unwrap() - expected).abs() < 1e-15);
        assert_eq!(krocc(pair(&x, &y)).unwrap(), krocc(pair(&y, &x)).unwrap());
        assert!((tau_b_pairs(&x, &y) - expected).abs() < 1e-15);
    }

    #[test]
    fn affine_plcc_and_rmse() {
        let x = [0.5, 1.0, 2.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((plcc(pair(&x, &y)).unwrap() - 1.0).abs() < 1e-15);
        let expected = (x.iter().map(|v| (v + 1.0) * (v + 1.0)).sum::<f64>() / 4.0).sqrt();
        assert!((rmse(pair(&x, &y)) - expected).abs() < 1e-15);
        assert_eq!(rmse(pair(&x, &x)), 0.0);
    }

    #[test]
    fn undefined_and_invalid() {
        let c = [2.0, 2.0, 2.0];
        let v = [1.0, 2.0, 3.0];
        assert!(matches!(srocc(pair(&c, &v)), Err(MetricError::UndefinedCorrelation(_))));
        assert!(matches!(krocc(pair(&v, &c)), Err(MetricError::UndefinedCorrelation(_))));
        assert!(matches!(plcc(pair(&c, &v)), Err(MetricError::UndefinedCorrelation(_))));
        assert_eq!(rmse(pair(&c, &c)), 0.0);
        assert_eq!(EvalPair::new(&[1.0], &[1.0]).unwrap_err(), MetricError::TooShort(1));
        assert_eq!(
            EvalPair::new(&[1.0, 2.0], &[1.0]).unwrap_err(),
            MetricError::LengthMismatch(2, 1)
        );
        assert_eq!(
            EvalPair::new(&[1.0, f64::NAN], &[1.0, 2.0]).unwrap_err(),
            MetricError::NonFinite(1)
        );
    }

    #[test]
    fn evaluate_identical_files() {
        let csv_pred = "clip_id,score\na,1.5\nb,3.0\nc,4.25\n";
        let csv_mos = "clip_id,mos\nc,4.25\na,1.5\nb,3.0\nextra,2.0\n";
        let r = evaluate(csv_pred.as_bytes(), csv_mos.as_bytes()).unwrap();
        assert_eq!(r, MetricReport { srocc: 1.0, krocc: 1.0, plcc: 1.0, rmse: 0.0 });
        assert_eq!(
            r.to_json(),
            r#"{"srocc":1.000000,"krocc":1.000000,"plcc":1.000000,"rmse":0.000000}"#
        );
    }

    #[test]
    fn evaluate_errors() {
        let mos = "clip_id,mos\na,1\nb,2\n";
        assert_eq!(
            evaluate("clip_id,score\na,1\nz,2\n".as_bytes(), mos.as_bytes()).unwrap_err(),
            MetricError::JoinError("z".into())
        );
        assert_eq!(
            evaluate("clip_id,score\na,1\na,2\n".as_bytes(), mos.as_bytes()).unwrap_err(),
            MetricError::DuplicateId("a".into())
        );
        assert!(matches!(
            evaluate("id,score\na,1\n".as_bytes(), mos.as_bytes()),
            Err(MetricError::Table(_))
        ));
    }

    #[test]
    fn evaluate_is_order_insensitive() {
        let mos = "clip_id,mos\na,1\nb,2.5\nc,2\nd,4\n";
        let p1 = "clip_id,score\na,1.2\nb,2.0\nc,2.2\nd,3.9\n";
        let p2 = "clip_id,score\nd,3.9\nb,2.0\na,1.2\nc,2.2\n";
        assert_eq!(
            evaluate(p1.as_bytes(), mos.as_bytes()).unwrap(),
            evaluate(p2.as_bytes(), mos.as_bytes()).unwrap()
        );
    }

    fn vectors() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..30).prop_flat_map(|n| {
            (
                proptest::collection::vec(-5.0f64..5.0, n),
                proptest::collection::vec(-5.0f64..5.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn rank_metrics_invariant_under_exp((x, y) in vectors()) {
            let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let s1 = srocc(pair(&x, &y)).unwrap();
            let s2 = srocc(pair(&ex, &y)).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-12);
            let k1 = krocc(pair(&x, &y)).unwrap();
            let k2 = krocc(pair(&ex, &y)).unwrap();
            prop_assert!((k1 - k2).abs() < 1e-12);
            prop_assert!(s1.abs() <= 1.0 && k1.abs() <= 1.0);
        }

        #[test]
        fn plcc_affine((x, y) in vectors(), a in 0.1f64..10.0, b in -3.0f64..3.0) {
            let r = plcc(pair(&x, &y)).unwrap();
            let pos: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let neg: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((plcc(pair(&pos, &y)).unwrap() - r).abs() < 1e-9);
            prop_assert!((plcc(pair(&neg, &y)).unwrap() + r).abs() < 1e-9);
        }

        #[test]
        fn rmse_triangle((x, y) in vectors(), seed in any::<u64>()) {
            let z: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + ((seed >> (i % 60)) & 7) as f64 * 0.1).collect();
            let xz = rmse(pair(&x, &z));
            prop_assert!(xz <= rmse(pair(&x, &y)) + rmse(pair(&y, &z)) + 1e-12);
        }

        #[test]
        fn krocc_matches_pairwise(
            x in proptest::collection::vec(0u8..4, 2..20),
            y in proptest::collection::vec(0u8..4, 2..20),
        ) {
            let n = x.len().min(y.len());
            let x: Vec<f64> = x[..n].iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = y[..n].iter().map(|&v| v as f64).collect();
            match krocc(pair(&x, &y)) {
                Ok(t) => prop_assert!((t - tau_b_pairs(&x, &y)).abs() < 1e-12),
                Err(_) => prop_assert!(tau_b_pairs(&x, &y).is_nan()),
            }
        }
    }
}
