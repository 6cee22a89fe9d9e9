//! Three-branch quality network with cross-gated fusion.
//!
//! Each branch encodes its feature vector with one tanh layer. The semantic
//! encoding gates the aesthetic and technical encodings through two fusion
//! blocks (`out = P_o (P_x x ⊙ sigmoid(P_y y)) + x`), and three tanh-MLP heads
//! map the semantic, fused-aesthetic and fused-technical vectors to scores.
//! The final score is their mean.
//!
//! Parameters live in one flat buffer so checkpoints, optimizers and
//! finite-difference checks can treat the net as a vector.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RegressorError;
use crate::features::{AESTHETIC_DIM, SEMANTIC_DIM, TECHNICAL_DIM};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer size");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out = w · x` for a row-major `rows x cols` slice.
fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `out += wᵀ · d`.
fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, d: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += wv * d[r];
        }
    }
}

/// `grad += d ⊗ x`.
fn outer_acc(grad: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &dv) in d.iter().enumerate() {
        for (g, &xv) in grad[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *g += dv * xv;
        }
    }
}

/// Projections of one cross-gating fusion block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScgbParams {
    /// `gate x dim(x)`
    pub input_proj: Matrix,
    /// `gate x dim(y)`
    pub gate_proj: Matrix,
    /// `dim(x) x gate`
    pub output_proj: Matrix,
}

/// `P_o (P_x x ⊙ sigmoid(P_y y)) + x`.
pub fn scgb_fuse(x: &[f64], y: &[f64], params: &ScgbParams) -> Result<Vec<f64>, RegressorError> {
    let (px, py, po) = (&params.input_proj, &params.gate_proj, &params.output_proj);
    let gate = px.rows;
    if px.cols != x.len() || py.cols != y.len() || py.rows != gate || po.rows != x.len() || po.cols != gate {
        return Err(RegressorError::DimensionMismatch(format!(
            "fusion block P_x {}x{}, P_y {}x{}, P_o {}x{} with x[{}], y[{}]",
            px.rows,
            px.cols,
            py.rows,
            py.cols,
            po.rows,
            po.cols,
            x.len(),
            y.len()
        )));
    }
    Ok(scgb_forward(&px.data, &py.data, &po.data, gate, x, y, None).out)
}

struct ScgbCache {
    u: Vec<f64>,
    g: Vec<f64>,
    mask: Option<Vec<f64>>,
    w: Vec<f64>,
    out: Vec<f64>,
}

fn scgb_forward(
    px: &[f64],
    py: &[f64],
    po: &[f64],
    gate: usize,
    x: &[f64],
    y: &[f64],
    mask: Option<Vec<f64>>,
) -> ScgbCache {
    let u = matvec(px, gate, x.len(), x);
    let g: Vec<f64> = matvec(py, gate, y.len(), y).into_iter().map(sigmoid).collect();
    let w: Vec<f64> = match &mask {
        Some(m) => u.iter().zip(&g).zip(m).map(|((a, b), k)| a * b * k).collect(),
        None => u.iter().zip(&g).map(|(a, b)| a * b).collect(),
    };
    let mut out = matvec(po, x.len(), gate, &w);
    for (o, xv) in out.iter_mut().zip(x) {
        *o += xv;
    }
    ScgbCache { u, g, mask, w, out }
}

/// Layer widths. Branch input widths are fixed by the feature grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub semantic_in: usize,
    pub aesthetic_in: usize,
    pub technical_in: usize,
    /// Shared encoder width; fusion blocks operate at this width.
    pub hidden: usize,
    /// Fusion gate width.
    pub gate: usize,
    /// Hidden width of each head MLP.
    pub head_hidden: usize,
}

impl NetDims {
    pub fn new(hidden: usize, gate: usize, head_hidden: usize) -> Self {
        NetDims {
            semantic_in: SEMANTIC_DIM,
            aesthetic_in: AESTHETIC_DIM,
            technical_in: TECHNICAL_DIM,
            hidden,
            gate,
            head_hidden,
        }
    }

    pub fn param_count(&self) -> usize {
        Layout::new(*self).total
    }
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims::new(8, 8, 8)
    }
}

#[derive(Debug, Clone)]
struct EncoderLayout {
    w: Range<usize>,
    b: Range<usize>,
    input: usize,
}

#[derive(Debug, Clone)]
struct FusionLayout {
    px: Range<usize>,
    py: Range<usize>,
    po: Range<usize>,
}

#[derive(Debug, Clone)]
struct HeadLayout {
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    enc: [EncoderLayout; 3],
    fusion: [FusionLayout; 2],
    head: [HeadLayout; 3],
    total: usize,
}

impl Layout {
    fn new(d: NetDims) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let mut enc = |input: usize| EncoderLayout {
            w: take(d.hidden * input),
            b: take(d.hidden),
            input,
        };
        let enc = [enc(d.semantic_in), enc(d.aesthetic_in), enc(d.technical_in)];
        let mut fusion = || FusionLayout {
            px: take(d.gate * d.hidden),
            py: take(d.gate * d.hidden),
            po: take(d.hidden * d.gate),
        };
        let fusion = [fusion(), fusion()];
        let mut head = || HeadLayout {
            w1: take(d.head_hidden * d.hidden),
            b1: take(d.head_hidden),
            w2: take(d.head_hidden),
            b2: take(1).start,
        };
        let head = [head(), head(), head()];
        Layout {
            enc,
            fusion,
            head,
            total: at,
        }
    }
}

/// Branch feature vectors for one clip, already standardized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchInputs {
    pub semantic: Vec<f64>,
    pub aesthetic: Vec<f64>,
    pub technical: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchScores {
    pub q_s: f64,
    pub q_a: f64,
    pub q_t: f64,
}

impl BranchScores {
    /// Mean of the three branch scores.
    pub fn final_score(&self) -> f64 {
        (self.q_s + self.q_a + self.q_t) / 3.0
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.q_s, self.q_a, self.q_t]
    }
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    inputs: [Vec<f64>; 3],
    enc: [Vec<f64>; 3],
    fusion: [ScgbCache; 2],
    head_hidden: [Vec<f64>; 3],
    pub scores: BranchScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchNet {
    dims: NetDims,
    params: Vec<f64>,
    /// Probability of zeroing a gate unit during training.
    pub gate_dropout: f64,
}

impl BranchNet {
    /// Glorot-uniform weights and zero biases from a seeded generator.
    pub fn init(dims: NetDims, seed: u64) -> Self {
        let layout = Layout::new(dims);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |r: &Range<usize>, fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[r.clone()] {
                *p = rng.random_range(-a..a);
            }
        };
        for e in &layout.enc {
            fill(&e.w, e.input, dims.hidden);
        }
        for f in &layout.fusion {
            fill(&f.px, dims.hidden, dims.gate);
            fill(&f.py, dims.hidden, dims.gate);
            fill(&f.po, dims.gate, dims.hidden);
        }
        for h in &layout.head {
            fill(&h.w1, dims.hidden, dims.head_hidden);
            fill(&h.w2, dims.head_hidden, 1);
        }
        BranchNet {
            dims,
            params,
            gate_dropout: 0.1,
        }
    }

    pub fn from_params(dims: NetDims, params: Vec<f64>) -> Result<Self, RegressorError> {
        let expected = dims.param_count();
        if params.len() != expected {
            return Err(RegressorError::DimensionMismatch(format!(
                "{} parameters for a net that needs {expected}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(RegressorError::NumericalError("non-finite parameter".into()));
        }
        Ok(BranchNet {
            dims,
            params,
            gate_dropout: 0.1,
        })
    }

    pub fn dims(&self) -> NetDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Copies out one fusion block (`0` = aesthetic, `1` = technical).
    pub fn fusion_block(&self, which: usize) -> ScgbParams {
        let f = &Layout::new(self.dims).fusion[which];
        let d = self.dims;
        ScgbParams {
            input_proj: Matrix::new(d.gate, d.hidden, self.params[f.px.clone()].to_vec()),
            gate_proj: Matrix::new(d.gate, d.hidden, self.params[f.py.clone()].to_vec()),
            output_proj: Matrix::new(d.hidden, d.gate, self.params[f.po.clone()].to_vec()),
        }
    }

    /// Encodes one branch: `tanh(W x + b)`.
    pub fn encode(&self, branch: usize, x: &[f64]) -> Vec<f64> {
        let e = &Layout::new(self.dims).enc[branch];
        let mut z = matvec(&self.params[e.w.clone()], self.dims.hidden, e.input, x);
        for (v, b) in z.iter_mut().zip(&self.params[e.b.clone()]) {
            *v = (*v + b).tanh();
        }
        z
    }

    /// Applies head `branch` to its input vector.
    pub fn head(&self, branch: usize, input: &[f64]) -> f64 {
        let (_, q) = self.head_forward(&Layout::new(self.dims).head[branch], input);
        q
    }

    fn head_forward(&self, h: &HeadLayout, input: &[f64]) -> (Vec<f64>, f64) {
        let p = &self.params;
        let mut k = matvec(&p[h.w1.clone()], self.dims.head_hidden, self.dims.hidden, input);
        for (v, b) in k.iter_mut().zip(&p[h.b1.clone()]) {
            *v = (*v + b).tanh();
        }
        let q = k.iter().zip(&p[h.w2.clone()]).map(|(a, b)| a * b).sum::<f64>() + p[h.b2];
        (k, q)
    }

    fn check_inputs(&self, x: &BranchInputs) -> Result<(), RegressorError> {
        let d = self.dims;
        if x.semantic.len() != d.semantic_in
            || x.aesthetic.len() != d.aesthetic_in
            || x.technical.len() != d.technical_in
        {
            return Err(RegressorError::DimensionMismatch(format!(
                "inputs ({}, {}, {}) for a net expecting ({}, {}, {})",
                x.semantic.len(),
                x.aesthetic.len(),
                x.technical.len(),
                d.semantic_in,
                d.aesthetic_in,
                d.technical_in
            )));
        }
        Ok(())
    }

    /// Forward pass keeping activations. `dropout_rng` enables gate dropout.
    pub fn forward_cached(
        &self,
        x: &BranchInputs,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardCache, RegressorError> {
        self.check_inputs(x)?;
        let layout = Layout::new(self.dims);
        let p = &self.params;
        let d = self.dims;
        let inputs = [x.semantic.clone(), x.aesthetic.clone(), x.technical.clone()];
        let enc = [0, 1, 2].map(|b| self.encode(b, &inputs[b]));

        let mut masks = [None, None];
        if let Some(rng) = dropout_rng {
            if self.gate_dropout > 0.0 {
                let keep = 1.0 - self.gate_dropout;
                for m in &mut masks {
                    *m = Some(
                        (0..d.gate)
                            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect(),
                    );
                }
            }
        }
        let [m0, m1] = masks;
        let fusion = [
            scgb_forward(
                &p[layout.fusion[0].px.clone()],
                &p[layout.fusion[0].py.clone()],
                &p[layout.fusion[0].po.clone()],
                d.gate,
                &enc[1],
                &enc[0],
                m0,
            ),
            scgb_forward(
                &p[layout.fusion[1].px.clone()],
                &p[layout.fusion[1].py.clone()],
                &p[layout.fusion[1].po.clone()],
                d.gate,
                &enc[2],
                &enc[0],
                m1,
            ),
        ];
        let (k_s, q_s) = self.head_forward(&layout.head[0], &enc[0]);
        let (k_a, q_a) = self.head_forward(&layout.head[1], &fusion[0].out);
        let (k_t, q_t) = self.head_forward(&layout.head[2], &fusion[1].out);
        let scores = BranchScores { q_s, q_a, q_t };
        if !(q_s.is_finite() && q_a.is_finite() && q_t.is_finite()) {
            return Err(RegressorError::NumericalError(format!("non-finite branch scores {scores:?}")));
        }
        Ok(ForwardCache {
            inputs,
            enc,
            fusion,
            head_hidden: [k_s, k_a, k_t],
            scores,
        })
    }

    /// Inference: branch scores and their mean.
    pub fn forward(&self, x: &BranchInputs) -> Result<(BranchScores, f64), RegressorError> {
        let c = self.forward_cached(x, None)?;
        Ok((c.scores, c.scores.final_score()))
    }

    /// Accumulates parameter gradients given `d loss / d (q_s, q_a, q_t)`.
    pub fn backward(&self, cache: &ForwardCache, d_scores: [f64; 3], grad: &mut [f64]) {
        let layout = Layout::new(self.dims);
        let p = &self.params;
        let d = self.dims;
        let head_inputs = [&cache.enc[0], &cache.fusion[0].out, &cache.fusion[1].out];

        // Heads.
        let mut d_head_in: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; d.hidden]);
        for b in 0..3 {
            let h = &layout.head[b];
            let dq = d_scores[b];
            let k = &cache.head_hidden[b];
            grad[h.b2] += dq;
            for (g, kv) in grad[h.w2.clone()].iter_mut().zip(k) {
                *g += dq * kv;
            }
            let dr: Vec<f64> = p[h.w2.clone()]
                .iter()
                .zip(k)
                .map(|(w, kv)| dq * w * (1.0 - kv * kv))
                .collect();
            outer_acc(&mut grad[h.w1.clone()], &dr, head_inputs[b]);
            for (g, v) in grad[h.b1.clone()].iter_mut().zip(&dr) {
                *g += v;
            }
            matvec_t_acc(&p[h.w1.clone()], d.head_hidden, d.hidden, &dr, &mut d_head_in[b]);
        }

        // Fusion blocks: block 0 fuses aesthetic, block 1 technical; both gated by semantic.
        let mut d_enc: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; d.hidden]);
        d_enc[0].clone_from(&d_head_in[0]);
        for (f, branch) in [(0usize, 1usize), (1, 2)] {
            let fl = &layout.fusion[f];
            let c = &cache.fusion[f];
            let dout = &d_head_in[branch];
            outer_acc(&mut grad[fl.po.clone()], dout, &c.w);
            let mut dw = vec![0.0; d.gate];
            matvec_t_acc(&p[fl.po.clone()], d.hidden, d.gate, dout, &mut dw);
            // Residual path.
            for (a, b) in d_enc[branch].iter_mut().zip(dout) {
                *a += b;
            }
            let scale = |i: usize| c.mask.as_ref().map_or(1.0, |m| m[i]);
            let du: Vec<f64> = (0..d.gate).map(|i| dw[i] * c.g[i] * scale(i)).collect();
            let dv: Vec<f64> = (0..d.gate)
                .map(|i| dw[i] * c.u[i] * scale(i) * c.g[i] * (1.0 - c.g[i]))
                .collect();
            outer_acc(&mut grad[fl.px.clone()], &du, &cache.enc[branch]);
            matvec_t_acc(&p[fl.px.clone()], d.gate, d.hidden, &du, &mut d_enc[branch]);
            outer_acc(&mut grad[fl.py.clone()], &dv, &cache.enc[0]);
            matvec_t_acc(&p[fl.py.clone()], d.gate, d.hidden, &dv, &mut d_enc[0]);
        }

        // Encoders.
        for b in 0..3 {
            let e = &layout.enc[b];
            let dz: Vec<f64> = d_enc[b]
                .iter()
                .zip(&cache.enc[b])
                .map(|(g, h)| g * (1.0 - h * h))
                .collect();
            outer_acc(&mut grad[e.w.clone()], &dz, &cache.inputs[b]);
            for (g, v) in grad[e.b.clone()].iter_mut().zip(&dz) {
                *g += v;
            }
        }
    }
}
