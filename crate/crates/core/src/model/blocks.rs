//! Network blocks: SSD block, bidirectional SSD, local/global motion
//! aggregators, and the temporal and spatiotemporal flow modules.

use crate::error::{check_dim, Result};
use crate::kinematics::{
    reorder_joint_features, scatter_joint_features, Direction, ScanOrder, NUM_JOINTS,
};
use crate::ssd::{chunked_scan, SsdParams};

use super::config::ModelConfig;
use super::layers::{
    decay_from_raw, join, raw_for_decay, silu, CausalConv, Init, LayerNorm, Linear, Module, Param,
    DECAY_INIT,
};
use super::tensor::Matrix;

/// One selective SSD block over `width` channels.
///
/// ```text
///   u       = LN(p)
///   X, B, C = SiLU(Conv(Linear(u)))        causal depthwise conv
///   a       = exp(−softplus(Linear(u)))    one decay per head
///   f1      = SiLU(Linear(u))
///   out     = Linear(LN(f1 ⊙ SSM(X, a, B, C)))
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SsdBlock {
    pub norm: LayerNorm,
    pub in_proj: Linear,
    pub conv: CausalConv,
    pub decay_proj: Linear,
    pub gate_proj: Linear,
    pub out_norm: LayerNorm,
    pub out_proj: Linear,
    width: usize,
    state: usize,
    heads: usize,
    head_dim: usize,
    chunk: usize,
}

impl SsdBlock {
    pub fn new(width: usize, config: &ModelConfig, init: &Init, name: &str) -> Self {
        let (heads, head_dim) = config.ssd_heads(width);
        let xbc = width + 2 * config.ssd_state;
        let mut decay_proj = Linear::new(width, heads, init, &join(name, "decay_proj"));
        decay_proj.bias.data.fill(raw_for_decay(DECAY_INIT) as f32);
        Self {
            norm: LayerNorm::new(width),
            in_proj: Linear::new(width, xbc, init, &join(name, "in_proj")),
            conv: CausalConv::new(config.conv_width, xbc, init, &join(name, "conv")),
            decay_proj,
            gate_proj: Linear::new(width, width, init, &join(name, "gate_proj")),
            out_norm: LayerNorm::new(width),
            out_proj: Linear::new(width, width, init, &join(name, "out_proj")),
            width,
            state: config.ssd_state,
            heads,
            head_dim,
            chunk: config.chunk,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// SSM inputs per head: decays, B, C and X for a `T × width` input.
    pub fn ssm_params(&self, p: &Matrix) -> Result<Vec<SsdParams>> {
        let u = self.norm.forward(p);
        let xbc = self.conv.forward(&self.in_proj.forward(&u)).map(silu);
        let raw = self.decay_proj.forward(&u);
        let len = p.rows();
        let (w, n) = (self.width, self.state);
        let to_f64 = |m: &Matrix| m.data().iter().map(|&v| v as f64).collect::<Vec<_>>();
        let b = to_f64(&xbc.columns(w, n));
        let c = to_f64(&xbc.columns(w + n, n));
        (0..self.heads)
            .map(|h| {
                let a = (0..len).map(|t| decay_from_raw(raw.get(t, h) as f64)).collect();
                let x = to_f64(&xbc.columns(h * self.head_dim, self.head_dim));
                SsdParams::new(a, b.clone(), c.clone(), x, n, self.head_dim)
            })
            .collect()
    }

    pub fn forward(&self, p: &Matrix) -> Result<Matrix> {
        check_dim("ssd block width", self.width, p.cols())?;
        let len = p.rows();
        let params = self.ssm_params(p)?;
        let mut y = Matrix::zeros(len, self.width);
        let chunk = self.chunk.min(len);
        for (h, prm) in params.iter().enumerate() {
            let out = chunked_scan(prm, chunk)?;
            for t in 0..len {
                let dst = &mut y.row_mut(t)[h * self.head_dim..(h + 1) * self.head_dim];
                for (d, &v) in dst.iter_mut().zip(&out[t * self.head_dim..(t + 1) * self.head_dim]) {
                    *d = v as f32;
                }
            }
        }
        let gate = self.gate_proj.forward(&self.norm.forward(p)).map(silu);
        Ok(self.out_proj.forward(&self.out_norm.forward(&gate.mul_elem(&y))))
    }
}

impl Module for SsdBlock {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        self.norm.params(&join(prefix, "norm"), out);
        self.in_proj.params(&join(prefix, "in_proj"), out);
        self.conv.params(&join(prefix, "conv"), out);
        self.decay_proj.params(&join(prefix, "decay_proj"), out);
        self.gate_proj.params(&join(prefix, "gate_proj"), out);
        self.out_norm.params(&join(prefix, "out_norm"), out);
        self.out_proj.params(&join(prefix, "out_proj"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        self.norm.params_mut(&join(prefix, "norm"), out);
        self.in_proj.params_mut(&join(prefix, "in_proj"), out);
        self.conv.params_mut(&join(prefix, "conv"), out);
        self.decay_proj.params_mut(&join(prefix, "decay_proj"), out);
        self.gate_proj.params_mut(&join(prefix, "gate_proj"), out);
        self.out_norm.params_mut(&join(prefix, "out_norm"), out);
        self.out_proj.params_mut(&join(prefix, "out_proj"), out);
    }
}

/// Forward and backward SSD branches. With tied branches `bwd` is `None`
/// and the forward block serves both.
#[derive(Debug, Clone, PartialEq)]
pub struct BiSsd {
    pub fwd: SsdBlock,
    pub bwd: Option<SsdBlock>,
}

impl BiSsd {
    pub fn new(width: usize, config: &ModelConfig, init: &Init, name: &str) -> Self {
        Self {
            fwd: SsdBlock::new(width, config, init, &join(name, "fwd")),
            bwd: (!config.tie_branches).then(|| SsdBlock::new(width, config, init, &join(name, "bwd"))),
        }
    }

    pub fn backward_block(&self) -> &SsdBlock {
        self.bwd.as_ref().unwrap_or(&self.fwd)
    }

    /// `(fwd(p), flip(bwd(flip(p))))`.
    pub fn forward(&self, p: &Matrix) -> Result<(Matrix, Matrix)> {
        let f = self.fwd.forward(p)?;
        let b = self.backward_block().forward(&p.flip_rows())?.flip_rows();
        Ok((f, b))
    }
}

impl Module for BiSsd {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        self.fwd.params(&join(prefix, "fwd"), out);
        if let Some(b) = &self.bwd {
            b.params(&join(prefix, "bwd"), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        self.fwd.params_mut(&join(prefix, "fwd"), out);
        if let Some(b) = &mut self.bwd {
            b.params_mut(&join(prefix, "bwd"), out);
        }
    }
}

/// Local motion aggregator: `SiLU(Conv1×1(LN(f)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lma {
    pub norm: LayerNorm,
    pub conv: Linear,
}

impl Lma {
    pub fn new(dim: usize, init: &Init, name: &str) -> Self {
        Self {
            norm: LayerNorm::new(dim),
            conv: Linear::new(dim, dim, init, &join(name, "conv")),
        }
    }

    pub fn forward(&self, f: &Matrix) -> Matrix {
        self.conv.forward(&self.norm.forward(f)).map(silu)
    }
}

impl Module for Lma {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        self.norm.params(&join(prefix, "norm"), out);
        self.conv.params(&join(prefix, "conv"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        self.norm.params_mut(&join(prefix, "norm"), out);
        self.conv.params_mut(&join(prefix, "conv"), out);
    }
}

/// Global motion aggregator: projection to the attention width, LN,
/// single-layer multi-head self-attention over frames and a feed-forward
/// network (both residual), projection back.
#[derive(Debug, Clone, PartialEq)]
pub struct Gma {
    pub in_proj: Linear,
    pub norm: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub out_proj: Linear,
    heads: usize,
    positional: bool,
}

impl Gma {
    pub fn new(dim: usize, config: &ModelConfig, init: &Init, name: &str) -> Self {
        let g = config.gma_hidden;
        let ffn = config.gma_ffn_mult * g;
        let lin = |i, o, n: &str| Linear::new(i, o, init, &join(name, n));
        Self {
            in_proj: lin(dim, g, "in_proj"),
            norm: LayerNorm::new(g),
            query: lin(g, g, "query"),
            key: lin(g, g, "key"),
            value: lin(g, g, "value"),
            attn_out: lin(g, g, "attn_out"),
            ffn_in: lin(g, ffn, "ffn_in"),
            ffn_out: lin(ffn, g, "ffn_out"),
            out_proj: lin(g, dim, "out_proj"),
            heads: config.gma_heads,
            positional: config.gma_positional,
        }
    }

    fn hidden(&self) -> usize {
        self.query.in_dim()
    }

    fn attention_input(&self, f: &Matrix) -> Matrix {
        let mut h = self.norm.forward(&self.in_proj.forward(f));
        if self.positional {
            h.add_assign(&sinusoidal_encoding(h.rows(), h.cols()));
        }
        h
    }

    /// Softmax attention weights, one `L × L` matrix per head.
    pub fn attention_weights(&self, f: &Matrix) -> Vec<Matrix> {
        let h = self.attention_input(f);
        let q = self.query.forward(&h);
        let k = self.key.forward(&h);
        self.head_weights(&q, &k)
    }

    fn head_weights(&self, q: &Matrix, k: &Matrix) -> Vec<Matrix> {
        let len = q.rows();
        let dh = self.hidden() / self.heads;
        let scale = 1.0 / (dh as f32).sqrt();
        (0..self.heads)
            .map(|hd| {
                let cols = hd * dh..(hd + 1) * dh;
                let mut w = Matrix::zeros(len, len);
                for i in 0..len {
                    let qi = &q.row(i)[cols.clone()];
                    let row = w.row_mut(i);
                    for (j, s) in row.iter_mut().enumerate() {
                        let kj = &k.row(j)[cols.clone()];
                        *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
                    }
                    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                    let mut sum = 0.0;
                    for s in row.iter_mut() {
                        *s = (*s - max).exp();
                        sum += *s;
                    }
                    for s in row.iter_mut() {
                        *s /= sum;
                    }
                }
                w
            })
            .collect()
    }

    pub fn forward(&self, f: &Matrix) -> Matrix {
        let mut h = self.attention_input(f);
        let q = self.query.forward(&h);
        let k = self.key.forward(&h);
        let v = self.value.forward(&h);
        let weights = self.head_weights(&q, &k);
        let dh = self.hidden() / self.heads;
        let mut mixed = Matrix::zeros(h.rows(), h.cols());
        for (hd, w) in weights.iter().enumerate() {
            for i in 0..h.rows() {
                let dst = &mut mixed.row_mut(i)[hd * dh..(hd + 1) * dh];
                for (j, &wij) in w.row(i).iter().enumerate() {
                    for (d, &vv) in dst.iter_mut().zip(&v.row(j)[hd * dh..(hd + 1) * dh]) {
                        *d += wij * vv;
                    }
                }
            }
        }
        h.add_assign(&self.attn_out.forward(&mixed));
        let ffn = self.ffn_out.forward(&self.ffn_in.forward(&h).map(silu));
        h.add_assign(&ffn);
        self.out_proj.forward(&h)
    }
}

impl Module for Gma {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        self.in_proj.params(&join(prefix, "in_proj"), out);
        self.norm.params(&join(prefix, "norm"), out);
        self.query.params(&join(prefix, "query"), out);
        self.key.params(&join(prefix, "key"), out);
        self.value.params(&join(prefix, "value"), out);
        self.attn_out.params(&join(prefix, "attn_out"), out);
        self.ffn_in.params(&join(prefix, "ffn_in"), out);
        self.ffn_out.params(&join(prefix, "ffn_out"), out);
        self.out_proj.params(&join(prefix, "out_proj"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        self.in_proj.params_mut(&join(prefix, "in_proj"), out);
        self.norm.params_mut(&join(prefix, "norm"), out);
        self.query.params_mut(&join(prefix, "query"), out);
        self.key.params_mut(&join(prefix, "key"), out);
        self.value.params_mut(&join(prefix, "value"), out);
        self.attn_out.params_mut(&join(prefix, "attn_out"), out);
        self.ffn_in.params_mut(&join(prefix, "ffn_in"), out);
        self.ffn_out.params_mut(&join(prefix, "ffn_out"), out);
        self.out_proj.params_mut(&join(prefix, "out_proj"), out);
    }
}

/// Standard transformer sin/cos encoding of frame index.
pub fn sinusoidal_encoding(len: usize, dim: usize) -> Matrix {
    let mut m = Matrix::zeros(len, dim);
    for t in 0..len {
        let row = m.row_mut(t);
        for i in 0..dim / 2 {
            let freq = (10000f64).powf(-((2 * i) as f64) / dim as f64);
            let angle = t as f64 * freq;
            row[2 * i] = angle.sin() as f32;
            row[2 * i + 1] = angle.cos() as f32;
        }
    }
    m
}

/// Temporal flow module: `GMA(LMA(f_f + f_b))` with `(f_f, f_b) = BiSSD(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tfm {
    pub bi: BiSsd,
    pub lma: Lma,
    pub gma: Gma,
}

impl Tfm {
    pub fn new(config: &ModelConfig, init: &Init, name: &str) -> Self {
        let e = config.embed_dim;
        Self {
            bi: BiSsd::new(e, config, init, &join(name, "bi")),
            lma: Lma::new(e, init, &join(name, "lma")),
            gma: Gma::new(e, config, init, &join(name, "gma")),
        }
    }

    pub fn forward(&self, p: &Matrix) -> Result<Matrix> {
        let (f, b) = self.bi.forward(p)?;
        Ok(self.gma.forward(&self.lma.forward(&f.add(&b))))
    }
}

impl Module for Tfm {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        self.bi.params(&join(prefix, "bi"), out);
        self.lma.params(&join(prefix, "lma"), out);
        self.gma.params(&join(prefix, "gma"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        self.bi.params_mut(&join(prefix, "bi"), out);
        self.lma.params_mut(&join(prefix, "lma"), out);
        self.gma.params_mut(&join(prefix, "gma"), out);
    }
}

/// Spatiotemporal kinematic flow module built around the mixing mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct Skfm {
    pub up: Linear,
    pub bi: BiSsd,
    pub down: Linear,
    pub lma: Lma,
    pub gma: Gma,
    order: ScanOrder,
    joint_dim: usize,
}

/// Intermediate tensors of one mixing pass, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct StmmTrace {
    /// `(L·J_f) × D`, frame-major.
    pub mixed_forward: Matrix,
    /// `(L·J_b) × D`, frame-major.
    pub mixed_backward: Matrix,
    /// `L × H` after summing both branches back in canonical joint order.
    pub merged: Matrix,
}

impl Skfm {
    pub fn new(config: &ModelConfig, init: &Init, name: &str) -> Self {
        let (e, h, d) = (config.embed_dim, config.mixed_dim(), config.joint_dim);
        Self {
            up: Linear::new(e, h, init, &join(name, "up")),
            bi: BiSsd::new(d, config, init, &join(name, "bi")),
            down: Linear::new(h, e, init, &join(name, "down")),
            lma: Lma::new(e, init, &join(name, "lma")),
            gma: Gma::new(e, config, init, &join(name, "gma")),
            order: config.scan_strategy.order(),
            joint_dim: d,
        }
    }

    pub fn order(&self) -> &ScanOrder {
        &self.order
    }

    /// Projects to joint space and gathers along both scan directions,
    /// returning the two flattened `(L·|order|) × D` sequences.
    pub fn mix_inputs(&self, t_in: &Matrix, order: &ScanOrder) -> Result<(Matrix, Matrix)> {
        let s = self.up.forward(t_in);
        let (len, d) = (s.rows(), self.joint_dim);
        let rows = len * order.len();
        let gather = |dir| {
            reorder_joint_features(s.data(), len, NUM_JOINTS, d, order, dir)
                .and_then(|v| Matrix::from_vec(rows, d, v))
        };
        Ok((gather(Direction::Forward)?, gather(Direction::Backward)?))
    }

    /// Runs the module with an explicit scan order, also returning the
    /// intermediate mixed tensors.
    pub fn forward_traced(&self, t_in: &Matrix, order: &ScanOrder) -> Result<(Matrix, StmmTrace)> {
        check_dim("skfm input width", self.up.in_dim(), t_in.cols())?;
        let len = t_in.rows();
        let d = self.joint_dim;
        let span = order.len();
        let (s_f, s_b) = self.mix_inputs(t_in, order)?;

        let out_f = self.bi.fwd.forward(&s_f)?;
        // The backward branch reads the backward joint order with frames
        // reversed, i.e. the exact reversal of the forward mixed sequence.
        let out_b = reverse_frames(
            &self.bi.backward_block().forward(&reverse_frames(&s_b, len, span))?,
            len,
            span,
        );

        let merged_f = scatter_joint_features(out_f.data(), len, NUM_JOINTS, d, order, Direction::Forward)?;
        let merged_b = scatter_joint_features(out_b.data(), len, NUM_JOINTS, d, order, Direction::Backward)?;
        let merged = Matrix::from_vec(len, NUM_JOINTS * d, merged_f)?
            .add(&Matrix::from_vec(len, NUM_JOINTS * d, merged_b)?);

        let out = self.gma.forward(&self.lma.forward(&self.down.forward(&merged)));
        Ok((
            out,
            StmmTrace {
                mixed_forward: s_f,
                mixed_backward: s_b,
                merged,
            },
        ))
    }

    pub fn forward(&self, t_in: &Matrix) -> Result<Matrix> {
        self.forward_traced(t_in, &self.order).map(|(out, _)| out)
    }
}

/// Reverses the order of `frames` blocks of `span` rows, keeping rows
/// inside each block in place.
pub fn reverse_frames(m: &Matrix, frames: usize, span: usize) -> Matrix {
    let mut data = Vec::with_capacity(m.data().len());
    for l in (0..frames).rev() {
        for k in 0..span {
            data.extend_from_slice(m.row(l * span + k));
        }
    }
    Matrix::from_vec(m.rows(), m.cols(), data).expect("same shape")
}

impl Module for Skfm {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        self.up.params(&join(prefix, "up"), out);
        self.bi.params(&join(prefix, "bi"), out);
        self.down.params(&join(prefix, "down"), out);
        self.lma.params(&join(prefix, "lma"), out);
        self.gma.params(&join(prefix, "gma"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        self.up.params_mut(&join(prefix, "up"), out);
        self.bi.params_mut(&join(prefix, "bi"), out);
        self.down.params_mut(&join(prefix, "down"), out);
        self.lma.params_mut(&join(prefix, "lma"), out);
        self.gma.params_mut(&join(prefix, "gma"), out);
    }
}
