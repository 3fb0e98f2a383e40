//! Parameterized layers and the seeded initializer.
//!
//! Initialization: every tensor draws from its own ChaCha8 stream, seeded
//! with the model seed and selected by the 64-bit FNV-1a hash of the
//! tensor's hierarchical name. Each value is `(2u − 1)/√fan_in` with `u`
//! a uniform `f64` in `[0, 1)`, rounded to `f32`. Biases start at zero and
//! layer-norm scales at one, except the decay-projection bias (see
//! [`DECAY_INIT`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Matrix;

pub const LN_EPS: f32 = 1e-5;
/// Decay reached at zero input right after initialization.
pub const DECAY_INIT: f64 = 0.9;

/// A named learnable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Param {
    pub fn filled(shape: &[usize], value: f32) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn uniform(shape: &[usize], fan_in: usize, init: &Init, name: &str) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut rng = init.stream(name);
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n)
                .map(|_| ((2.0 * rng.gen::<f64>() - 1.0) * bound) as f32)
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seeded source for per-tensor random streams.
#[derive(Debug, Clone, Copy)]
pub struct Init {
    pub seed: u64,
}

impl Init {
    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(fnv1a(name));
        rng
    }
}

/// Collects `(name, param)` pairs in a fixed order.
pub trait Module {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>);
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>);
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `y = x·W + b`, `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(inp: usize, out: usize, init: &Init, name: &str) -> Self {
        Self {
            weight: Param::uniform(&[inp, out], inp, init, &join(name, "weight")),
            bias: Param::filled(&[out], 0.0),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        debug_assert_eq!(x.cols(), self.in_dim());
        let out_dim = self.out_dim();
        let mut y = x.matmul(&self.weight.data, out_dim);
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias.data) {
                *v += b;
            }
        }
        y
    }
}

impl Module for Linear {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

/// Row-wise layer normalization with learnable scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub scale: Param,
    pub shift: Param,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            scale: Param::filled(&[dim], 1.0),
            shift: Param::filled(&[dim], 0.0),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.clone();
        let n = x.cols() as f32;
        for r in 0..y.rows() {
            let row = y.row_mut(r);
            let mean = row.iter().sum::<f32>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for ((v, g), b) in row.iter_mut().zip(&self.scale.data).zip(&self.shift.data) {
                *v = (*v - mean) * inv * g + b;
            }
        }
        y
    }
}

impl Module for LayerNorm {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        out.push((join(prefix, "scale"), &self.scale));
        out.push((join(prefix, "shift"), &self.shift));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((join(prefix, "scale"), &mut self.scale));
        out.push((join(prefix, "shift"), &mut self.shift));
    }
}

/// Causal depthwise 1-D convolution along rows:
/// `y[t][c] = b[c] + Σ_k w[k][c] · x[t − (K−1) + k][c]`, zero before row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalConv {
    pub kernel: Param,
    pub bias: Param,
}

impl CausalConv {
    pub fn new(width: usize, channels: usize, init: &Init, name: &str) -> Self {
        Self {
            kernel: Param::uniform(&[width, channels], width, init, &join(name, "kernel")),
            bias: Param::filled(&[channels], 0.0),
        }
    }

    pub fn width(&self) -> usize {
        self.kernel.shape[0]
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let (k, ch) = (self.width(), x.cols());
        debug_assert_eq!(ch, self.kernel.shape[1]);
        let mut y = Matrix::zeros(x.rows(), ch);
        for t in 0..x.rows() {
            let out = y.row_mut(t);
            out.copy_from_slice(&self.bias.data);
            for tap in 0..k {
                let Some(src) = (t + tap + 1).checked_sub(k) else {
                    continue;
                };
                let w = &self.kernel.data[tap * ch..(tap + 1) * ch];
                for ((o, &wv), &xv) in out.iter_mut().zip(w).zip(x.row(src)) {
                    *o += wv * xv;
                }
            }
        }
        y
    }
}

impl Module for CausalConv {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        out.push((join(prefix, "kernel"), &self.kernel));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((join(prefix, "kernel"), &mut self.kernel));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

pub fn silu(v: f32) -> f32 {
    v / (1.0 + (-v).exp())
}

pub fn softplus(v: f64) -> f64 {
    if v > 20.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

/// Maps a raw projection to a decay in `(0, 1)`.
/// Clamped away from zero so very large inputs still give a valid decay.
pub fn decay_from_raw(raw: f64) -> f64 {
    (-softplus(raw)).exp().max(f64::MIN_POSITIVE)
}

/// Raw value whose decay is `a`.
pub fn raw_for_decay(a: f64) -> f64 {
    (-a.ln()).exp_m1().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_init_inverts() {
        let raw = raw_for_decay(DECAY_INIT);
        assert!((decay_from_raw(raw) - DECAY_INIT).abs() < 1e-12);
        assert!(decay_from_raw(1e4) > 0.0);
        assert!(decay_from_raw(-50.0) <= 1.0);
    }

    #[test]
    fn causal_conv_taps() {
        let init = Init { seed: 0 };
        let mut conv = CausalConv::new(3, 1, &init, "c");
        conv.kernel.data = vec![1.0, 10.0, 100.0];
        conv.bias.data = vec![0.5];
        let x = Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conv.forward(&x);
        assert_eq!(y.data(), &[100.5, 210.5, 321.5, 432.5]);
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let ln = LayerNorm::new(4);
        let x = Matrix::from_vec(1, 4, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let y = ln.forward(&x);
        let mean: f32 = y.data().iter().sum::<f32>() / 4.0;
        let var: f32 = y.data().iter().map(|v| v * v).sum::<f32>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn streams_depend_on_name_and_seed() {
        let a = Param::uniform(&[8], 4, &Init { seed: 1 }, "x");
        let b = Param::uniform(&[8], 4, &Init { seed: 1 }, "x");
        let c = Param::uniform(&[8], 4, &Init { seed: 1 }, "y");
        let d = Param::uniform(&[8], 4, &Init { seed: 2 }, "x");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert!(a.data.iter().all(|v| v.abs() <= 0.5));
    }
}
