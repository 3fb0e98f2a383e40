//! The pose network: embedding, temporal flow modules, spatiotemporal
//! kinematic flow modules and the linear regressor.
//!
//! Activations are `f32`; SSM state accumulates in `f64`.

pub mod blocks;
pub mod config;
pub mod layers;
pub mod tensor;
pub mod weights;

pub use blocks::{BiSsd, Gma, Lma, Skfm, SsdBlock, StmmTrace, Tfm};
pub use config::{ModelConfig, INPUT_DIM, OUTPUT_DIM};
pub use tensor::Matrix;
pub use weights::Weights;

use crate::error::{check_dim, Error, Result};
use crate::kinematics::ScanOrder;
use crate::pose::PoseSequence;

pub fn init_weights(config: &ModelConfig) -> Result<Weights> {
    Weights::init(config)
}

/// `P0 = x·W_e + b_e`.
pub fn embed(x: &Matrix, w: &Weights) -> Result<Matrix> {
    check_dim("input columns", w.config().input_dim, x.cols())?;
    Ok(w.embed.forward(x))
}

pub fn ssd_block(p: &Matrix, block: &SsdBlock) -> Result<Matrix> {
    block.forward(p)
}

pub fn bi_ssd(p: &Matrix, bi: &BiSsd) -> Result<(Matrix, Matrix)> {
    bi.forward(p)
}

pub fn lma(f: &Matrix, m: &Lma) -> Matrix {
    m.forward(f)
}

pub fn gma(f: &Matrix, m: &Gma) -> Matrix {
    m.forward(f)
}

pub fn tfm_forward(p: &Matrix, m: &Tfm) -> Result<Matrix> {
    m.forward(p)
}

pub fn stmm_forward(t_in: &Matrix, m: &Skfm, order: &ScanOrder) -> Result<Matrix> {
    m.forward_traced(t_in, order).map(|(out, _)| out)
}

/// Raw regressor output, `L × 132`.
pub fn kinest_forward_raw(x: &Matrix, w: &Weights) -> Result<Matrix> {
    if x.rows() == 0 {
        return Err(Error::InvalidValue("empty input sequence".into()));
    }
    let mut h = embed(x, w)?;
    for m in &w.tfm {
        h = m.forward(&h)?;
    }
    for m in &w.skfm {
        h = m.forward(&h)?;
    }
    let out = w.regressor.forward(&h);
    if !out.is_finite() {
        return Err(Error::InvalidValue("non-finite network output".into()));
    }
    Ok(out)
}

pub fn kinest_forward(x: &Matrix, config: &ModelConfig, w: &Weights) -> Result<PoseSequence> {
    if config != w.config() {
        return Err(Error::Config("weights were built for a different configuration".into()));
    }
    let out = kinest_forward_raw(x, w)?;
    let flat: Vec<f64> = out.data().iter().map(|&v| v as f64).collect();
    PoseSequence::from_flat(&flat, None)
}
