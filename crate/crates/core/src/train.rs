//! Micro-scale training with simultaneous-perturbation stochastic
//! approximation (SPSA).
//!
//! Step `k` draws a Rademacher direction `Δ ∈ {−1, 1}^d`, evaluates the
//! loss at `θ ± c_k Δ` and updates
//!
//! ```text
//!   θ ← θ − a_k · (L(θ + c_kΔ) − L(θ − c_kΔ)) / (2 c_k) · Δ
//!   a_k = lr / (k + 1 + lr_offset)^lr_exp,   c_k = perturb / (k + 1)^perturb_exp
//! ```
//!
//! so every step costs exactly two forward passes. The recorded loss of a
//! step is the mean of the two evaluations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::{total_loss, LossWeights};
use crate::model::{kinest_forward_raw, Matrix, Weights};
use crate::pose::PoseSequence;

/// Largest model accepted for micro-scale training.
pub const MAX_TRAIN_PARAMS: usize = 20_000;
/// Divergence: loss above this multiple of the initial loss ...
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// ... for this many consecutive steps.
pub const DIVERGENCE_PATIENCE: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SpsaConfig {
    pub lr: f64,
    pub lr_offset: f64,
    pub lr_exp: f64,
    pub perturb: f64,
    pub perturb_exp: f64,
    /// Moving-average window for the smoothed loss.
    pub smoothing: usize,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            lr_offset: 50.0,
            lr_exp: 0.602,
            perturb: 1e-2,
            perturb_exp: 0.101,
            smoothing: 25,
        }
    }
}

impl SpsaConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("spsa_lr", self.lr), ("spsa_perturb", self.perturb)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("spsa_lr_offset", self.lr_offset),
            ("spsa_lr_exp", self.lr_exp),
            ("spsa_perturb_exp", self.perturb_exp),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.smoothing == 0 {
            return Err(Error::Config("spsa_smoothing must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Loss of the starting weights.
    pub initial: f64,
    /// Per-step loss estimates.
    pub trace: Vec<f64>,
    /// Loss of the final weights.
    pub final_loss: f64,
    pub smoothing: usize,
}

impl TrainReport {
    /// Trailing moving average of the trace, one value per step.
    pub fn smoothed(&self) -> Vec<f64> {
        let w = self.smoothing;
        let mut out = Vec::with_capacity(self.trace.len());
        let mut sum = 0.0;
        for (i, &v) in self.trace.iter().enumerate() {
            sum += v;
            if i >= w {
                sum -= self.trace[i - w];
            }
            out.push(sum / (i + 1).min(w) as f64);
        }
        out
    }

    /// `1 − smoothed_final / initial`.
    pub fn relative_decrease(&self) -> f64 {
        match self.smoothed().last() {
            Some(&last) => 1.0 - last / self.initial,
            None => 0.0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,smoothed\n");
        for (i, (l, s)) in self.trace.iter().zip(self.smoothed()).enumerate() {
            out.push_str(&format!("{i},{l},{s}\n"));
        }
        out
    }
}

/// Training objective of `weights` on one sequence; degenerate outputs
/// count as infinite loss.
pub fn evaluate(weights: &Weights, input: &Matrix, target: &PoseSequence, loss: &LossWeights) -> f64 {
    kinest_forward_raw(input, weights)
        .and_then(|out| {
            let flat: Vec<f64> = out.data().iter().map(|&v| v as f64).collect();
            PoseSequence::from_flat(&flat, None)
        })
        .and_then(|y| total_loss(&y, target, loss))
        .unwrap_or(f64::INFINITY)
}

pub fn train_micro(
    weights: &mut Weights,
    input: &Matrix,
    target: &PoseSequence,
    loss: &LossWeights,
    spsa: &SpsaConfig,
    iters: usize,
) -> Result<TrainReport> {
    spsa.validate()?;
    loss.validate()?;
    let count = weights.param_count();
    if count > MAX_TRAIN_PARAMS {
        return Err(Error::Config(format!(
            "{count} parameters exceed the micro-training limit of {MAX_TRAIN_PARAMS}"
        )));
    }
    if input.rows() != target.len() {
        return Err(Error::Dimension {
            context: "training frames",
            expected: target.len(),
            actual: input.rows(),
        });
    }
    let initial = evaluate(weights, input, target, loss);
    if !initial.is_finite() {
        return Err(Error::InvalidValue("initial loss is not finite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(weights.config().seed);
    let mut theta: Vec<f32> = weights.to_flat();
    let mut probe = weights.clone();
    let mut trace = Vec::with_capacity(iters);
    let mut above = 0;
    for k in 0..iters {
        let a_k = spsa.lr / (k as f64 + 1.0 + spsa.lr_offset).powf(spsa.lr_exp);
        let c_k = spsa.perturb / (k as f64 + 1.0).powf(spsa.perturb_exp);
        let delta: Vec<f32> = (0..count)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let shifted = |sign: f32| -> Vec<f32> {
            theta
                .iter()
                .zip(&delta)
                .map(|(&t, &d)| t + sign * c_k as f32 * d)
                .collect()
        };
        probe.set_flat(&shifted(1.0))?;
        let plus = evaluate(&probe, input, target, loss);
        probe.set_flat(&shifted(-1.0))?;
        let minus = evaluate(&probe, input, target, loss);

        // a non-finite evaluation skips the update but still counts
        // towards divergence
        if plus.is_finite() && minus.is_finite() {
            let g = ((plus - minus) / (2.0 * c_k) * a_k) as f32;
            for (t, &d) in theta.iter_mut().zip(&delta) {
                *t -= g * d;
            }
        }
        let estimate = 0.5 * (plus + minus);
        trace.push(estimate);

        above = if estimate > DIVERGENCE_FACTOR * initial { above + 1 } else { 0 };
        if above >= DIVERGENCE_PATIENCE {
            return Err(Error::Diverged(k));
        }
    }
    weights.set_flat(&theta)?;
    let final_loss = evaluate(weights, input, target, loss);
    Ok(TrainReport {
        initial,
        trace,
        final_loss,
        smoothing: spsa.smoothing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::KinematicTree;
    use crate::model::ModelConfig;
    use crate::synth::{sparse_from_pose, synthetic_pose};

    fn data(len: usize) -> (Matrix, PoseSequence) {
        let pose = synthetic_pose(0, len, 60.0).unwrap();
        let x = sparse_from_pose(&pose, &KinematicTree::smpl_default(), 60.0).unwrap();
        (x, pose.with_root(None).unwrap())
    }

    #[test]
    fn micro_config_fits_limit() {
        assert!(ModelConfig::micro().param_count() <= MAX_TRAIN_PARAMS);
    }

    #[test]
    fn zero_iterations_keep_weights() {
        let mut w = Weights::init(&ModelConfig::micro()).unwrap();
        let before = w.clone();
        let (x, z) = data(8);
        let r = train_micro(&mut w, &x, &z, &LossWeights::default(), &SpsaConfig::default(), 0).unwrap();
        assert_eq!(w, before);
        assert!(r.trace.is_empty());
        assert_eq!(r.initial, r.final_loss);
    }

    #[test]
    fn deterministic_trace() {
        let (x, z) = data(8);
        let run = || {
            let mut w = Weights::init(&ModelConfig::micro()).unwrap();
            train_micro(&mut w, &x, &z, &LossWeights::default(), &SpsaConfig::default(), 5)
                .unwrap()
                .trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_large_models() {
        let mut w = Weights::init(&ModelConfig {
            embed_dim: 64,
            ..ModelConfig::micro()
        })
        .unwrap();
        let (x, z) = data(8);
        assert!(train_micro(&mut w, &x, &z, &LossWeights::default(), &SpsaConfig::default(), 1).is_err());
    }

    #[test]
    fn detects_divergence() {
        let mut w = Weights::init(&ModelConfig::micro()).unwrap();
        let (x, z) = data(8);
        let wild = SpsaConfig {
            lr: 1e6,
            lr_offset: 0.0,
            ..SpsaConfig::default()
        };
        match train_micro(&mut w, &x, &z, &LossWeights::default(), &wild, 400) {
            Err(Error::Diverged(_)) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn smoothing_window() {
        let r = TrainReport {
            initial: 4.0,
            trace: vec![4.0, 2.0, 0.0, 2.0],
            final_loss: 2.0,
            smoothing: 2,
        };
        assert_eq!(r.smoothed(), vec![4.0, 3.0, 1.0, 1.0]);
        assert_eq!(r.relative_decrease(), 0.75);
    }
}
