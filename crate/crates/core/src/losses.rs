//! Training losses on 6D pose sequences.
//!
//! | loss              | definition                                                     |
//! |-------------------|----------------------------------------------------------------|
//! | `loss_rot`        | mean `|y − z|` over all L × 22 × 6 components                  |
//! | `loss_ori`        | mean `|y − z|` over the root joint's L × 6 components          |
//! | `loss_angvel_geo` | `Σ_t mean_j |log(V_t) − log(V̂_t)|₁`, `V_t = R_{t−1}ᵀ R_t`      |
//! | `loss_angvel_diff`| `Σ_t |(z_t − z_{t−1}) − (y_t − y_{t−1})|₁` over raw 6D values |
//! | `loss_pos`        | mean squared FK position error over frames and joints          |
//! | `loss_vel`        | mean squared FK frame-difference error over steps and joints   |
//!
//! The training objective is `α·rot + β·ori + δ·angvel_geo`.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics_matrices, KinematicTree, NUM_JOINTS, ROOT};
use crate::pose::{check_same_shape, PoseSequence};
use crate::rotations::{
    log_backward, log_unchecked, relative_rotation, relative_rotation_backward, AxisAngle,
    GramSchmidt, RotationMatrix,
};

/// Distance from π (and from Gram–Schmidt degeneracy) below which the
/// analytic gradient is refused.
pub const GRAD_MARGIN: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.02,
            delta: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("delta", self.delta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidValue(format!("loss weight {name} = {v}")));
            }
        }
        Ok(())
    }
}

/// Unweighted terms of the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub rot: f64,
    pub ori: f64,
    pub angvel_geo: f64,
}

impl LossTerms {
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.alpha * self.rot + w.beta * self.ori + w.delta * self.angvel_geo
    }
}

pub fn loss_rot(y: &PoseSequence, z: &PoseSequence) -> Result<f64> {
    check_same_shape(y, z)?;
    let total: f64 = y
        .frames()
        .iter()
        .zip(z.frames())
        .flat_map(|(fy, fz)| fy.iter().zip(fz.iter()))
        .flat_map(|(ry, rz)| ry.0.iter().zip(rz.0.iter()))
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / (y.len() * NUM_JOINTS * 6) as f64)
}

pub fn loss_ori(y: &PoseSequence, z: &PoseSequence) -> Result<f64> {
    check_same_shape(y, z)?;
    let total: f64 = y
        .frames()
        .iter()
        .zip(z.frames())
        .flat_map(|(fy, fz)| fy[ROOT].0.iter().zip(fz[ROOT].0))
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / (y.len() * 6) as f64)
}

/// `log(R_{t−1}ᵀ R_t)` per joint for `t = 1..L`.
pub fn angular_velocity(p: &PoseSequence) -> Result<Vec<[AxisAngle; NUM_JOINTS]>> {
    if p.len() < 2 {
        return Err(Error::InvalidValue(format!(
            "angular velocity needs at least 2 frames, got {}",
            p.len()
        )));
    }
    let mats = p.matrices();
    Ok(mats
        .windows(2)
        .map(|w| std::array::from_fn(|j| log_unchecked(&relative_rotation(&w[0][j], &w[1][j]))))
        .collect())
}

pub fn loss_angvel_geo(y: &PoseSequence, z: &PoseSequence) -> Result<f64> {
    check_same_shape(y, z)?;
    let wy = angular_velocity(y)?;
    let wz = angular_velocity(z)?;
    let total: f64 = wy
        .iter()
        .zip(&wz)
        .map(|(fy, fz)| {
            fy.iter()
                .zip(fz)
                .map(|(a, b)| (b - a).abs().sum())
                .sum::<f64>()
                / NUM_JOINTS as f64
        })
        .sum();
    Ok(total)
}

pub fn loss_angvel_diff(y: &PoseSequence, z: &PoseSequence) -> Result<f64> {
    check_same_shape(y, z)?;
    if y.len() < 2 {
        return Err(Error::InvalidValue("angular velocity needs at least 2 frames".into()));
    }
    let fy = y.to_flat();
    let fz = z.to_flat();
    let width = NUM_JOINTS * 6;
    let mut total = 0.0;
    for t in 1..y.len() {
        for k in 0..width {
            let dz = fz[t * width + k] - fz[(t - 1) * width + k];
            let dy = fy[t * width + k] - fy[(t - 1) * width + k];
            total += (dz - dy).abs();
        }
    }
    Ok(total)
}

fn fk_sequence(p: &PoseSequence, tree: &KinematicTree) -> Vec<Vec<Vector3<f64>>> {
    p.matrices()
        .iter()
        .enumerate()
        .map(|(t, m)| forward_kinematics_matrices(m, tree, &p.root_at(t)))
        .collect()
}

pub fn loss_pos(y: &PoseSequence, z: &PoseSequence, tree: &KinematicTree) -> Result<f64> {
    check_same_shape(y, z)?;
    if y.is_empty() {
        return Err(Error::InvalidValue("empty pose sequence".into()));
    }
    let py = fk_sequence(y, tree);
    let pz = fk_sequence(z, tree);
    let total: f64 = py
        .iter()
        .zip(&pz)
        .flat_map(|(a, b)| a.iter().zip(b))
        .map(|(a, b)| (b - a).norm_squared())
        .sum();
    Ok(total / (y.len() * NUM_JOINTS) as f64)
}

pub fn loss_vel(y: &PoseSequence, z: &PoseSequence, tree: &KinematicTree) -> Result<f64> {
    check_same_shape(y, z)?;
    if y.len() < 2 {
        return Err(Error::InvalidValue("velocity loss needs at least 2 frames".into()));
    }
    let py = fk_sequence(y, tree);
    let pz = fk_sequence(z, tree);
    let mut total = 0.0;
    for t in 1..y.len() {
        for j in 0..NUM_JOINTS {
            let dz = pz[t][j] - pz[t - 1][j];
            let dy = py[t][j] - py[t - 1][j];
            total += (dz - dy).norm_squared();
        }
    }
    Ok(total / ((y.len() - 1) * NUM_JOINTS) as f64)
}

pub fn loss_terms(y: &PoseSequence, z: &PoseSequence) -> Result<LossTerms> {
    Ok(LossTerms {
        rot: loss_rot(y, z)?,
        ori: loss_ori(y, z)?,
        angvel_geo: loss_angvel_geo(y, z)?,
    })
}

pub fn total_loss(y: &PoseSequence, z: &PoseSequence, w: &LossWeights) -> Result<f64> {
    Ok(loss_terms(y, z)?.weighted(w))
}

/// Sign with `sign(0) = 0`, the subgradient chosen at L1 kinks.
#[inline]
fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Analytic gradient of [`total_loss`] with respect to every predicted 6D
/// component, row-major `L × 132`.
pub fn grad_total_loss(y: &PoseSequence, z: &PoseSequence, w: &LossWeights) -> Result<Vec<f64>> {
    check_same_shape(y, z)?;
    let len = y.len();
    let width = NUM_JOINTS * 6;
    let mut grad = vec![0.0; len * width];
    if len == 0 {
        return Ok(grad);
    }

    let rot_scale = w.alpha / (len * width) as f64;
    let ori_scale = w.beta / (len * 6) as f64;
    for t in 0..len {
        for j in 0..NUM_JOINTS {
            for k in 0..6 {
                let d = sign0(y.frame(t)[j].0[k] - z.frame(t)[j].0[k]);
                let mut g = rot_scale * d;
                if j == ROOT {
                    g += ori_scale * d;
                }
                grad[t * width + j * 6 + k] = g;
            }
        }
    }

    if w.delta == 0.0 {
        return Ok(grad);
    }
    if len < 2 {
        return Err(Error::InvalidValue("angular velocity needs at least 2 frames".into()));
    }

    let gs: Vec<Vec<GramSchmidt>> = y
        .frames()
        .iter()
        .map(|f| f.iter().map(GramSchmidt::forward).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    if let Some((t, j)) = (0..len)
        .flat_map(|t| (0..NUM_JOINTS).map(move |j| (t, j)))
        .find(|&(t, j)| gs[t][j].min_norm() < GRAD_MARGIN)
    {
        return Err(Error::Degenerate(format!(
            "frame {t} joint {j} within {GRAD_MARGIN:e} of Gram–Schmidt degeneracy"
        )));
    }
    let mats: Vec<Vec<RotationMatrix>> = gs
        .iter()
        .map(|f| f.iter().map(GramSchmidt::matrix).collect())
        .collect();
    let target = angular_velocity(z)?;

    let scale = w.delta / NUM_JOINTS as f64;
    let mut grad_r = vec![vec![RotationMatrix::zeros(); NUM_JOINTS]; len];
    for t in 1..len {
        for j in 0..NUM_JOINTS {
            let v = relative_rotation(&mats[t - 1][j], &mats[t][j]);
            let pred = log_unchecked(&v);
            // d/dω̂ of |ω − ω̂|₁
            let g_omega = (target[t - 1][j] - pred).map(|d| -scale * sign0(d));
            let g_v = log_backward(&v, &g_omega, GRAD_MARGIN)
                .map_err(|e| Error::Degenerate(format!("frame {t} joint {j}: {e}")))?;
            let (g_prev, g_curr) = relative_rotation_backward(&mats[t - 1][j], &mats[t][j], &g_v);
            grad_r[t - 1][j] += g_prev;
            grad_r[t][j] += g_curr;
        }
    }
    for t in 0..len {
        for j in 0..NUM_JOINTS {
            let g6 = gs[t][j].backward(&grad_r[t][j]);
            for (k, g) in g6.iter().enumerate() {
                grad[t * width + j * 6 + k] += g;
            }
        }
    }
    Ok(grad)
}
