//! Smooth synthetic motion for tests, demos and micro-scale training.
//!
//! Each joint's local rotation is `exp(ω_j(t))` where every component of
//! `ω_j` is a sum of three low-frequency sinusoids (0.1–1 Hz). The root
//! also drifts along sinusoidal paths. Sparse tracker signals are derived
//! from such a pose through forward kinematics, so the two kinds generated
//! with the same seed describe the same motion.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::seqfile::{SeqKind, SequenceFile};
use crate::kinematics::{global_transforms, KinematicTree, NUM_JOINTS};
use crate::model::{Matrix, INPUT_DIM};
use crate::pose::PoseSequence;
use crate::rotations::{exp_map, relative_rotation, Rot6D};

/// Head, left wrist, right wrist.
pub const TRACKED_JOINTS: [usize; 3] = [15, 20, 21];

/// Per-component joint rotation amplitude bound, radians.
const JOINT_AMPLITUDE: f64 = 0.5;
const ROOT_AMPLITUDE: f64 = 0.3;
const ROOT_HEIGHT: f64 = 0.9;

struct Wave {
    amp: f64,
    freq: f64,
    phase: f64,
}

impl Wave {
    fn random(rng: &mut ChaCha8Rng, bound: f64) -> [Wave; 3] {
        std::array::from_fn(|_| Wave {
            amp: rng.gen_range(0.0..bound / 3.0),
            freq: rng.gen_range(0.1..1.0),
            phase: rng.gen_range(0.0..TAU),
        })
    }
}

fn eval(waves: &[Wave; 3], seconds: f64) -> f64 {
    waves
        .iter()
        .map(|w| w.amp * (TAU * w.freq * seconds + w.phase).sin())
        .sum()
}

/// Deterministic smooth pose sequence with root translation.
pub fn synthetic_pose(seed: u64, len: usize, fps: f64) -> Result<PoseSequence> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidValue(format!("fps {fps} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joint_waves: Vec<[[Wave; 3]; 3]> = (0..NUM_JOINTS)
        .map(|_| std::array::from_fn(|_| Wave::random(&mut rng, JOINT_AMPLITUDE)))
        .collect();
    let root_waves: [[Wave; 3]; 3] = std::array::from_fn(|_| Wave::random(&mut rng, ROOT_AMPLITUDE));

    let mut frames = Vec::with_capacity(len);
    let mut root = Vec::with_capacity(len);
    for t in 0..len {
        let s = t as f64 / fps;
        frames.push(std::array::from_fn(|j| {
            let w = &joint_waves[j];
            let omega = Vector3::new(eval(&w[0], s), eval(&w[1], s), eval(&w[2], s));
            Rot6D::from_matrix(&exp_map(&omega))
        }));
        let r = &root_waves;
        root.push(Vector3::new(eval(&r[0], s), ROOT_HEIGHT + eval(&r[1], s), eval(&r[2], s)));
    }
    PoseSequence::new(frames, Some(root))
}

/// Tracker signals for the head and both wrists: global position, global
/// 6D rotation, linear velocity and frame-to-frame rotation as 6D, in that
/// order per tracker. The first frame has zero velocity and identity
/// rotation change.
pub fn sparse_from_pose(pose: &PoseSequence, tree: &KinematicTree, fps: f64) -> Result<Matrix> {
    let mut out = Vec::with_capacity(pose.len() * INPUT_DIM);
    let mut prev: Option<(Vec<_>, Vec<_>)> = None;
    for (t, local) in pose.matrices().iter().enumerate() {
        let (rot, pos) = global_transforms(local, tree, &pose.root_at(t));
        for &j in &TRACKED_JOINTS {
            let (vel, turn) = match &prev {
                Some((prot, ppos)) => (
                    (pos[j] - ppos[j]) * fps,
                    relative_rotation(&prot[j], &rot[j]),
                ),
                None => (Vector3::zeros(), nalgebra::Matrix3::identity()),
            };
            out.extend(pos[j].iter().map(|&v| v as f32));
            out.extend(Rot6D::from_matrix(&rot[j]).0.iter().map(|&v| v as f32));
            out.extend(vel.iter().map(|&v| v as f32));
            out.extend(Rot6D::from_matrix(&turn).0.iter().map(|&v| v as f32));
        }
        prev = Some((rot, pos));
    }
    Matrix::from_vec(pose.len(), INPUT_DIM, out)
}

pub fn gen_synthetic(seed: u64, len: usize, kind: SeqKind, fps: f64) -> Result<SequenceFile> {
    if len == 0 {
        return Err(Error::InvalidValue("sequence length must be positive".into()));
    }
    let pose = synthetic_pose(seed, len, fps)?;
    match kind {
        SeqKind::Pose => SequenceFile::from_pose(&pose, fps),
        SeqKind::SparseInput => {
            let x = sparse_from_pose(&pose, &KinematicTree::smpl_default(), fps)?;
            SequenceFile::from_matrix(SeqKind::SparseInput, fps, &x)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotations::sixd_to_matrix;

    #[test]
    fn deterministic_and_valid() {
        let a = gen_synthetic(3, 40, SeqKind::Pose, 60.0).unwrap();
        let b = gen_synthetic(3, 40, SeqKind::Pose, 60.0).unwrap();
        assert_eq!(a.serialize(), b.serialize());
        assert_ne!(a, gen_synthetic(4, 40, SeqKind::Pose, 60.0).unwrap());
        let pose = a.to_pose().unwrap();
        for frame in pose.frames() {
            for r in frame {
                sixd_to_matrix(r).unwrap();
            }
        }
    }

    #[test]
    fn sparse_shape() {
        let f = gen_synthetic(0, 96, SeqKind::SparseInput, 60.0).unwrap();
        assert_eq!((f.frames(), f.columns()), (96, INPUT_DIM));
    }

    #[test]
    fn sparse_signals_are_consistent() {
        let fps = 60.0;
        let pose = synthetic_pose(1, 10, fps).unwrap();
        let x = sparse_from_pose(&pose, &KinematicTree::smpl_default(), fps).unwrap();
        // velocity of tracker 0 equals the scaled position difference
        for t in 1..10 {
            for k in 0..3 {
                let v = x.get(t, 9 + k);
                let d = (x.get(t, k) - x.get(t - 1, k)) * fps as f32;
                assert!((v - d).abs() < 1e-3, "{v} vs {d}");
            }
        }
        assert_eq!(&x.row(0)[12..18], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn motion_is_smooth() {
        let pose = synthetic_pose(2, 120, 60.0).unwrap();
        let flat = pose.to_flat();
        for t in 1..120 {
            for k in 0..132 {
                assert!((flat[t * 132 + k] - flat[(t - 1) * 132 + k]).abs() < 0.1);
            }
        }
    }
}
