//! Evaluation metrics for predicted vs. ground-truth pose sequences.
//!
//! Rotation error is the geodesic angle between predicted and ground-truth
//! local joint rotations, in degrees. Position metrics use forward
//! kinematics with each sequence's root translation (origin when absent)
//! and are reported in centimeters. Jitter is computed for each sequence on
//! its own as the mean `|Δ³p|·fps³`, in units of 10² m/s³.

use std::fmt;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics_matrices, KinematicTree, NUM_JOINTS};
use crate::pose::{check_same_shape, PoseSequence};
use crate::rotations::{geodesic_angle, relative_rotation};

pub const DEFAULT_FPS: f64 = 60.0;

pub const ROOT_JOINTS: &[usize] = &[0];
pub const HAND_JOINTS: &[usize] = &[20, 21];
pub const LOWER_JOINTS: &[usize] = &[1, 2, 4, 5, 7, 8, 10, 11];
/// Every joint outside the root, hand and lower sets.
pub const UPPER_JOINTS: &[usize] = &[3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub frames: usize,
    pub fps: f64,
    /// degrees
    pub mpjre: f64,
    /// cm
    pub mpjpe: f64,
    /// cm/s, absent below 2 frames
    pub mpjve: Option<f64>,
    pub root_pe: f64,
    pub hand_pe: f64,
    pub upper_pe: f64,
    pub lower_pe: f64,
    /// 10² m/s³, absent below 4 frames
    pub jitter_pred: Option<f64>,
    pub jitter_gt: Option<f64>,
}

impl MetricReport {
    /// `(key, value)` rows in reporting order; absent values are `None`.
    pub fn rows(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("frames", Some(self.frames as f64)),
            ("fps", Some(self.fps)),
            ("mpjre_deg", Some(self.mpjre)),
            ("mpjpe_cm", Some(self.mpjpe)),
            ("mpjve_cm_s", self.mpjve),
            ("root_pe_cm", Some(self.root_pe)),
            ("hand_pe_cm", Some(self.hand_pe)),
            ("upper_pe_cm", Some(self.upper_pe)),
            ("lower_pe_cm", Some(self.lower_pe)),
            ("jitter_pred_1e2m_s3", self.jitter_pred),
            ("jitter_gt_1e2m_s3", self.jitter_gt),
        ]
    }

    /// Comma-separated `metric,value` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in self.rows() {
            out.push_str(k);
            out.push(',');
            match v {
                Some(v) => out.push_str(&format!("{v:.9}")),
                None => out.push_str("NA"),
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.rows() {
            match v {
                Some(v) => writeln!(f, "{k}: {v:.6}")?,
                None => writeln!(f, "{k}: absent")?,
            }
        }
        Ok(())
    }
}

fn positions(p: &PoseSequence, tree: &KinematicTree) -> Vec<Vec<Vector3<f64>>> {
    p.matrices()
        .iter()
        .enumerate()
        .map(|(t, m)| forward_kinematics_matrices(m, tree, &p.root_at(t)))
        .collect()
}

fn mean_error(a: &[Vec<Vector3<f64>>], b: &[Vec<Vector3<f64>>], joints: &[usize]) -> f64 {
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(fa, fb)| joints.iter().map(|&j| (fa[j] - fb[j]).norm()).sum::<f64>())
        .sum();
    total / (a.len() * joints.len()) as f64
}

/// Mean `|Δ³p|·fps³` over frames 3..L and all joints, in m/s³.
pub fn jitter(pos: &[Vec<Vector3<f64>>], fps: f64) -> Option<f64> {
    if pos.len() < 4 {
        return None;
    }
    let mut total = 0.0;
    for t in 3..pos.len() {
        for j in 0..pos[t].len() {
            let d3 = (pos[t][j] - pos[t - 3][j]) - (pos[t - 1][j] - pos[t - 2][j]) * 3.0;
            total += d3.norm();
        }
    }
    Some(total / ((pos.len() - 3) * pos[0].len()) as f64 * fps.powi(3))
}

pub fn metrics(
    y: &PoseSequence,
    z: &PoseSequence,
    tree: &KinematicTree,
    fps: f64,
) -> Result<MetricReport> {
    check_same_shape(y, z)?;
    if y.is_empty() {
        return Err(Error::InvalidValue("metrics need at least one frame".into()));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidValue(format!("fps {fps} must be positive")));
    }
    let len = y.len();

    let (my, mz) = (y.matrices(), z.matrices());
    let angle_sum: f64 = my
        .iter()
        .zip(&mz)
        .flat_map(|(fy, fz)| fy.iter().zip(fz.iter()))
        .map(|(ry, rz)| geodesic_angle(&relative_rotation(ry, rz)))
        .sum();
    let mpjre = (angle_sum / (len * NUM_JOINTS) as f64).to_degrees();

    let (py, pz) = (positions(y, tree), positions(z, tree));
    let all: Vec<usize> = (0..NUM_JOINTS).collect();
    let cm = 100.0;

    let mpjve = (len >= 2).then(|| {
        let mut total = 0.0;
        for t in 1..len {
            for j in 0..NUM_JOINTS {
                let vy = py[t][j] - py[t - 1][j];
                let vz = pz[t][j] - pz[t - 1][j];
                total += (vy - vz).norm();
            }
        }
        total / ((len - 1) * NUM_JOINTS) as f64 * fps * cm
    });

    Ok(MetricReport {
        frames: len,
        fps,
        mpjre,
        mpjpe: mean_error(&py, &pz, &all) * cm,
        mpjve,
        root_pe: mean_error(&py, &pz, ROOT_JOINTS) * cm,
        hand_pe: mean_error(&py, &pz, HAND_JOINTS) * cm,
        upper_pe: mean_error(&py, &pz, UPPER_JOINTS) * cm,
        lower_pe: mean_error(&py, &pz, LOWER_JOINTS) * cm,
        jitter_pred: jitter(&py, fps).map(|j| j / 100.0),
        jitter_gt: jitter(&pz, fps).map(|j| j / 100.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotations::{exp_map, Rot6D};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, len: usize) -> PoseSequence {
        let values: Vec<f64> = (0..len * 132).map(|_| rng.gen_range(-1.0..1.0)).collect();
        PoseSequence::from_flat(&values, None).unwrap()
    }

    fn translated(len: usize, path: impl Fn(f64) -> f64, fps: f64) -> PoseSequence {
        let roots = (0..len).map(|t| Vector3::new(path(t as f64 / fps), 0.0, 0.0)).collect();
        PoseSequence::identity(len).with_root(Some(roots)).unwrap()
    }

    #[test]
    fn joint_sets_partition_body() {
        let mut all: Vec<usize> = [ROOT_JOINTS, HAND_JOINTS, LOWER_JOINTS, UPPER_JOINTS].concat();
        all.sort_unstable();
        assert_eq!(all, (0..22).collect::<Vec<_>>());
    }

    #[test]
    fn identical_pair_is_zero() {
        let tree = KinematicTree::smpl_default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_pose(&mut rng, 6);
        let r = metrics(&y, &y, &tree, 60.0).unwrap();
        assert_eq!(r.mpjre, 0.0);
        assert_eq!(r.mpjpe, 0.0);
        assert_eq!(r.mpjve, Some(0.0));
        assert_eq!(r.root_pe + r.hand_pe + r.upper_pe + r.lower_pe, 0.0);
        assert_eq!(r.jitter_pred, r.jitter_gt);
    }

    #[test]
    fn constant_velocity_and_acceleration_have_no_jitter() {
        let tree = KinematicTree::smpl_default();
        let lin = translated(10, |s| 1.5 * s, 60.0);
        let quad = translated(10, |s| 0.5 * 9.81 * s * s, 60.0);
        for p in [&lin, &quad] {
            let r = metrics(p, p, &tree, 60.0).unwrap();
            assert!(r.jitter_gt.unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn cubic_path_jitter() {
        let tree = KinematicTree::smpl_default();
        let fps = 60.0;
        let cubic = translated(12, |s| s * s * s, fps);
        let r = metrics(&cubic, &PoseSequence::identity(12), &tree, fps).unwrap();
        assert!((r.jitter_pred.unwrap() - 0.06).abs() < 1e-6);
        assert_eq!(r.jitter_gt, Some(0.0));
    }

    #[test]
    fn short_sequences() {
        let tree = KinematicTree::smpl_default();
        let p = PoseSequence::identity(2);
        let r = metrics(&p, &p, &tree, 60.0).unwrap();
        assert_eq!(r.jitter_pred, None);
        assert!(r.mpjve.is_some());
        let one = PoseSequence::identity(1);
        assert_eq!(metrics(&one, &one, &tree, 60.0).unwrap().mpjve, None);
        let empty = PoseSequence::identity(0);
        assert!(metrics(&empty, &empty, &tree, 60.0).is_err());
        assert!(metrics(&p, &p, &tree, 0.0).is_err());
    }

    #[test]
    fn root_offset_position_error() {
        let tree = KinematicTree::smpl_default();
        let len = 5;
        let a = translated(len, |_| 0.0, 60.0);
        let b = translated(len, |_| 0.03, 60.0);
        let r = metrics(&a, &b, &tree, 60.0).unwrap();
        for v in [r.mpjpe, r.root_pe, r.hand_pe, r.upper_pe, r.lower_pe] {
            assert!((v - 3.0).abs() < 1e-9);
        }
        assert!(r.mpjve.unwrap().abs() < 1e-9);
    }

    #[test]
    fn rotation_error_in_degrees() {
        let tree = KinematicTree::smpl_default();
        let turned: Vec<[Rot6D; 22]> = vec![[Rot6D::from_matrix(&exp_map(&Vector3::new(0.0, 0.1, 0.0))); 22]; 3];
        let y = PoseSequence::new(turned, None).unwrap();
        let r = metrics(&y, &PoseSequence::identity(3), &tree, 30.0).unwrap();
        assert!((r.mpjre - 0.1f64.to_degrees()).abs() < 1e-9);
    }

    #[test]
    fn symmetric_terms() {
        let tree = KinematicTree::smpl_default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (y, z) = (random_pose(&mut rng, 6), random_pose(&mut rng, 6));
        let a = metrics(&y, &z, &tree, 60.0).unwrap();
        let b = metrics(&z, &y, &tree, 60.0).unwrap();
        assert!((a.mpjre - b.mpjre).abs() < 1e-9);
        assert!((a.mpjpe - b.mpjpe).abs() < 1e-12);
        assert!((a.mpjve.unwrap() - b.mpjve.unwrap()).abs() < 1e-9);
        assert_eq!(a.jitter_pred, b.jitter_gt);
    }

    #[test]
    fn report_formats() {
        let p = PoseSequence::identity(2);
        let r = metrics(&p, &p, &KinematicTree::smpl_default(), 60.0).unwrap();
        let text = r.to_string();
        assert!(text.contains("mpjre_deg: 0.000000"));
        assert!(text.contains("jitter_pred_1e2m_s3: absent"));
        let csv = r.to_csv();
        assert!(csv.starts_with("metric,value\n"));
        assert!(csv.contains("jitter_gt_1e2m_s3,NA"));
    }
}
