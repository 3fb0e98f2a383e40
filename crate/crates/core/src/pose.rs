//! Pose sequences: per-frame 6D local rotations for the 22 SMPL joints.

use nalgebra::Vector3;

use crate::error::{check_dim, Error, Result};
use crate::kinematics::NUM_JOINTS;
use crate::rotations::{sixd_to_matrix, Rot6D, RotationMatrix};

/// Values per frame: 22 joints × 6.
pub const POSE_DIM: usize = NUM_JOINTS * 6;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    frames: Vec<[Rot6D; NUM_JOINTS]>,
    root: Option<Vec<Vector3<f64>>>,
}

impl PoseSequence {
    /// Every 6D value must survive Gram–Schmidt.
    pub fn new(frames: Vec<[Rot6D; NUM_JOINTS]>, root: Option<Vec<Vector3<f64>>>) -> Result<Self> {
        if let Some(r) = &root {
            check_dim("root translations", frames.len(), r.len())?;
        }
        for (t, frame) in frames.iter().enumerate() {
            for (j, r) in frame.iter().enumerate() {
                sixd_to_matrix(r)
                    .map_err(|e| Error::Degenerate(format!("frame {t} joint {j}: {e}")))?;
            }
        }
        Ok(Self { frames, root })
    }

    /// From a row-major `L × 132` buffer.
    pub fn from_flat(values: &[f64], root: Option<Vec<Vector3<f64>>>) -> Result<Self> {
        if !values.len().is_multiple_of(POSE_DIM) {
            return Err(Error::Dimension {
                context: "pose buffer",
                expected: (values.len() / POSE_DIM + 1) * POSE_DIM,
                actual: values.len(),
            });
        }
        let frames = values
            .chunks(POSE_DIM)
            .map(|row| std::array::from_fn(|j| Rot6D(std::array::from_fn(|k| row[j * 6 + k]))))
            .collect();
        Self::new(frames, root)
    }

    pub fn identity(len: usize) -> Self {
        Self {
            frames: vec![[Rot6D::IDENTITY; NUM_JOINTS]; len],
            root: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[[Rot6D; NUM_JOINTS]] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[Rot6D; NUM_JOINTS] {
        &self.frames[t]
    }

    pub fn root(&self) -> Option<&[Vector3<f64>]> {
        self.root.as_deref()
    }

    /// Root translation at frame `t`, the origin when none was supplied.
    pub fn root_at(&self, t: usize) -> Vector3<f64> {
        self.root.as_ref().map_or_else(Vector3::zeros, |r| r[t])
    }

    pub fn with_root(mut self, root: Option<Vec<Vector3<f64>>>) -> Result<Self> {
        if let Some(r) = &root {
            check_dim("root translations", self.frames.len(), r.len())?;
        }
        self.root = root;
        Ok(self)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.frames
            .iter()
            .flat_map(|f| f.iter().flat_map(|r| r.0))
            .collect()
    }

    /// Local rotation matrices, `[frame][joint]`.
    pub fn matrices(&self) -> Vec<[RotationMatrix; NUM_JOINTS]> {
        self.frames
            .iter()
            .map(|f| std::array::from_fn(|j| sixd_to_matrix(&f[j]).expect("validated at construction")))
            .collect()
    }
}

pub(crate) fn check_same_shape(y: &PoseSequence, z: &PoseSequence) -> Result<()> {
    check_dim("pose sequence length", z.len(), y.len())
}
