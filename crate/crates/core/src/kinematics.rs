//! SMPL-22 skeleton topology, kinematic-tree scan orders and forward kinematics.

use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{check_dim, Error, Result};
use crate::rotations::{sixd_to_matrix, Rot6D, RotationMatrix};

pub const NUM_JOINTS: usize = 22;
pub const ROOT: usize = 0;

/// Standard SMPL parent array for the first 22 joints (pelvis = root).
pub const SMPL_PARENTS: [i64; NUM_JOINTS] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19,
];

/// Five root-to-leaf branches, each restarting at the root (joint 0).
pub const FKS_ORDER: [usize; 32] = [
    0, 1, 4, 7, 10, //
    0, 2, 5, 8, 11, //
    0, 3, 6, 9, 13, 16, 18, 20, //
    0, 3, 6, 9, 12, 15, //
    0, 3, 6, 9, 14, 17, 19, 21,
];

/// Single permutation with the root in the middle: right arm and head chain
/// down to the pelvis, then left leg, then right leg.
pub const UKS_ORDER: [usize; 22] = [
    21, 19, 17, 14, 15, 12, 20, 18, 16, 13, 9, 6, 3, 0, 1, 4, 7, 10, 2, 5, 8, 11,
];

pub(crate) const DEFAULT_SKELETON: &str = include_str!("../assets/smpl_neutral.skel");

/// Parent pointers and rest-pose bone offsets (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    parent: Vec<Option<usize>>,
    offset: Vec<Vector3<f64>>,
    /// Parents before children.
    topo: Vec<usize>,
}

impl KinematicTree {
    /// `parent[root] = -1`. Parents need not precede their children.
    pub fn new(parent: &[i64], offset: Vec<Vector3<f64>>) -> Result<Self> {
        check_dim("tree parents", NUM_JOINTS, parent.len())?;
        check_dim("tree offsets", NUM_JOINTS, offset.len())?;
        let mut parents = Vec::with_capacity(NUM_JOINTS);
        for (j, &p) in parent.iter().enumerate() {
            parents.push(match p {
                -1 => None,
                p if p >= 0 && (p as usize) < NUM_JOINTS && p as usize != j => Some(p as usize),
                p => return Err(Error::Tree(format!("joint {j} has invalid parent {p}"))),
            });
        }
        let roots: Vec<usize> = (0..NUM_JOINTS).filter(|&j| parents[j].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Tree(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        if offset.iter().any(|o| !o.iter().all(|v| v.is_finite())) {
            return Err(Error::Tree("non-finite bone offset".into()));
        }

        // Breadth-first from the root; joints never reached sit on a cycle.
        let mut topo = Vec::with_capacity(NUM_JOINTS);
        topo.push(roots[0]);
        let mut head = 0;
        while head < topo.len() {
            let u = topo[head];
            head += 1;
            topo.extend((0..NUM_JOINTS).filter(|&v| parents[v] == Some(u)));
        }
        if topo.len() != NUM_JOINTS {
            return Err(Error::Tree(
                "parent pointers contain a cycle detached from the root".into(),
            ));
        }
        Ok(Self {
            parent: parents,
            offset,
            topo,
        })
    }

    /// Bundled SMPL neutral-body skeleton.
    pub fn smpl_default() -> Self {
        crate::io::skeleton::parse(DEFAULT_SKELETON).expect("bundled skeleton is valid")
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parent[joint]
    }

    pub fn offset(&self, joint: usize) -> &Vector3<f64> {
        &self.offset[joint]
    }

    pub fn root(&self) -> usize {
        self.topo[0]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn parents_i64(&self) -> Vec<i64> {
        self.parent
            .iter()
            .map(|p| p.map_or(-1, |p| p as i64))
            .collect()
    }

    /// Joints from the root down to `joint`, inclusive.
    pub fn chain(&self, joint: usize) -> Vec<usize> {
        let mut chain = vec![joint];
        let mut cur = joint;
        while let Some(p) = self.parent[cur] {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ScanStrategy {
    Index,
    Fks,
    #[default]
    Uks,
}

impl ScanStrategy {
    pub fn order(self) -> ScanOrder {
        match self {
            ScanStrategy::Index => index_order(),
            ScanStrategy::Fks => fks_order(),
            ScanStrategy::Uks => uks_order(),
        }
    }
}

impl fmt::Display for ScanStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanStrategy::Index => "index",
            ScanStrategy::Fks => "fks",
            ScanStrategy::Uks => "uks",
        })
    }
}

impl FromStr for ScanStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "index" => Ok(ScanStrategy::Index),
            "fks" => Ok(ScanStrategy::Fks),
            "uks" => Ok(ScanStrategy::Uks),
            other => Err(Error::InvalidValue(format!(
                "unknown scan strategy {other:?} (expected index|fks|uks)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// A joint visiting sequence and its reverse. Joints may repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanOrder {
    forward: Vec<usize>,
    backward: Vec<usize>,
}

impl ScanOrder {
    /// Every joint must appear at least once and no index may exceed 21.
    pub fn new(forward: Vec<usize>) -> Result<Self> {
        let mut seen = [false; NUM_JOINTS];
        for &j in &forward {
            if j >= NUM_JOINTS {
                return Err(Error::InvalidValue(format!("joint index {j} out of range")));
            }
            seen[j] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidValue(format!(
                "scan order never visits joint {missing}"
            )));
        }
        let backward = forward.iter().rev().copied().collect();
        Ok(Self { forward, backward })
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn backward(&self) -> &[usize] {
        &self.backward
    }

    pub fn get(&self, direction: Direction) -> &[usize] {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn is_permutation(&self) -> bool {
        self.forward.len() == NUM_JOINTS
    }

    /// Splits the forward order at each reappearance of the root.
    pub fn branches(&self) -> Vec<&[usize]> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, &j) in self.forward.iter().enumerate().skip(1) {
            if j == ROOT {
                out.push(&self.forward[start..i]);
                start = i;
            }
        }
        out.push(&self.forward[start..]);
        out
    }

    /// Comma-separated forward order.
    pub fn to_csv(&self) -> String {
        self.forward
            .iter()
            .map(|j| j.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub fn index_order() -> ScanOrder {
    ScanOrder::new((0..NUM_JOINTS).collect()).expect("index order is valid")
}

pub fn fks_order() -> ScanOrder {
    ScanOrder::new(FKS_ORDER.to_vec()).expect("FKS order is valid")
}

pub fn uks_order() -> ScanOrder {
    ScanOrder::new(UKS_ORDER.to_vec()).expect("UKS order is valid")
}

/// Gathers `features` (`frames × joints × dim`, row-major) along the joint
/// axis: `out[l][k] = features[l][order[k]]`.
pub fn reorder_joint_features<T: Copy>(
    features: &[T],
    frames: usize,
    joints: usize,
    dim: usize,
    order: &ScanOrder,
    direction: Direction,
) -> Result<Vec<T>> {
    check_dim("joint features", frames * joints * dim, features.len())?;
    let idx = order.get(direction);
    if let Some(&bad) = idx.iter().find(|&&j| j >= joints) {
        return Err(Error::InvalidValue(format!(
            "scan order index {bad} exceeds joint count {joints}"
        )));
    }
    let mut out = Vec::with_capacity(frames * idx.len() * dim);
    for l in 0..frames {
        let frame = &features[l * joints * dim..(l + 1) * joints * dim];
        for &j in idx {
            out.extend_from_slice(&frame[j * dim..(j + 1) * dim]);
        }
    }
    Ok(out)
}

/// Adjoint of [`reorder_joint_features`]: scatters `frames × |order| × dim`
/// back to `frames × joints × dim`, summing joints visited more than once.
pub fn scatter_joint_features<T: Copy + Default + AddAssign>(
    reordered: &[T],
    frames: usize,
    joints: usize,
    dim: usize,
    order: &ScanOrder,
    direction: Direction,
) -> Result<Vec<T>> {
    let idx = order.get(direction);
    check_dim("reordered features", frames * idx.len() * dim, reordered.len())?;
    if let Some(&bad) = idx.iter().find(|&&j| j >= joints) {
        return Err(Error::InvalidValue(format!(
            "scan order index {bad} exceeds joint count {joints}"
        )));
    }
    let mut out = vec![T::default(); frames * joints * dim];
    for l in 0..frames {
        for (k, &j) in idx.iter().enumerate() {
            let src = &reordered[(l * idx.len() + k) * dim..(l * idx.len() + k + 1) * dim];
            let dst = &mut out[(l * joints + j) * dim..(l * joints + j + 1) * dim];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    Ok(out)
}

/// Global joint positions for one frame of local rotations.
pub fn forward_kinematics(
    pose: &[Rot6D],
    tree: &KinematicTree,
    root_position: &Vector3<f64>,
) -> Result<Vec<Vector3<f64>>> {
    check_dim("pose joints", NUM_JOINTS, pose.len())?;
    let local = pose
        .iter()
        .map(sixd_to_matrix)
        .collect::<Result<Vec<_>>>()?;
    Ok(forward_kinematics_matrices(&local, tree, root_position))
}

/// Same as [`forward_kinematics`] with local rotations already as matrices.
pub fn forward_kinematics_matrices(
    local: &[RotationMatrix],
    tree: &KinematicTree,
    root_position: &Vector3<f64>,
) -> Vec<Vector3<f64>> {
    global_transforms(local, tree, root_position).1
}

/// Global rotations and positions of every joint.
pub fn global_transforms(
    local: &[RotationMatrix],
    tree: &KinematicTree,
    root_position: &Vector3<f64>,
) -> (Vec<RotationMatrix>, Vec<Vector3<f64>>) {
    let mut global = vec![RotationMatrix::identity(); NUM_JOINTS];
    let mut pos = vec![Vector3::zeros(); NUM_JOINTS];
    for &j in tree.topological_order() {
        match tree.parent(j) {
            None => {
                global[j] = local[j];
                pos[j] = *root_position;
            }
            Some(p) => {
                global[j] = global[p] * local[j];
                pos[j] = pos[p] + global[p] * tree.offset(j);
            }
        }
    }
    (global, pos)
}
