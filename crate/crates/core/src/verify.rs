//! Cross-module property suite behind the `verify` command.
//!
//! Each check compares an implementation against an independent oracle
//! and returns a [`Check`] with a one-line summary.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix4, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::random_params;
use crate::kinematics::{
    fks_order, forward_kinematics, uks_order, KinematicTree, ScanOrder, NUM_JOINTS,
};
use crate::losses::{
    angular_velocity, grad_total_loss, loss_angvel_geo, loss_ori, loss_rot, total_loss, LossWeights,
};
use crate::metrics::metrics;
use crate::model::layers::Init;
use crate::model::{Matrix, ModelConfig};
use crate::model::blocks::BiSsd;
use crate::pose::PoseSequence;
use crate::rotations::{exp_map, matrix_to_log, sixd_to_matrix, Rot6D, RotationMatrix};
use crate::ssd::{chunked_scan, ssd_matrix_form, ssm_recurrence, SsdParams};

/// Scan orders as printed in the reference, kept as text so a corrupted
/// constant cannot agree with itself.
pub const FKS_REFERENCE: &str = "0,1,4,7,10,0,2,5,8,11,0,3,6,9,13,16,18,20,0,3,6,9,12,15,0,3,6,9,14,17,19,21";
pub const UKS_REFERENCE: &str = "21,19,17,14,15,12,20,18,16,13,9,6,3,0,1,4,7,10,2,5,8,11";

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<22} {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub duality_trials: usize,
    /// Replaces the UKS order under test (negative-control injection).
    pub uks_override: Option<Vec<usize>>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            duality_trials: 200,
            uks_override: None,
        }
    }
}

pub fn run(opts: &VerifyOptions) -> Vec<Check> {
    let uks = match &opts.uks_override {
        Some(v) => ScanOrder::new(v.clone()),
        None => Ok(uks_order()),
    };
    let tree = KinematicTree::smpl_default();
    let s = opts.seed;
    vec![
        ssd_duality(opts.duality_trials, s),
        ssd_causality(50, s),
        branch_causality(20, s),
        rotation_round_trip(10_000, s),
        match uks {
            Ok(uks) => scan_order_exactness(&fks_order(), &uks, &tree),
            Err(e) => Check::new("scan_order_exactness", false, format!("invalid UKS order: {e}")),
        },
        fk_oracle(100, s),
        loss_gradient(20, s),
        loss_recomposition(100, s),
        metric_fixtures(),
    ]
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / (1.0 + x.abs().max(y.abs())))
        .fold(0.0, f64::max)
}

fn random_instance(rng: &mut ChaCha8Rng) -> SsdParams {
    let len = rng.gen_range(1..=128);
    let n = rng.gen_range(1..=8);
    let p = rng.gen_range(1..=4);
    random_params(rng, len, n, p)
}

/// Recurrence, matrix form and chunked scan (chunk 1, 7, 16, T) agree.
pub fn ssd_duality(trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..trials {
        let prm = random_instance(&mut rng);
        let len = prm.len();
        let rec = ssm_recurrence(&prm, None).expect("valid");
        let mat = ssd_matrix_form(&prm);
        let mut err = max_rel(&rec, &mat);
        for chunk in [1, 7, 16, len] {
            if chunk <= len {
                err = err.max(max_rel(&rec, &chunked_scan(&prm, chunk).expect("valid chunk")));
            }
        }
        worst = worst.max(err);
        if err > 1e-5 {
            failures += 1;
        }
    }
    Check::new(
        "ssd_duality",
        failures == 0,
        format!("{trials} instances, worst relative error {worst:.2e}"),
    )
}

/// Zeroing inputs after `t` leaves outputs up to `t` bit-identical.
pub fn ssd_causality(count: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xca5a);
    let mut failures = 0;
    for _ in 0..count {
        let prm = random_instance(&mut rng);
        let (len, p) = (prm.len(), prm.channels());
        let t = rng.gen_range(0..len);
        let mut x = prm.x().to_vec();
        x[(t + 1) * p..].fill(0.0);
        let cut = prm.with_x(x).expect("same shape");
        let chunk = 7.min(len);
        let pairs = [
            (ssm_recurrence(&prm, None).unwrap(), ssm_recurrence(&cut, None).unwrap()),
            (ssd_matrix_form(&prm), ssd_matrix_form(&cut)),
            (chunked_scan(&prm, chunk).unwrap(), chunked_scan(&cut, chunk).unwrap()),
        ];
        if pairs.iter().any(|(a, b)| a[..(t + 1) * p] != b[..(t + 1) * p]) {
            failures += 1;
        }
    }
    Check::new(
        "ssd_causality",
        failures == 0,
        format!("{count} sequences, {failures} violations"),
    )
}

/// Inside a bidirectional block the forward branch is causal and the
/// backward branch anti-causal, bitwise.
pub fn branch_causality(count: usize, seed: u64) -> Check {
    let config = ModelConfig::micro();
    let width = config.embed_dim;
    let bi = BiSsd::new(width, &config, &Init { seed }, "verify");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1);
    let mut failures = 0;
    for _ in 0..count {
        let len = rng.gen_range(2..=24);
        let data: Vec<f32> = (0..len * width).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = Matrix::from_vec(len, width, data).expect("shape");
        let t = rng.gen_range(1..len);
        let (ff, fb) = bi.forward(&p).expect("forward");

        let mut future = p.clone();
        for r in t..len {
            future.row_mut(r).iter_mut().for_each(|v| *v = -*v + 0.25);
        }
        let (ff2, _) = bi.forward(&future).expect("forward");
        let mut past = p.clone();
        for r in 0..t {
            past.row_mut(r).iter_mut().for_each(|v| *v = -*v + 0.25);
        }
        let (_, fb2) = bi.forward(&past).expect("forward");

        let causal = (0..t).all(|r| ff.row(r) == ff2.row(r));
        let anti = (t..len).all(|r| fb.row(r) == fb2.row(r));
        if !(causal && anti) {
            failures += 1;
        }
    }
    Check::new(
        "branch_causality",
        failures == 0,
        format!("{count} sequences, {failures} violations"),
    )
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> RotationMatrix {
    let axis = Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
    .normalize();
    exp_map(&(axis * rng.gen_range(0.0..PI)))
}

/// `exp ∘ log` reproduces rotations (including angles near 0 and π) and
/// Gram–Schmidt returns orthonormal frames.
pub fn rotation_round_trip(count: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x503);
    let special = [1e-9, 1e-6, PI - 1e-6, PI];
    let mut worst_rt: f64 = 0.0;
    let mut worst_gs: f64 = 0.0;
    let mut errors = 0;
    for i in 0..count {
        let v = if i < special.len() * 50 {
            let axis = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            exp_map(&(axis * special[i % special.len()]))
        } else {
            random_rotation(&mut rng)
        };
        match matrix_to_log(&v) {
            Ok(w) => worst_rt = worst_rt.max((exp_map(&w) - v).norm()),
            Err(_) => errors += 1,
        }
        let r6 = Rot6D(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
        if let Ok(r) = sixd_to_matrix(&r6) {
            let ortho = (r.transpose() * r - RotationMatrix::identity()).abs().max();
            worst_gs = worst_gs.max(ortho).max((r.determinant() - 1.0).abs());
        }
    }
    Check::new(
        "rotation_round_trip",
        errors == 0 && worst_rt <= 1e-7 && worst_gs <= 1e-9,
        format!("{count} rotations, exp∘log {worst_rt:.2e}, Gram–Schmidt {worst_gs:.2e}"),
    )
}

/// FKS and UKS match the reference text exactly; FKS branches follow
/// parent→child edges.
pub fn scan_order_exactness(fks: &ScanOrder, uks: &ScanOrder, tree: &KinematicTree) -> Check {
    let mut problems = Vec::new();
    if fks.to_csv() != FKS_REFERENCE {
        problems.push(format!("fks {}", fks.to_csv()));
    }
    if uks.to_csv() != UKS_REFERENCE {
        problems.push(format!("uks {}", uks.to_csv()));
    }
    for branch in fks.branches() {
        for pair in branch.windows(2) {
            if tree.parent(pair[1]) != Some(pair[0]) {
                problems.push(format!("fks edge {}→{} not in tree", pair[0], pair[1]));
            }
        }
    }
    let passed = problems.is_empty();
    let detail = if passed {
        format!("fks {} entries, uks {} entries, adjacency ok", fks.len(), uks.len())
    } else {
        problems.join("; ")
    };
    Check::new("scan_order_exactness", passed, detail)
}

/// Joint positions from explicit 4×4 homogeneous chains.
pub fn homogeneous_fk(pose: &[Rot6D], tree: &KinematicTree, root: &Vector3<f64>) -> Vec<Vector3<f64>> {
    (0..NUM_JOINTS)
        .map(|j| {
            let mut m = Matrix4::identity();
            for &k in &tree.chain(j) {
                let mut t = Matrix4::identity();
                let r = sixd_to_matrix(&pose[k]).expect("valid 6D");
                t.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
                let offset = if tree.parent(k).is_none() { *root } else { *tree.offset(k) };
                t.fixed_view_mut::<3, 1>(0, 3).copy_from(&offset);
                m *= t;
            }
            (m * Vector4::new(0.0, 0.0, 0.0, 1.0)).xyz()
        })
        .collect()
}

fn random_pose_frame(rng: &mut ChaCha8Rng) -> Vec<Rot6D> {
    (0..NUM_JOINTS)
        .map(|_| Rot6D(std::array::from_fn(|_| rng.gen_range(-1.0..1.0))))
        .collect()
}

/// Forward kinematics against the homogeneous oracle, bone lengths, and
/// rigid invariance under a global rotation of the root.
pub fn fk_oracle(count: usize, seed: u64) -> Check {
    let tree = KinematicTree::smpl_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf4);
    let (mut oracle, mut bones, mut rigid): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..count {
        let pose = random_pose_frame(&mut rng);
        let root = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let pos = forward_kinematics(&pose, &tree, &root).expect("valid pose");
        let want = homogeneous_fk(&pose, &tree, &root);
        for (a, b) in pos.iter().zip(&want) {
            oracle = oracle.max((a - b).norm());
        }
        for j in 0..NUM_JOINTS {
            if let Some(p) = tree.parent(j) {
                bones = bones.max(((pos[j] - pos[p]).norm() - tree.offset(j).norm()).abs());
            }
        }
        let q = random_rotation(&mut rng);
        let mut turned = pose.clone();
        turned[tree.root()] = Rot6D::from_matrix(&(q * sixd_to_matrix(&pose[tree.root()]).unwrap()));
        let pos_q = forward_kinematics(&turned, &tree, &root).expect("valid pose");
        for (a, b) in pos.iter().zip(&pos_q) {
            rigid = rigid.max((q * (a - root) - (b - root)).norm());
        }
    }
    Check::new(
        "fk_oracle",
        oracle <= 1e-9 && bones <= 1e-9 && rigid <= 1e-9,
        format!("{count} poses, oracle {oracle:.1e}, bone {bones:.1e}, rigid {rigid:.1e}"),
    )
}

/// Random pose sequence whose 6D values are unnormalized and carry a
/// component of `a1` in `a2`, so the Gram–Schmidt chain is exercised.
pub fn random_sequence(rng: &mut ChaCha8Rng, len: usize) -> PoseSequence {
    let frames = (0..len)
        .map(|_| {
            std::array::from_fn(|_| {
                let r = Rot6D::from_matrix(&random_rotation(rng));
                let (s1, s2, mix) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), rng.gen_range(-0.5..0.5));
                let a1 = r.a1() * s1;
                let a2 = r.a2() * s2 + a1 * mix;
                Rot6D([a1.x, a1.y, a1.z, a2.x, a2.y, a2.z])
            })
        })
        .collect();
    PoseSequence::new(frames, None).expect("valid frames")
}

/// Signs of every L1 residual inside the training objective.
fn residual_signs(y: &PoseSequence, z: &PoseSequence) -> Vec<i8> {
    let sign = |v: f64| (v > 0.0) as i8 - (v < 0.0) as i8;
    let mut out: Vec<i8> = y
        .to_flat()
        .iter()
        .zip(z.to_flat())
        .map(|(a, b)| sign(a - b))
        .collect();
    let (wy, wz) = (angular_velocity(y).unwrap(), angular_velocity(z).unwrap());
    for (fy, fz) in wy.iter().zip(&wz) {
        for (a, b) in fy.iter().zip(fz) {
            out.extend((b - a).iter().map(|&d| sign(d)));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradStats {
    pub components: usize,
    /// Components whose finite-difference stencil crosses an L1 kink.
    pub kinks: usize,
    /// Smooth components with relative error above 1e-4.
    pub above_tol: usize,
    /// Largest relative error over smooth components.
    pub worst: f64,
}

/// Analytic gradient against central differences (`h = 1e-5`).
pub fn gradient_stats(y: &PoseSequence, z: &PoseSequence, w: &LossWeights) -> GradStats {
    let h = 1e-5;
    let g = grad_total_loss(y, z, w).expect("gradient preconditions");
    let base = y.to_flat();
    let signs = residual_signs(y, z);
    let mut stats = GradStats {
        components: base.len(),
        kinks: 0,
        above_tol: 0,
        worst: 0.0,
    };
    for i in 0..base.len() {
        let probe = |d: f64| {
            let mut v = base.clone();
            v[i] += d;
            PoseSequence::from_flat(&v, None).expect("valid")
        };
        let (yp, ym) = (probe(h), probe(-h));
        if residual_signs(&yp, z) != signs || residual_signs(&ym, z) != signs {
            stats.kinks += 1;
            continue;
        }
        let fd = (total_loss(&yp, z, w).unwrap() - total_loss(&ym, z, w).unwrap()) / (2.0 * h);
        let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
        stats.worst = stats.worst.max(rel);
        if rel > 1e-4 {
            stats.above_tol += 1;
        }
    }
    stats
}

pub fn loss_gradient(count: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9d);
    let w = LossWeights::default();
    let mut total = GradStats {
        components: 0,
        kinks: 0,
        above_tol: 0,
        worst: 0.0,
    };
    for _ in 0..count {
        let len = rng.gen_range(2..=6);
        let (y, z) = (random_sequence(&mut rng, len), random_sequence(&mut rng, len));
        let s = gradient_stats(&y, &z, &w);
        total.components += s.components;
        total.kinks += s.kinks;
        total.above_tol += s.above_tol;
        total.worst = total.worst.max(s.worst);
    }
    let checked = total.components - total.kinks;
    let passed = total.above_tol * 100 <= checked && total.worst <= 1e-2;
    Check::new(
        "loss_gradient",
        passed,
        format!(
            "{count} sequences, {} of {checked} smooth components above 1e-4, worst {:.1e}, {} kink stencils skipped",
            total.above_tol, total.worst, total.kinks
        ),
    )
}

/// `total = 1·rot + 0.02·ori + 1·angvel_geo`, recomputed term by term.
pub fn loss_recomposition(count: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e);
    let w = LossWeights::default();
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let len = rng.gen_range(2..=8);
        let (y, z) = (random_sequence(&mut rng, len), random_sequence(&mut rng, len));
        let want = loss_rot(&y, &z).unwrap() + 0.02 * loss_ori(&y, &z).unwrap() + loss_angvel_geo(&y, &z).unwrap();
        worst = worst.max((total_loss(&y, &z, &w).unwrap() - want).abs());
    }
    Check::new(
        "loss_recomposition",
        worst <= 1e-12,
        format!("{count} pairs, worst deviation {worst:.1e}"),
    )
}

/// Pose whose root follows `x(t) = f(t / fps)` with identity rotations.
pub fn translated_pose(len: usize, fps: f64, f: impl Fn(f64) -> f64) -> PoseSequence {
    let root = (0..len).map(|t| Vector3::new(f(t as f64 / fps), 0.0, 0.0)).collect();
    PoseSequence::identity(len).with_root(Some(root)).expect("matching length")
}

/// Identity pair, constant-acceleration and cubic jitter fixtures.
pub fn metric_fixtures() -> Check {
    let tree = KinematicTree::smpl_default();
    let fps = 60.0;
    let mut problems = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y = random_sequence(&mut rng, 6);
    let r = metrics(&y, &y, &tree, fps).expect("metrics");
    let zero = [r.mpjre, r.mpjpe, r.mpjve.unwrap_or(1.0), r.root_pe, r.hand_pe, r.upper_pe, r.lower_pe];
    if zero.iter().any(|v| v.abs() > 1e-9) {
        problems.push("identity pair not zero".to_string());
    }
    let accel = translated_pose(10, fps, |s| 0.5 * 3.0 * s * s + 0.2 * s);
    let r = metrics(&accel, &accel, &tree, fps).expect("metrics");
    let j0 = r.jitter_gt.unwrap_or(f64::NAN);
    if !(j0.abs() <= 1e-6) {
        problems.push(format!("constant acceleration jitter {j0}"));
    }
    let cubic = translated_pose(10, fps, |s| s * s * s);
    let r = metrics(&cubic, &accel, &tree, fps).expect("metrics");
    let j3 = r.jitter_pred.unwrap_or(f64::NAN);
    if !rel_close(j3, 0.06, 1e-6) {
        problems.push(format!("cubic jitter {j3}"));
    }
    let passed = problems.is_empty();
    let detail = if passed {
        format!("identity 0, constant acceleration {j0:.1e}, cubic {j3:.9}")
    } else {
        problems.join("; ")
    };
    Check::new("metric_fixtures", passed, detail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_text_matches_constants() {
        assert_eq!(fks_order().to_csv(), FKS_REFERENCE);
        assert_eq!(uks_order().to_csv(), UKS_REFERENCE);
    }

    #[test]
    fn corrupted_uks_fails() {
        let mut bad = uks_order().forward().to_vec();
        bad.swap(0, 1);
        let c = scan_order_exactness(&fks_order(), &ScanOrder::new(bad).unwrap(), &KinematicTree::smpl_default());
        assert!(!c.passed);
    }

    #[test]
    fn quick_checks_pass() {
        for c in [
            ssd_duality(20, 1),
            ssd_causality(10, 1),
            branch_causality(3, 1),
            rotation_round_trip(500, 1),
            fk_oracle(10, 1),
            loss_gradient(2, 1),
            loss_recomposition(10, 1),
            metric_fixtures(),
        ] {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn homogeneous_oracle_identity_pose() {
        let tree = KinematicTree::smpl_default();
        let pose = vec![Rot6D::IDENTITY; NUM_JOINTS];
        let pos = homogeneous_fk(&pose, &tree, &Vector3::zeros());
        let chain_sum: Vector3<f64> = tree.chain(20).iter().skip(1).map(|&k| tree.offset(k)).sum();
        assert!((pos[20] - chain_sum).norm() < 1e-12);
    }
}
