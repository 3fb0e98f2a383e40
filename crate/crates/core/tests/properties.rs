use std::f64::consts::PI;

use approx::assert_relative_eq;
use nalgebra::Vector3;
use proptest::prelude::*;

use kinest::kinematics::{
    fks_order, forward_kinematics, reorder_joint_features, scatter_joint_features, uks_order, Direction,
    KinematicTree, ScanOrder, NUM_JOINTS,
};
use kinest::rotations::{exp_map, geodesic_angle, matrix_to_log, sixd_to_matrix, Rot6D};
use kinest::ssd::{chunked_scan, ssd_matrix_form, ssm_recurrence, SsdParams};

fn ssd_params() -> impl Strategy<Value = SsdParams> {
    (1usize..=48, 1usize..=6, 1usize..=3).prop_flat_map(|(len, n, p)| {
        (
            prop::collection::vec(0.0f64..1.0, len),
            prop::collection::vec(-1.0f64..1.0, len * n),
            prop::collection::vec(-1.0f64..1.0, len * n),
            prop::collection::vec(-1.0f64..1.0, len * p),
        )
            .prop_map(move |(a, b, c, x)| SsdParams::new(a, b, c, x, n, p).unwrap())
    })
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / (1.0 + x.abs().max(y.abs())))
        .fold(0.0, f64::max)
}

fn axis_angle(max_angle: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0..max_angle)
        .prop_filter("nonzero axis", |(x, y, z, _)| x * x + y * y + z * z > 1e-4)
        .prop_map(|(x, y, z, t)| Vector3::new(x, y, z).normalize() * t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ssd_forms_agree(prm in ssd_params(), chunk in 1usize..=20) {
        let rec = ssm_recurrence(&prm, None).unwrap();
        prop_assert!(max_rel(&rec, &ssd_matrix_form(&prm)) <= 1e-10);
        prop_assert!(max_rel(&rec, &chunked_scan(&prm, chunk.min(prm.len())).unwrap()) <= 1e-10);
    }

    #[test]
    fn chunk_size_does_not_change_output(prm in ssd_params(), c1 in 1usize..=20, c2 in 1usize..=20) {
        let a = chunked_scan(&prm, c1.min(prm.len())).unwrap();
        let b = chunked_scan(&prm, c2.min(prm.len())).unwrap();
        prop_assert!(max_rel(&a, &b) <= 1e-10);
    }

    #[test]
    fn ssd_is_causal(prm in ssd_params(), cut in 0.0f64..1.0) {
        let (len, p) = (prm.len(), prm.channels());
        let t = ((len as f64 * cut) as usize).min(len - 1);
        let mut x = prm.x().to_vec();
        for v in &mut x[(t + 1) * p..] {
            *v = 7.0;
        }
        let changed = prm.with_x(x).unwrap();
        let a = ssm_recurrence(&prm, None).unwrap();
        let b = ssm_recurrence(&changed, None).unwrap();
        prop_assert_eq!(&a[..(t + 1) * p], &b[..(t + 1) * p]);
        let a = chunked_scan(&prm, 4.min(len)).unwrap();
        let b = chunked_scan(&changed, 4.min(len)).unwrap();
        prop_assert_eq!(&a[..(t + 1) * p], &b[..(t + 1) * p]);
    }

    #[test]
    fn ssd_is_linear_in_x(prm in ssd_params(), k in -3.0f64..3.0) {
        let scaled = prm.with_x(prm.x().iter().map(|v| v * k).collect()).unwrap();
        let y = ssd_matrix_form(&prm);
        let ys = ssd_matrix_form(&scaled);
        for (a, b) in y.iter().zip(&ys) {
            prop_assert!((a * k - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn exp_log_round_trip(w in axis_angle(PI - 1e-3)) {
        let r = exp_map(&w);
        let back = matrix_to_log(&r).unwrap();
        prop_assert!((back - w).norm() <= 1e-8);
        prop_assert!((geodesic_angle(&r) - w.norm()).abs() <= 1e-9);
    }

    #[test]
    fn geodesic_angle_is_a_metric_on_pairs(a in axis_angle(PI), b in axis_angle(PI)) {
        let (ra, rb) = (exp_map(&a), exp_map(&b));
        let d_ab = geodesic_angle(&(ra.transpose() * rb));
        let d_ba = geodesic_angle(&(rb.transpose() * ra));
        prop_assert!((d_ab - d_ba).abs() <= 1e-9);
        prop_assert!((0.0..=PI + 1e-12).contains(&d_ab));
    }

    #[test]
    fn gram_schmidt_is_orthonormal_and_idempotent(v in prop::array::uniform6(-2.0f64..2.0)) {
        let r6 = Rot6D(v);
        prop_assume!(sixd_to_matrix(&r6).is_ok());
        let r = sixd_to_matrix(&r6).unwrap();
        prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).norm() <= 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() <= 1e-12);
        let again = sixd_to_matrix(&Rot6D::from_matrix(&r)).unwrap();
        prop_assert!((again - r).norm() <= 1e-12);
    }

    #[test]
    fn reorder_then_scatter_counts_visits(
        frames in 1usize..4,
        dim in 1usize..4,
        use_fks in any::<bool>(),
        seed in any::<u32>(),
    ) {
        let order = if use_fks { fks_order() } else { uks_order() };
        let data: Vec<f64> = (0..frames * NUM_JOINTS * dim)
            .map(|i| ((i as f64 + seed as f64) * 0.37).sin())
            .collect();
        let mixed = reorder_joint_features(&data, frames, NUM_JOINTS, dim, &order, Direction::Forward).unwrap();
        prop_assert_eq!(mixed.len(), frames * order.len() * dim);
        let back = scatter_joint_features(&mixed, frames, NUM_JOINTS, dim, &order, Direction::Forward).unwrap();
        let mut visits = [0usize; NUM_JOINTS];
        for &j in order.forward() {
            visits[j] += 1;
        }
        for l in 0..frames {
            for j in 0..NUM_JOINTS {
                for d in 0..dim {
                    let i = (l * NUM_JOINTS + j) * dim + d;
                    prop_assert!((back[i] - data[i] * visits[j] as f64).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn permutation_reorder_is_invertible(perm in Just((0..NUM_JOINTS).collect::<Vec<_>>()).prop_shuffle()) {
        let order = ScanOrder::new(perm).unwrap();
        let data: Vec<i64> = (0..2 * NUM_JOINTS * 3).map(|i| i as i64).collect();
        let mixed = reorder_joint_features(&data, 2, NUM_JOINTS, 3, &order, Direction::Backward).unwrap();
        let back = scatter_joint_features(&mixed, 2, NUM_JOINTS, 3, &order, Direction::Backward).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn fk_preserves_bone_lengths(ws in prop::collection::vec(axis_angle(PI), NUM_JOINTS)) {
        let tree = KinematicTree::smpl_default();
        let pose: Vec<Rot6D> = ws.iter().map(|w| Rot6D::from_matrix(&exp_map(w))).collect();
        let root = Vector3::new(0.1, 0.9, -0.2);
        let pos = forward_kinematics(&pose, &tree, &root).unwrap();
        assert_relative_eq!(pos[0], root, epsilon = 1e-12);
        for j in 1..NUM_JOINTS {
            let parent = tree.parent(j).unwrap();
            let bone = (pos[j] - pos[parent]).norm();
            prop_assert!((bone - tree.offset(j).norm()).abs() <= 1e-12);
        }
    }
}
