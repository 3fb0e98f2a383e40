use kinest::kinematics::{fks_order, uks_order, KinematicTree};
use kinest::model::{embed, kinest_forward, kinest_forward_raw, Matrix, ModelConfig, Weights, INPUT_DIM};
use kinest::synth::{sparse_from_pose, synthetic_pose};

fn full_input(config: &ModelConfig) -> Matrix {
    let pose = synthetic_pose(11, config.seq_len, 60.0).unwrap();
    sparse_from_pose(&pose, &KinematicTree::smpl_default(), 60.0).unwrap()
}

#[test]
fn full_config_shape_and_determinism() {
    let config = ModelConfig::default();
    assert_eq!((config.n_tfm, config.m_skfm, config.embed_dim, config.joint_dim, config.seq_len), (2, 2, 256, 64, 96));
    let w = Weights::init(&config).unwrap();
    let x = full_input(&config);
    assert_eq!((x.rows(), x.cols()), (96, INPUT_DIM));

    let y = kinest_forward_raw(&x, &w).unwrap();
    assert_eq!((y.rows(), y.cols()), (96, 132));

    let w2 = Weights::init(&config).unwrap();
    let y2 = kinest_forward_raw(&x, &w2).unwrap();
    let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&y), bits(&y2));

    let pose = kinest_forward(&x, &config, &w).unwrap();
    assert_eq!(pose.len(), 96);
}

#[test]
fn stmm_mixed_lengths() {
    let config = ModelConfig::default();
    let w = Weights::init(&config).unwrap();
    let mut h = embed(&full_input(&config), &w).unwrap();
    for m in &w.tfm {
        h = m.forward(&h).unwrap();
    }
    let skfm = &w.skfm[0];
    let (out_u, trace_u) = skfm.forward_traced(&h, &uks_order()).unwrap();
    assert_eq!(trace_u.mixed_forward.rows(), 2112);
    assert_eq!(trace_u.mixed_backward.rows(), 2112);
    let (out_f, trace_f) = skfm.forward_traced(&h, &fks_order()).unwrap();
    assert_eq!(trace_f.mixed_forward.rows(), 3072);
    assert_eq!((out_u.rows(), out_u.cols()), (out_f.rows(), out_f.cols()));
    assert_eq!((out_u.rows(), out_u.cols()), (96, config.embed_dim));
}

#[test]
fn micro_config_is_trainable_scale() {
    let w = Weights::init(&ModelConfig::micro()).unwrap();
    assert!(w.param_count() <= kinest::train::MAX_TRAIN_PARAMS);
    assert_eq!(w.param_count(), w.to_flat().len());
}
