mod common;

use common::{attention_oracle, rng};
use fairbeam::autonet::{
    adam_step, count_params, decode_checkpoint, encode_checkpoint, load_model, normalize_columns, save_model,
    AdamConfig, AdamState, Graph, InputNorm, Model, ModelConfig,
};
use proptest::prelude::*;
use rand::Rng;

fn uniform(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

#[test]
fn equivariance_suite() {
    common::checks::equivariance_suite().unwrap();
}

#[test]
fn gradient_suite() {
    common::checks::gradient_suite().unwrap();
}

#[test]
fn parameter_counts() {
    let head_only = ModelConfig { n_f: 4, d_model: 4, n_att: 0, n_head: 1, n_t: 2, init_seed: 0 };
    assert_eq!(count_params(&head_only) - (4 * 4 + 4), 20);
    let c = ModelConfig::default();
    assert_eq!((c.n_f, c.d_model, c.n_att, c.n_head, c.n_t), (33, 132, 8, 4, 16));
    let embed = c.n_f * c.d_model + c.d_model;
    assert_eq!(embed, 4488);
    assert_eq!(count_params(&c), 715_208);
    assert_eq!(count_params(&ModelConfig::for_antennas(8, 4, 4, 4, 0)), 97_256);
    let m = Model::<f32>::new(ModelConfig::for_antennas(2, 2, 2, 2, 3)).unwrap();
    assert_eq!(m.num_params(), count_params(&m.config));
    assert_eq!(m.flat().len(), m.num_params());
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(Model::<f32>::new(ModelConfig { n_head: 5, ..ModelConfig::default() }).is_err());
    assert!(Model::<f32>::new(ModelConfig { n_f: 5, ..ModelConfig::default() }).is_err());
}

#[test]
fn initialization_is_seeded() {
    let c = ModelConfig::for_antennas(2, 2, 1, 1, 5);
    assert_eq!(Model::<f32>::new(c.clone()).unwrap(), Model::<f32>::new(c.clone()).unwrap());
    assert_ne!(Model::<f32>::new(c.clone()).unwrap(), Model::<f32>::new(ModelConfig { init_seed: 6, ..c }).unwrap());
}

#[test]
fn zero_head_outputs_its_bias() {
    let mut m = Model::<f32>::new(ModelConfig::for_antennas(2, 2, 2, 2, 1)).unwrap();
    m.param_mut("head.w").unwrap().data.iter_mut().for_each(|w| *w = 0.0);
    let bias: Vec<f32> = (0..4).map(|i| i as f32 - 1.5).collect();
    m.param_mut("head.b").unwrap().data = bias.clone();
    let mut r = rng(2);
    let x: Vec<f32> = (0..2 * 3 * 5).map(|_| r.random_range(-3.0..3.0)).collect();
    let y = m.predict(&x, 2, 3).unwrap();
    for row in y.chunks(4) {
        assert_eq!(row, &bias[..]);
    }
}

#[test]
fn attention_matches_dense_oracle() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let (n, d) = (3, 4);
        let heads = if seed % 2 == 0 { 1 } else { 2 };
        let x: Vec<f64> = uniform(&mut r, n * d);
        let ws: Vec<Vec<f64>> = (0..4).map(|_| uniform(&mut r, d * d)).collect();
        let bs: Vec<Vec<f64>> = (0..4).map(|_| uniform(&mut r, d)).collect();

        let mut g = Graph::<f64>::new();
        let xv = g.constant(&[1, n, d], x.clone()).unwrap();
        let mut proj = Vec::new();
        for i in 0..3 {
            let w = g.constant(&[d, d], ws[i].clone()).unwrap();
            let b = g.constant(&[d], bs[i].clone()).unwrap();
            proj.push(g.affine(xv, w, Some(b)).unwrap());
        }
        let att = g.attention(proj[0], proj[1], proj[2], n, heads).unwrap();
        let wo = g.constant(&[d, d], ws[3].clone()).unwrap();
        let bo = g.constant(&[d], bs[3].clone()).unwrap();
        let o = g.affine(att, wo, Some(bo)).unwrap();
        let y = g.add(xv, o).unwrap();

        let rows: Vec<Vec<f64>> = x.chunks(d).map(|c| c.to_vec()).collect();
        let want = attention_oracle(&rows, &ws[0], &bs[0], &ws[1], &bs[1], &ws[2], &bs[2], &ws[3], &bs[3], heads);
        for (got, w) in g.value(y).iter().zip(want.iter().flatten()) {
            assert!((got - w).abs() < 1e-6, "seed {seed}: {got} vs {w}");
        }
    }
}

#[test]
fn identical_tokens_give_identical_rows() {
    let m = Model::<f32>::new(ModelConfig::for_antennas(3, 2, 2, 2, 4)).unwrap();
    let row: Vec<f32> = (0..7).map(|i| 0.3 * i as f32 - 1.0).collect();
    let x: Vec<f32> = row.iter().cycle().take(4 * 7).copied().collect();
    let y = m.predict(&x, 1, 4).unwrap();
    for r in y.chunks(6).skip(1) {
        assert_eq!(r, &y[..6]);
    }
}

#[test]
fn column_normalization_examples() {
    let (bf, dead) = normalize_columns(&[1.0f32, 0.0, 0.0, 0.0], 1, 2, 1.0).unwrap();
    assert_eq!(dead, 0);
    assert_eq!(bf.f_tilde[0], fairbeam::complex_core::CVec::basis(2, 0));
    let (bf, _) = normalize_columns(&[3.0f64, 0.0, 4.0, 0.0], 1, 2, 1.0).unwrap();
    assert!((bf.f_tilde[0][0] - common::c(0.6, 0.8)).norm() < 1e-15);
    let (bf, dead) = normalize_columns(&[0.0f32; 8], 2, 2, 1.0).unwrap();
    assert_eq!(dead, 2);
    assert!(bf.f_tilde.iter().all(|f| *f == fairbeam::complex_core::CVec::basis(2, 0)));
    assert!(normalize_columns(&[0.0f32; 7], 2, 2, 1.0).is_err());
}

#[test]
fn adam_first_step_and_fixed_point() {
    let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
    let mut p = [0.5f64];
    let mut st = AdamState::new([1]);
    adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut st, &cfg).unwrap();
    assert!((p[0] - (0.5 - 0.1)).abs() < 1e-6, "{}", p[0]);

    let mut q = vec![1.0f32, -2.0, 3.0];
    let mut st = AdamState::new([3]);
    for _ in 0..10 {
        adam_step(&mut [&mut q[..]], &[&[0.0; 3][..]], &mut st, &AdamConfig::default()).unwrap();
    }
    assert_eq!(q, vec![1.0, -2.0, 3.0]);
    assert!(adam_step(&mut [&mut q[..]], &[&[0.0; 2][..]], &mut st, &AdamConfig::default()).is_err());
}

#[test]
fn adam_trajectories_are_deterministic() {
    let run = || {
        let mut p = vec![0.1f32, 0.2, 0.3];
        let mut st = AdamState::new([3]);
        let mut trace = Vec::new();
        for k in 0..20 {
            let g: Vec<f32> = p.iter().map(|v| 2.0 * v + k as f32 * 0.01).collect();
            adam_step(&mut [&mut p[..]], &[&g[..]], &mut st, &AdamConfig::default()).unwrap();
            trace.push(p.clone());
        }
        trace
    };
    assert_eq!(run(), run());
}

#[test]
fn input_norm_fit() {
    let rows = vec![1.0f32, 10.0, 3.0, 10.0];
    let n = InputNorm::<f32>::fit(&rows, 2).unwrap();
    let mut x = rows.clone();
    n.apply(&mut x);
    assert!((x[0] + 1.0).abs() < 1e-6 && (x[2] - 1.0).abs() < 1e-6);
    // A constant feature is only centered.
    assert_eq!((x[1], x[3]), (0.0, 0.0));
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.fbck");
    let m = Model::<f32>::new(ModelConfig::for_antennas(3, 1, 2, 7, 11)).unwrap();
    save_model(&m, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(encode_checkpoint(&back), std::fs::read(&path).unwrap());
    let mut bytes = encode_checkpoint(&m);
    bytes[4] = 2;
    let msg = decode_checkpoint(&bytes, &path).unwrap_err().to_string();
    assert!(msg.contains("version 2") && msg.contains("version 1"), "{msg}");
}

#[test]
fn f64_build_agrees_with_f32() {
    let m = Model::<f32>::new(ModelConfig::for_antennas(2, 2, 2, 2, 8)).unwrap();
    let m64: Model<f64> = m.convert();
    let mut r = rng(9);
    let x: Vec<f32> = (0..3 * 5).map(|_| r.random_range(-1.0..1.0)).collect();
    let x64: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let a = m.predict(&x, 1, 3).unwrap();
    let b = m64.predict(&x64, 1, 3).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((*p as f64 - q).abs() < 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_is_equivariant(seed in any::<u64>()) {
        prop_assert!(common::checks::equivariance_error(seed) <= 1e-5);
    }

    #[test]
    fn predict_shape(seed in any::<u64>(), batch in 1usize..4, n_u in 1usize..6) {
        let m = Model::<f32>::new(ModelConfig::for_antennas(2, 1, 1, 1, seed)).unwrap();
        let y = m.predict(&vec![0.5; batch * n_u * 5], batch, n_u).unwrap();
        prop_assert_eq!(y.len(), batch * n_u * 4);
        prop_assert!(y.iter().all(|v| v.is_finite()));
    }
}
