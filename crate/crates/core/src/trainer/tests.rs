use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::codec::CodecModel;
use crate::dataset::{generate_scene, Sample, SyntheticSceneConfig};
use crate::hash_head::{HashHead, HashHeadConfig};
use crate::numerics::kernels::dot;

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Smallest squared norm over 10⁴ + 1 evenly spaced α.
fn grid_min_sq_norm(g1: &[f64], g2: &[f64]) -> f64 {
    (0..=10_000)
        .map(|i| {
            let a = i as f64 / 10_000.0;
            let c: Vec<f64> = g1.iter().zip(g2).map(|(x, y)| a * x + (1.0 - a) * y).collect();
            dot(&c, &c)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn mgda_examples() {
    let (c, a) = mgda_combine(&[1.0, 0.0], &[0.0, 1.0]);
    assert_eq!((c, a), (vec![0.5, 0.5], 0.5));
    let (c, _) = mgda_combine(&[0.3, -2.0], &[0.3, -2.0]);
    assert_eq!(c, vec![0.3, -2.0]);
    let (c, a) = mgda_combine(&[1.0, 2.0], &[2.0, 4.0]);
    assert_eq!((c, a), (vec![1.0, 2.0], 1.0));
    assert_eq!(mgda_combine(&[0.0; 3], &[0.0; 3]).0, vec![0.0; 3]);
}

#[test]
fn mgda_matches_grid_search_and_descends_both_tasks() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let d = rng.random_range(1..6);
        let g1: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g2: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (c, _) = mgda_combine(&g1, &g2);
        let n = norm(&c);
        let grid = grid_min_sq_norm(&g1, &g2);
        assert!(n * n <= grid + 1e-12 && grid - n * n < 1e-6);
        assert!(n <= norm(&g1).min(norm(&g2)) + 1e-12);
        if n > 1e-12 {
            assert!(dot(&c, &g1) >= -1e-12 && dot(&c, &g2) >= -1e-12);
        }
    }
}

#[test]
fn pcgrad_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (p, _) = pcgrad(&[vec![1.0, 0.0], vec![-1.0, 1.0]], &mut rng);
    assert_eq!(p[0], vec![0.5, 0.5]);
    assert_eq!(dot(&p[0], &[-1.0, 1.0]), 0.0);
    let (p, s) = pcgrad(&[vec![1.0, 1.0], vec![2.0, 0.0]], &mut rng);
    assert_eq!(p, vec![vec![1.0, 1.0], vec![2.0, 0.0]]);
    assert_eq!(s, vec![3.0, 1.0]);
    let g = vec![0.3, -0.7, 2.0];
    let (_, s) = pcgrad(&[g.clone(), g.clone(), g.clone()], &mut rng);
    assert_eq!(s, g.iter().map(|v| 3.0 * v).collect::<Vec<_>>());
    let (p, _) = pcgrad(&[vec![1.0, 0.0], vec![0.0, 0.0]], &mut rng);
    assert_eq!(p[0], vec![1.0, 0.0]);
}

#[test]
fn pcgrad_two_tasks_are_order_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let g1: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g2: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, sa) = pcgrad(&[g1.clone(), g2.clone()], &mut ChaCha8Rng::seed_from_u64(rng.random()));
        let (b, sb) = pcgrad(&[g2.clone(), g1.clone()], &mut ChaCha8Rng::seed_from_u64(rng.random()));
        assert_eq!(a[0], b[1]);
        assert_eq!(a[1], b[0]);
        for (x, y) in sa.iter().zip(&sb) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(dot(&a[0], &g2) >= -1e-12 && dot(&a[1], &g1) >= -1e-12);
    }
}

#[test]
fn adam_examples() {
    let mut p = crate::params::ParamStore::new();
    p.insert("x", crate::numerics::Tensor::from_vec(vec![1.0]));
    let before = p.clone();
    let mut adam = Adam::default();
    let zero = [("x".to_string(), vec![0.0])].into_iter().collect();
    adam.step(&mut p, &zero, |_| 0.1).unwrap();
    assert_eq!(p, before);
    // f(x) = x², gradient 2x
    let g = [("x".to_string(), vec![2.0])].into_iter().collect();
    adam.step(&mut p, &g, |_| 0.1).unwrap();
    assert!(p.get("x").unwrap().data()[0].abs() < 1.0);
    let bad = [("x".to_string(), vec![f64::NAN])].into_iter().collect();
    assert!(matches!(adam.step(&mut p, &bad, |_| 0.1), Err(crate::Error::NonFinite(_))));
}

#[test]
fn adam_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = crate::params::ParamStore::new();
    p.insert("w", crate::numerics::Tensor::from_vec((0..10).map(|_| rng.random()).collect()));
    let g: std::collections::BTreeMap<String, Vec<f64>> = [("w".to_string(), (0..10).map(|_| rng.random_range(-1.0..1.0)).collect())].into_iter().collect();
    let (mut a, mut b) = (Adam::default(), Adam::default());
    let (mut pa, mut pb) = (p.clone(), p.clone());
    for _ in 0..5 {
        a.step(&mut pa, &g, |_| 0.01).unwrap();
        b.step(&mut pb, &g, |_| 0.01).unwrap();
    }
    assert_eq!(pa, pb);
}

pub(crate) fn tiny_samples(n: usize, seed: u64) -> Vec<Sample> {
    let cfg = SyntheticSceneConfig { size: 16, classes: 4, seed, ..Default::default() };
    let cfg = SyntheticSceneConfig { styles: cfg.styles[..4].to_vec(), ..cfg };
    (0..n as u64)
        .map(|id| {
            let (image, labels) = generate_scene(&cfg, &mut cfg.image_rng(id)).unwrap();
            Sample { id, image, labels }
        })
        .collect()
}

fn tiny_schedule() -> TrainSchedule {
    TrainSchedule { stage1_steps: 30, stage2_steps: 10, batch_size: 4, learning_rate: 3e-3, seed: 5, early_stop_window: 500, ..Default::default() }
}

pub(crate) fn tiny_head() -> HashHead {
    HashHead::new(HashHeadConfig { hidden: 8, classes: 4, latent_channels: 3, ..HashHeadConfig::with_bits(16) }, 1).unwrap()
}

#[test]
fn stage1_is_deterministic_and_learns() {
    let data = tiny_samples(12, 0);
    let run = || {
        let mut m = CodecModel::new(crate::codec::tests::tiny_config(), 2).unwrap();
        let r = train_stage1(&mut m, &data, &tiny_schedule()).unwrap();
        (m, r)
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(ra.steps(), 30);
    let mean = |r: &[LogRow]| r.iter().map(|x| x.compression).sum::<f64>() / r.len() as f64;
    assert!(mean(&ra.rows[20..]) < mean(&ra.rows[..10]));
}

#[test]
fn early_stop_fires_on_a_flat_loss() {
    let data = tiny_samples(8, 1);
    let mut m = CodecModel::new(crate::codec::tests::tiny_config(), 2).unwrap();
    // a tiny rate barely moves the loss
    let s = TrainSchedule { stage1_steps: 100, learning_rate: 1e-12, early_stop_window: 10, early_stop_tolerance: 0.05, ..tiny_schedule() };
    let r = train_stage1(&mut m, &data, &s).unwrap();
    assert!(r.stopped_early);
    assert_eq!(r.steps(), 20);
}

#[test]
fn frozen_codec_stays_bit_identical_in_stage2() {
    let data = tiny_samples(8, 2);
    let mut codec = CodecModel::new(crate::codec::tests::tiny_config(), 3).unwrap();
    let before = codec.clone();
    let mut head = tiny_head();
    let head_before = head.clone();
    let s = TrainSchedule { compression_lr_factor: 0.0, ..tiny_schedule() };
    let r = train_stage2(&mut codec, &mut head, &data, &s).unwrap();
    assert_eq!(codec, before);
    assert_ne!(head, head_before);
    assert!(r.rows.iter().all(|row| row.hashing.is_some()));
}

#[test]
fn stage2_moves_both_modules_and_both_task_sets_run() {
    let data = tiny_samples(8, 3);
    for tasks in [TaskSet::Four, TaskSet::HashingOnly] {
        let mut codec = CodecModel::new(crate::codec::tests::tiny_config(), 3).unwrap();
        let before = codec.clone();
        let mut head = tiny_head();
        train_stage2(&mut codec, &mut head, &data, &TrainSchedule { tasks, ..tiny_schedule() }).unwrap();
        assert_ne!(codec, before);
    }
}

#[test]
fn checkpoints_round_trip() {
    let codec = CodecModel::new(crate::codec::tests::tiny_config(), 4).unwrap();
    let ck = Checkpoint { stage: 2, schedule: tiny_schedule(), codec, hash_head: Some(tiny_head()) };
    let bytes = ck.to_bytes();
    assert_eq!(&bytes[..4], b"JCCK");
    assert_eq!(Checkpoint::read_from(&mut bytes.as_slice()).unwrap(), ck);
    let no_head = Checkpoint { hash_head: None, stage: 1, ..ck.clone() };
    assert_eq!(Checkpoint::read_from(&mut no_head.to_bytes().as_slice()).unwrap(), no_head);
    let mut bad = bytes.clone();
    bad[3] = b'X';
    assert!(matches!(Checkpoint::read_from(&mut bad.as_slice()), Err(crate::Error::Format(_))));
}

#[test]
fn log_rows_have_eight_columns() {
    let rows = vec![
        LogRow { step: 1, stage: 1, compression: 3.5, hashing: None, bpp: 1.2, psnr: 20.0 },
        LogRow { step: 2, stage: 2, compression: 3.4, hashing: Some((1.0, 2.0, 3.0)), bpp: 1.1, psnr: 21.0 },
    ];
    let mut out = Vec::new();
    write_log_csv(&mut out, &rows).unwrap();
    let text = String::from_utf8(out).unwrap();
    for line in text.lines() {
        assert_eq!(line.split(',').count(), 8, "{line}");
    }
}

#[test]
fn invalid_schedules_are_rejected() {
    for s in [
        TrainSchedule { learning_rate: 0.0, ..Default::default() },
        TrainSchedule { compression_lr_factor: 1.5, ..Default::default() },
        TrainSchedule { batch_size: 0, ..Default::default() },
    ] {
        assert!(matches!(s.validate(), Err(crate::Error::Config(_))));
    }
}
