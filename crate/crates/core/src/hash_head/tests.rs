use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::hash_losses;
use super::*;
use crate::numerics::Var;

fn cfg(q: usize, classes: usize) -> HashHeadConfig {
    HashHeadConfig { hidden: 6, classes, latent_channels: 3, ..HashHeadConfig::with_bits(q) }
}

/// Direct double loop over ordered pairs, straight from the definitions.
fn oracle(cfg: &HashHeadConfig, codes: &[Vec<f64>], probs: &[Vec<f64>], labels: &[LabelVector]) -> (f64, f64, f64) {
    let q = cfg.code_bits as f64;
    let (mut lp, mut lb, mut lc) = (0.0, 0.0, 0.0);
    for i in 0..codes.len() {
        for j in 0..codes.len() {
            if i == j {
                continue;
            }
            let s_o = label_similarity(&labels[i], &labels[j]);
            let m = if s_o.abs() < 1e-12 || (s_o - 1.0).abs() < 1e-12 { 1.0 } else { 0.0 };
            let s_h: f64 = codes[i].iter().zip(&codes[j]).map(|(a, b)| a * b).sum();
            let a = cfg.alpha * s_h;
            lp += m * ((1.0 + a.exp()).ln() - a * s_o) + cfg.gamma * (1.0 - m) * (0.5 * (s_h + q) - s_o * q).powi(2);
            let bi: f64 = codes[i].iter().sum();
            let bj: f64 = codes[j].iter().sum();
            lb += bi * bi + bj * bj;
            for k in [i, j] {
                lc += probs[k].iter().zip(labels[k].as_f64()).map(|(p, t)| (p - t).powi(2)).sum::<f64>();
            }
        }
    }
    (lp, lb, lc)
}

fn losses_of(cfg: &HashHeadConfig, codes: &[Vec<f64>], probs: &[Vec<f64>], labels: &[LabelVector]) -> (f64, f64, f64, f64) {
    let n = codes.len();
    let mut tape = Tape::new();
    let c = tape.constant(Tensor::new(vec![n, cfg.code_bits], codes.concat()).unwrap());
    let p = tape.constant(Tensor::new(vec![n, cfg.classes], probs.concat()).unwrap());
    let l = hash_losses(&mut tape, cfg, c, p, &PairBatch::from_labels(labels), labels).unwrap();
    let v = |x| tape.value(x).item().unwrap();
    (v(l.pairwise), v(l.balance), v(l.classification), v(l.total))
}

fn random_labels(n: usize, classes: usize, rng: &mut impl Rng) -> Vec<LabelVector> {
    (0..n)
        .map(|_| {
            let k = rng.random_range(1..=3.min(classes));
            let idx: Vec<usize> = rand::seq::index::sample(rng, classes, k).into_iter().collect();
            LabelVector::from_indices(classes, &idx)
        })
        .collect()
}

fn signs(n: usize, q: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..q).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect()).collect()
}

#[test]
fn sign_rule_maps_zero_to_plus_one() {
    assert_eq!(HashCode::from_logits(&[0.3, 2.0, 1e-9]).bits(), &[1, 1, 1]);
    assert_eq!(HashCode::from_logits(&[0.0, -0.0, -1e-300]).bits(), &[1, 1, -1]);
}

#[test]
fn sign_backward_is_identity() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![1, 4], vec![-2.0, 0.0, 0.5, 3.0]).unwrap());
    let w = tape.constant(Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let s = tape.sign_ste(x).unwrap();
    assert_eq!(tape.data(s), &[-1.0, 1.0, 1.0, 1.0]);
    let prod = tape.mul(s, w).unwrap();
    let loss = tape.sum(prod).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn identical_hard_pair_costs_log_one_plus_e5_minus_5() {
    let c = HashHeadConfig { alpha: 1.25, ..cfg(4, 3) };
    let labels = vec![LabelVector::from_indices(3, &[1]); 2];
    let codes = vec![vec![1.0; 4]; 2];
    let probs = vec![vec![0.0, 1.0, 0.0]; 2];
    let (lp, _, _, _) = losses_of(&c, &codes, &probs, &labels);
    let expected = (1.0 + 5f64.exp()).ln() - 5.0;
    assert!((expected - 0.00672).abs() < 1e-5);
    // two ordered pairs
    assert!((lp / 2.0 - expected).abs() < 1e-12);
}

#[test]
fn soft_term_vanishes_at_its_target() {
    let c = cfg(4, 3);
    let labels = vec![LabelVector::from_indices(3, &[0, 1]), LabelVector::from_indices(3, &[0, 2])];
    let codes = vec![vec![1.0, 1.0, 1.0, 1.0], vec![1.0, 1.0, -1.0, -1.0]];
    let probs = vec![vec![0.5; 3]; 2];
    assert_eq!(PairBatch::from_labels(&labels).soft[1], 1.0);
    assert!(losses_of(&c, &codes, &probs, &labels).0.abs() < 1e-25);
}

#[test]
fn hard_term_is_monotone_over_integer_inner_products() {
    let c = cfg(8, 2);
    let q = 8i64;
    let term = |s_h: i64, s_o: f64| {
        let a = c.alpha * s_h as f64;
        (1.0 + a.exp()).ln() - a * s_o
    };
    let grid: Vec<i64> = (-q..=q).collect();
    for w in grid.windows(2) {
        assert!(term(w[1], 1.0) < term(w[0], 1.0));
        assert!(term(w[1], 0.0) > term(w[0], 0.0));
    }
    let min = grid.iter().map(|&s| term(s, 0.0)).fold(f64::INFINITY, f64::min);
    assert_eq!(min, term(-q, 0.0));
    assert!((min - (1.0 + (-c.alpha * q as f64).exp()).ln()).abs() < 1e-15);
    // the tape agrees for opposite codes
    let labels = vec![LabelVector::from_indices(2, &[0]), LabelVector::from_indices(2, &[1])];
    let codes = vec![vec![1.0; 8], vec![-1.0; 8]];
    let (lp, _, _, _) = losses_of(&c, &codes, &[vec![0.5; 2], vec![0.5; 2]], &labels);
    assert!((lp / 2.0 - min).abs() < 1e-15);
}

#[test]
fn bit_balance_examples() {
    let c = cfg(4, 2);
    let labels = vec![LabelVector::from_indices(2, &[0]); 2];
    let probs = vec![vec![1.0, 0.0]; 2];
    let balanced = vec![vec![1.0, -1.0, 1.0, -1.0]; 2];
    assert_eq!(losses_of(&c, &balanced, &probs, &labels).1, 0.0);
    let ones = vec![vec![1.0; 4]; 2];
    assert_eq!(losses_of(&c, &ones, &probs, &labels).1 / 2.0, 32.0);
}

#[test]
fn classification_examples() {
    let c = cfg(4, 4);
    let labels = vec![LabelVector::from_indices(4, &[0, 3]), LabelVector::from_indices(4, &[2])];
    let codes = vec![vec![1.0; 4]; 2];
    let perfect: Vec<Vec<f64>> = labels.iter().map(|l| l.as_f64()).collect();
    assert_eq!(losses_of(&c, &codes, &perfect, &labels).2, 0.0);
    let half = vec![vec![0.5; 4]; 2];
    assert_eq!(losses_of(&c, &codes, &half, &labels).2 / 2.0, 2.0);
}

#[test]
fn tape_losses_match_pair_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let n = rng.random_range(1..7);
        let q = [4, 8, 16][rng.random_range(0..3)];
        let c = cfg(q, 5);
        let labels = random_labels(n, 5, &mut rng);
        let codes = signs(n, q, &mut rng);
        let probs: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.random()).collect()).collect();
        let (lp, lb, lc, total) = losses_of(&c, &codes, &probs, &labels);
        let (op, ob, oc) = oracle(&c, &codes, &probs, &labels);
        for (got, want) in [(lp, op), (lb, ob), (lc, oc)] {
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        }
        assert!((total - (lp + lb + lc)).abs() <= 1e-12 * total.abs().max(1.0));
    }
}

#[test]
fn zero_components_give_zero_total() {
    let c = cfg(4, 2);
    let labels = vec![LabelVector::from_indices(2, &[0])];
    // a single image has no pairs at all
    let (lp, lb, lc, total) = losses_of(&c, &[vec![1.0; 4]], &[vec![0.3, 0.9]], &labels);
    assert_eq!((lp, lb, lc, total), (0.0, 0.0, 0.0, 0.0));
}

fn gradient_of(tape: &mut Tape, loss: Var, wrt: Var) -> Vec<f64> {
    tape.zero_grad();
    tape.backward(loss).unwrap();
    tape.grad(wrt).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; tape.value(wrt).len()])
}

#[test]
fn component_gradients_sum_to_total_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = cfg(8, 4);
    let labels = random_labels(4, 4, &mut rng);
    let mut tape = Tape::new();
    let codes = tape.param(Tensor::new(vec![4, 8], (0..32).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
    let probs = tape.param(Tensor::new(vec![4, 4], (0..16).map(|_| rng.random()).collect()).unwrap());
    let l = hash_losses(&mut tape, &c, codes, probs, &PairBatch::from_labels(&labels), &labels).unwrap();
    let parts: Vec<Vec<f64>> = [l.pairwise, l.balance, l.classification].iter().map(|&v| gradient_of(&mut tape, v, codes)).collect();
    let total = gradient_of(&mut tape, l.total, codes);
    for (k, t) in total.iter().enumerate() {
        let s: f64 = parts.iter().map(|p| p[k]).sum();
        assert!((s - t).abs() <= 1e-12 * t.abs().max(1.0));
    }
}

/// FD error of one loss component w.r.t. relaxed (continuous) codes.
#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..4 {
        let c = cfg(8, 4);
        let labels = random_labels(4, 4, &mut rng);
        let codes = Tensor::new(vec![4, 8], (0..32).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
        let probs = Tensor::new(vec![4, 4], (0..16).map(|_| rng.random()).collect()).unwrap();
        for which in 0..4 {
            let term = [HashLossTerm::Pairwise, HashLossTerm::Balance, HashLossTerm::Classification, HashLossTerm::Total][which];
            let err = loss_gradient_error(&c, &labels, &codes, &probs, term, 1e-5).unwrap();
            assert!(err < 1e-4, "component {which}: {err}");
        }
    }
}

#[test]
fn head_parameters_get_finite_difference_gradients() {
    let c = cfg(8, 4);
    let head = HashHead::new(c, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let labels = random_labels(3, 4, &mut rng);
    let x = Tensor::new(vec![3, 3, 4, 4], (0..144).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    for name in ["hash_head.attn.w", "hash_head.conv0.w", "hash_head.conv1.b", "hash_head.cls.w", "hash_head.hash.w"] {
        let err = head.parameter_gradient_error(&x, &labels, name, 1e-5).unwrap();
        assert!(err < 1e-4, "{name}: {err}");
    }
}

#[test]
fn forward_is_pure_and_signs_the_logits() {
    let head = HashHead::new(cfg(16, 4), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lat = QuantizedLatent::from_symbols(&[3, 4, 4], &(0..48).map(|_| rng.random_range(-3..4)).collect::<Vec<_>>()).unwrap();
    let a = head.forward(&[&lat, &lat]).unwrap();
    assert_eq!(a[0], a[1]);
    assert_eq!(a[0].code, HashCode::from_logits(&a[0].logits));
    assert!(a[0].labels.iter().all(|&p| p > 0.0 && p < 1.0));
    assert_eq!(head.code(&lat).unwrap(), a[0].code);
    let wrong = QuantizedLatent::from_symbols(&[2, 4, 4], &[0; 32]).unwrap();
    assert!(head.forward(&[&wrong]).is_err());
}

#[test]
fn pair_masks_partition_off_diagonal_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels = random_labels(6, 4, &mut rng);
    let pb = PairBatch::from_labels(&labels);
    for i in 0..6 {
        for j in 0..6 {
            let k = i * 6 + j;
            if i == j {
                assert_eq!((pb.hard[k], pb.soft[k]), (0.0, 0.0));
            } else {
                assert_eq!(pb.hard[k] + pb.soft[k], 1.0);
                let s = pb.similarity[k];
                assert_eq!(pb.hard[k] == 1.0, s.abs() < 1e-12 || (s - 1.0).abs() < 1e-12);
            }
        }
    }
    assert_eq!(pb.pair_count(), 30);
}

proptest! {
    #[test]
    fn packing_round_trips(bits in proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 1..80)) {
        let code = HashCode::new(bits.clone()).unwrap();
        let packed = code.pack();
        prop_assert_eq!(packed.len(), bits.len().div_ceil(8));
        prop_assert_eq!(HashCode::unpack(&packed, bits.len()).unwrap(), code);
    }

    #[test]
    fn inner_product_is_q_minus_twice_hamming(seed in any::<u64>(), q in 1usize..70) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = HashCode::from_logits(&(0..q).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let b = HashCode::from_logits(&(0..q).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let ham = a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count() as i64;
        prop_assert_eq!(a.inner(&b), q as i64 - 2 * ham);
    }
}

#[test]
fn packed_layout_is_lsb_first() {
    let mut bits = vec![-1i8; 16];
    bits[0] = 1;
    bits[9] = 1;
    assert_eq!(HashCode::new(bits).unwrap().pack(), vec![0b0000_0001, 0b0000_0010]);
    assert!(HashCode::unpack(&[0xFF], 4).is_err());
}
