use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{self, compression_graph};
use super::*;
use crate::numerics::{Tape, Tensor};

pub(crate) fn tiny_config() -> CodecConfig {
    CodecConfig {
        image_channels: 3,
        encoder_widths: vec![4, 6],
        latent_channels: 3,
        hyper_width: 4,
        hyper_channels: 2,
        mixtures: 2,
        density_width: 2,
        lambda: 200.0,
    }
}

fn test_image(h: usize, w: usize, seed: u64) -> RasterImage {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RasterImage::new(h, w, 3, (0..h * w * 3).map(|_| rng.random()).collect()).unwrap()
}

#[test]
fn latent_shape_follows_downsampling() {
    let model = CodecModel::new(CodecConfig::default(), 1).unwrap();
    assert_eq!(model.config.downsampling(), 4);
    let lat = model.encode(&test_image(32, 32, 0)).unwrap();
    assert_eq!(lat.shape(), &[16, 8, 8]);
}

#[test]
fn indivisible_image_requires_padding() {
    let model = CodecModel::new(tiny_config(), 1).unwrap();
    let img = test_image(12, 16, 0);
    assert!(matches!(model.encode(&img), Err(crate::Error::Config(_))));
    let padded = img.reflect_pad(model.config.padding_multiple()).unwrap();
    assert!(model.encode(&padded).is_ok());
}

#[test]
fn zero_image_with_zero_output_layer_gives_zero_latent() {
    let mut model = CodecModel::new(tiny_config(), 3).unwrap();
    for name in ["enc.out.w", "enc.out.b"] {
        model.params.get_mut(name).unwrap().data_mut().fill(0.0);
    }
    let lat = model.encode(&RasterImage::filled(8, 8, 3, 0.0).unwrap()).unwrap();
    assert!(lat.0.data().iter().all(|&v| v == 0.0));
}

#[test]
fn encode_decode_are_bitwise_repeatable() {
    let img = test_image(16, 16, 4);
    let a = CodecModel::new(tiny_config(), 7).unwrap();
    let b = CodecModel::new(tiny_config(), 7).unwrap();
    let (la, lb) = (a.encode(&img).unwrap(), b.encode(&img).unwrap());
    assert!(la.0.data().iter().zip(lb.0.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let q = quantize(&la, QuantMode::Inference, &mut rng);
    assert_eq!(a.decode(&q).unwrap(), b.decode(&q).unwrap());
}

#[test]
fn decode_restores_shape_and_range() {
    let model = CodecModel::new(CodecConfig::default(), 11).unwrap();
    let img = test_image(32, 32, 2);
    let lat = model.encode(&img).unwrap();
    // exaggerate the latent so the untrained decoder overshoots
    let big = LatentTensor(Tensor::new(lat.0.shape().to_vec(), lat.0.data().iter().map(|v| v * 50.0).collect()).unwrap());
    let q = quantize(&big, QuantMode::Inference, &mut ChaCha8Rng::seed_from_u64(0));
    let rec = model.decode(&q).unwrap();
    assert_eq!((rec.height(), rec.width(), rec.channels()), (32, 32, 3));
    assert!(rec.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    let wrong = QuantizedLatent { values: Tensor::zeros(&[5, 8, 8]), mode: QuantMode::Inference };
    assert!(model.decode(&wrong).is_err());
}

#[test]
fn mixture_params_are_normalized_and_floored() {
    let model = CodecModel::new(tiny_config(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let lat = model.encode(&test_image(16, 16, seed)).unwrap();
        let z = model.hyper_encode(&lat, QuantMode::Inference, &mut rng).unwrap();
        let gmm = model.hyper_decode(&z).unwrap();
        gmm.validate().unwrap();
        assert_eq!(gmm.shape, lat.shape());
        assert_eq!(model.hyper_decode(&z).unwrap(), gmm);
        // arbitrary, far-out hyper values too
        let wild = HyperLatent { values: Tensor::filled(z.values.shape(), 40.0 * (seed as f64 - 2.0)), mode: QuantMode::Inference };
        model.hyper_decode(&wild).unwrap().validate().unwrap();
    }
}

#[test]
fn tape_rates_match_plain_rates() {
    let cfg = tiny_config();
    let model = CodecModel::new(cfg.clone(), 9).unwrap();
    let img = test_image(16, 16, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tape = Tape::new();
    let b = model.params.bind(&mut tape, false);
    let x = tape.constant(batch_tensor(&[&img]).unwrap());
    let g = compression_graph(&mut tape, &b, &cfg, x, QuantMode::Inference, &mut rng).unwrap();

    let lat = model.encode(&img).unwrap();
    let q = quantize(&lat, QuantMode::Inference, &mut rng);
    let z = model.hyper_encode(&lat, QuantMode::Inference, &mut rng).unwrap();
    let gmm = model.hyper_decode(&z).unwrap();
    let plain_latent = latent_rate(&q, &gmm).unwrap();
    let plain_hyper = hyper_rate(&z, &model.density().unwrap()).unwrap();
    assert!((tape.value(g.latent_bits).item().unwrap() - plain_latent).abs() < 1e-9 * plain_latent.max(1.0));
    assert!((tape.value(g.hyper_bits).item().unwrap() - plain_hyper).abs() < 1e-9 * plain_hyper.max(1.0));

    let loss = model.compression_loss(&img, QuantMode::Inference, &mut rng).unwrap();
    assert!((loss.rate_bits - (plain_latent + plain_hyper)).abs() < 1e-9 * loss.rate_bits);
    assert!((loss.loss - (loss.rate_bits + cfg.lambda * loss.distortion)).abs() < 1e-9 * loss.loss);
    let rec = model.decode(&q).unwrap();
    let _ = rec; // clamped decode may differ from the unclamped training reconstruction
}

#[test]
fn zero_lambda_loss_is_the_rate() {
    let mut cfg = tiny_config();
    cfg.lambda = 0.0;
    let model = CodecModel::new(tiny_config(), 2).unwrap();
    let mut tape = Tape::new();
    let b = model.params.bind(&mut tape, false);
    let x = tape.constant(batch_tensor(&[&test_image(8, 8, 1)]).unwrap());
    let g = compression_graph(&mut tape, &b, &cfg, x, QuantMode::Training, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(tape.value(g.loss).item().unwrap(), tape.value(g.rate_bits).item().unwrap());
}

/// Relative FD error of L_C with respect to one parameter tensor.
#[test]
fn compression_loss_gradients_match_finite_differences() {
    let model = CodecModel::new(tiny_config(), 21).unwrap();
    let images = vec![test_image(8, 8, 1), test_image(8, 8, 2)];
    for name in ["enc.0.w", "enc.out.b", "dec.0.w", "hyper_enc.1.w", "hyper_dec.out.w", "density.m1", "density.a1", "density.b2"] {
        let refs: Vec<&RasterImage> = images.iter().collect();
        let err = model.loss_gradient_error(&refs, name, QuantMode::Training, 4, 1e-5).unwrap();
        assert!(err < 1e-4, "{name}: {err}");
    }
}

#[test]
fn density_logits_on_tape_match_plain_evaluation() {
    let cfg = tiny_config();
    let model = CodecModel::new(cfg.clone(), 13).unwrap();
    let d = model.density().unwrap();
    let mut tape = Tape::new();
    let b = model.params.bind(&mut tape, false);
    let xs: Vec<f64> = (0..2 * 5).map(|i| i as f64 * 0.7 - 3.0).collect();
    let x = tape.constant(Tensor::new(vec![1, 2, 5], xs.clone()).unwrap());
    let l = network::density_logits(&mut tape, &b, &cfg, x).unwrap();
    for (i, &v) in tape.data(l).iter().enumerate() {
        assert!((v - d.logit(i / 5, xs[i])).abs() < 1e-12);
    }
}
