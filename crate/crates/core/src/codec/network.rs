//! Tape graphs for the codec: analysis/synthesis transforms, hyper-prior
//! and the likelihood models used in the compression loss.

use rand::Rng;

use super::config::{CodecConfig, PROB_FLOOR, SCALE_FLOOR};
use super::density::DENSITY_NAMES;
use super::latent::{uniform_noise, QuantMode};
use crate::error::Result;
use crate::numerics::{Tape, Tensor, Var};
use crate::params::{Bound, ParamStore};

const LN2: f64 = std::f64::consts::LN_2;

pub(crate) fn init_params(cfg: &CodecConfig, rng: &mut impl Rng) -> ParamStore {
    let mut p = ParamStore::new();
    let mut conv = |p: &mut ParamStore, name: &str, out: usize, inp: usize, k: usize, gain: f64, bias: f64| {
        p.init_uniform(&format!("{name}.w"), &[out, inp, k, k], inp * k * k, gain, rng);
        p.init_const(&format!("{name}.b"), &[out], bias);
    };
    let c = cfg.image_channels;
    let widths = &cfg.encoder_widths;
    let last = *widths.last().expect("validated");
    let mut inp = c;
    for (i, &w) in widths.iter().enumerate() {
        conv(&mut p, &format!("enc.{i}"), w, inp, 3, 1.0, 0.0);
        inp = w;
    }
    conv(&mut p, "enc.out", cfg.latent_channels, last, 3, 1.0, 0.0);

    conv(&mut p, "dec.in", last, cfg.latent_channels, 3, 1.0, 0.0);
    for i in (0..widths.len()).rev() {
        let (out, gain, bias) = if i > 0 { (widths[i - 1], 1.0, 0.0) } else { (c, 0.5, 0.5) };
        conv(&mut p, &format!("dec.{i}"), 4 * out, widths[i], 3, gain, bias);
    }

    let (hw, ch, k, cl) = (cfg.hyper_width, cfg.hyper_channels, cfg.mixtures, cfg.latent_channels);
    conv(&mut p, "hyper_enc.0", hw, cl, 3, 1.0, 0.0);
    conv(&mut p, "hyper_enc.1", ch, hw, 3, 1.0, 0.0);
    conv(&mut p, "hyper_dec.0", hw, ch, 3, 1.0, 0.0);
    conv(&mut p, "hyper_dec.1", 4 * hw, hw, 3, 1.0, 0.0);
    conv(&mut p, "hyper_dec.out", 3 * k * cl, hw, 1, 0.1, 0.0);
    // start from equal weights, spread means, unit-ish scales
    let bias = p.get_mut("hyper_dec.out.b").expect("just inserted");
    for comp in 0..k {
        for j in 0..cl {
            let spread = comp as f64 - (k as f64 - 1.0) / 2.0;
            bias.data_mut()[k * cl + comp * cl + j] = 0.5 * spread;
            bias.data_mut()[2 * k * cl + comp * cl + j] = 1.0;
        }
    }

    let (r, cr) = (cfg.density_width, cfg.hyper_channels * cfg.density_width);
    // softplus(0.5413) ≈ 1 and softplus(m2) ≈ 1/r: initial CDF ≈ logistic(x)
    p.init_const(DENSITY_NAMES[0], &[cr], 0.5413);
    let b1 = (0..cr).map(|i| ((i / cfg.hyper_channels) as f64 - (r as f64 - 1.0) / 2.0) * 0.5).collect();
    p.insert(DENSITY_NAMES[1], Tensor::from_vec(b1));
    p.init_const(DENSITY_NAMES[2], &[cr], 0.0);
    p.init_const(DENSITY_NAMES[3], &[cr], inverse_softplus(1.0 / r as f64));
    p.init_const(DENSITY_NAMES[4], &[cfg.hyper_channels], 0.0);
    p
}

fn inverse_softplus(y: f64) -> f64 {
    (y.exp() - 1.0).ln()
}

fn conv(tape: &mut Tape, b: &Bound, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
    let w = b.var(&format!("{name}.w"));
    let bias = b.var(&format!("{name}.b"));
    Ok(tape.conv2d_bias(x, w, bias, stride, pad)?)
}

pub(crate) fn encoder(tape: &mut Tape, b: &Bound, cfg: &CodecConfig, x: Var) -> Result<Var> {
    let mut h = x;
    for i in 0..cfg.encoder_widths.len() {
        h = conv(tape, b, &format!("enc.{i}"), h, 2, 1)?;
        h = tape.relu(h)?;
    }
    conv(tape, b, "enc.out", h, 1, 1)
}

/// Synthesis transform; output is not clamped so gradients survive.
pub(crate) fn decoder(tape: &mut Tape, b: &Bound, cfg: &CodecConfig, q: Var) -> Result<Var> {
    let mut h = conv(tape, b, "dec.in", q, 1, 1)?;
    h = tape.relu(h)?;
    for i in (0..cfg.encoder_widths.len()).rev() {
        h = conv(tape, b, &format!("dec.{i}"), h, 1, 1)?;
        h = tape.pixel_shuffle(h, 2)?;
        if i > 0 {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

pub(crate) fn hyper_encoder(tape: &mut Tape, b: &Bound, y: Var) -> Result<Var> {
    let h = conv(tape, b, "hyper_enc.0", y, 1, 1)?;
    let h = tape.relu(h)?;
    conv(tape, b, "hyper_enc.1", h, 2, 1)
}

pub(crate) struct MixtureVars {
    pub weights: Var,
    pub means: Var,
    pub scales: Var,
}

pub(crate) fn hyper_decoder(tape: &mut Tape, b: &Bound, cfg: &CodecConfig, z: Var) -> Result<MixtureVars> {
    let h = conv(tape, b, "hyper_dec.0", z, 1, 1)?;
    let h = tape.relu(h)?;
    let h = conv(tape, b, "hyper_dec.1", h, 1, 1)?;
    let h = tape.pixel_shuffle(h, 2)?;
    let h = tape.relu(h)?;
    let raw = conv(tape, b, "hyper_dec.out", h, 1, 0)?;
    let span = cfg.mixtures * cfg.latent_channels;
    let logits = tape.slice(raw, 0, span)?;
    let weights = tape.softmax_groups(logits, cfg.mixtures)?;
    let means = tape.slice(raw, span, span)?;
    let scale_raw = tape.slice(raw, 2 * span, span)?;
    let scales = tape.softplus(scale_raw)?;
    let scales = tape.add_scalar(scales, SCALE_FLOOR)?;
    Ok(MixtureVars { weights, means, scales })
}

/// Applies the quantizer on the tape: constant additive noise in training,
/// straight-through rounding in inference.
pub(crate) fn quantize_var(tape: &mut Tape, y: Var, mode: QuantMode, rng: &mut impl Rng) -> Result<Var> {
    Ok(match mode {
        QuantMode::Inference => tape.round_ste(y)?,
        QuantMode::Training => {
            let shape = tape.shape(y).to_vec();
            let noise = uniform_noise(tape.value(y).len(), rng);
            let u = tape.constant(Tensor::new(shape, noise)?);
            tape.add(y, u)?
        }
    })
}

/// Total bits `Σ −log₂ max(P(q), 2⁻³²)` of `q` under the mixture.
pub(crate) fn latent_bits(tape: &mut Tape, cfg: &CodecConfig, q: Var, m: &MixtureVars) -> Result<Var> {
    let cl = cfg.latent_channels;
    let upper = tape.add_scalar(q, 0.5)?;
    let lower = tape.add_scalar(q, -0.5)?;
    let mut total: Option<Var> = None;
    for k in 0..cfg.mixtures {
        let w = tape.slice(m.weights, k * cl, cl)?;
        let mu = tape.slice(m.means, k * cl, cl)?;
        let sigma = tape.slice(m.scales, k * cl, cl)?;
        let du = tape.sub(upper, mu)?;
        let u = tape.div(du, sigma)?;
        let dl = tape.sub(lower, mu)?;
        let l = tape.div(dl, sigma)?;
        let mass = tape.normal_interval(u, l)?;
        let weighted = tape.mul(w, mass)?;
        total = Some(match total {
            Some(t) => tape.add(t, weighted)?,
            None => weighted,
        });
    }
    bits_of(tape, total.expect("K ≥ 1"))
}

fn bits_of(tape: &mut Tape, p: Var) -> Result<Var> {
    let p = tape.clamp_min(p, PROB_FLOOR)?;
    let logp = tape.log(p)?;
    let nats = tape.sum(logp)?;
    Ok(tape.scale(nats, -1.0 / LN2)?)
}

/// Logit of the factorized CDF for each element of `x[N, c_hyp, ...]`.
pub(crate) fn density_logits(tape: &mut Tape, b: &Bound, cfg: &CodecConfig, x: Var) -> Result<Var> {
    let r = cfg.density_width;
    let ch = cfg.hyper_channels;
    let copies = vec![x; r];
    let xr = tape.concat(&copies)?;
    let s1 = tape.softplus(b.var(DENSITY_NAMES[0]))?;
    let h = tape.channel_affine(xr, s1, b.var(DENSITY_NAMES[1]))?;
    let th = tape.tanh(h)?;
    let gate = tape.tanh(b.var(DENSITY_NAMES[2]))?;
    let zero = tape.constant(Tensor::zeros(&[ch * r]));
    let gated = tape.channel_affine(th, gate, zero)?;
    let h = tape.add(h, gated)?;
    let s2 = tape.softplus(b.var(DENSITY_NAMES[3]))?;
    let h = tape.channel_affine(h, s2, zero)?;
    let mut out = tape.slice(h, 0, ch)?;
    for j in 1..r {
        let part = tape.slice(h, j * ch, ch)?;
        out = tape.add(out, part)?;
    }
    Ok(tape.bias_add(out, b.var(DENSITY_NAMES[4]))?)
}

pub(crate) fn hyper_bits(tape: &mut Tape, b: &Bound, cfg: &CodecConfig, z: Var) -> Result<Var> {
    let up = tape.add_scalar(z, 0.5)?;
    let lo = tape.add_scalar(z, -0.5)?;
    let lu = density_logits(tape, b, cfg, up)?;
    let ll = density_logits(tape, b, cfg, lo)?;
    let p = tape.sigmoid_interval(lu, ll)?;
    bits_of(tape, p)
}

/// Every intermediate of one compression forward pass over a batch.
pub struct CompressionGraph {
    pub latent: Var,
    pub quantized: Var,
    pub hyper: Var,
    pub reconstruction: Var,
    pub latent_bits: Var,
    pub hyper_bits: Var,
    /// `latent_bits + hyper_bits` summed over the batch
    pub rate_bits: Var,
    /// MSE over all pixel values of the batch
    pub mse: Var,
    /// mean per-image rate in bits (the rate task)
    pub rate_task: Var,
    /// `λ · mse` (the distortion task)
    pub distortion_task: Var,
    /// `rate_task + distortion_task`
    pub loss: Var,
}

pub(crate) fn compression_graph(
    tape: &mut Tape,
    b: &Bound,
    cfg: &CodecConfig,
    x: Var,
    mode: QuantMode,
    rng: &mut impl Rng,
) -> Result<CompressionGraph> {
    let n = tape.shape(x)[0];
    let latent = encoder(tape, b, cfg, x)?;
    let quantized = quantize_var(tape, latent, mode, rng)?;
    let z = hyper_encoder(tape, b, latent)?;
    let hyper = quantize_var(tape, z, mode, rng)?;
    let mixture = hyper_decoder(tape, b, cfg, hyper)?;
    let lb = latent_bits(tape, cfg, quantized, &mixture)?;
    let hb = hyper_bits(tape, b, cfg, hyper)?;
    let rate_bits = tape.add(lb, hb)?;
    let reconstruction = decoder(tape, b, cfg, quantized)?;
    let diff = tape.sub(reconstruction, x)?;
    let sq = tape.square(diff)?;
    let mse = tape.mean(sq)?;
    let rate_task = tape.scale(rate_bits, 1.0 / n as f64)?;
    let distortion_task = tape.scale(mse, cfg.lambda)?;
    let loss = tape.add(rate_task, distortion_task)?;
    Ok(CompressionGraph {
        latent,
        quantized,
        hyper,
        reconstruction,
        latent_bits: lb,
        hyper_bits: hb,
        rate_bits,
        mse,
        rate_task,
        distortion_task,
        loss,
    })
}
