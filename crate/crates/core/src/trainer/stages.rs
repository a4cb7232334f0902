use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::surgery::{mgda_combine, pcgrad};
use super::{TaskSet, TrainSchedule};
use crate::codec::network::compression_graph;
use crate::codec::{batch_tensor, psnr_from_mse, CodecModel, QuantMode, RasterImage};
use crate::dataset::Sample;
use crate::hash_head::network::{hash_graph, hash_losses};
use crate::hash_head::{HashHead, LabelVector, PairBatch};
use crate::numerics::{Tape, Var};
use crate::params::Bound;
use crate::{Error, Result};

/// Parameters shared by the compression and hashing tasks.
pub const SHARED_PREFIX: &str = "enc.";

// distinct streams derived from the schedule seed
const BATCH_STREAM: u64 = 0x6261_7463_6800_0001;
const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0002;
const PCGRAD_STREAM: u64 = 0x7063_6772_6164_0003;

pub const LOG_HEADER: &str = "step,stage,L_C,L_p,L_b,L_c,bpp,psnr";

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub stage: u8,
    pub compression: f64,
    /// `(L_p, L_b, L_c)`, stage 2 only
    pub hashing: Option<(f64, f64, f64)>,
    /// estimated bits per pixel of the (noisy) training batch
    pub bpp: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub rows: Vec<LogRow>,
    pub stopped_early: bool,
}

impl StageReport {
    pub fn steps(&self) -> usize {
        self.rows.len()
    }
}

pub fn write_log_csv(out: &mut impl Write, rows: &[LogRow]) -> std::io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in rows {
        let (p, b, c) = match r.hashing {
            Some((p, b, c)) => (format!("{p:.9e}"), format!("{b:.9e}"), format!("{c:.9e}")),
            None => (String::new(), String::new(), String::new()),
        };
        writeln!(out, "{},{},{:.9e},{p},{b},{c},{:.6},{:.4}", r.step, r.stage, r.compression, r.bpp, r.psnr)?;
    }
    Ok(())
}

/// Epoch-wise shuffled minibatches.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(len: usize, seed: u64) -> Self {
        let mut b = Batcher { order: (0..len).collect(), pos: 0, rng: ChaCha8Rng::seed_from_u64(seed) };
        b.order.shuffle(&mut b.rng);
        b
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        if self.pos + size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += size;
        self.order[self.pos - size..self.pos].to_vec()
    }
}

fn check_data(data: &[Sample], model: &CodecModel) -> Result<()> {
    let first = data.first().ok_or_else(|| Error::Config("training set is empty".into()))?;
    let f = model.config.padding_multiple();
    for s in data {
        let img = &s.image;
        if img.channels() != model.config.image_channels || img.height() % f != 0 || img.width() % f != 0 {
            return Err(Error::Config(format!("image {} ({}x{}x{}) does not fit the codec", s.id, img.height(), img.width(), img.channels())));
        }
        if (img.height(), img.width()) != (first.image.height(), first.image.width()) {
            return Err(Error::Config("training images differ in size".into()));
        }
    }
    Ok(())
}

fn finite(step: usize, what: &[(&str, f64)]) -> Result<()> {
    if what.iter().all(|(_, v)| v.is_finite()) {
        return Ok(());
    }
    let snapshot: Vec<String> = what.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Err(Error::NonFinite(format!("step {step}: {}", snapshot.join(", "))))
}

fn grads_of(tape: &mut Tape, loss: Var, bound: &[&Bound], names: &[Vec<String>]) -> Result<Vec<Vec<f64>>> {
    tape.zero_grad();
    tape.backward(loss)?;
    Ok(bound.iter().zip(names).map(|(b, n)| b.flat_grad(tape, n)).collect())
}

fn split_by_name(flat: &[f64], names: &[String], model_params: &crate::params::ParamStore) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    let mut off = 0;
    for n in names {
        let len = model_params.get(n)?.len();
        out.insert(n.clone(), flat[off..off + len].to_vec());
        off += len;
    }
    Ok(out)
}

fn window_stalled(history: &[f64], window: usize, tolerance: f64) -> bool {
    let t = history.len();
    if t < 2 * window || t % window != 0 {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let prev = mean(&history[t - 2 * window..t - window]);
    let cur = mean(&history[t - window..]);
    prev - cur < tolerance * prev.abs()
}

fn batch_of<'a>(data: &'a [Sample], idx: &[usize]) -> Vec<&'a RasterImage> {
    idx.iter().map(|&i| &data[i].image).collect()
}

/// Stage 1: the codec alone. Each step takes separate gradients of the rate
/// and the λ-weighted distortion and follows their min-norm combination.
pub fn train_stage1(model: &mut CodecModel, data: &[Sample], schedule: &TrainSchedule) -> Result<StageReport> {
    schedule.validate()?;
    check_data(data, model)?;
    let mut batches = Batcher::new(data.len(), schedule.seed ^ BATCH_STREAM);
    let mut noise = ChaCha8Rng::seed_from_u64(schedule.seed ^ NOISE_STREAM);
    let mut adam = Adam::default();
    let names: Vec<String> = model.params.names().cloned().collect();
    let mut rows = Vec::new();
    let mut history = Vec::new();
    let mut stopped_early = false;

    for step in 1..=schedule.stage1_steps {
        let idx = batches.next(schedule.batch_size);
        let images = batch_of(data, &idx);
        let pixels = (images.len() * images[0].height() * images[0].width()) as f64;
        let mut tape = Tape::new();
        let b = model.params.bind(&mut tape, true);
        let x = tape.constant(batch_tensor(&images)?);
        let g = compression_graph(&mut tape, &b, &model.config, x, QuantMode::Training, &mut noise)?;
        let loss = tape.value(g.loss).item()?;
        let mse = tape.value(g.mse).item()?;
        let bits = tape.value(g.rate_bits).item()?;
        finite(step, &[("L_C", loss), ("mse", mse), ("rate_bits", bits)])?;

        let gr = grads_of(&mut tape, g.rate_task, &[&b], std::slice::from_ref(&names))?.remove(0);
        let gd = grads_of(&mut tape, g.distortion_task, &[&b], std::slice::from_ref(&names))?.remove(0);
        let (combined, _) = mgda_combine(&gr, &gd);
        let grads = split_by_name(&combined, &names, &model.params)?;
        adam.step(&mut model.params, &grads, |_| schedule.learning_rate)
            .map_err(|e| Error::NonFinite(format!("step {step}: {e}")))?;

        rows.push(LogRow { step, stage: 1, compression: loss, hashing: None, bpp: bits / pixels, psnr: psnr_from_mse(mse, 1.0) });
        history.push(loss);
        if window_stalled(&history, schedule.early_stop_window, schedule.early_stop_tolerance) {
            stopped_early = true;
            break;
        }
    }
    Ok(StageReport { rows, stopped_early })
}

/// Stage 2: codec plus hashing head. Per step the task gradients over the
/// shared encoder are deconflicted with PCGrad and summed; everything else
/// gets the plain sum of its task gradients. The `L_C` task gradient is the
/// same min-norm combination of rate and λ·distortion that stage 1 follows. The codec moves at
/// `learning_rate × compression_lr_factor`, the head at `learning_rate`.
pub fn train_stage2(codec: &mut CodecModel, head: &mut HashHead, data: &[Sample], schedule: &TrainSchedule) -> Result<StageReport> {
    schedule.validate()?;
    check_data(data, codec)?;
    if head.config.latent_channels != codec.config.latent_channels {
        return Err(Error::Compatibility("hash head and codec disagree on latent channels".into()));
    }
    if let Some(s) = data.iter().find(|s| s.labels.classes() != head.config.classes) {
        return Err(Error::Compatibility(format!("image {} has {} classes, head {}", s.id, s.labels.classes(), head.config.classes)));
    }
    let mut batches = Batcher::new(data.len(), schedule.seed ^ BATCH_STREAM);
    let mut noise = ChaCha8Rng::seed_from_u64(schedule.seed ^ NOISE_STREAM);
    let mut surgery_rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ PCGRAD_STREAM);
    let mut adam = Adam::default();
    let codec_names: Vec<String> = codec.params.names().cloned().collect();
    let head_names: Vec<String> = head.params.names().cloned().collect();
    let shared_len: usize = codec_names
        .iter()
        .filter(|n| n.starts_with(SHARED_PREFIX))
        .map(|n| codec.params.get(n).map(|t| t.len()))
        .sum::<Result<usize>>()?;
    let shared_off = shared_offset(&codec_names, &codec.params)?;
    let names = [codec_names.clone(), head_names.clone()];
    let lr = schedule.learning_rate;
    let codec_lr = lr * schedule.compression_lr_factor;
    let mut rows = Vec::new();

    for step in 1..=schedule.stage2_steps {
        let idx = batches.next(schedule.batch_size);
        let images = batch_of(data, &idx);
        let truth: Vec<LabelVector> = idx.iter().map(|&i| data[i].labels.clone()).collect();
        let pixels = (images.len() * images[0].height() * images[0].width()) as f64;
        let mut tape = Tape::new();
        let bc = codec.params.bind(&mut tape, true);
        let bh = head.params.bind(&mut tape, true);
        let x = tape.constant(batch_tensor(&images)?);
        let g = compression_graph(&mut tape, &bc, &codec.config, x, QuantMode::Training, &mut noise)?;
        let rounded = tape.round_ste(g.latent)?;
        let hg = hash_graph(&mut tape, &bh, rounded)?;
        let hl = hash_losses(&mut tape, &head.config, hg.codes, hg.labels, &PairBatch::from_labels(&truth), &truth)?;
        let val = |v: Var| tape.value(v).item();
        let (lc, lp, lb, lcls) = (val(g.loss)?, val(hl.pairwise)?, val(hl.balance)?, val(hl.classification)?);
        let (mse, bits) = (val(g.mse)?, val(g.rate_bits)?);
        finite(step, &[("L_C", lc), ("L_p", lp), ("L_b", lb), ("L_c", lcls), ("mse", mse)])?;

        // per task: [codec gradient, head gradient]
        let mut tasks = Vec::new();
        for loss in [hl.pairwise, hl.balance, hl.classification] {
            tasks.push(grads_of(&mut tape, loss, &[&bc, &bh], &names)?);
        }
        // L_C keeps its stage-1 rule: min-norm point of rate and λ·distortion
        let gr = grads_of(&mut tape, g.rate_task, &[&bc], std::slice::from_ref(&names[0]))?.remove(0);
        let gd = grads_of(&mut tape, g.distortion_task, &[&bc], std::slice::from_ref(&names[0]))?.remove(0);
        let (compression, _) = mgda_combine(&gr, &gd);
        tasks.push(vec![compression, vec![0.0; tasks[0][1].len()]]);
        let shared: Vec<Vec<f64>> = tasks.iter().map(|t| t[0][shared_off..shared_off + shared_len].to_vec()).collect();
        let in_surgery = match schedule.tasks {
            TaskSet::Four => 4,
            TaskSet::HashingOnly => 3,
        };
        let (_, mut shared_sum) = pcgrad(&shared[..in_surgery], &mut surgery_rng);
        for extra in &shared[in_surgery..] {
            shared_sum.iter_mut().zip(extra).for_each(|(s, v)| *s += v);
        }

        let mut codec_grad = vec![0.0; tasks[0][0].len()];
        let mut head_grad = vec![0.0; tasks[0][1].len()];
        for t in &tasks {
            codec_grad.iter_mut().zip(&t[0]).for_each(|(s, v)| *s += v);
            head_grad.iter_mut().zip(&t[1]).for_each(|(s, v)| *s += v);
        }
        codec_grad[shared_off..shared_off + shared_len].copy_from_slice(&shared_sum);

        let cg = split_by_name(&codec_grad, &codec_names, &codec.params)?;
        let hg_map = split_by_name(&head_grad, &head_names, &head.params)?;
        let err = |e: Error| Error::NonFinite(format!("step {step}: {e}"));
        adam.step(&mut codec.params, &cg, |_| codec_lr).map_err(err)?;
        adam.step(&mut head.params, &hg_map, |_| lr).map_err(err)?;

        rows.push(LogRow {
            step,
            stage: 2,
            compression: lc,
            hashing: Some((lp, lb, lcls)),
            bpp: bits / pixels,
            psnr: psnr_from_mse(mse, 1.0),
        });
    }
    Ok(StageReport { rows, stopped_early: false })
}

/// Offset of the contiguous block of shared tensors in the name-ordered
/// flat codec gradient.
fn shared_offset(names: &[String], params: &crate::params::ParamStore) -> Result<usize> {
    let mut off = 0;
    let mut start = None;
    for (i, n) in names.iter().enumerate() {
        let shared = n.starts_with(SHARED_PREFIX);
        match (shared, start) {
            (true, None) => start = Some((i, off)),
            (false, Some((s, _))) if i > s && names[i..].iter().any(|m| m.starts_with(SHARED_PREFIX)) => {
                return Err(Error::Config("shared parameters are not contiguous".into()))
            }
            _ => {}
        }
        off += params.get(n)?.len();
    }
    Ok(start.map_or(0, |(_, o)| o))
}
