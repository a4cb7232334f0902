//! Tape graph of the hashing head and the three losses of `L_H`.

use rand::Rng;

use super::config::HashHeadConfig;
use super::labels::{label_similarity, LabelVector};
use crate::numerics::{Tape, Tensor, Var};
use crate::params::{Bound, ParamStore};
use crate::{Error, Result};

pub const PARAM_PREFIX: &str = "hash_head.";

pub(crate) fn init_params(cfg: &HashHeadConfig, rng: &mut impl Rng) -> ParamStore {
    let mut p = ParamStore::new();
    let (c, h) = (cfg.latent_channels, cfg.hidden);
    p.init_uniform("hash_head.attn.w", &[c, c], c, 0.5, rng);
    p.init_const("hash_head.attn.b", &[c], 0.0);
    p.init_uniform("hash_head.conv0.w", &[h, c, 3, 3], 9 * c, 1.0, rng);
    p.init_const("hash_head.conv0.b", &[h], 0.0);
    p.init_uniform("hash_head.conv1.w", &[h, h, 3, 3], 9 * h, 1.0, rng);
    p.init_const("hash_head.conv1.b", &[h], 0.0);
    p.init_uniform("hash_head.cls.w", &[h, cfg.classes], h, 1.0, rng);
    p.init_const("hash_head.cls.b", &[cfg.classes], 0.0);
    p.init_uniform("hash_head.hash.w", &[h, cfg.code_bits], h, 1.0, rng);
    p.init_const("hash_head.hash.b", &[cfg.code_bits], 0.0);
    p
}

pub struct HashGraph {
    /// `[N, q]` pre-sign activations
    pub logits: Var,
    /// `[N, q]` straight-through signs
    pub codes: Var,
    /// `[N, C]` sigmoid label probabilities
    pub labels: Var,
}

/// Channel gate from pooled statistics, two conv layers, pooled features,
/// then the classification and hash heads side by side.
pub(crate) fn hash_graph(tape: &mut Tape, b: &Bound, latent: Var) -> Result<HashGraph> {
    let pooled = tape.global_avg_pool(latent)?;
    let gate = tape.dense(pooled, b.var("hash_head.attn.w"), b.var("hash_head.attn.b"))?;
    let gate = tape.sigmoid(gate)?;
    let x = tape.channel_gate(latent, gate)?;
    let h = tape.conv2d_bias(x, b.var("hash_head.conv0.w"), b.var("hash_head.conv0.b"), 1, 1)?;
    let h = tape.relu(h)?;
    let h = tape.conv2d_bias(h, b.var("hash_head.conv1.w"), b.var("hash_head.conv1.b"), 2, 1)?;
    let h = tape.relu(h)?;
    let feat = tape.global_avg_pool(h)?;
    let cls = tape.dense(feat, b.var("hash_head.cls.w"), b.var("hash_head.cls.b"))?;
    let labels = tape.sigmoid(cls)?;
    let logits = tape.dense(feat, b.var("hash_head.hash.w"), b.var("hash_head.hash.b"))?;
    let codes = tape.sign_ste(logits)?;
    Ok(HashGraph { logits, codes, labels })
}

/// Targets for all ordered pairs `(i, j)`, `i ≠ j`, of a batch, stored as
/// `N×N` masks with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct PairBatch {
    pub size: usize,
    pub similarity: Vec<f64>,
    pub hard: Vec<f64>,
    pub soft: Vec<f64>,
}

impl PairBatch {
    pub fn from_labels(labels: &[LabelVector]) -> Self {
        let n = labels.len();
        let mut pb = PairBatch { size: n, similarity: vec![0.0; n * n], hard: vec![0.0; n * n], soft: vec![0.0; n * n] };
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let s = label_similarity(&labels[i], &labels[j]);
                let idx = i * n + j;
                pb.similarity[idx] = s;
                if s.abs() < 1e-12 || (s - 1.0).abs() < 1e-12 {
                    pb.hard[idx] = 1.0;
                } else {
                    pb.soft[idx] = 1.0;
                }
            }
        }
        pb
    }

    /// Ordered pairs in the batch.
    pub fn pair_count(&self) -> usize {
        self.size * self.size.saturating_sub(1)
    }
}

pub struct HashLosses {
    pub pairwise: Var,
    pub balance: Var,
    pub classification: Var,
    /// unweighted sum of the three
    pub total: Var,
}

/// `L_p`, `L_b`, `L_c` of codes `[N, q]` (signs, or any relaxation of them)
/// and label probabilities `[N, C]` against multi-hot `truth`.
pub(crate) fn hash_losses(
    tape: &mut Tape,
    cfg: &HashHeadConfig,
    codes: Var,
    probs: Var,
    pairs: &PairBatch,
    truth: &[LabelVector],
) -> Result<HashLosses> {
    let n = pairs.size;
    let q = cfg.code_bits as f64;
    if tape.shape(codes) != [n, cfg.code_bits] || tape.shape(probs) != [n, cfg.classes] || truth.len() != n {
        return Err(Error::Compatibility(format!(
            "hash loss inputs {:?} / {:?} / {} labels for a batch of {n}",
            tape.shape(codes),
            tape.shape(probs),
            truth.len()
        )));
    }
    let nn = |v: &[f64]| Tensor::new(vec![n, n], v.to_vec());
    let s_o = tape.constant(nn(&pairs.similarity)?);
    let hard = tape.constant(nn(&pairs.hard)?);
    let soft = tape.constant(nn(&pairs.soft)?);

    let ct = tape.transpose(codes)?;
    let s_h = tape.matmul(codes, ct)?;
    // hard pairs: softplus(α s_h) − α s_h s_o
    let a_sh = tape.scale(s_h, cfg.alpha)?;
    let sp = tape.softplus(a_sh)?;
    let cross = tape.mul(a_sh, s_o)?;
    let hard_term = tape.sub(sp, cross)?;
    let hard_term = tape.mul(hard_term, hard)?;
    // soft pairs: γ (½(s_h + q) − s_o q)²
    let half = tape.add_scalar(s_h, q)?;
    let half = tape.scale(half, 0.5)?;
    let target = tape.scale(s_o, q)?;
    let gap = tape.sub(half, target)?;
    let gap = tape.square(gap)?;
    let soft_term = tape.mul(gap, soft)?;
    let soft_term = tape.scale(soft_term, cfg.gamma)?;
    let both = tape.add(hard_term, soft_term)?;
    let pairwise = tape.sum(both)?;

    // each image appears in 2(N − 1) ordered pairs
    let per_image = 2.0 * n.saturating_sub(1) as f64;
    let ones = tape.constant(Tensor::filled(&[cfg.code_bits, 1], 1.0));
    let sums = tape.matmul(codes, ones)?;
    let sq = tape.square(sums)?;
    let balance = tape.sum(sq)?;
    let balance = tape.scale(balance, per_image)?;

    let target: Vec<f64> = truth.iter().flat_map(|l| l.as_f64()).collect();
    if target.len() != n * cfg.classes {
        return Err(Error::Compatibility(format!("labels do not have {} classes", cfg.classes)));
    }
    let target = tape.constant(Tensor::new(vec![n, cfg.classes], target)?);
    let diff = tape.sub(probs, target)?;
    let sq = tape.square(diff)?;
    let classification = tape.sum(sq)?;
    let classification = tape.scale(classification, per_image)?;

    let total = tape.add(pairwise, balance)?;
    let total = tape.add(total, classification)?;
    Ok(HashLosses { pairwise, balance, classification, total })
}
