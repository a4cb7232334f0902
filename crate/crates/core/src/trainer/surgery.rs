//! Multi-task gradient combination: two-task min-norm (MGDA) and
//! projection of conflicting gradients (PCGrad).

use rand::seq::SliceRandom;
use rand::Rng;

use crate::numerics::kernels::dot;

/// Min-norm point of `{α g₁ + (1 − α) g₂ : α ∈ [0, 1]}` and its `α`.
pub fn mgda_combine(g1: &[f64], g2: &[f64]) -> (Vec<f64>, f64) {
    assert_eq!(g1.len(), g2.len(), "task gradients must cover the same parameters");
    let diff: Vec<f64> = g2.iter().zip(g1).map(|(b, a)| b - a).collect();
    let denom = dot(&diff, &diff);
    let alpha = if denom > 0.0 { (dot(&diff, g2) / denom).clamp(0.0, 1.0) } else { 0.5 };
    let combined = g1.iter().zip(g2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
    (combined, alpha)
}

/// Each task gradient is projected off every other task gradient it
/// conflicts with, visiting the others in a random order drawn from `rng`.
/// Projections use the original (unprojected) other gradients. Returns the
/// projected gradients and their sum.
pub fn pcgrad(grads: &[Vec<f64>], rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dim = grads.first().map_or(0, Vec::len);
    assert!(grads.iter().all(|g| g.len() == dim), "task gradients must cover the same parameters");
    let norms: Vec<f64> = grads.iter().map(|g| dot(g, g)).collect();
    let mut projected = Vec::with_capacity(grads.len());
    for (i, gi) in grads.iter().enumerate() {
        let mut g = gi.clone();
        let mut others: Vec<usize> = (0..grads.len()).filter(|&j| j != i).collect();
        others.shuffle(rng);
        for j in others {
            if norms[j] == 0.0 {
                continue;
            }
            let d = dot(&g, &grads[j]);
            if d < 0.0 {
                let c = d / norms[j];
                g.iter_mut().zip(&grads[j]).for_each(|(a, b)| *a -= c * b);
            }
        }
        projected.push(g);
    }
    let mut sum = vec![0.0; dim];
    for g in &projected {
        sum.iter_mut().zip(g).for_each(|(s, v)| *s += v);
    }
    (projected, sum)
}
