use std::collections::BTreeMap;

use crate::params::ParamStore;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

/// Adaptive-moment optimizer with state per named tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    state: BTreeMap<String, Moments>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, state: BTreeMap::new() }
    }
}

impl Adam {
    /// One update of every tensor named in `grads`, with step size
    /// `rate(name)`. Tensors at rate 0 are left untouched, moments included.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Vec<f64>>, rate: impl Fn(&str) -> f64) -> Result<()> {
        for (name, g) in grads {
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name} contains {bad}")));
            }
        }
        for (name, g) in grads {
            let lr = rate(name);
            if lr == 0.0 {
                continue;
            }
            let p = params.get_mut(name)?;
            if p.len() != g.len() {
                return Err(Error::Compatibility(format!("gradient of {name} has {} entries, tensor {}", g.len(), p.len())));
            }
            let st = self.state.entry(name.clone()).or_insert_with(|| Moments { m: vec![0.0; g.len()], v: vec![0.0; g.len()], steps: 0 });
            st.steps += 1;
            let c1 = 1.0 - self.beta1.powi(st.steps);
            let c2 = 1.0 - self.beta2.powi(st.steps);
            for ((w, &gi), (m, v)) in p.data_mut().iter_mut().zip(g).zip(st.m.iter_mut().zip(st.v.iter_mut())) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
