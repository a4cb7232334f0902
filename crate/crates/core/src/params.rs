//! Named parameter tensors and their binding onto a [`Tape`].

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;

use crate::dataset::{read_tensor_from, write_tensor_to};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Parameters keyed by dotted name; iteration order is the sorted name order,
/// which fixes the layout of every flattened gradient.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::NotFound(format!("parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors.get_mut(name).ok_or_else(|| Error::NotFound(format!("parameter '{name}'")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Moves every tensor of `other` into `self`.
    pub fn merge(&mut self, other: ParamStore) {
        self.tensors.extend(other.tensors);
    }

    /// Subset whose names start with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> ParamStore {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Records every parameter on the tape (trainable or constant).
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, t)| {
                let v = if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
                (k.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    /// Uniform init in `±sqrt(6 / fan_in) · gain`.
    pub fn init_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, gain: f64, rng: &mut impl Rng) {
        let bound = (6.0 / fan_in as f64).sqrt() * gain;
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data).expect("consistent shape"));
    }

    pub fn init_const(&mut self, name: &str, shape: &[usize], value: f64) {
        self.insert(name, Tensor::filled(shape, value));
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (k, t) in &self.tensors {
            write_tensor_to(out, k, t)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut count = [0u8; 4];
        input.read_exact(&mut count).map_err(|_| Error::Format("truncated parameter count".into()))?;
        let mut store = ParamStore::new();
        for _ in 0..u32::from_le_bytes(count) {
            let (name, t) = read_tensor_from(input)?.ok_or_else(|| Error::Format("missing parameter record".into()))?;
            store.insert(name, t);
        }
        Ok(store)
    }
}

/// Tape handles for a bound [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Points `name` at a different tape value (used to differentiate with
    /// respect to one tensor while the rest stay constant).
    pub fn replace(&mut self, name: &str, var: Var) {
        self.vars.insert(name.to_string(), var);
    }

    pub fn var(&self, name: &str) -> Var {
        *self.vars.get(name).unwrap_or_else(|| panic!("parameter '{name}' was not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    /// Gradients for the named parameters, concatenated in name order.
    /// Parameters not reached by backward contribute zeros.
    pub fn flat_grad<'a>(&self, tape: &Tape, names: impl IntoIterator<Item = &'a String>) -> Vec<f64> {
        let mut out = Vec::new();
        for name in names {
            let v = self.var(name);
            match tape.grad(v) {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat_n(0.0, tape.value(v).len())),
            }
        }
        out
    }
}
