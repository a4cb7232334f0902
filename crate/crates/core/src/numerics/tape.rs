//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every primitive appends one node holding its output value; `backward`
//! walks the tape in reverse and accumulates `d(loss)/d(leaf)` into the
//! gradient buffer of every trainable leaf.

use super::kernels::{self, ConvGeometry};
use super::{NumericsError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operation kinds. Layout conventions: convolutions and
/// channel-wise ops expect `[N, C, ...]`; "axis 1" is the channel axis.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    Scale(f64),
    AddScalar(f64),
    MatMul,
    Transpose,
    Conv2d { stride: usize, pad: usize },
    /// `x[N, C, ...] + b[C]`
    BiasAdd,
    /// `x[N, C, ...] · s[C] + t[C]`
    ChannelAffine,
    /// `x[N, C, ...] · g[N, C]`
    ChannelGate,
    Relu,
    Sigmoid,
    Tanh,
    Softplus,
    Log,
    Exp,
    Square,
    Sum,
    Mean,
    Concat,
    Slice { start: usize, len: usize },
    Reshape(Vec<usize>),
    /// depth-to-space: `[N, C·r², H, W] → [N, C, H·r, W·r]`
    PixelShuffle(usize),
    GlobalAvgPool,
    /// softmax across `groups` equal channel blocks of `[N, groups·C, ...]`
    SoftmaxGroups(usize),
    /// `Φ(u) − Φ(l)` for the standard normal CDF Φ
    NormalInterval,
    /// `σ(u) − σ(l)` for the logistic function σ
    SigmoidInterval,
    ClampMin(f64),
    /// forward: round half away from zero; backward: identity
    RoundSte,
    /// forward: sign with sign(0) = +1; backward: identity
    SignSte,
}

impl Primitive {
    fn arity(&self) -> Option<usize> {
        use Primitive::*;
        match self {
            Add | Sub | Mul | Div | MatMul | Conv2d { .. } | BiasAdd | ChannelGate
            | NormalInterval | SigmoidInterval => Some(2),
            ChannelAffine => Some(3),
            Concat => None,
            _ => Some(1),
        }
    }

    fn name(&self) -> &'static str {
        use Primitive::*;
        match self {
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            Div => "div",
            Scale(_) => "scale",
            AddScalar(_) => "add_scalar",
            MatMul => "matmul",
            Transpose => "transpose",
            Conv2d { .. } => "conv2d",
            BiasAdd => "bias_add",
            ChannelAffine => "channel_affine",
            ChannelGate => "channel_gate",
            Relu => "relu",
            Sigmoid => "sigmoid",
            Tanh => "tanh",
            Softplus => "softplus",
            Log => "log",
            Exp => "exp",
            Square => "square",
            Sum => "sum",
            Mean => "mean",
            Concat => "concat",
            Slice { .. } => "slice",
            Reshape(_) => "reshape",
            PixelShuffle(_) => "pixel_shuffle",
            GlobalAvgPool => "global_avg_pool",
            SoftmaxGroups(_) => "softmax_groups",
            NormalInterval => "normal_interval",
            SigmoidInterval => "sigmoid_interval",
            ClampMin(_) => "clamp_min",
            RoundSte => "round_ste",
            SignSte => "sign_ste",
        }
    }
}

struct Node {
    prim: Option<Primitive>,
    inputs: Vec<Var>,
    value: Tensor,
    trainable: bool,
    // some trainable leaf lies upstream
    needs_grad: bool,
}

/// Ordered record of primitive applications. Nodes only reference
/// earlier nodes, so the tape is topologically sorted by construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &str, detail: String) -> NumericsError {
    NumericsError::Shape(format!("{op}: {detail}"))
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(None, Vec::new(), t, false)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(None, Vec::new(), t, true)
    }

    fn push(&mut self, prim: Option<Primitive>, inputs: Vec<Var>, value: Tensor, trainable: bool) -> Var {
        let needs_grad = trainable || inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { prim, inputs, value, trainable, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Accumulated gradient of a trainable leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    /// Applies a primitive to recorded inputs and records the result.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var, NumericsError> {
        if let Some(k) = prim.arity() {
            if inputs.len() != k {
                return Err(shape_err(prim.name(), format!("expected {k} inputs, got {}", inputs.len())));
            }
        } else if inputs.is_empty() {
            return Err(shape_err(prim.name(), "needs at least one input".into()));
        }
        let value = self.forward(&prim, inputs)?;
        Ok(self.push(Some(prim), inputs.to_vec(), value, false))
    }

    fn forward(&self, prim: &Primitive, inputs: &[Var]) -> Result<Tensor, NumericsError> {
        use Primitive::*;
        let a = self.value(inputs[0]);
        let same_shape = |b: &Tensor| -> Result<(), NumericsError> {
            if a.shape() == b.shape() {
                Ok(())
            } else {
                Err(shape_err(prim.name(), format!("{:?} vs {:?}", a.shape(), b.shape())))
            }
        };
        let unary = |f: &dyn Fn(f64) -> f64| -> Tensor {
            let data = a.data().iter().map(|&x| f(x)).collect();
            Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
        };
        let binary = |b: &Tensor, f: &dyn Fn(f64, f64) -> f64| -> Tensor {
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
        };

        Ok(match prim {
            Add | Sub | Mul | Div | NormalInterval | SigmoidInterval => {
                let b = self.value(inputs[1]);
                same_shape(b)?;
                match prim {
                    Add => binary(b, &|x, y| x + y),
                    Sub => binary(b, &|x, y| x - y),
                    Mul => binary(b, &|x, y| x * y),
                    Div => binary(b, &|x, y| x / y),
                    NormalInterval => binary(b, &kernels::normal_interval),
                    _ => binary(b, &kernels::sigmoid_interval),
                }
            }
            Scale(c) => unary(&|x| x * c),
            AddScalar(c) => unary(&|x| x + c),
            Relu => unary(&|x| if x > 0.0 { x } else { 0.0 }),
            Sigmoid => unary(&kernels::sigmoid),
            Tanh => unary(&f64::tanh),
            Softplus => unary(&kernels::softplus),
            Log => unary(&f64::ln),
            Exp => unary(&f64::exp),
            Square => unary(&|x| x * x),
            ClampMin(c) => unary(&|x| if x > *c { x } else { *c }),
            RoundSte => unary(&kernels::round_half_away),
            SignSte => unary(&|x| if x >= 0.0 { 1.0 } else { -1.0 }),
            Sum => Tensor::scalar(a.data().iter().sum()),
            Mean => {
                if a.is_empty() {
                    return Err(shape_err("mean", "empty tensor".into()));
                }
                Tensor::scalar(a.data().iter().sum::<f64>() / a.len() as f64)
            }
            MatMul => {
                let b = self.value(inputs[1]);
                let (m, k, n) = matmul_dims(a, b)?;
                let mut out = vec![0.0; m * n];
                kernels::gemm_nn(m, k, n, a.data(), b.data(), &mut out);
                Tensor::new(vec![m, n], out)?
            }
            Transpose => {
                if a.rank() != 2 {
                    return Err(shape_err("transpose", format!("rank-2 input required, got {:?}", a.shape())));
                }
                let (r, c) = (a.shape()[0], a.shape()[1]);
                Tensor::new(vec![c, r], transpose(a.data(), r, c))?
            }
            Conv2d { stride, pad } => {
                let w = self.value(inputs[1]);
                let (g, n, o) = conv_dims(a, w, *stride, *pad)?;
                let (rows, cols_n) = (g.col_rows(), g.col_cols());
                let in_sz = g.channels * g.height * g.width;
                let mut cols = vec![0.0; rows * cols_n];
                let mut out = vec![0.0; n * o * cols_n];
                for b in 0..n {
                    kernels::im2col(&g, &a.data()[b * in_sz..(b + 1) * in_sz], &mut cols);
                    kernels::gemm_nn(o, rows, cols_n, w.data(), &cols, &mut out[b * o * cols_n..(b + 1) * o * cols_n]);
                }
                Tensor::new(vec![n, o, g.out_height(), g.out_width()], out)?
            }
            BiasAdd => {
                let b = self.value(inputs[1]);
                let (n, c, inner) = channel_dims(a, b, "bias_add")?;
                let mut out = a.data().to_vec();
                for i in 0..n {
                    for ch in 0..c {
                        let off = (i * c + ch) * inner;
                        out[off..off + inner].iter_mut().for_each(|v| *v += b.data()[ch]);
                    }
                }
                Tensor::new(a.shape().to_vec(), out)?
            }
            ChannelAffine => {
                let s = self.value(inputs[1]);
                let t = self.value(inputs[2]);
                let (n, c, inner) = channel_dims(a, s, "channel_affine")?;
                channel_dims(a, t, "channel_affine")?;
                let mut out = a.data().to_vec();
                for i in 0..n {
                    for ch in 0..c {
                        let off = (i * c + ch) * inner;
                        let (sv, tv) = (s.data()[ch], t.data()[ch]);
                        out[off..off + inner].iter_mut().for_each(|v| *v = *v * sv + tv);
                    }
                }
                Tensor::new(a.shape().to_vec(), out)?
            }
            ChannelGate => {
                let gte = self.value(inputs[1]);
                if a.rank() < 2 || gte.shape() != &a.shape()[..2] {
                    return Err(shape_err("channel_gate", format!("{:?} vs gate {:?}", a.shape(), gte.shape())));
                }
                let inner: usize = a.shape()[2..].iter().product();
                let mut out = a.data().to_vec();
                for (idx, &gv) in gte.data().iter().enumerate() {
                    out[idx * inner..(idx + 1) * inner].iter_mut().for_each(|v| *v *= gv);
                }
                Tensor::new(a.shape().to_vec(), out)?
            }
            Concat => {
                let parts: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                concat_axis1(&parts)?
            }
            Slice { start, len } => {
                if a.rank() < 2 || start + len > a.shape()[1] || *len == 0 {
                    return Err(shape_err("slice", format!("[{start}, {}) out of {:?}", start + len, a.shape())));
                }
                let (n, c) = (a.shape()[0], a.shape()[1]);
                let inner: usize = a.shape()[2..].iter().product();
                let mut out = Vec::with_capacity(n * len * inner);
                for i in 0..n {
                    let off = (i * c + start) * inner;
                    out.extend_from_slice(&a.data()[off..off + len * inner]);
                }
                let mut shape = a.shape().to_vec();
                shape[1] = *len;
                Tensor::new(shape, out)?
            }
            Reshape(shape) => a.clone().reshaped(shape.clone())?,
            PixelShuffle(r) => {
                let r = *r;
                if a.rank() != 4 || r == 0 || a.shape()[1] % (r * r) != 0 {
                    return Err(shape_err("pixel_shuffle", format!("{:?} with factor {r}", a.shape())));
                }
                let (n, cin, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2], a.shape()[3]);
                let c = cin / (r * r);
                let mut out = vec![0.0; a.len()];
                for_each_shuffle(n, c, h, w, r, |src, dst| out[dst] = a.data()[src]);
                Tensor::new(vec![n, c, h * r, w * r], out)?
            }
            GlobalAvgPool => {
                if a.rank() < 3 {
                    return Err(shape_err("global_avg_pool", format!("rank ≥ 3 required, got {:?}", a.shape())));
                }
                let (n, c) = (a.shape()[0], a.shape()[1]);
                let inner: usize = a.shape()[2..].iter().product();
                let out = a.data().chunks(inner).map(|ch| ch.iter().sum::<f64>() / inner as f64).collect();
                Tensor::new(vec![n, c], out)?
            }
            SoftmaxGroups(k) => {
                let (n, c, inner) = group_dims(a, *k)?;
                let mut out = vec![0.0; a.len()];
                let mut buf = vec![0.0; *k];
                for i in 0..n {
                    for ch in 0..c {
                        for e in 0..inner {
                            let idx = |g: usize| ((i * k + g) * c + ch) * inner + e;
                            let max = (0..*k).map(|g| a.data()[idx(g)]).fold(f64::NEG_INFINITY, f64::max);
                            let mut total = 0.0;
                            for (g, slot) in buf.iter_mut().enumerate() {
                                *slot = (a.data()[idx(g)] - max).exp();
                                total += *slot;
                            }
                            for (g, slot) in buf.iter().enumerate() {
                                out[idx(g)] = slot / total;
                            }
                        }
                    }
                }
                Tensor::new(a.shape().to_vec(), out)?
            }
        })
    }

    /// Propagates `d(loss)/d(·)` back through the tape, accumulating into
    /// every trainable leaf's gradient buffer. Calling it twice without
    /// [`Tape::zero_grad`] doubles the stored gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericsError> {
        if self.value(loss).len() != 1 {
            return Err(NumericsError::NotScalar(self.shape(loss).to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            let Some(prim) = node.prim.clone() else {
                if node.trainable {
                    self.nodes[idx].value.accumulate_grad(&g);
                }
                continue;
            };
            let inputs = node.inputs.clone();
            let want: Vec<bool> = inputs.iter().map(|v| self.nodes[v.0].needs_grad).collect();
            if !want.iter().any(|&w| w) {
                continue;
            }
            let grads = self.input_grads(&prim, &inputs, &want, idx, &g);
            for ((var, gi), &w) in inputs.iter().zip(grads).zip(&want) {
                let Some(gi) = gi.filter(|_| w) else { continue };
                match &mut adj[var.0] {
                    Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(gi),
                }
            }
        }
        Ok(())
    }

    /// Adjoints of each input; entries with `want[i] == false` may be skipped.
    fn input_grads(&self, prim: &Primitive, inputs: &[Var], want: &[bool], out_idx: usize, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        use Primitive::*;
        let y = self.nodes[out_idx].value.data();
        let x = self.data(inputs[0]);
        let map1 = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..g.len()).map(f).collect() };

        match prim {
            Add => vec![Some(g.to_vec()), Some(g.to_vec())],
            Sub => vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
            Mul => {
                let b = self.data(inputs[1]);
                vec![Some(map1(&|i| g[i] * b[i])), Some(map1(&|i| g[i] * x[i]))]
            }
            Div => {
                let b = self.data(inputs[1]);
                vec![Some(map1(&|i| g[i] / b[i])), Some(map1(&|i| -g[i] * x[i] / (b[i] * b[i])))]
            }
            Scale(c) => vec![Some(g.iter().map(|v| v * c).collect())],
            AddScalar(_) | RoundSte | SignSte | Reshape(_) => vec![Some(g.to_vec())],
            Relu => vec![Some(map1(&|i| if x[i] > 0.0 { g[i] } else { 0.0 }))],
            Sigmoid => vec![Some(map1(&|i| g[i] * y[i] * (1.0 - y[i])))],
            Tanh => vec![Some(map1(&|i| g[i] * (1.0 - y[i] * y[i])))],
            Softplus => vec![Some(map1(&|i| g[i] * kernels::sigmoid(x[i])))],
            Log => vec![Some(map1(&|i| g[i] / x[i]))],
            Exp => vec![Some(map1(&|i| g[i] * y[i]))],
            Square => vec![Some(map1(&|i| 2.0 * x[i] * g[i]))],
            ClampMin(c) => vec![Some(map1(&|i| if x[i] > *c { g[i] } else { 0.0 }))],
            Sum => vec![Some(vec![g[0]; x.len()])],
            Mean => vec![Some(vec![g[0] / x.len() as f64; x.len()])],
            NormalInterval => {
                let l = self.data(inputs[1]);
                vec![
                    Some(map1(&|i| g[i] * kernels::normal_pdf(x[i]))),
                    Some(map1(&|i| -g[i] * kernels::normal_pdf(l[i]))),
                ]
            }
            SigmoidInterval => {
                let l = self.data(inputs[1]);
                let d = |v: f64| kernels::sigmoid(v) * kernels::sigmoid(-v);
                vec![Some(map1(&|i| g[i] * d(x[i]))), Some(map1(&|i| -g[i] * d(l[i])))]
            }
            MatMul => {
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                let ga = want[0].then(|| {
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm_nt(m, n, k, g, b.data(), &mut ga);
                    ga
                });
                let gb = want[1].then(|| {
                    let mut gb = vec![0.0; k * n];
                    kernels::gemm_tn(k, m, n, a.data(), g, &mut gb);
                    gb
                });
                vec![ga, gb]
            }
            Transpose => {
                let s = self.shape(inputs[0]);
                // g has the transposed shape [c, r]
                vec![Some(transpose(g, s[1], s[0]))]
            }
            Conv2d { stride, pad } => {
                let (a, w) = (self.value(inputs[0]), self.value(inputs[1]));
                let (geo, n, o) = conv_dims(a, w, *stride, *pad).expect("validated in forward");
                let (rows, cols_n) = (geo.col_rows(), geo.col_cols());
                let in_sz = geo.channels * geo.height * geo.width;
                let mut cols = vec![0.0; rows * cols_n];
                let mut dcols = vec![0.0; rows * cols_n];
                let mut gx = vec![0.0; if want[0] { a.len() } else { 0 }];
                let mut gw = vec![0.0; if want[1] { w.len() } else { 0 }];
                for bi in 0..n {
                    let g_b = &g[bi * o * cols_n..(bi + 1) * o * cols_n];
                    if want[1] {
                        kernels::im2col(&geo, &a.data()[bi * in_sz..(bi + 1) * in_sz], &mut cols);
                        kernels::gemm_nt(o, cols_n, rows, g_b, &cols, &mut gw);
                    }
                    if want[0] {
                        dcols.fill(0.0);
                        kernels::gemm_tn(rows, o, cols_n, w.data(), g_b, &mut dcols);
                        kernels::col2im(&geo, &dcols, &mut gx[bi * in_sz..(bi + 1) * in_sz]);
                    }
                }
                vec![want[0].then_some(gx), want[1].then_some(gw)]
            }
            BiasAdd => {
                let c = self.value(inputs[1]).len();
                let (n, inner) = (self.shape(inputs[0])[0], x.len() / (self.shape(inputs[0])[0] * c));
                let mut gb = vec![0.0; c];
                for i in 0..n {
                    for (ch, slot) in gb.iter_mut().enumerate() {
                        let off = (i * c + ch) * inner;
                        *slot += g[off..off + inner].iter().sum::<f64>();
                    }
                }
                vec![Some(g.to_vec()), Some(gb)]
            }
            ChannelAffine => {
                let s = self.data(inputs[1]);
                let c = s.len();
                let n = self.shape(inputs[0])[0];
                let inner = x.len() / (n * c);
                let mut gx = vec![0.0; x.len()];
                let mut gs = vec![0.0; c];
                let mut gt = vec![0.0; c];
                for i in 0..n {
                    for ch in 0..c {
                        let off = (i * c + ch) * inner;
                        for e in off..off + inner {
                            gx[e] = g[e] * s[ch];
                            gs[ch] += g[e] * x[e];
                            gt[ch] += g[e];
                        }
                    }
                }
                vec![Some(gx), Some(gs), Some(gt)]
            }
            ChannelGate => {
                let gate = self.data(inputs[1]);
                let inner = x.len() / gate.len();
                let mut gx = vec![0.0; x.len()];
                let mut gg = vec![0.0; gate.len()];
                for (idx, &gv) in gate.iter().enumerate() {
                    for e in idx * inner..(idx + 1) * inner {
                        gx[e] = g[e] * gv;
                        gg[idx] += g[e] * x[e];
                    }
                }
                vec![Some(gx), Some(gg)]
            }
            Concat => {
                let n = self.shape(inputs[0])[0];
                let total_c: usize = inputs.iter().map(|&v| self.shape(v)[1]).sum();
                let inner: usize = self.shape(inputs[0])[2..].iter().product();
                let mut offset = 0;
                inputs
                    .iter()
                    .map(|&v| {
                        let c = self.shape(v)[1];
                        let mut gi = Vec::with_capacity(n * c * inner);
                        for i in 0..n {
                            let off = (i * total_c + offset) * inner;
                            gi.extend_from_slice(&g[off..off + c * inner]);
                        }
                        offset += c;
                        Some(gi)
                    })
                    .collect()
            }
            Slice { start, len } => {
                let s = self.shape(inputs[0]);
                let (n, c) = (s[0], s[1]);
                let inner: usize = s[2..].iter().product();
                let mut gx = vec![0.0; x.len()];
                for i in 0..n {
                    let dst = (i * c + start) * inner;
                    let src = i * len * inner;
                    gx[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                vec![Some(gx)]
            }
            PixelShuffle(r) => {
                let s = self.shape(inputs[0]);
                let (n, c, h, w) = (s[0], s[1] / (r * r), s[2], s[3]);
                let mut gx = vec![0.0; x.len()];
                for_each_shuffle(n, c, h, w, *r, |src, dst| gx[src] = g[dst]);
                vec![Some(gx)]
            }
            GlobalAvgPool => {
                let inner = x.len() / g.len();
                let mut gx = vec![0.0; x.len()];
                for (idx, &gv) in g.iter().enumerate() {
                    gx[idx * inner..(idx + 1) * inner].fill(gv / inner as f64);
                }
                vec![Some(gx)]
            }
            SoftmaxGroups(k) => {
                let s = self.shape(inputs[0]);
                let (n, c) = (s[0], s[1] / k);
                let inner: usize = s[2..].iter().product();
                let mut gx = vec![0.0; x.len()];
                for i in 0..n {
                    for ch in 0..c {
                        for e in 0..inner {
                            let idx = |gr: usize| ((i * k + gr) * c + ch) * inner + e;
                            let dot: f64 = (0..*k).map(|gr| g[idx(gr)] * y[idx(gr)]).sum();
                            for gr in 0..*k {
                                gx[idx(gr)] = y[idx(gr)] * (g[idx(gr)] - dot);
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }
        }
    }
}

fn matmul_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize), NumericsError> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(shape_err("matmul", format!("{:?} × {:?}", a.shape(), b.shape())));
    }
    Ok((a.shape()[0], a.shape()[1], b.shape()[1]))
}

fn conv_dims(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<(ConvGeometry, usize, usize), NumericsError> {
    if x.rank() != 4 || w.rank() != 4 {
        return Err(shape_err("conv2d", format!("input {:?}, weight {:?}", x.shape(), w.shape())));
    }
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, wc, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    if wc != c || kh != kw || stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw {
        return Err(shape_err(
            "conv2d",
            format!("input {:?}, weight {:?}, stride {stride}, pad {pad}", x.shape(), w.shape()),
        ));
    }
    let geo = ConvGeometry { channels: c, height: h, width: wd, kernel: kh, stride, pad };
    Ok((geo, n, o))
}

fn channel_dims(x: &Tensor, per_channel: &Tensor, op: &str) -> Result<(usize, usize, usize), NumericsError> {
    if x.rank() < 2 || per_channel.rank() != 1 || per_channel.len() != x.shape()[1] {
        return Err(shape_err(op, format!("{:?} with per-channel {:?}", x.shape(), per_channel.shape())));
    }
    let inner = x.shape()[2..].iter().product();
    Ok((x.shape()[0], x.shape()[1], inner))
}

fn group_dims(x: &Tensor, groups: usize) -> Result<(usize, usize, usize), NumericsError> {
    if x.rank() < 2 || groups == 0 || x.shape()[1] % groups != 0 {
        return Err(shape_err("softmax_groups", format!("{:?} into {groups} groups", x.shape())));
    }
    Ok((x.shape()[0], x.shape()[1] / groups, x.shape()[2..].iter().product()))
}

fn concat_axis1(parts: &[&Tensor]) -> Result<Tensor, NumericsError> {
    let first = parts[0];
    if first.rank() < 2 {
        return Err(shape_err("concat", format!("rank ≥ 2 required, got {:?}", first.shape())));
    }
    for p in parts {
        if p.rank() != first.rank() || p.shape()[0] != first.shape()[0] || p.shape()[2..] != first.shape()[2..] {
            return Err(shape_err("concat", format!("{:?} vs {:?}", first.shape(), p.shape())));
        }
    }
    let n = first.shape()[0];
    let inner: usize = first.shape()[2..].iter().product();
    let total_c: usize = parts.iter().map(|p| p.shape()[1]).sum();
    let mut out = Vec::with_capacity(n * total_c * inner);
    for i in 0..n {
        for p in parts {
            let c = p.shape()[1];
            out.extend_from_slice(&p.data()[i * c * inner..(i + 1) * c * inner]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[1] = total_c;
    Tensor::new(shape, out)
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Calls `f(src, dst)` for every element of a depth-to-space shuffle.
fn for_each_shuffle(n: usize, c: usize, h: usize, w: usize, r: usize, mut f: impl FnMut(usize, usize)) {
    let (ho, wo) = (h * r, w * r);
    for b in 0..n {
        for ch in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let cin = ch * r * r + i * r + j;
                    for y in 0..h {
                        for x in 0..w {
                            let src = ((b * c * r * r + cin) * h + y) * w + x;
                            let dst = ((b * c + ch) * ho + y * r + i) * wo + x * r + j;
                            f(src, dst);
                        }
                    }
                }
            }
        }
    }
}
