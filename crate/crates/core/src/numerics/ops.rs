use super::tape::{Primitive, Tape, Var};
use super::NumericsError;

type R = Result<Var, NumericsError>;

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> R {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> R {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> R {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> R {
        self.apply(Primitive::Div, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> R {
        self.apply(Primitive::Scale(c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> R {
        self.apply(Primitive::AddScalar(c), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> R {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> R {
        self.apply(Primitive::Transpose, &[a])
    }

    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> R {
        self.apply(Primitive::Conv2d { stride, pad }, &[x, w])
    }

    pub fn bias_add(&mut self, x: Var, b: Var) -> R {
        self.apply(Primitive::BiasAdd, &[x, b])
    }

    pub fn channel_affine(&mut self, x: Var, scale: Var, shift: Var) -> R {
        self.apply(Primitive::ChannelAffine, &[x, scale, shift])
    }

    pub fn channel_gate(&mut self, x: Var, gate: Var) -> R {
        self.apply(Primitive::ChannelGate, &[x, gate])
    }

    pub fn relu(&mut self, a: Var) -> R {
        self.apply(Primitive::Relu, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> R {
        self.apply(Primitive::Sigmoid, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> R {
        self.apply(Primitive::Tanh, &[a])
    }

    pub fn softplus(&mut self, a: Var) -> R {
        self.apply(Primitive::Softplus, &[a])
    }

    pub fn log(&mut self, a: Var) -> R {
        self.apply(Primitive::Log, &[a])
    }

    pub fn exp(&mut self, a: Var) -> R {
        self.apply(Primitive::Exp, &[a])
    }

    pub fn square(&mut self, a: Var) -> R {
        self.apply(Primitive::Square, &[a])
    }

    pub fn sum(&mut self, a: Var) -> R {
        self.apply(Primitive::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> R {
        self.apply(Primitive::Mean, &[a])
    }

    pub fn concat(&mut self, parts: &[Var]) -> R {
        self.apply(Primitive::Concat, parts)
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> R {
        self.apply(Primitive::Slice { start, len }, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> R {
        self.apply(Primitive::Reshape(shape.to_vec()), &[a])
    }

    pub fn pixel_shuffle(&mut self, a: Var, factor: usize) -> R {
        self.apply(Primitive::PixelShuffle(factor), &[a])
    }

    pub fn global_avg_pool(&mut self, a: Var) -> R {
        self.apply(Primitive::GlobalAvgPool, &[a])
    }

    pub fn softmax_groups(&mut self, a: Var, groups: usize) -> R {
        self.apply(Primitive::SoftmaxGroups(groups), &[a])
    }

    pub fn normal_interval(&mut self, upper: Var, lower: Var) -> R {
        self.apply(Primitive::NormalInterval, &[upper, lower])
    }

    pub fn sigmoid_interval(&mut self, upper: Var, lower: Var) -> R {
        self.apply(Primitive::SigmoidInterval, &[upper, lower])
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> R {
        self.apply(Primitive::ClampMin(floor), &[a])
    }

    pub fn round_ste(&mut self, a: Var) -> R {
        self.apply(Primitive::RoundSte, &[a])
    }

    pub fn sign_ste(&mut self, a: Var) -> R {
        self.apply(Primitive::SignSte, &[a])
    }

    /// `x · w + b` for `x[N, F]`, `w[F, O]`, `b[O]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> R {
        let h = self.matmul(x, w)?;
        self.bias_add(h, b)
    }

    /// Convolution followed by a per-channel bias.
    pub fn conv2d_bias(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> R {
        let h = self.conv2d(x, w, stride, pad)?;
        self.bias_add(h, b)
    }
}
