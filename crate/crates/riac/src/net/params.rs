use super::ArchConfig;
use crate::tensor::{Tape, Tensor, Var};
use rand::Rng;

/// Marker for the two parameter storages: plain values on the model,
/// tape handles once bound.
pub trait Storage {}
impl Storage for Tensor {}
impl Storage for Var {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct ConvP<T> {
    pub spec: ConvSpec,
    pub w: T,
    pub b: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmSpec {
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmP<T> {
    pub spec: LstmSpec,
    /// Gate weights `[4H, H + D]`, row blocks ordered i, f, g, o; the
    /// recurrent half comes first in each row (`[h_{t-1}, x_t]`).
    pub w: T,
    pub b: T,
}

#[derive(Debug, Clone)]
pub struct DenseP<T> {
    pub w: T,
    pub b: T,
}

/// Batch-norm running statistics (updated outside the tape).
#[derive(Debug, Clone, PartialEq)]
pub struct BnRunning {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnRunning {
    pub fn new(features: usize) -> Self {
        BnRunning { mean: vec![0.0; features], var: vec![1.0; features] }
    }

    pub fn update(&mut self, batch_mean: &[f64], batch_var: &[f64], momentum: f64) {
        for i in 0..self.mean.len() {
            self.mean[i] = momentum * self.mean[i] + (1.0 - momentum) * batch_mean[i];
            self.var[i] = momentum * self.var[i] + (1.0 - momentum) * batch_var[i];
        }
    }
}

/// Every learnable tensor of one RIAC-Net branch.
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    // STCF branches.
    pub b1: ConvP<T>,
    pub b2a: ConvP<T>,
    pub b2b: ConvP<T>,
    pub b3a: ConvP<T>,
    pub b3b: ConvP<T>,
    pub b3c: ConvP<T>,
    pub b4: ConvP<T>,
    // Attention gate.
    pub f7: ConvP<T>,
    pub f1_pool: ConvP<T>,
    pub f1_post: ConvP<T>,
    pub proj: ConvP<T>,
    // Head.
    pub bn_gamma: T,
    pub bn_beta: T,
    pub lstm1: LstmP<T>,
    pub lstm2: LstmP<T>,
    pub dense: DenseP<T>,
}

impl<T> ModelParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> ModelParams<U> {
        let conv = |c: &ConvP<T>, f: &mut dyn FnMut(&T) -> U| ConvP {
            spec: c.spec,
            w: f(&c.w),
            b: f(&c.b),
        };
        ModelParams {
            b1: conv(&self.b1, f),
            b2a: conv(&self.b2a, f),
            b2b: conv(&self.b2b, f),
            b3a: conv(&self.b3a, f),
            b3b: conv(&self.b3b, f),
            b3c: conv(&self.b3c, f),
            b4: conv(&self.b4, f),
            f7: conv(&self.f7, f),
            f1_pool: conv(&self.f1_pool, f),
            f1_post: conv(&self.f1_post, f),
            proj: conv(&self.proj, f),
            bn_gamma: f(&self.bn_gamma),
            bn_beta: f(&self.bn_beta),
            lstm1: LstmP { spec: self.lstm1.spec, w: f(&self.lstm1.w), b: f(&self.lstm1.b) },
            lstm2: LstmP { spec: self.lstm2.spec, w: f(&self.lstm2.w), b: f(&self.lstm2.b) },
            dense: DenseP { w: f(&self.dense.w), b: f(&self.dense.b) },
        }
    }

    pub fn for_each<'a>(&'a self, f: &mut impl FnMut(&'static str, &'a T)) {
        for (name, c) in self.convs() {
            f(conv_name(name, "w"), &c.w);
            f(conv_name(name, "b"), &c.b);
        }
        f("bn.gamma", &self.bn_gamma);
        f("bn.beta", &self.bn_beta);
        f("lstm1.w", &self.lstm1.w);
        f("lstm1.b", &self.lstm1.b);
        f("lstm2.w", &self.lstm2.w);
        f("lstm2.b", &self.lstm2.b);
        f("dense.w", &self.dense.w);
        f("dense.b", &self.dense.b);
    }

    pub fn for_each_mut(&mut self, f: &mut impl FnMut(&'static str, &mut T)) {
        let convs: [(&'static str, &mut ConvP<T>); 11] = [
            ("stcf.b1", &mut self.b1),
            ("stcf.b2a", &mut self.b2a),
            ("stcf.b2b", &mut self.b2b),
            ("stcf.b3a", &mut self.b3a),
            ("stcf.b3b", &mut self.b3b),
            ("stcf.b3c", &mut self.b3c),
            ("stcf.b4", &mut self.b4),
            ("attn.f7", &mut self.f7),
            ("attn.f1_pool", &mut self.f1_pool),
            ("attn.f1_post", &mut self.f1_post),
            ("attn.proj", &mut self.proj),
        ];
        for (name, c) in convs {
            f(conv_name(name, "w"), &mut c.w);
            f(conv_name(name, "b"), &mut c.b);
        }
        f("bn.gamma", &mut self.bn_gamma);
        f("bn.beta", &mut self.bn_beta);
        f("lstm1.w", &mut self.lstm1.w);
        f("lstm1.b", &mut self.lstm1.b);
        f("lstm2.w", &mut self.lstm2.w);
        f("lstm2.b", &mut self.lstm2.b);
        f("dense.w", &mut self.dense.w);
        f("dense.b", &mut self.dense.b);
    }

    /// Mutable references to every trainable tensor, in `for_each` order
    /// (the order Adam state and gradient lists are kept in).
    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        vec![
            &mut self.b1.w,
            &mut self.b1.b,
            &mut self.b2a.w,
            &mut self.b2a.b,
            &mut self.b2b.w,
            &mut self.b2b.b,
            &mut self.b3a.w,
            &mut self.b3a.b,
            &mut self.b3b.w,
            &mut self.b3b.b,
            &mut self.b3c.w,
            &mut self.b3c.b,
            &mut self.b4.w,
            &mut self.b4.b,
            &mut self.f7.w,
            &mut self.f7.b,
            &mut self.f1_pool.w,
            &mut self.f1_pool.b,
            &mut self.f1_post.w,
            &mut self.f1_post.b,
            &mut self.proj.w,
            &mut self.proj.b,
            &mut self.bn_gamma,
            &mut self.bn_beta,
            &mut self.lstm1.w,
            &mut self.lstm1.b,
            &mut self.lstm2.w,
            &mut self.lstm2.b,
            &mut self.dense.w,
            &mut self.dense.b,
        ]
    }

    fn convs(&self) -> [(&'static str, &ConvP<T>); 11] {
        [
            ("stcf.b1", &self.b1),
            ("stcf.b2a", &self.b2a),
            ("stcf.b2b", &self.b2b),
            ("stcf.b3a", &self.b3a),
            ("stcf.b3b", &self.b3b),
            ("stcf.b3c", &self.b3c),
            ("stcf.b4", &self.b4),
            ("attn.f7", &self.f7),
            ("attn.f1_pool", &self.f1_pool),
            ("attn.f1_post", &self.f1_post),
            ("attn.proj", &self.proj),
        ]
    }
}

fn conv_name(base: &'static str, field: &'static str) -> &'static str {
    // Static names for the fixed parameter set; extend alongside convs().
    match (base, field) {
        ("stcf.b1", "w") => "stcf.b1.w",
        ("stcf.b1", "b") => "stcf.b1.b",
        ("stcf.b2a", "w") => "stcf.b2a.w",
        ("stcf.b2a", "b") => "stcf.b2a.b",
        ("stcf.b2b", "w") => "stcf.b2b.w",
        ("stcf.b2b", "b") => "stcf.b2b.b",
        ("stcf.b3a", "w") => "stcf.b3a.w",
        ("stcf.b3a", "b") => "stcf.b3a.b",
        ("stcf.b3b", "w") => "stcf.b3b.w",
        ("stcf.b3b", "b") => "stcf.b3b.b",
        ("stcf.b3c", "w") => "stcf.b3c.w",
        ("stcf.b3c", "b") => "stcf.b3c.b",
        ("stcf.b4", "w") => "stcf.b4.w",
        ("stcf.b4", "b") => "stcf.b4.b",
        ("attn.f7", "w") => "attn.f7.w",
        ("attn.f7", "b") => "attn.f7.b",
        ("attn.f1_pool", "w") => "attn.f1_pool.w",
        ("attn.f1_pool", "b") => "attn.f1_pool.b",
        ("attn.f1_post", "w") => "attn.f1_post.w",
        ("attn.f1_post", "b") => "attn.f1_post.b",
        ("attn.proj", "w") => "attn.proj.w",
        ("attn.proj", "b") => "attn.proj.b",
        _ => unreachable!("unknown parameter {base}.{field}"),
    }
}

impl ModelParams<Tensor> {
    pub fn init(arch: &ArchConfig, rng: &mut impl Rng) -> Self {
        let c = arch.branch_channels;
        let fc = arch.fused_channels();
        let h = arch.hidden;
        let mut conv = |k: usize, cin: usize, cout: usize, stride: usize, padding: usize| {
            let spec = ConvSpec { k, cin, cout, stride, padding };
            let fan_in = (k * k * cin) as f64;
            let limit = (6.0 / fan_in).sqrt();
            let w = uniform_tensor(&[k, k, cin, cout], limit, rng);
            ConvP { spec, w, b: Tensor::zeros(&[cout]) }
        };
        let b1 = conv(1, 3, c, 2, 0);
        let b2a = conv(1, 3, c / 2, 1, 0);
        let b2b = conv(3, c / 2, c, 2, 1);
        let b3a = conv(1, 3, 2 * c, 1, 0);
        let b3b = conv(3, 2 * c, c, 1, 1);
        let b3c = conv(3, c, c, 2, 1);
        let b4 = conv(1, 3, c, 1, 0);
        let f7 = conv(7, 3, 1, 2, 3);
        let f1_pool = conv(1, 3, 1, 1, 0);
        let f1_post = conv(1, 1, 1, 1, 0);
        let proj = conv(1, 3, fc, 1, 0);
        let lstm1 = init_lstm(fc, h, rng);
        let lstm2 = init_lstm(h, h, rng);
        let dense_limit = (6.0 / h as f64).sqrt();
        let dense = DenseP {
            w: uniform_tensor(&[arch.n_classes, h], dense_limit, rng),
            b: Tensor::zeros(&[arch.n_classes]),
        };
        ModelParams {
            b1,
            b2a,
            b2b,
            b3a,
            b3b,
            b3c,
            b4,
            f7,
            f1_pool,
            f1_post,
            proj,
            bn_gamma: Tensor::full(&[fc], 1.0),
            bn_beta: Tensor::zeros(&[fc]),
            lstm1,
            lstm2,
            dense,
        }
    }

    /// Copies every parameter onto a tape as leaves.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> ModelParams<Var> {
        self.map(&mut |t| tape.leaf(t.clone(), requires_grad))
    }

    pub fn trainable_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        self.for_each(&mut |_, t| sizes.push(t.numel()));
        sizes
    }
}

impl ModelParams<Var> {
    /// Gradients of the bound parameters, in `for_each` order.
    pub fn grads(&self, tape: &Tape) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.for_each(&mut |_, &v| out.push(tape.grad(v)));
        out
    }
}

fn uniform_tensor(shape: &[usize], limit: f64, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// LSTM weights uniform in +-1/sqrt(hidden); forget-gate bias 1, others 0.
fn init_lstm(input: usize, hidden: usize, rng: &mut impl Rng) -> LstmP<Tensor> {
    let limit = 1.0 / (hidden as f64).sqrt();
    let w = uniform_tensor(&[4 * hidden, hidden + input], limit, rng);
    let mut b = Tensor::zeros(&[4 * hidden]);
    for i in hidden..2 * hidden {
        b.data_mut()[i] = 1.0;
    }
    LstmP { spec: LstmSpec { input, hidden }, w, b }
}
