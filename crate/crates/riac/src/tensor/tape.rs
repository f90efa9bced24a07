use super::{conv_out_dim, Tensor};
use crate::error::{Error, Result};
use rand::Rng;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

enum Op {
    Leaf,
    Conv2d { x: usize, w: usize, b: usize, k: usize, stride: usize, padding: usize },
    MaxPool2 { x: usize, argmax: Vec<usize> },
    AvgPool2 { x: usize },
    Relu { x: usize },
    Sigmoid { x: usize },
    Tanh { x: usize },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize, broadcast_b: bool },
    Scale { x: usize, c: f64 },
    ConcatChannels { xs: Vec<usize> },
    ConcatVec { a: usize, b: usize },
    SliceVec { x: usize, start: usize },
    Row { x: usize, row: usize },
    Reshape { x: usize },
    GapFull { x: usize },
    GapWidth { x: usize },
    Dropout { x: usize, mask: Vec<f64> },
    BatchNorm { x: usize, gamma: usize, beta: usize, xhat: Vec<f64>, inv_std: Vec<f64>, mode: BnMode },
    MatVec { w: usize, x: usize, b: usize },
    SoftmaxXent { logits: usize, label: usize, probs: Vec<f64> },
}

struct Node {
    value: Tensor,
    grad: Vec<f64>,
    requires: bool,
    op: Op,
}

/// Records a forward computation and replays it in reverse to populate
/// gradients. Nodes are appended in execution order, so every node's
/// inputs precede it.
pub struct Tape {
    nodes: Vec<Node>,
    /// Smallest distance to a ReLU / maxpool decision boundary seen during
    /// the forward pass; used by the gradient checker to reject points
    /// where central differences straddle a kink.
    kink_dist: f64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), kink_dist: f64::INFINITY }
    }

    pub fn kink_distance(&self) -> f64 {
        self.kink_dist
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` call w.r.t. `v`, zeros if the node
    /// was never reached.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        let node = &self.nodes[v.0];
        if node.grad.is_empty() {
            vec![0.0; node.value.numel()]
        } else {
            node.grad.clone()
        }
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    fn push(&mut self, value: Tensor, requires: bool, op: Op) -> Var {
        self.nodes.push(Node { value, grad: Vec::new(), requires, op });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    // ---- convolution and pooling ----

    /// 2D cross-correlation over an `[H, W, Cin]` map with `[k, k, Cin, Cout]`
    /// kernels and a `[Cout]` bias, zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let bs = self.shape(b).to_vec();
        if xs.len() != 3 {
            return Err(Error::Shape(format!("conv2d input must be [H,W,C], got {xs:?}")));
        }
        if ws.len() != 4 || ws[0] != ws[1] {
            return Err(Error::Shape(format!("conv2d kernels must be [k,k,Cin,Cout], got {ws:?}")));
        }
        let (h, wd, cin) = (xs[0], xs[1], xs[2]);
        let (k, cout) = (ws[0], ws[3]);
        if ws[2] != cin {
            return Err(Error::Shape(format!(
                "conv2d kernel input-channel dim {} does not match input channels {cin}",
                ws[2]
            )));
        }
        if bs != [cout] {
            return Err(Error::Shape(format!("conv2d bias must be [{cout}], got {bs:?}")));
        }
        if h + 2 * padding < k || wd + 2 * padding < k {
            return Err(Error::Shape(format!(
                "conv2d kernel {k}x{k} exceeds padded input {h}x{wd} (padding {padding})"
            )));
        }
        let oh = conv_out_dim(h, k, stride, padding);
        let ow = conv_out_dim(wd, k, stride, padding);
        let mut out = vec![0.0; oh * ow * cout];
        {
            let xv = self.nodes[x.0].value.data();
            let wv = self.nodes[w.0].value.data();
            let bv = self.nodes[b.0].value.data();
            for oy in 0..oh {
                for ox in 0..ow {
                    let obase = (oy * ow + ox) * cout;
                    out[obase..obase + cout].copy_from_slice(bv);
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix as usize >= wd {
                                continue;
                            }
                            let ibase = (iy as usize * wd + ix as usize) * cin;
                            let wbase = ((ky * k + kx) * cin) * cout;
                            for ic in 0..cin {
                                let xval = xv[ibase + ic];
                                if xval == 0.0 {
                                    continue;
                                }
                                let wrow = &wv[wbase + ic * cout..wbase + ic * cout + cout];
                                let orow = &mut out[obase..obase + cout];
                                for oc in 0..cout {
                                    orow[oc] += xval * wrow[oc];
                                }
                            }
                        }
                    }
                }
            }
        }
        let requires = self.requires(x) || self.requires(w) || self.requires(b);
        let value = Tensor::new(vec![oh, ow, cout], out)?;
        Ok(self.push(value, requires, Op::Conv2d { x: x.0, w: w.0, b: b.0, k, stride, padding }))
    }

    /// 2x2 max pooling, stride 1 or 2; ties go to the first cell in
    /// row-major scan order.
    pub fn maxpool2(&mut self, x: Var, stride: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(Error::Shape(format!("maxpool2 input must be [H,W,C], got {xs:?}")));
        }
        if !(stride == 1 || stride == 2) {
            return Err(Error::InvalidArgument(format!("maxpool2 stride must be 1 or 2, got {stride}")));
        }
        let (h, w, c) = (xs[0], xs[1], xs[2]);
        if h < 2 || w < 2 {
            return Err(Error::Shape(format!("maxpool2 window 2x2 exceeds input {h}x{w}")));
        }
        let oh = conv_out_dim(h, 2, stride, 0);
        let ow = conv_out_dim(w, 2, stride, 0);
        let mut out = vec![0.0; oh * ow * c];
        let mut argmax = vec![0usize; oh * ow * c];
        let mut kink = f64::INFINITY;
        {
            let xv = self.nodes[x.0].value.data();
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut second = f64::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        for ky in 0..2 {
                            for kx in 0..2 {
                                let idx = ((oy * stride + ky) * w + ox * stride + kx) * c + ch;
                                let v = xv[idx];
                                if v > best {
                                    second = best;
                                    best = v;
                                    best_idx = idx;
                                } else if v > second {
                                    second = v;
                                }
                            }
                        }
                        let o = (oy * ow + ox) * c + ch;
                        out[o] = best;
                        argmax[o] = best_idx;
                        kink = kink.min(best - second);
                    }
                }
            }
        }
        self.kink_dist = self.kink_dist.min(kink);
        let requires = self.requires(x);
        let value = Tensor::new(vec![oh, ow, c], out)?;
        Ok(self.push(value, requires, Op::MaxPool2 { x: x.0, argmax }))
    }

    /// 2x2 average pooling with stride 2.
    pub fn avgpool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || xs[0] < 2 || xs[1] < 2 {
            return Err(Error::Shape(format!("avgpool2 input must be [H,W,C] with H,W >= 2, got {xs:?}")));
        }
        let (h, w, c) = (xs[0], xs[1], xs[2]);
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![0.0; oh * ow * c];
        {
            let xv = self.nodes[x.0].value.data();
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut s = 0.0;
                        for ky in 0..2 {
                            for kx in 0..2 {
                                s += xv[((oy * 2 + ky) * w + ox * 2 + kx) * c + ch];
                            }
                        }
                        out[(oy * ow + ox) * c + ch] = s / 4.0;
                    }
                }
            }
        }
        let requires = self.requires(x);
        let value = Tensor::new(vec![oh, ow, c], out)?;
        Ok(self.push(value, requires, Op::AvgPool2 { x: x.0 }))
    }

    // ---- elementwise ----

    pub fn relu(&mut self, x: Var) -> Var {
        let mut kink = f64::INFINITY;
        let out: Vec<f64> = self.nodes[x.0]
            .value
            .data()
            .iter()
            .map(|&v| {
                kink = kink.min(v.abs());
                v.max(0.0)
            })
            .collect();
        self.kink_dist = self.kink_dist.min(kink);
        let shape = self.shape(x).to_vec();
        let requires = self.requires(x);
        self.push(Tensor { shape, data: out }, requires, Op::Relu { x: x.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out: Vec<f64> =
            self.nodes[x.0].value.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
        let shape = self.shape(x).to_vec();
        let requires = self.requires(x);
        self.push(Tensor { shape, data: out }, requires, Op::Sigmoid { x: x.0 })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.nodes[x.0].value.data().iter().map(|&v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        let requires = self.requires(x);
        self.push(Tensor { shape, data: out }, requires, Op::Tanh { x: x.0 })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "add shapes differ: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let requires = self.requires(a) || self.requires(b);
        Ok(self.push(Tensor { shape, data: out }, requires, Op::Add { a: a.0, b: b.0 }))
    }

    /// Elementwise product. `b` may have a trailing singleton channel that
    /// broadcasts across `a`'s channels (attention-map gating).
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let broadcast_b = sa != sb;
        if broadcast_b {
            let compatible = sa.len() == sb.len()
                && sb.last() == Some(&1)
                && sa[..sa.len() - 1] == sb[..sb.len() - 1];
            if !compatible {
                return Err(Error::Shape(format!("mul shapes incompatible: {sa:?} vs {sb:?}")));
            }
        }
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let out: Vec<f64> = if broadcast_b {
            let c = *sa.last().unwrap();
            av.iter().enumerate().map(|(i, x)| x * bv[i / c]).collect()
        } else {
            av.iter().zip(bv).map(|(x, y)| x * y).collect()
        };
        let requires = self.requires(a) || self.requires(b);
        Ok(self.push(Tensor { shape: sa, data: out }, requires, Op::Mul { a: a.0, b: b.0, broadcast_b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out: Vec<f64> = self.nodes[x.0].value.data().iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let requires = self.requires(x);
        self.push(Tensor { shape, data: out }, requires, Op::Scale { x: x.0, c })
    }

    // ---- shape ops ----

    /// Channel-axis concatenation of `[H, W, Ci]` maps, in argument order.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("concat_channels needs at least one input".into()));
        }
        let first = self.shape(xs[0]).to_vec();
        if first.len() != 3 {
            return Err(Error::Shape(format!("concat_channels inputs must be [H,W,C], got {first:?}")));
        }
        let (h, w) = (first[0], first[1]);
        let mut channels = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != 3 || s[0] != h || s[1] != w {
                return Err(Error::Shape(format!(
                    "concat_channels spatial mismatch: {:?} vs [{h}, {w}, _]",
                    s
                )));
            }
            channels.push(s[2]);
        }
        let ctot: usize = channels.iter().sum();
        let mut out = vec![0.0; h * w * ctot];
        let mut coff = 0;
        for (&x, &c) in xs.iter().zip(&channels) {
            let xv = self.nodes[x.0].value.data();
            for p in 0..h * w {
                out[p * ctot + coff..p * ctot + coff + c].copy_from_slice(&xv[p * c..p * c + c]);
            }
            coff += c;
        }
        let requires = xs.iter().any(|&x| self.requires(x));
        let value = Tensor::new(vec![h, w, ctot], out)?;
        Ok(self.push(value, requires, Op::ConcatChannels { xs: xs.iter().map(|v| v.0).collect() }))
    }

    pub fn concat_vec(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 1 || sb.len() != 1 {
            return Err(Error::Shape(format!("concat_vec expects vectors, got {sa:?} and {sb:?}")));
        }
        let mut out = self.nodes[a.0].value.data().to_vec();
        out.extend_from_slice(self.nodes[b.0].value.data());
        let requires = self.requires(a) || self.requires(b);
        Ok(self.push(Tensor::from_vec(out), requires, Op::ConcatVec { a: a.0, b: b.0 }))
    }

    pub fn slice_vec(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 1 || start + len > s[0] {
            return Err(Error::Shape(format!("slice_vec [{start}, {}) out of range for {s:?}", start + len)));
        }
        let out = self.nodes[x.0].value.data()[start..start + len].to_vec();
        let requires = self.requires(x);
        Ok(self.push(Tensor::from_vec(out), requires, Op::SliceVec { x: x.0, start }))
    }

    /// Row `r` of an `[N, F]` matrix as an `[F]` vector.
    pub fn row(&mut self, x: Var, r: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || r >= s[0] {
            return Err(Error::Shape(format!("row {r} out of range for {s:?}")));
        }
        let f = s[1];
        let out = self.nodes[x.0].value.data()[r * f..(r + 1) * f].to_vec();
        let requires = self.requires(x);
        Ok(self.push(Tensor::from_vec(out), requires, Op::Row { x: x.0, row: r }))
    }

    /// Same data, new shape; element count must match.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.nodes[x.0].value.numel() {
            return Err(Error::Shape(format!(
                "reshape to {shape:?} ({n} elements) from {:?}",
                self.shape(x)
            )));
        }
        let data = self.nodes[x.0].value.data().to_vec();
        let requires = self.requires(x);
        Ok(self.push(Tensor { shape: shape.to_vec(), data }, requires, Op::Reshape { x: x.0 }))
    }

    // ---- reductions ----

    /// Mean over both spatial axes: `[H, W, C]` -> `[C]`.
    pub fn gap_full(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(Error::Shape(format!("gap_full input must be [H,W,C], got {s:?}")));
        }
        let (h, w, c) = (s[0], s[1], s[2]);
        let mut out = vec![0.0; c];
        let xv = self.nodes[x.0].value.data();
        for p in 0..h * w {
            for ch in 0..c {
                out[ch] += xv[p * c + ch];
            }
        }
        let n = (h * w) as f64;
        for v in &mut out {
            *v /= n;
        }
        let requires = self.requires(x);
        Ok(self.push(Tensor::from_vec(out), requires, Op::GapFull { x: x.0 }))
    }

    /// Mean over the width axis only: `[H, W, C]` -> `[H, C]`, top row first.
    pub fn gap_width(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(Error::Shape(format!("gap_width input must be [H,W,C], got {s:?}")));
        }
        let (h, w, c) = (s[0], s[1], s[2]);
        let mut out = vec![0.0; h * c];
        let xv = self.nodes[x.0].value.data();
        for y in 0..h {
            for xp in 0..w {
                for ch in 0..c {
                    out[y * c + ch] += xv[(y * w + xp) * c + ch];
                }
            }
        }
        for v in &mut out {
            *v /= w as f64;
        }
        let requires = self.requires(x);
        let value = Tensor::new(vec![h, c], out)?;
        Ok(self.push(value, requires, Op::GapWidth { x: x.0 }))
    }

    // ---- regularization ----

    /// Inverted dropout: each cell zeroed with probability `p` at train
    /// time, survivors scaled by 1/(1-p). Eval mode is the identity.
    pub fn dropout(&mut self, x: Var, p: f64, mode: BnMode, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout p must be in [0,1), got {p}")));
        }
        if mode == BnMode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.nodes[x.0].value.numel();
        let mask: Vec<f64> =
            (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        let out: Vec<f64> =
            self.nodes[x.0].value.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        let requires = self.requires(x);
        Ok(self.push(Tensor { shape, data: out }, requires, Op::Dropout { x: x.0, mask }))
    }

    /// Per-feature batch normalization over the rows of an `[N, F]` matrix.
    /// Train mode normalizes by batch statistics (returned for the caller's
    /// running-average update); eval mode uses the provided running stats.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[f64], &[f64])>,
        eps: f64,
        mode: BnMode,
    ) -> Result<(Var, Option<(Vec<f64>, Vec<f64>)>)> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::Shape(format!("batchnorm input must be [N,F], got {s:?}")));
        }
        let (n, f) = (s[0], s[1]);
        if n == 0 {
            return Err(Error::Shape("batchnorm over a zero-size batch".into()));
        }
        if self.shape(gamma) != [f] || self.shape(beta) != [f] {
            return Err(Error::Shape(format!("batchnorm gamma/beta must be [{f}]")));
        }
        let (mean, var) = match (mode, running) {
            (BnMode::Eval, Some((rm, rv))) => (rm.to_vec(), rv.to_vec()),
            (BnMode::Eval, None) => {
                return Err(Error::InvalidArgument("batchnorm eval mode needs running stats".into()))
            }
            (BnMode::Train, _) => {
                let xv = self.nodes[x.0].value.data();
                let mut mean = vec![0.0; f];
                let mut var = vec![0.0; f];
                for r in 0..n {
                    for c in 0..f {
                        mean[c] += xv[r * f + c];
                    }
                }
                for v in &mut mean {
                    *v /= n as f64;
                }
                for r in 0..n {
                    for c in 0..f {
                        let d = xv[r * f + c] - mean[c];
                        var[c] += d * d;
                    }
                }
                for v in &mut var {
                    *v /= n as f64;
                }
                (mean, var)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let xv = self.nodes[x.0].value.data();
        let gv = self.nodes[gamma.0].value.data();
        let bv = self.nodes[beta.0].value.data();
        let mut xhat = vec![0.0; n * f];
        let mut out = vec![0.0; n * f];
        for r in 0..n {
            for c in 0..f {
                let h = (xv[r * f + c] - mean[c]) * inv_std[c];
                xhat[r * f + c] = h;
                out[r * f + c] = gv[c] * h + bv[c];
            }
        }
        let stats = match mode {
            BnMode::Train => Some((mean, var)),
            BnMode::Eval => None,
        };
        let requires = self.requires(x) || self.requires(gamma) || self.requires(beta);
        let value = Tensor::new(vec![n, f], out)?;
        let v = self.push(
            value,
            requires,
            Op::BatchNorm { x: x.0, gamma: gamma.0, beta: beta.0, xhat, inv_std, mode },
        );
        Ok((v, stats))
    }

    // ---- dense / loss ----

    /// Affine map: `y = W x + b` with `W: [out, in]`.
    pub fn matvec(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let ws = self.shape(w).to_vec();
        let xs = self.shape(x).to_vec();
        let bs = self.shape(b).to_vec();
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(Error::Shape(format!("matvec shapes: W {ws:?}, x {xs:?}")));
        }
        let (o, i) = (ws[0], ws[1]);
        if bs != [o] {
            return Err(Error::Shape(format!("matvec bias must be [{o}], got {bs:?}")));
        }
        let wv = self.nodes[w.0].value.data();
        let xv = self.nodes[x.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut out = vec![0.0; o];
        for r in 0..o {
            let mut s = bv[r];
            let wr = &wv[r * i..(r + 1) * i];
            for c in 0..i {
                s += wr[c] * xv[c];
            }
            out[r] = s;
        }
        let requires = self.requires(w) || self.requires(x) || self.requires(b);
        Ok(self.push(Tensor::from_vec(out), requires, Op::MatVec { w: w.0, x: x.0, b: b.0 }))
    }

    /// Numerically stable softmax + cross-entropy against a class index.
    /// Returns the scalar loss node and the probability vector.
    pub fn softmax_xent(&mut self, logits: Var, label: usize) -> Result<(Var, Vec<f64>)> {
        let s = self.shape(logits).to_vec();
        if s.len() != 1 {
            return Err(Error::Shape(format!("softmax_xent logits must be a vector, got {s:?}")));
        }
        let n = s[0];
        if label >= n {
            return Err(Error::InvalidArgument(format!("label {label} out of range for {n} classes")));
        }
        let lv = self.nodes[logits.0].value.data();
        let m = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lv.iter().map(|&v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|&e| e / z).collect();
        let loss = -(probs[label].max(f64::MIN_POSITIVE)).ln();
        let requires = self.requires(logits);
        let v = self.push(
            Tensor::scalar(loss),
            requires,
            Op::SoftmaxXent { logits: logits.0, label, probs: probs.clone() },
        );
        Ok((v, probs))
    }

    // ---- backward ----

    /// Reverse topological sweep from a scalar loss; gradients accumulate
    /// additively at fan-out.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Shape(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.nodes[loss.0].grad = vec![1.0];
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires || self.nodes[i].grad.is_empty() {
                continue;
            }
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &mut tail[0];
            let g = std::mem::take(&mut node.grad);
            Self::backprop_node(head, &node.value, &node.op, &g);
            node.grad = g;
        }
        Ok(())
    }

    fn acc(head: &mut [Node], idx: usize, contrib: impl FnOnce(&mut [f64])) {
        let n = &mut head[idx];
        if !n.requires {
            return;
        }
        if n.grad.is_empty() {
            n.grad = vec![0.0; n.value.numel()];
        }
        contrib(&mut n.grad);
    }

    fn backprop_node(head: &mut [Node], value: &Tensor, op: &Op, g: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, k, stride, padding } => {
                Self::backprop_conv2d(head, g, value.shape(), *x, *w, *b, *k, *stride, *padding);
            }
            Op::MaxPool2 { x, argmax } => {
                Self::acc(head, *x, |dx| {
                    for (o, &src) in argmax.iter().enumerate() {
                        dx[src] += g[o];
                    }
                });
            }
            Op::AvgPool2 { x } => {
                let os = value.shape().to_vec();
                let (oh, ow, c) = (os[0], os[1], os[2]);
                let w_in = head[*x].value.shape()[1];
                Self::acc(head, *x, |dx| {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for ch in 0..c {
                                let go = g[(oy * ow + ox) * c + ch] / 4.0;
                                for ky in 0..2 {
                                    for kx in 0..2 {
                                        dx[((oy * 2 + ky) * w_in + ox * 2 + kx) * c + ch] += go;
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::Relu { x } => {
                let y = value.data();
                Self::acc(head, *x, |dx| {
                    for i in 0..y.len() {
                        if y[i] > 0.0 {
                            dx[i] += g[i];
                        }
                    }
                });
            }
            Op::Sigmoid { x } => {
                let y = value.data();
                Self::acc(head, *x, |dx| {
                    for i in 0..y.len() {
                        dx[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Tanh { x } => {
                let y = value.data();
                Self::acc(head, *x, |dx| {
                    for i in 0..y.len() {
                        dx[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                });
            }
            Op::Add { a, b } => {
                Self::acc(head, *a, |da| {
                    for i in 0..g.len() {
                        da[i] += g[i];
                    }
                });
                Self::acc(head, *b, |db| {
                    for i in 0..g.len() {
                        db[i] += g[i];
                    }
                });
            }
            Op::Mul { a, b, broadcast_b } => {
                if *broadcast_b {
                    let c = *head[*a].value.shape().last().unwrap();
                    let bv = head[*b].value.data().to_vec();
                    let av = head[*a].value.data().to_vec();
                    Self::acc(head, *a, |da| {
                        for i in 0..g.len() {
                            da[i] += g[i] * bv[i / c];
                        }
                    });
                    Self::acc(head, *b, |db| {
                        for i in 0..g.len() {
                            db[i / c] += g[i] * av[i];
                        }
                    });
                } else {
                    let av = head[*a].value.data().to_vec();
                    let bv = head[*b].value.data().to_vec();
                    Self::acc(head, *a, |da| {
                        for i in 0..g.len() {
                            da[i] += g[i] * bv[i];
                        }
                    });
                    Self::acc(head, *b, |db| {
                        for i in 0..g.len() {
                            db[i] += g[i] * av[i];
                        }
                    });
                }
            }
            Op::Scale { x, c } => {
                Self::acc(head, *x, |dx| {
                    for i in 0..g.len() {
                        dx[i] += g[i] * c;
                    }
                });
            }
            Op::ConcatChannels { xs } => {
                let ctot = *value.shape().last().unwrap();
                let hw = value.numel() / ctot;
                let mut coff = 0;
                for &xi in xs {
                    let c = *head[xi].value.shape().last().unwrap();
                    Self::acc(head, xi, |dx| {
                        for p in 0..hw {
                            for ch in 0..c {
                                dx[p * c + ch] += g[p * ctot + coff + ch];
                            }
                        }
                    });
                    coff += c;
                }
            }
            Op::ConcatVec { a, b } => {
                let na = head[*a].value.numel();
                Self::acc(head, *a, |da| {
                    for i in 0..na {
                        da[i] += g[i];
                    }
                });
                Self::acc(head, *b, |db| {
                    for i in 0..db.len() {
                        db[i] += g[na + i];
                    }
                });
            }
            Op::SliceVec { x, start } => {
                Self::acc(head, *x, |dx| {
                    for i in 0..g.len() {
                        dx[start + i] += g[i];
                    }
                });
            }
            Op::Reshape { x } => {
                Self::acc(head, *x, |dx| {
                    for i in 0..g.len() {
                        dx[i] += g[i];
                    }
                });
            }
            Op::Row { x, row } => {
                let f = g.len();
                Self::acc(head, *x, |dx| {
                    for i in 0..f {
                        dx[row * f + i] += g[i];
                    }
                });
            }
            Op::GapFull { x } => {
                let c = g.len();
                let hw = head[*x].value.numel() / c;
                let inv = 1.0 / hw as f64;
                Self::acc(head, *x, |dx| {
                    for p in 0..hw {
                        for ch in 0..c {
                            dx[p * c + ch] += g[ch] * inv;
                        }
                    }
                });
            }
            Op::GapWidth { x } => {
                let xs = head[*x].value.shape().to_vec();
                let (h, w, c) = (xs[0], xs[1], xs[2]);
                let inv = 1.0 / w as f64;
                Self::acc(head, *x, |dx| {
                    for y in 0..h {
                        for xp in 0..w {
                            for ch in 0..c {
                                dx[(y * w + xp) * c + ch] += g[y * c + ch] * inv;
                            }
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                Self::acc(head, *x, |dx| {
                    for i in 0..g.len() {
                        dx[i] += g[i] * mask[i];
                    }
                });
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, mode } => {
                let f = inv_std.len();
                let n = xhat.len() / f;
                let gv = head[*gamma].value.data().to_vec();
                let mut dxhat = vec![0.0; n * f];
                for r in 0..n {
                    for c in 0..f {
                        dxhat[r * f + c] = g[r * f + c] * gv[c];
                    }
                }
                Self::acc(head, *gamma, |dg| {
                    for r in 0..n {
                        for c in 0..f {
                            dg[c] += g[r * f + c] * xhat[r * f + c];
                        }
                    }
                });
                Self::acc(head, *beta, |db| {
                    for r in 0..n {
                        for c in 0..f {
                            db[c] += g[r * f + c];
                        }
                    }
                });
                match mode {
                    BnMode::Train => {
                        let mut sum_dxhat = vec![0.0; f];
                        let mut sum_dxhat_xhat = vec![0.0; f];
                        for r in 0..n {
                            for c in 0..f {
                                sum_dxhat[c] += dxhat[r * f + c];
                                sum_dxhat_xhat[c] += dxhat[r * f + c] * xhat[r * f + c];
                            }
                        }
                        Self::acc(head, *x, |dx| {
                            let nf = n as f64;
                            for r in 0..n {
                                for c in 0..f {
                                    dx[r * f + c] += inv_std[c] / nf
                                        * (nf * dxhat[r * f + c]
                                            - sum_dxhat[c]
                                            - xhat[r * f + c] * sum_dxhat_xhat[c]);
                                }
                            }
                        });
                    }
                    BnMode::Eval => {
                        Self::acc(head, *x, |dx| {
                            for r in 0..n {
                                for c in 0..f {
                                    dx[r * f + c] += dxhat[r * f + c] * inv_std[c];
                                }
                            }
                        });
                    }
                }
            }
            Op::MatVec { w, x, b } => {
                let o = g.len();
                let i = head[*x].value.numel();
                let xv = head[*x].value.data().to_vec();
                let wv = head[*w].value.data().to_vec();
                Self::acc(head, *w, |dw| {
                    for r in 0..o {
                        for c in 0..i {
                            dw[r * i + c] += g[r] * xv[c];
                        }
                    }
                });
                Self::acc(head, *x, |dx| {
                    for r in 0..o {
                        for c in 0..i {
                            dx[c] += g[r] * wv[r * i + c];
                        }
                    }
                });
                Self::acc(head, *b, |db| {
                    for r in 0..o {
                        db[r] += g[r];
                    }
                });
            }
            Op::SoftmaxXent { logits, label, probs } => {
                let go = g[0];
                Self::acc(head, *logits, |dl| {
                    for (i, &p) in probs.iter().enumerate() {
                        let target = if i == *label { 1.0 } else { 0.0 };
                        dl[i] += go * (p - target);
                    }
                });
            }
        }
    }

    fn backprop_conv2d(
        head: &mut [Node],
        g: &[f64],
        out_shape: &[usize],
        x: usize,
        w: usize,
        b: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) {
        let (oh, ow, cout) = (out_shape[0], out_shape[1], out_shape[2]);
        let xs = head[x].value.shape().to_vec();
        let (h, wd, cin) = (xs[0], xs[1], xs[2]);
        let xv = head[x].value.data().to_vec();
        let wv = head[w].value.data().to_vec();

        Self::acc(head, b, |db| {
            for p in 0..oh * ow {
                for oc in 0..cout {
                    db[oc] += g[p * cout + oc];
                }
            }
        });
        Self::acc(head, w, |dw| {
            for oy in 0..oh {
                for ox in 0..ow {
                    let obase = (oy * ow + ox) * cout;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix as usize >= wd {
                                continue;
                            }
                            let ibase = (iy as usize * wd + ix as usize) * cin;
                            let wbase = ((ky * k + kx) * cin) * cout;
                            for ic in 0..cin {
                                let xval = xv[ibase + ic];
                                if xval == 0.0 {
                                    continue;
                                }
                                let drow = &mut dw[wbase + ic * cout..wbase + ic * cout + cout];
                                for oc in 0..cout {
                                    drow[oc] += xval * g[obase + oc];
                                }
                            }
                        }
                    }
                }
            }
        });
        Self::acc(head, x, |dx| {
            for oy in 0..oh {
                for ox in 0..ow {
                    let obase = (oy * ow + ox) * cout;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix as usize >= wd {
                                continue;
                            }
                            let ibase = (iy as usize * wd + ix as usize) * cin;
                            let wbase = ((ky * k + kx) * cin) * cout;
                            for ic in 0..cin {
                                let wrow = &wv[wbase + ic * cout..wbase + ic * cout + cout];
                                let mut s = 0.0;
                                for oc in 0..cout {
                                    s += wrow[oc] * g[obase + oc];
                                }
                                dx[ibase + ic] += s;
                            }
                        }
                    }
                }
            }
        });
    }
}
