use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Batched sequence tensor stored channel-major, `[channel][batch][time]`,
/// so each channel is one contiguous `batch * time` row.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub b: usize,
    pub c: usize,
    pub t: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(b: usize, c: usize, t: usize) -> Self {
        Self { b, c, t, data: vec![0.0; b * c * t] }
    }

    /// Wrap channel-major data.
    pub fn from_vec(b: usize, c: usize, t: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != b * c * t {
            return Err(Error::Shape(format!("{} values for a {b}x{c}x{t} tensor", data.len())));
        }
        Ok(Self { b, c, t, data })
    }

    pub fn row(&self, b: usize, c: usize) -> &[f64] {
        let o = (c * self.b + b) * self.t;
        &self.data[o..o + self.t]
    }

    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let o = (c * self.b + b) * self.t;
        &mut self.data[o..o + self.t]
    }

    /// All `batch * time` values of channel `c`.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.b * self.t;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.b * self.t;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// The last `len` time steps of every row.
    pub fn tail(&self, len: usize) -> Self {
        let start = self.t - len;
        let mut out = Self::zeros(self.b, self.c, len);
        for b in 0..self.b {
            for c in 0..self.c {
                out.row_mut(b, c).copy_from_slice(&self.row(b, c)[start..]);
            }
        }
        out
    }
}

/// Strided 2-D view into a flat buffer.
#[derive(Clone, Copy)]
struct View {
    off: usize,
    rs: usize,
    cs: usize,
}

impl View {
    fn check(&self, rows: usize, cols: usize, len: usize) {
        if rows > 0 && cols > 0 {
            assert!(self.off + (rows - 1) * self.rs + (cols - 1) * self.cs < len, "matrix view out of bounds");
        }
    }
}

/// `C = A B + beta C` with `A: m x k`, `B: k x n`, `C: m x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], av: View, b: &[f64], bv: View, beta: f64, c: &mut [f64], cv: View) {
    av.check(m, k, a.len());
    bv.check(k, n, b.len());
    cv.check(m, n, c.len());
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the three views were bounds-checked above, and `c` is borrowed
    // mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr().add(av.off),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.off),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.off),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}

/// Trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    /// Whether decoupled weight decay applies (weight matrices only).
    pub decay: bool,
}

impl Param {
    fn new(name: String, shape: Vec<usize>, value: Vec<f64>, decay: bool) -> Self {
        let n = value.len();
        Self { name, shape, value, grad: vec![0.0; n], decay }
    }

    fn uniform(name: String, shape: Vec<usize>, bound: f64, decay: bool, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let value = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Self::new(name, shape, value, decay)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Causal dilated 1-D convolution, weight shape `[out, in, kernel]`.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl Conv1d {
    /// `bias = false` for convolutions followed by batch normalization, where
    /// a bias would be cancelled by the mean subtraction.
    pub fn new(name: &str, cin: usize, cout: usize, kernel: usize, dilation: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((cin * kernel) as f64).sqrt();
        Self {
            weight: Param::uniform(format!("{name}.weight"), vec![cout, cin, kernel], bound, true, rng),
            bias: bias.then(|| Param::uniform(format!("{name}.bias"), vec![cout], bound, false, rng)),
            cin,
            cout,
            kernel,
            dilation,
        }
    }

    fn shift(&self, k: usize) -> usize {
        self.dilation * (self.kernel - 1 - k)
    }

    /// Unfold `x` into a `(cin * kernel) x (batch * time)` matrix of
    /// causally shifted copies; 1x1 convolutions use `x` directly.
    fn im2col<'a>(&self, x: &'a Tensor3) -> std::borrow::Cow<'a, [f64]> {
        if self.kernel == 1 {
            return std::borrow::Cow::Borrowed(&x.data);
        }
        let (t, n) = (x.t, x.b * x.t);
        let mut col = vec![0.0; self.cin * self.kernel * n];
        for i in 0..self.cin {
            for k in 0..self.kernel {
                let s = self.shift(k);
                if s >= t {
                    continue;
                }
                let dst = &mut col[(i * self.kernel + k) * n..][..n];
                for b in 0..x.b {
                    dst[b * t + s..(b + 1) * t].copy_from_slice(&x.row(b, i)[..t - s]);
                }
            }
        }
        std::borrow::Cow::Owned(col)
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        if x.c != self.cin {
            return Err(Error::Shape(format!("conv expects {} input channels, got {}", self.cin, x.c)));
        }
        let (n, ck) = (x.b * x.t, self.cin * self.kernel);
        let mut y = Tensor3::zeros(x.b, self.cout, x.t);
        if let Some(bias) = &self.bias {
            for o in 0..self.cout {
                y.channel_mut(o).fill(bias.value[o]);
            }
        }
        let col = self.im2col(x);
        let w = View { off: 0, rs: ck, cs: 1 };
        let cv = View { off: 0, rs: n, cs: 1 };
        gemm(self.cout, ck, n, &self.weight.value, w, &col, cv, 1.0, &mut y.data, cv);
        Ok(y)
    }

    /// Accumulate parameter gradients; returns the input gradient when asked.
    pub fn backward(&mut self, x: &Tensor3, gy: &Tensor3, want_gx: bool) -> Option<Tensor3> {
        let (t, n, ck) = (x.t, x.b * x.t, self.cin * self.kernel);
        if let Some(bias) = self.bias.as_mut() {
            for o in 0..self.cout {
                bias.grad[o] += gy.channel(o).iter().sum::<f64>();
            }
        }
        let col = self.im2col(x);
        let g = View { off: 0, rs: n, cs: 1 };
        let colt = View { off: 0, rs: 1, cs: n };
        let w = View { off: 0, rs: ck, cs: 1 };
        gemm(self.cout, n, ck, &gy.data, g, &col, colt, 1.0, &mut self.weight.grad, w);
        if !want_gx {
            return None;
        }
        let wt = View { off: 0, rs: 1, cs: ck };
        if self.kernel == 1 {
            let mut gx = Tensor3::zeros(x.b, self.cin, t);
            gemm(self.cin, self.cout, n, &self.weight.value, wt, &gy.data, g, 0.0, &mut gx.data, g);
            return Some(gx);
        }
        let mut gcol = vec![0.0; ck * n];
        gemm(ck, self.cout, n, &self.weight.value, wt, &gy.data, g, 0.0, &mut gcol, g);
        let mut gx = Tensor3::zeros(x.b, self.cin, t);
        for i in 0..self.cin {
            for k in 0..self.kernel {
                let s = self.shift(k);
                if s >= t {
                    continue;
                }
                let src = &gcol[(i * self.kernel + k) * n..][..n];
                for b in 0..x.b {
                    for (d, v) in gx.row_mut(b, i)[..t - s].iter_mut().zip(&src[b * t + s..(b + 1) * t]) {
                        *d += v;
                    }
                }
            }
        }
        Some(gx)
    }

    pub fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}

/// Per-channel batch normalization over batch and time.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub running_mean_name: String,
    pub running_var_name: String,
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

pub struct BnCache {
    xhat: Tensor3,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(name: &str, c: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), vec![c], vec![1.0; c], false),
            beta: Param::new(format!("{name}.beta"), vec![c], vec![0.0; c], false),
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
            running_mean_name: format!("{name}.running_mean"),
            running_var_name: format!("{name}.running_var"),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor3) -> Result<(Tensor3, BnCache)> {
        if x.b < 2 {
            return Err(Error::Usage("batch normalization needs at least 2 samples in train mode".into()));
        }
        let n = (x.b * x.t) as f64;
        let mut xhat = Tensor3::zeros(x.b, x.c, x.t);
        let mut y = Tensor3::zeros(x.b, x.c, x.t);
        let mut inv_std = vec![0.0; x.c];
        for c in 0..x.c {
            let xc = x.channel(c);
            let mean = xc.iter().sum::<f64>() / n;
            let var = xc.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + BN_EPS).sqrt();
            inv_std[c] = is;
            let (g, be) = (self.gamma.value[c], self.beta.value[c]);
            for (h, v) in xhat.channel_mut(c).iter_mut().zip(xc) {
                *h = (v - mean) * is;
            }
            for (o, h) in y.channel_mut(c).iter_mut().zip(xhat.channel(c)) {
                *o = g * h + be;
            }
            self.running_mean[c] = (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * mean;
            self.running_var[c] = (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * var * n / (n - 1.0);
        }
        Ok((y, BnCache { xhat, inv_std }))
    }

    pub fn forward_eval(&self, x: &Tensor3) -> Tensor3 {
        let mut y = x.clone();
        for c in 0..x.c {
            let is = 1.0 / (self.running_var[c] + BN_EPS).sqrt();
            let scale = self.gamma.value[c] * is;
            let shift = self.beta.value[c] - self.running_mean[c] * scale;
            for v in y.channel_mut(c) {
                *v = *v * scale + shift;
            }
        }
        y
    }

    pub fn backward(&mut self, cache: &BnCache, gy: &Tensor3) -> Tensor3 {
        let xh = &cache.xhat;
        let n = (gy.b * gy.t) as f64;
        let mut gx = Tensor3::zeros(gy.b, gy.c, gy.t);
        for c in 0..gy.c {
            let (mut sg, mut sgx) = (0.0, 0.0);
            for (g, h) in gy.channel(c).iter().zip(xh.channel(c)) {
                sg += g;
                sgx += g * h;
            }
            self.gamma.grad[c] += sgx;
            self.beta.grad[c] += sg;
            let gamma = self.gamma.value[c];
            let k = gamma * cache.inv_std[c] / n;
            for ((o, g), h) in gx.channel_mut(c).iter_mut().zip(gy.channel(c)).zip(xh.channel(c)) {
                *o = k * (n * g - sg - h * sgx);
            }
        }
        gx
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.gamma, &mut self.beta]
    }
}

/// Fully connected layer on `[batch][features]`, weight shape `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    pub fin: usize,
    pub fout: usize,
}

impl Linear {
    pub fn new(name: &str, fin: usize, fout: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fin as f64).sqrt();
        Self {
            weight: Param::uniform(format!("{name}.weight"), vec![fout, fin], bound, true, rng),
            bias: Param::uniform(format!("{name}.bias"), vec![fout], bound, false, rng),
            fin,
            fout,
        }
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut y = vec![0.0; batch * self.fout];
        for row in y.chunks_mut(self.fout) {
            row.copy_from_slice(&self.bias.value);
        }
        let a = View { off: 0, rs: self.fin, cs: 1 };
        let wt = View { off: 0, rs: 1, cs: self.fin };
        let c = View { off: 0, rs: self.fout, cs: 1 };
        gemm(batch, self.fin, self.fout, x, a, &self.weight.value, wt, 1.0, &mut y, c);
        y
    }

    pub fn backward(&mut self, x: &[f64], gy: &[f64], batch: usize) -> Vec<f64> {
        for row in gy.chunks(self.fout) {
            for (g, v) in self.bias.grad.iter_mut().zip(row) {
                *g += v;
            }
        }
        let gyt = View { off: 0, rs: 1, cs: self.fout };
        let xv = View { off: 0, rs: self.fin, cs: 1 };
        let w = View { off: 0, rs: self.fin, cs: 1 };
        gemm(self.fout, batch, self.fin, gy, gyt, x, xv, 1.0, &mut self.weight.grad, w);
        let mut gx = vec![0.0; batch * self.fin];
        let g = View { off: 0, rs: self.fout, cs: 1 };
        gemm(batch, self.fout, self.fin, gy, g, &self.weight.value, w, 0.0, &mut gx, xv);
        gx
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

const GELU_A: f64 = 0.797_884_560_802_865_4;
const GELU_B: f64 = 0.044_715;

/// GELU, tanh approximation written as `x * s(2u)` with
/// `u = sqrt(2/π) (x + 0.044715 x³)`.
pub fn gelu(x: f64) -> f64 {
    x * gelu_gate(x)
}

fn gelu_gate(x: f64) -> f64 {
    crate::phys_decoder::sigmoid(2.0 * GELU_A * (x + GELU_B * x * x * x))
}

pub fn gelu_grad(x: f64) -> f64 {
    let s = gelu_gate(x);
    s + x * s * (1.0 - s) * 2.0 * GELU_A * (1.0 + 3.0 * GELU_B * x * x)
}

/// Inverted-dropout mask: entries are 0 or `1/(1-p)`.
pub fn dropout_mask(n: usize, p: f64, rng: &mut (impl Rng + ?Sized)) -> Vec<f64> {
    let keep = 1.0 - p;
    let scale = 1.0 / keep;
    (0..n).map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 }).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Batch statistics, active dropout, activations recorded for backward.
    Train,
    /// Running statistics, dropout off.
    Eval,
    /// Running statistics with dropout kept active (MC sampling).
    Mc,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_kernel_passes_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv1d::new("c", 1, 1, 3, 2, false, &mut rng);
        conv.weight.value = vec![0.0, 0.0, 1.0];
        let x = Tensor3::from_vec(1, 1, 8, (0..8).map(|v| v as f64).collect()).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn linear_param_count() {
        let l = Linear::new("l", 256, 2, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(l.weight.len() + l.bias.len(), 514);
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn batch_norm_normalizes_in_train_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor3::from_vec(4, 2, 16, (0..128).map(|_| rng.gen_range(-3.0..5.0)).collect()).unwrap();
        let mut bn = BatchNorm::new("bn", 2);
        let (y, _) = bn.forward_train(&x).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = (0..4).flat_map(|b| y.row(b, c).to_vec()).collect();
            let m = vals.iter().sum::<f64>() / 64.0;
            let v = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 64.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-3);
        }
        let one = Tensor3::zeros(1, 2, 16);
        assert!(matches!(bn.forward_train(&one), Err(Error::Usage(_))));
    }
}
