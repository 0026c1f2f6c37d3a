use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{dropout_mask, gelu, gelu_grad, BatchNorm, BnCache, Conv1d, Linear, Mode, Param, Tensor3};
use crate::em_forward::{SampleTensor, N_TIME};
use crate::phys_decoder::sigmoid;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Full-window and late-time encoders with a two-stage head.
    DualTcn,
    /// Single full-window encoder with one head.
    TcnOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    pub in_channels: usize,
    pub seq_len: usize,
    pub full_widths: Vec<usize>,
    pub full_dilations: Vec<usize>,
    pub late_widths: Vec<usize>,
    pub late_dilations: Vec<usize>,
    /// Number of trailing samples seen by the late-time encoder.
    pub late_slice: usize,
    pub kernel: usize,
    /// Dropout probability inside residual blocks; `None` disables dropout
    /// entirely, including MC sampling.
    pub dropout: Option<f64>,
    pub full_latent: usize,
    pub late_latent: usize,
    pub head_hidden: usize,
    /// Number of predicted parameters, 4 or 6.
    pub outputs: usize,
    pub aux_head: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::DualTcn,
            in_channels: 8,
            seq_len: N_TIME,
            full_widths: vec![32, 64, 64, 128, 128, 256],
            full_dilations: vec![1, 2, 4, 8, 16, 32],
            late_widths: vec![32; 4],
            late_dilations: vec![1, 4, 8, 16],
            late_slice: 64,
            kernel: 3,
            dropout: Some(0.3),
            full_latent: 256,
            late_latent: 128,
            head_hidden: 128,
            outputs: 4,
            aux_head: true,
        }
    }
}

impl NetworkConfig {
    /// Reduced widths for desk-scale training runs.
    pub fn small() -> Self {
        Self { full_widths: vec![16, 16, 32, 32, 32, 32], ..Self::default() }
    }

    /// Two blocks per encoder and at most 8 channels, for gradient checks.
    pub fn tiny() -> Self {
        Self {
            full_widths: vec![4, 6],
            full_dilations: vec![1, 2],
            late_widths: vec![4, 4],
            late_dilations: vec![1, 4],
            late_slice: 8,
            seq_len: 16,
            full_latent: 8,
            late_latent: 6,
            head_hidden: 5,
            ..Self::default()
        }
    }

    pub fn with_architecture(mut self, a: Architecture) -> Self {
        self.architecture = a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.outputs != 4 && self.outputs != 6 {
            return bad("outputs must be 4 or 6");
        }
        if self.full_widths.is_empty() || self.full_widths.len() != self.full_dilations.len() {
            return bad("full encoder widths and dilations must be non-empty and equally long");
        }
        if self.architecture == Architecture::DualTcn
            && (self.late_widths.is_empty() || self.late_widths.len() != self.late_dilations.len())
        {
            return bad("late encoder widths and dilations must be non-empty and equally long");
        }
        let all = self.full_widths.iter().chain(&self.late_widths).chain(&self.full_dilations).chain(&self.late_dilations);
        if all.into_iter().any(|&v| v == 0) {
            return bad("widths and dilations must be positive");
        }
        if self.late_slice == 0 || self.late_slice > self.seq_len {
            return bad("late slice must be in 1..=seq_len");
        }
        if self.kernel == 0 || self.in_channels == 0 || self.full_latent == 0 || self.late_latent == 0 || self.head_hidden == 0 {
            return bad("kernel, channels and latent sizes must be positive");
        }
        if let Some(p) = self.dropout {
            if !(0.0..1.0).contains(&p) {
                return bad("dropout must be in [0, 1)");
            }
        }
        Ok(())
    }

    /// Receptive field of the full-window encoder in samples.
    pub fn receptive_field(&self) -> usize {
        1 + self.full_dilations.iter().map(|d| d * (self.kernel - 1)).sum::<usize>()
    }
}

struct ResBlock {
    conv: Conv1d,
    bn: BatchNorm,
    proj: Option<Conv1d>,
    dropout: Option<f64>,
}

struct BlockCache {
    x: Tensor3,
    bn: BnCache,
    pre: Tensor3,
    mask: Option<Vec<f64>>,
}

impl ResBlock {
    fn new(name: &str, cin: usize, cout: usize, kernel: usize, dil: usize, dropout: Option<f64>, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv: Conv1d::new(&format!("{name}.conv"), cin, cout, kernel, dil, false, rng),
            bn: BatchNorm::new(&format!("{name}.bn"), cout),
            proj: (cin != cout).then(|| Conv1d::new(&format!("{name}.proj"), cin, cout, 1, 1, true, rng)),
            dropout,
        }
    }

    fn skip(&self, x: &Tensor3) -> Result<Tensor3> {
        match &self.proj {
            Some(p) => p.forward(x),
            None => Ok(x.clone()),
        }
    }

    fn active_p(&self) -> Option<f64> {
        self.dropout.filter(|&p| p > 0.0)
    }

    fn forward_train(&mut self, x: &Tensor3, rng: &mut ChaCha8Rng) -> Result<(Tensor3, BlockCache)> {
        let h = self.conv.forward(x)?;
        let (pre, bn) = self.bn.forward_train(&h)?;
        let mask = self.active_p().map(|p| dropout_mask(pre.data.len(), p, rng));
        let mut y = self.skip(x)?;
        for (i, (o, v)) in y.data.iter_mut().zip(&pre.data).enumerate() {
            let m = mask.as_ref().map_or(1.0, |m| m[i]);
            *o += m * gelu(*v);
        }
        Ok((y, BlockCache { x: x.clone(), bn, pre, mask }))
    }

    fn forward_infer(&self, x: &Tensor3, mc: bool, rng: &mut ChaCha8Rng) -> Result<Tensor3> {
        let pre = self.bn.forward_eval(&self.conv.forward(x)?);
        let mask = if mc { self.active_p().map(|p| dropout_mask(pre.data.len(), p, rng)) } else { None };
        let mut y = self.skip(x)?;
        for (i, (o, v)) in y.data.iter_mut().zip(&pre.data).enumerate() {
            let m = mask.as_ref().map_or(1.0, |m| m[i]);
            *o += m * gelu(*v);
        }
        Ok(y)
    }

    fn backward(&mut self, c: &BlockCache, gy: &Tensor3, want_gx: bool) -> Option<Tensor3> {
        let mut gpre = gy.clone();
        for (i, (g, v)) in gpre.data.iter_mut().zip(&c.pre.data).enumerate() {
            let m = c.mask.as_ref().map_or(1.0, |m| m[i]);
            *g *= m * gelu_grad(*v);
        }
        let gh = self.bn.backward(&c.bn, &gpre);
        let gx = self.conv.backward(&c.x, &gh, want_gx);
        let gskip = match self.proj.as_mut() {
            Some(p) => p.backward(&c.x, gy, want_gx),
            None => want_gx.then(|| gy.clone()),
        };
        match (gx, gskip) {
            (Some(mut a), Some(b)) => {
                for (x, y) in a.data.iter_mut().zip(&b.data) {
                    *x += y;
                }
                Some(a)
            }
            _ => None,
        }
    }

    fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = self.conv.params().into_iter().chain(self.bn.params()).collect();
        if let Some(p) = &self.proj {
            v.extend(p.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.conv.params_mut().into_iter().chain(self.bn.params_mut()).collect();
        if let Some(p) = &mut self.proj {
            v.extend(p.params_mut());
        }
        v
    }
}

/// Residual TCN stack, time-average pooling and an optional projection to the latent size.
struct Encoder {
    blocks: Vec<ResBlock>,
    proj: Option<Linear>,
}

struct EncoderCache {
    blocks: Vec<BlockCache>,
    pooled: Vec<f64>,
    shape: (usize, usize, usize),
}

impl Encoder {
    fn new(
        name: &str,
        cin: usize,
        widths: &[usize],
        dilations: &[usize],
        kernel: usize,
        latent: usize,
        dropout: Option<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut blocks = Vec::new();
        let mut c = cin;
        for (i, (&w, &d)) in widths.iter().zip(dilations).enumerate() {
            blocks.push(ResBlock::new(&format!("{name}.block{i}"), c, w, kernel, d, dropout, rng));
            c = w;
        }
        let proj = (c != latent).then(|| Linear::new(&format!("{name}.proj"), c, latent, rng));
        Self { blocks, proj }
    }

    fn pool(h: &Tensor3) -> Vec<f64> {
        let mut out = vec![0.0; h.b * h.c];
        for b in 0..h.b {
            for c in 0..h.c {
                out[b * h.c + c] = h.row(b, c).iter().sum::<f64>() / h.t as f64;
            }
        }
        out
    }

    fn project(&self, pooled: Vec<f64>, batch: usize) -> Vec<f64> {
        match &self.proj {
            Some(l) => l.forward(&pooled, batch),
            None => pooled,
        }
    }

    fn forward_train(&mut self, x: &Tensor3, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, EncoderCache)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &mut self.blocks {
            let (y, c) = b.forward_train(&h, rng)?;
            caches.push(c);
            h = y;
        }
        let pooled = Self::pool(&h);
        let z = self.project(pooled.clone(), x.b);
        Ok((z, EncoderCache { blocks: caches, pooled, shape: (h.b, h.c, h.t) }))
    }

    fn forward_infer(&self, x: &Tensor3, mc: bool, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.forward_infer(&h, mc, rng)?;
        }
        Ok(self.project(Self::pool(&h), x.b))
    }

    fn backward(&mut self, c: &EncoderCache, gz: &[f64]) {
        let (bsz, ch, t) = c.shape;
        let gp = match self.proj.as_mut() {
            Some(l) => l.backward(&c.pooled, gz, bsz),
            None => gz.to_vec(),
        };
        let mut g = Tensor3::zeros(bsz, ch, t);
        for b in 0..bsz {
            for k in 0..ch {
                g.row_mut(b, k).fill(gp[b * ch + k] / t as f64);
            }
        }
        for (i, (blk, cache)) in self.blocks.iter_mut().zip(&c.blocks).enumerate().rev() {
            match blk.backward(cache, &g, i > 0) {
                Some(gx) => g = gx,
                None => break,
            }
        }
    }

    fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = self.blocks.iter().flat_map(|b| b.params()).collect();
        if let Some(l) = &self.proj {
            v.extend(l.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.blocks.iter_mut().flat_map(|b| b.params_mut()).collect();
        if let Some(l) = &mut self.proj {
            v.extend(l.params_mut());
        }
        v
    }

    fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm> {
        self.blocks.iter().map(|b| &b.bn)
    }

    fn batch_norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNorm> {
        self.blocks.iter_mut().map(|b| &mut b.bn)
    }
}

/// Single-hidden-layer GELU MLP producing raw outputs.
struct Mlp {
    l1: Linear,
    l2: Linear,
}

struct MlpCache {
    x: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

impl Mlp {
    fn new(name: &str, fin: usize, hidden: usize, fout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self { l1: Linear::new(&format!("{name}.fc1"), fin, hidden, rng), l2: Linear::new(&format!("{name}.fc2"), hidden, fout, rng) }
    }

    fn forward(&self, x: Vec<f64>, batch: usize) -> (Vec<f64>, MlpCache) {
        let pre = self.l1.forward(&x, batch);
        let act: Vec<f64> = pre.iter().map(|&v| gelu(v)).collect();
        let y = self.l2.forward(&act, batch);
        (y, MlpCache { x, pre, act })
    }

    fn backward(&mut self, c: &MlpCache, gy: &[f64], batch: usize) -> Vec<f64> {
        let mut ga = self.l2.backward(&c.act, gy, batch);
        for (g, v) in ga.iter_mut().zip(&c.pre) {
            *g *= gelu_grad(*v);
        }
        self.l1.backward(&c.x, &ga, batch)
    }

    fn params(&self) -> Vec<&Param> {
        self.l1.params().into_iter().chain(self.l2.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.l1.params_mut().into_iter().chain(self.l2.params_mut()).collect()
    }
}

/// Network outputs: `theta` is `[batch][K]` in `(0, 1)`; `aux` is the
/// normalized seafloor-depth estimate when the auxiliary head exists.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub batch: usize,
    pub k: usize,
    pub theta: Vec<f64>,
    pub aux: Option<Vec<f64>>,
}

impl Prediction {
    pub fn sample(&self, b: usize) -> &[f64] {
        &self.theta[b * self.k..(b + 1) * self.k]
    }
}

/// Upstream gradients for [`Network::backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionGrad {
    pub theta: Vec<f64>,
    pub aux: Option<Vec<f64>>,
}

struct HeadCache {
    batch: usize,
    h1: MlpCache,
    o1: Vec<f64>,
    h2: Option<(MlpCache, Vec<f64>)>,
    aux: Option<MlpCache>,
}

struct Tape {
    full: EncoderCache,
    late: Option<EncoderCache>,
    heads: HeadCache,
}

/// DualTCN or TCN-only regressor with manual reverse-mode gradients.
pub struct Network {
    config: NetworkConfig,
    full: Encoder,
    late: Option<Encoder>,
    head1: Mlp,
    head2: Option<Mlp>,
    aux: Option<Mlp>,
    tape: Option<Tape>,
    frozen_condition: Option<Vec<f64>>,
}

/// `(head, column)` feeding each output parameter of the two-stage head.
fn dual_layout(k: usize) -> &'static [(usize, usize)] {
    if k == 6 {
        &[(1, 0), (2, 0), (2, 1), (1, 1), (2, 2), (2, 3)]
    } else {
        &[(1, 0), (2, 0), (1, 1), (2, 1)]
    }
}

impl Network {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let full = Encoder::new("full", c.in_channels, &c.full_widths, &c.full_dilations, c.kernel, c.full_latent, c.dropout, &mut rng);
        let (late, head1, head2, aux) = match c.architecture {
            Architecture::DualTcn => {
                let late = Encoder::new("late", c.in_channels, &c.late_widths, &c.late_dilations, c.kernel, c.late_latent, c.dropout, &mut rng);
                let comb = c.full_latent + c.late_latent;
                let h1 = Mlp::new("head1", c.full_latent, c.head_hidden, 2, &mut rng);
                let h2 = Mlp::new("head2", comb + 2, c.head_hidden, c.outputs - 2, &mut rng);
                let aux = c.aux_head.then(|| Mlp::new("aux", comb, c.head_hidden, 1, &mut rng));
                (Some(late), h1, Some(h2), aux)
            }
            Architecture::TcnOnly => (None, Mlp::new("head", c.full_latent, c.head_hidden, c.outputs, &mut rng), None, None),
        };
        Ok(Self { config, full, late, head1, head2, aux, tape: None, frozen_condition: None })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Hold the stage-one values fed to head 2 fixed (`[batch][2]`), so that
    /// finite differences see the same detached graph as [`Network::backward`].
    pub fn freeze_stage_one(&mut self, values: Option<Vec<f64>>) {
        self.frozen_condition = values;
    }

    /// Stage-one outputs `(sigma1, d1)` per sample of a prediction.
    pub fn stage_one(&self, pred: &Prediction) -> Vec<f64> {
        let idx = if pred.k == 6 { [0, 3] } else { [0, 2] };
        (0..pred.batch).flat_map(|b| idx.map(|i| pred.theta[b * pred.k + i])).collect()
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        if x.c != self.config.in_channels || x.t != self.config.seq_len {
            return Err(Error::Shape(format!(
                "network expects {}x{} inputs, got {}x{}",
                self.config.in_channels, self.config.seq_len, x.c, x.t
            )));
        }
        Ok(())
    }

    fn heads(&self, zf: Vec<f64>, zl: Option<Vec<f64>>, batch: usize) -> (Prediction, HeadCache) {
        let k = self.config.outputs;
        match (&self.head2, zl) {
            (Some(h2), Some(zl)) => {
                let (df, dl) = (self.config.full_latent, self.config.late_latent);
                let (l1, h1c) = self.head1.forward(zf.clone(), batch);
                let o1: Vec<f64> = l1.iter().map(|&v| sigmoid(v)).collect();
                let mut zcomb = Vec::with_capacity(batch * (df + dl));
                let mut in2 = Vec::with_capacity(batch * (df + dl + 2));
                for b in 0..batch {
                    let part = zf[b * df..(b + 1) * df].iter().chain(&zl[b * dl..(b + 1) * dl]);
                    zcomb.extend(part.clone());
                    in2.extend(part);
                    let cond = self.frozen_condition.as_deref().unwrap_or(&o1);
                    in2.extend(&cond[b * 2..b * 2 + 2]);
                }
                let (l2, h2c) = h2.forward(in2, batch);
                let o2: Vec<f64> = l2.iter().map(|&v| sigmoid(v)).collect();
                let (aux, auxc) = match &self.aux {
                    Some(a) => {
                        let (y, c) = a.forward(zcomb.clone(), batch);
                        (Some(y), Some(c))
                    }
                    None => (None, None),
                };
                let mut theta = Vec::with_capacity(batch * k);
                for b in 0..batch {
                    for &(h, col) in dual_layout(k) {
                        theta.push(if h == 1 { o1[b * 2 + col] } else { o2[b * (k - 2) + col] });
                    }
                }
                let cache = HeadCache { batch, h1: h1c, o1, h2: Some((h2c, o2)), aux: auxc };
                (Prediction { batch, k, theta, aux }, cache)
            }
            _ => {
                let (l, h1c) = self.head1.forward(zf, batch);
                let theta: Vec<f64> = l.iter().map(|&v| sigmoid(v)).collect();
                let cache = HeadCache { batch, h1: h1c, o1: theta.clone(), h2: None, aux: None };
                (Prediction { batch, k, theta, aux: None }, cache)
            }
        }
    }

    /// Training-mode forward pass; records activations for [`Network::backward`]
    /// and updates batch-norm running statistics.
    pub fn forward_train(&mut self, x: &Tensor3, rng: &mut ChaCha8Rng) -> Result<Prediction> {
        self.check_input(x)?;
        let (zf, full) = self.full.forward_train(x, rng)?;
        let (zl, late) = match self.late.as_mut() {
            Some(enc) => {
                let (z, c) = enc.forward_train(&x.tail(self.config.late_slice), rng)?;
                (Some(z), Some(c))
            }
            None => (None, None),
        };
        let (pred, heads) = self.heads(zf, zl, x.b);
        self.tape = Some(Tape { full, late, heads });
        Ok(pred)
    }

    /// Inference in `Eval` or `Mc` mode; never mutates the model.
    pub fn predict(&self, x: &Tensor3, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Prediction> {
        let mc = match mode {
            Mode::Eval => false,
            Mode::Mc => {
                if self.config.dropout.is_none() {
                    return Err(Error::Config("MC sampling requested but dropout is disabled".into()));
                }
                true
            }
            Mode::Train => return Err(Error::Usage("use forward_train for training passes".into())),
        };
        self.check_input(x)?;
        let (zf, zl) = self.latents_impl(x, mc, rng)?;
        Ok(self.heads(zf, zl, x.b).0)
    }

    fn latents_impl(&self, x: &Tensor3, mc: bool, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let zf = self.full.forward_infer(x, mc, rng)?;
        let zl = match &self.late {
            Some(enc) => Some(enc.forward_infer(&x.tail(self.config.late_slice), mc, rng)?),
            None => None,
        };
        Ok((zf, zl))
    }

    /// Eval-mode encoder latents `(z_full, z_late)`.
    pub fn latents(&self, x: &Tensor3) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        self.check_input(x)?;
        self.latents_impl(x, false, &mut ChaCha8Rng::seed_from_u64(0))
    }

    /// Accumulate parameter gradients for the last training forward pass.
    pub fn backward(&mut self, grad: &PredictionGrad) -> Result<()> {
        let tape = self.tape.take().ok_or_else(|| Error::Usage("backward called without a training forward pass".into()))?;
        let hc = &tape.heads;
        let (batch, k) = (hc.batch, self.config.outputs);
        if grad.theta.len() != batch * k {
            return Err(Error::Shape(format!("gradient has {} entries, expected {}", grad.theta.len(), batch * k)));
        }
        let df = self.config.full_latent;
        let gzf_head;
        let mut gzl = None;
        match (self.head2.as_mut(), hc.h2.as_ref()) {
            (Some(h2), Some((h2c, o2))) => {
                let dl = self.config.late_latent;
                let mut g1 = vec![0.0; batch * 2];
                let mut g2 = vec![0.0; batch * (k - 2)];
                for b in 0..batch {
                    for (i, &(h, col)) in dual_layout(k).iter().enumerate() {
                        let g = grad.theta[b * k + i];
                        if h == 1 {
                            let o = hc.o1[b * 2 + col];
                            g1[b * 2 + col] = g * o * (1.0 - o);
                        } else {
                            let o = o2[b * (k - 2) + col];
                            g2[b * (k - 2) + col] = g * o * (1.0 - o);
                        }
                    }
                }
                let gin2 = h2.backward(h2c, &g2, batch);
                let w = df + dl;
                let mut gcomb = vec![0.0; batch * w];
                for b in 0..batch {
                    // The stage-one outputs enter head 2 detached: their gradient is dropped.
                    gcomb[b * w..(b + 1) * w].copy_from_slice(&gin2[b * (w + 2)..b * (w + 2) + w]);
                }
                if let (Some(aux), Some(auxc), Some(ga)) = (self.aux.as_mut(), hc.aux.as_ref(), grad.aux.as_ref()) {
                    let gaux = aux.backward(auxc, ga, batch);
                    for (a, b) in gcomb.iter_mut().zip(gaux) {
                        *a += b;
                    }
                }
                let mut gzf = self.head1.backward(&hc.h1, &g1, batch);
                let mut gl = vec![0.0; batch * dl];
                for b in 0..batch {
                    for i in 0..df {
                        gzf[b * df + i] += gcomb[b * w + i];
                    }
                    gl[b * dl..(b + 1) * dl].copy_from_slice(&gcomb[b * w + df..(b + 1) * w]);
                }
                gzf_head = gzf;
                gzl = Some(gl);
            }
            _ => {
                let gl: Vec<f64> = grad.theta.iter().zip(&hc.o1).map(|(g, o)| g * o * (1.0 - o)).collect();
                gzf_head = self.head1.backward(&hc.h1, &gl, batch);
            }
        }
        self.full.backward(&tape.full, &gzf_head);
        if let (Some(enc), Some(c), Some(g)) = (self.late.as_mut(), tape.late.as_ref(), gzl) {
            enc.backward(c, &g);
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.full.params();
        if let Some(l) = &self.late {
            v.extend(l.params());
        }
        v.extend(self.head1.params());
        for m in [&self.head2, &self.aux].into_iter().flatten() {
            v.extend(m.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.full.params_mut();
        if let Some(l) = &mut self.late {
            v.extend(l.params_mut());
        }
        v.extend(self.head1.params_mut());
        for m in [&mut self.head2, &mut self.aux].into_iter().flatten() {
            v.extend(m.params_mut());
        }
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Every persistent tensor: parameters followed by batch-norm running statistics.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out: Vec<_> = self.params().into_iter().map(|p| (p.name.clone(), p.shape.clone(), p.value.clone())).collect();
        let bns = self.full.batch_norms().chain(self.late.iter().flat_map(|l| l.batch_norms()));
        for bn in bns {
            out.push((bn.running_mean_name.clone(), vec![bn.running_mean.len()], bn.running_mean.clone()));
            out.push((bn.running_var_name.clone(), vec![bn.running_var.len()], bn.running_var.clone()));
        }
        out
    }

    /// Overwrite every tensor from a named table; the table must match exactly.
    pub fn load_named_tensors(&mut self, tensors: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        let expected = self.named_tensors();
        if expected.len() != tensors.len() {
            return Err(Error::Format(format!("expected {} tensors, found {}", expected.len(), tensors.len())));
        }
        for ((en, es, _), (n, s, v)) in expected.iter().zip(tensors) {
            if en != n || es != s || v.len() != s.iter().product::<usize>() {
                return Err(Error::Format(format!("tensor mismatch: expected {en} {es:?}, found {n} {s:?}")));
            }
        }
        let mut it = tensors.iter();
        for p in self.params_mut() {
            p.value.clone_from(&it.next().expect("length checked").2);
        }
        let late = self.late.iter_mut().flat_map(|l| l.batch_norms_mut());
        for bn in self.full.batch_norms_mut().chain(late) {
            bn.running_mean.clone_from(&it.next().expect("length checked").2);
            bn.running_var.clone_from(&it.next().expect("length checked").2);
        }
        self.tape = None;
        Ok(())
    }
}

/// Exact number of trainable scalars of a configuration.
pub fn param_count(config: &NetworkConfig) -> Result<usize> {
    Ok(Network::new(config.clone(), 0)?.num_params())
}

/// Stack samples into a batch tensor.
pub fn batch_tensor(samples: &[&SampleTensor]) -> Result<Tensor3> {
    let first = samples.first().ok_or_else(|| Error::Shape("empty batch".into()))?;
    let c = first.channels();
    if samples.iter().any(|s| s.channels() != c) {
        return Err(Error::Shape("mixed channel counts in batch".into()));
    }
    let mut x = Tensor3::zeros(samples.len(), c, N_TIME);
    for (b, s) in samples.iter().enumerate() {
        for ch in 0..c {
            x.row_mut(b, ch).copy_from_slice(s.channel(ch));
        }
    }
    Ok(x)
}

/// Random input tensor, mainly for tests and benchmarks.
pub fn random_input(b: usize, c: usize, t: usize, rng: &mut impl Rng) -> Tensor3 {
    Tensor3 { b, c, t, data: (0..b * c * t).map(|_| rng.gen_range(-1.0..1.0)).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(cfg: &NetworkConfig, b: usize, seed: u64) -> Tensor3 {
        random_input(b, cfg.in_channels, cfg.seq_len, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn objective(net: &mut Network, x: &Tensor3, wt: &[f64], wa: &[f64]) -> f64 {
        let p = net.forward_train(x, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let mut s: f64 = p.theta.iter().zip(wt).map(|(a, b)| a * b).sum();
        if let Some(a) = &p.aux {
            s += a.iter().zip(wa).map(|(a, b)| a * b).sum::<f64>();
        }
        s
    }

    fn gradient_check(cfg: NetworkConfig) {
        let mut net = Network::new(cfg.clone(), 5).unwrap();
        let x = input(&cfg, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let wt: Vec<f64> = (0..3 * cfg.outputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wa: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        net.zero_grad();
        let p = net.forward_train(&x, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let aux = p.aux.as_ref().map(|_| wa.clone());
        net.backward(&PredictionGrad { theta: wt.clone(), aux }).unwrap();
        let analytic: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad.clone()).collect();
        if cfg.architecture == Architecture::DualTcn {
            net.freeze_stage_one(Some(net.stage_one(&p)));
        }
        let h = 1e-5;
        for (pi, an) in analytic.iter().enumerate() {
            let mut num = vec![0.0; an.len()];
            for j in 0..an.len() {
                let orig = net.params()[pi].value[j];
                net.params_mut()[pi].value[j] = orig + h;
                let fp = objective(&mut net, &x, &wt, &wa);
                net.params_mut()[pi].value[j] = orig - h;
                let fm = objective(&mut net, &x, &wt, &wa);
                net.params_mut()[pi].value[j] = orig;
                num[j] = (fp - fm) / (2.0 * h);
            }
            let diff: f64 = num.iter().zip(an).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = num.iter().map(|v| v * v).sum::<f64>().sqrt().max(an.iter().map(|v| v * v).sum::<f64>().sqrt());
            let name = &net.params()[pi].name;
            assert!(diff <= 1e-3 * scale, "{name}: rel {}", diff / scale);
        }
    }

    #[test]
    fn dual_gradients_match_finite_differences() {
        gradient_check(NetworkConfig::tiny());
    }

    #[test]
    fn baseline_gradients_match_finite_differences() {
        gradient_check(NetworkConfig::tiny().with_architecture(Architecture::TcnOnly));
    }

    #[test]
    fn three_layer_gradients_match_finite_differences() {
        gradient_check(NetworkConfig { outputs: 6, ..NetworkConfig::tiny() });
    }

    #[test]
    fn backward_requires_forward() {
        let mut net = Network::new(NetworkConfig::tiny(), 0).unwrap();
        let g = PredictionGrad { theta: vec![0.0; 12], aux: None };
        assert!(matches!(net.backward(&g), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let cfg = NetworkConfig::tiny();
        let mut net = Network::new(cfg.clone(), 0).unwrap();
        net.zero_grad();
        net.forward_train(&input(&cfg, 3, 2), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        net.backward(&PredictionGrad { theta: vec![0.0; 12], aux: Some(vec![0.0; 3]) }).unwrap();
        assert!(net.params().iter().all(|p| p.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn head_one_is_detached_from_head_two() {
        let cfg = NetworkConfig::tiny();
        let mut net = Network::new(cfg.clone(), 0).unwrap();
        net.zero_grad();
        net.forward_train(&input(&cfg, 3, 2), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // Upstream gradient only on the stage-two outputs (sigma2, d2).
        let theta = (0..12).map(|i| if i % 4 == 1 || i % 4 == 3 { 1.0 } else { 0.0 }).collect();
        net.backward(&PredictionGrad { theta, aux: None }).unwrap();
        for p in net.params() {
            let total: f64 = p.grad.iter().map(|g| g.abs()).sum();
            if p.name.starts_with("head1") {
                assert_eq!(total, 0.0, "{}", p.name);
            } else if p.name.starts_with("head2") {
                assert!(total > 0.0, "{}", p.name);
            }
        }
    }

    #[test]
    fn late_encoder_ignores_early_samples() {
        let cfg = NetworkConfig::tiny();
        let net = Network::new(cfg.clone(), 0).unwrap();
        let x = input(&cfg, 2, 4);
        let (zf, zl) = net.latents(&x).unwrap();
        let mut early = x.clone();
        early.row_mut(0, 0)[0] += 0.5;
        let (zf2, zl2) = net.latents(&early).unwrap();
        assert_eq!(zl, zl2);
        assert_ne!(zf, zf2);
        let mut late = x.clone();
        late.row_mut(0, 0)[cfg.seq_len - 1] += 0.5;
        let (zf3, zl3) = net.latents(&late).unwrap();
        assert_ne!(zl, zl3);
        assert_ne!(zf, zf3);
    }

    #[test]
    fn mc_mode_needs_dropout() {
        let cfg = NetworkConfig { dropout: None, ..NetworkConfig::tiny() };
        let net = Network::new(cfg.clone(), 0).unwrap();
        let err = net.predict(&input(&cfg, 2, 0), Mode::Mc, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn outputs_are_strictly_inside_unit_interval() {
        let cfg = NetworkConfig::tiny();
        let net = Network::new(cfg.clone(), 9).unwrap();
        let p = net.predict(&input(&cfg, 4, 0), Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(p.theta.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn default_size_is_near_budget() {
        let n = param_count(&NetworkConfig::default()).unwrap();
        assert!((n as f64 - 379_000.0).abs() <= 0.2 * 379_000.0, "{n}");
        assert!(NetworkConfig::default().receptive_field() >= 127);
    }
}
