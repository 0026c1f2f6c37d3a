use serde::{Deserialize, Serialize};

use crate::phys_decoder::{decode, decode_with_jacobian, DepthGrid, DEFAULT_TAU};
use crate::synth_data::ParamRanges;
use crate::tcn_core::Prediction;
use crate::{Error, Result};

/// Weights of the composite training objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub huber_delta: f64,
    /// Per-parameter Huber weights in target order.
    pub weights: Vec<f64>,
    /// Factor applied to the whole weighted parameter sum.
    pub param_multiplier: f64,
    pub aux_weight: f64,
    pub tau: f64,
    pub grid: DepthGrid,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            huber_delta: 0.1,
            weights: vec![1.0, 3.0, 3.0, 2.0],
            param_multiplier: 2.0,
            aux_weight: 0.5,
            tau: DEFAULT_TAU,
            grid: DepthGrid::default(),
        }
    }
}

impl LossConfig {
    /// Defaults sized for `k` outputs; the basement conductivity shares the
    /// seafloor weight and the layer thickness the `d2` weight.
    pub fn for_outputs(k: usize) -> Self {
        let weights = if k == 6 { vec![1.0, 3.0, 3.0, 3.0, 2.0, 2.0] } else { vec![1.0, 3.0, 3.0, 2.0] };
        Self { weights, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.huber_delta > 0.0) {
            return Err(Error::Config("huber delta must be positive".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(self.param_multiplier >= 0.0 && self.aux_weight >= 0.0) {
            return Err(Error::Config("loss multipliers must be non-negative".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config("tau must be positive".into()));
        }
        Ok(())
    }
}

pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

pub fn huber_grad(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

/// Flat `[batch][..]` views of everything the objective compares.
#[derive(Clone, Copy, Debug)]
pub struct LossInputs<'a> {
    pub k: usize,
    pub theta: &'a [f64],
    pub targets: &'a [f64],
    pub profiles: &'a [f64],
    pub true_profiles: &'a [f64],
    /// `(predicted, target)` normalized seafloor depth.
    pub aux: Option<(&'a [f64], &'a [f64])>,
    pub sample_weights: Option<&'a [f64]>,
}

/// Batch-averaged loss terms and the gradient of `total` w.r.t. every input.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub profile: f64,
    pub params: f64,
    pub aux: f64,
    pub grad_theta: Vec<f64>,
    pub grad_profiles: Vec<f64>,
    pub grad_aux: Option<Vec<f64>>,
}

pub fn total_loss(inp: &LossInputs, cfg: &LossConfig) -> Result<LossValue> {
    let k = inp.k;
    if k == 0 || cfg.weights.len() != k {
        return Err(Error::Shape(format!("{} loss weights for {k} outputs", cfg.weights.len())));
    }
    if inp.theta.is_empty() || inp.theta.len() % k != 0 || inp.targets.len() != inp.theta.len() {
        return Err(Error::Shape("predictions and targets must be non-empty [batch][K]".into()));
    }
    let batch = inp.theta.len() / k;
    if inp.profiles.len() != inp.true_profiles.len() || inp.profiles.len() % batch != 0 || inp.profiles.is_empty() {
        return Err(Error::Shape("profiles must be [batch][n_z] and match the truth".into()));
    }
    let nz = inp.profiles.len() / batch;
    if let Some((p, t)) = inp.aux {
        if p.len() != batch || t.len() != batch {
            return Err(Error::Shape("auxiliary predictions must have one value per sample".into()));
        }
    }
    let ones;
    let sw = match inp.sample_weights {
        Some(w) => {
            if w.len() != batch {
                return Err(Error::Shape(format!("{} sample weights for batch of {batch}", w.len())));
            }
            if let Some(i) = w.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(format!("sample weight {i} is {}", w[i])));
            }
            w
        }
        None => {
            ones = vec![1.0; batch];
            &ones
        }
    };
    let nb = batch as f64;
    let delta = cfg.huber_delta;
    let mut out = LossValue {
        total: 0.0,
        profile: 0.0,
        params: 0.0,
        aux: 0.0,
        grad_theta: vec![0.0; batch * k],
        grad_profiles: vec![0.0; batch * nz],
        grad_aux: inp.aux.map(|_| vec![0.0; batch]),
    };
    for b in 0..batch {
        let s = sw[b];
        let p = &inp.profiles[b * nz..(b + 1) * nz];
        let q = &inp.true_profiles[b * nz..(b + 1) * nz];
        let mut mse = 0.0;
        for (z, (x, y)) in p.iter().zip(q).enumerate() {
            let d = x - y;
            mse += d * d;
            out.grad_profiles[b * nz + z] = s * 2.0 * d / (nz as f64 * nb);
        }
        out.profile += s * mse / nz as f64 / nb;
        for i in 0..k {
            let r = inp.theta[b * k + i] - inp.targets[b * k + i];
            let w = cfg.param_multiplier * cfg.weights[i];
            out.params += s * w * huber(r, delta) / nb;
            out.grad_theta[b * k + i] = s * w * huber_grad(r, delta) / nb;
        }
        if let (Some((ap, at)), Some(ga)) = (inp.aux, out.grad_aux.as_mut()) {
            let r = ap[b] - at[b];
            out.aux += s * cfg.aux_weight * huber(r, delta) / nb;
            ga[b] = s * cfg.aux_weight * huber_grad(r, delta) / nb;
        }
    }
    out.total = out.profile + out.params + out.aux;
    Ok(out)
}

/// Loss of a network prediction, with profiles decoded from the predicted
/// and true parameters at the same `tau`. The profile gradient is chained
/// through the decoder into `grad_theta`. The auxiliary term is included
/// only when `train` is set and both prediction and target exist.
pub fn decoded_loss(
    pred: &Prediction,
    targets: &[f64],
    aux_targets: Option<&[f64]>,
    sample_weights: Option<&[f64]>,
    cfg: &LossConfig,
    ranges: &ParamRanges,
    train: bool,
) -> Result<LossValue> {
    let (batch, k, nz) = (pred.batch, pred.k, cfg.grid.n_z);
    if targets.len() != batch * k {
        return Err(Error::Shape(format!("{} targets for batch {batch} x {k}", targets.len())));
    }
    let mut profiles = Vec::with_capacity(batch * nz);
    let mut truth = Vec::with_capacity(batch * nz);
    let mut jacs = Vec::with_capacity(batch);
    for b in 0..batch {
        let (p, j) = decode_with_jacobian(pred.sample(b), cfg.tau, &cfg.grid, ranges)?;
        profiles.extend(p.log10_sigma);
        truth.extend(decode(&targets[b * k..(b + 1) * k], cfg.tau, &cfg.grid, ranges)?.log10_sigma);
        jacs.push(j);
    }
    let aux = match (train, pred.aux.as_deref(), aux_targets) {
        (true, Some(p), Some(t)) => Some((p, t)),
        _ => None,
    };
    let inputs = LossInputs {
        k,
        theta: &pred.theta,
        targets,
        profiles: &profiles,
        true_profiles: &truth,
        aux,
        sample_weights,
    };
    let mut v = total_loss(&inputs, cfg)?;
    for (b, jac) in jacs.iter().enumerate() {
        let gp = &v.grad_profiles[b * nz..(b + 1) * nz];
        for i in 0..k {
            v.grad_theta[b * k + i] += gp.iter().enumerate().map(|(z, g)| g * jac[z * k + i]).sum::<f64>();
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs<'a>(theta: &'a [f64], targets: &'a [f64], prof: &'a [f64]) -> LossInputs<'a> {
        LossInputs { k: 4, theta, targets, profiles: prof, true_profiles: prof, aux: None, sample_weights: None }
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let t = [0.2, 0.4, 0.6, 0.8];
        let p = [1.0, 2.0, 3.0];
        let v = total_loss(&inputs(&t, &t, &p), &LossConfig::default()).unwrap();
        assert_eq!(v.total, 0.0);
        assert!(v.grad_theta.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn huber_branches() {
        assert!((huber(0.05, 0.1) - 0.00125).abs() < 1e-15);
        assert!((huber(0.5, 0.1) - 0.045).abs() < 1e-15);
        assert!((huber(-0.5, 0.1) - 0.045).abs() < 1e-15);
    }

    #[test]
    fn huber_is_c1_at_delta() {
        let d = 0.1;
        let e = 1e-9;
        assert!((huber(d - e, d) - huber(d + e, d)).abs() < 1e-9);
        let slope = |r: f64| (huber(r + 1e-7, d) - huber(r - 1e-7, d)) / 2e-7;
        assert!((slope(d - 1e-5) - slope(d + 1e-5)).abs() < 1e-4);
        assert!((slope(d) - huber_grad(d, d)).abs() < 1e-6);
    }

    #[test]
    fn single_residual_terms() {
        let t = [0.2, 0.4, 0.6, 0.8];
        let th = [0.25, 0.4, 0.6, 0.8];
        let p = [0.0; 2];
        let v = total_loss(&inputs(&th, &t, &p), &LossConfig::default()).unwrap();
        assert!((v.params - 2.0 * 1.0 * 0.00125).abs() < 1e-15);
    }

    #[test]
    fn negative_sample_weight_rejected() {
        let t = [0.2, 0.4, 0.6, 0.8];
        let p = [0.0; 2];
        let w = [-1.0];
        let mut inp = inputs(&t, &t, &p);
        inp.sample_weights = Some(&w);
        assert!(matches!(total_loss(&inp, &LossConfig::default()), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn decoded_gradient_matches_finite_differences() {
        let ranges = ParamRanges::default();
        let cfg = LossConfig::default();
        let targets = [0.3, 0.6, 0.4, 0.7, 0.8, 0.2, 0.5, 0.1];
        let theta = vec![0.35, 0.5, 0.45, 0.6, 0.7, 0.3, 0.52, 0.2];
        let pred = |th: Vec<f64>| Prediction { batch: 2, k: 4, theta: th, aux: Some(vec![0.1, -0.2]) };
        let aux_t = [0.0, 0.1];
        let v = decoded_loss(&pred(theta.clone()), &targets, Some(&aux_t), None, &cfg, &ranges, true).unwrap();
        for i in 0..theta.len() {
            let h = 1e-6;
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            let fa = decoded_loss(&pred(a), &targets, Some(&aux_t), None, &cfg, &ranges, true).unwrap().total;
            let fb = decoded_loss(&pred(b), &targets, Some(&aux_t), None, &cfg, &ranges, true).unwrap().total;
            let fd = (fa - fb) / (2.0 * h);
            assert!((fd - v.grad_theta[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", v.grad_theta[i]);
        }
        let ga = v.grad_aux.unwrap();
        assert!((ga[0] - 0.5 * 0.1 / 2.0).abs() < 1e-15);
        let eval = decoded_loss(&pred(theta), &targets, Some(&aux_t), None, &cfg, &ranges, false).unwrap();
        assert_eq!(eval.aux, 0.0);
        assert!(eval.grad_aux.is_none());
    }
}
