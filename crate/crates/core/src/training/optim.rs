use serde::{Deserialize, Serialize};

use crate::tcn_core::Param;
use crate::{Error, Result};

/// Linear warm-up followed by cosine decay, evaluated per optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub peak_lr: f64,
    pub final_lr: f64,
    /// Warm-up starts at `peak_lr / warmup_div`.
    pub warmup_div: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

pub fn lr_at_step(step: usize, s: &Schedule) -> f64 {
    if step < s.warmup_steps {
        let start = s.peak_lr / s.warmup_div;
        return start + (s.peak_lr - start) * step as f64 / s.warmup_steps as f64;
    }
    let span = s.total_steps.saturating_sub(1).saturating_sub(s.warmup_steps);
    if span == 0 {
        return s.peak_lr;
    }
    let p = ((step - s.warmup_steps) as f64 / span as f64).min(1.0);
    s.final_lr + (s.peak_lr - s.final_lr) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global L2 gradient norm cap; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-3, max_grad_norm: Some(1.0) }
    }
}

pub fn global_grad_norm(params: &[&mut Param]) -> f64 {
    params.iter().flat_map(|p| p.grad.iter()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescale gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(params: &mut [&mut Param], max_norm: f64) -> f64 {
    let norm = global_grad_norm(params);
    if norm > max_norm {
        let s = max_norm / norm;
        for p in params.iter_mut() {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// AdamW with bias correction and decoupled weight decay on `decay` tensors.
#[derive(Clone, Debug)]
pub struct AdamW {
    cfg: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, params: &[&mut Param]) -> Self {
        let m: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self { cfg, step: 0, v: m.clone(), m }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Clip, then update every parameter in place. Returns the pre-clip norm.
    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) -> Result<f64> {
        if params.len() != self.m.len() {
            return Err(Error::Shape(format!("optimizer tracks {} tensors, got {}", self.m.len(), params.len())));
        }
        if let Some(p) = params.iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::NonFinite { context: format!("gradient of {} at step {}", p.name, self.step) });
        }
        let norm = match self.cfg.max_grad_norm {
            Some(c) => clip_grad_norm(params, c),
            None => global_grad_norm(params),
        };
        self.step += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let decay = if p.decay { lr * c.weight_decay } else { 0.0 };
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let w = &mut p.value[i];
                *w -= decay * *w;
                *w -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.eps);
            }
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> Schedule {
        Schedule { peak_lr: 5e-4, final_lr: 5e-6, warmup_div: 25.0, warmup_steps: 50, total_steps: 251 }
    }

    #[test]
    fn schedule_examples() {
        let s = sched();
        assert!((lr_at_step(0, &s) - 2e-5).abs() < 1e-18);
        assert_eq!(lr_at_step(50, &s), 5e-4);
        assert!((lr_at_step(250, &s) - 5e-6).abs() < 1e-18);
        assert!((lr_at_step(150, &s) - (5e-4 + 5e-6) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn schedule_peaks_at_warmup_end_then_decreases() {
        let s = sched();
        let lrs: Vec<f64> = (0..s.total_steps).map(|i| lr_at_step(i, &s)).collect();
        assert!(lrs.iter().all(|v| *v > 0.0));
        let max = lrs.iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, lrs[50]);
        assert!(lrs[50..].windows(2).all(|w| w[1] <= w[0]));
    }

    fn param(value: Vec<f64>, grad: Vec<f64>, decay: bool) -> Param {
        Param { name: "w".into(), shape: vec![value.len()], value, grad, decay }
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = param(vec![0.3, -1.2], vec![0.0, 0.0], true);
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(cfg, &[&mut p]);
        opt.step(&mut [&mut p], 1e-3).unwrap();
        assert_eq!(p.value, vec![0.3, -1.2]);
    }

    #[test]
    fn first_step_moves_against_gradient() {
        let mut p = param(vec![0.0, 0.0], vec![0.5, -0.02], false);
        let mut opt = AdamW::new(AdamWConfig::default(), &[&mut p]);
        opt.step(&mut [&mut p], 1e-2).unwrap();
        assert!(p.value[0] < 0.0 && p.value[1] > 0.0);
        assert!((p.value[0] + 1e-2).abs() < 1e-6);
    }

    #[test]
    fn clipping_scales_to_max_norm() {
        let mut p = param(vec![0.0; 2], vec![3.0, 4.0], false);
        let norm = clip_grad_norm(&mut [&mut p], 1.0);
        assert_eq!(norm, 5.0);
        assert!((global_grad_norm(&[&mut p]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decay_skips_flagged_tensors() {
        let mut w = param(vec![1.0], vec![0.0], true);
        let mut b = param(vec![1.0], vec![0.0], false);
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.1, ..Default::default() }, &[&mut w, &mut b]);
        opt.step(&mut [&mut w, &mut b], 0.5).unwrap();
        assert!((w.value[0] - 0.95).abs() < 1e-15);
        assert_eq!(b.value[0], 1.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = param(vec![0.0], vec![f64::NAN], false);
        let mut opt = AdamW::new(AdamWConfig::default(), &[&mut p]);
        assert!(matches!(opt.step(&mut [&mut p], 1e-3), Err(Error::NonFinite { .. })));
    }
}
