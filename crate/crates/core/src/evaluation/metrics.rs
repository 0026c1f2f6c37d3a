use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::synth_data::ParamRange;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamMetric {
    pub name: String,
    /// Root-mean-square error in normalized units.
    pub rmse: f64,
    /// `None` when the targets have zero variance.
    pub r2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Experiment axis value, e.g. `clean` or `20dB`.
    pub label: String,
    pub params: Vec<ParamMetric>,
    /// Mean R² over the parameters where it is defined.
    pub mean_r2: Option<f64>,
    /// Percentile bootstrap interval of the mean R².
    pub ci: Option<(f64, f64)>,
}

impl MetricsReport {
    pub fn r2(&self, i: usize) -> Option<f64> {
        self.params.get(i).and_then(|p| p.r2)
    }
}

fn check_shapes(pred: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<usize> {
    if pred.is_empty() || pred.len() != targets.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), targets.len())));
    }
    let k = targets[0].len();
    if k == 0 || pred.iter().chain(targets).any(|v| v.len() != k) {
        return Err(Error::Shape("every sample needs the same number of parameters".into()));
    }
    Ok(k)
}

fn r2_of(pred: &[Vec<f64>], targets: &[Vec<f64>], idx: &[usize], k: usize) -> (f64, Option<f64>) {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| targets[i][k]).sum::<f64>() / n;
    let ss_tot: f64 = idx.iter().map(|&i| (targets[i][k] - mean).powi(2)).sum();
    let ss_res: f64 = idx.iter().map(|&i| (pred[i][k] - targets[i][k]).powi(2)).sum();
    let r2 = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    ((ss_res / n).sqrt(), r2)
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-parameter RMSE and coefficient of determination.
pub fn r2_metrics(pred: &[Vec<f64>], targets: &[Vec<f64>], names: &[&str], label: &str) -> Result<MetricsReport> {
    let k = check_shapes(pred, targets)?;
    if names.len() != k {
        return Err(Error::Shape(format!("{} names for {k} parameters", names.len())));
    }
    let idx: Vec<usize> = (0..pred.len()).collect();
    let params: Vec<ParamMetric> = (0..k)
        .map(|i| {
            let (rmse, r2) = r2_of(pred, targets, &idx, i);
            ParamMetric { name: names[i].to_string(), rmse, r2 }
        })
        .collect();
    let mean_r2 = mean_defined(params.iter().map(|p| p.r2));
    Ok(MetricsReport { label: label.to_string(), params, mean_r2, ci: None })
}

/// Linear-interpolated quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval of the mean R² over resampled samples.
pub fn bootstrap_ci(pred: &[Vec<f64>], targets: &[Vec<f64>], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    let k = check_shapes(pred, targets)?;
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter("bootstrap needs resamples >= 1 and level in (0, 1)".into()));
    }
    let n = pred.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(resamples);
    let mut idx = vec![0; n];
    for _ in 0..resamples {
        idx.iter_mut().for_each(|i| *i = rng.gen_range(0..n));
        if let Some(m) = mean_defined((0..k).map(|p| r2_of(pred, targets, &idx, p).1)) {
            stats.push(m);
        }
    }
    if stats.is_empty() {
        return Err(Error::InvalidParameter("R² undefined on every resample".into()));
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&stats, tail), quantile_sorted(&stats, 1.0 - tail)))
}

/// Normalized error expressed in log10 units, as a geometric factor and as
/// an absolute error at the geometric mean of the range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalError {
    pub e_log: f64,
    pub gamma: f64,
    pub phys_rmse: f64,
}

pub fn physical_units(e_norm: f64, range: &ParamRange) -> Result<PhysicalError> {
    if !(e_norm >= 0.0 && e_norm.is_finite()) {
        return Err(Error::InvalidParameter(format!("normalized error must be >= 0, got {e_norm}")));
    }
    let e_log = e_norm * range.log_width();
    let gamma = 10f64.powf(e_log);
    Ok(PhysicalError { e_log, gamma, phys_rmse: (gamma - 1.0) * range.geometric_mean() })
}
