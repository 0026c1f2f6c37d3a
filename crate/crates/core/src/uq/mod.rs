//! Predictive uncertainty: MC dropout, temperature scaling, split conformal
//! intervals, deep ensembles and interval calibration metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::em_forward::SampleTensor;
use crate::evaluation::{ReportTable, SweepInput};
use crate::em_forward::SampleLayout;
use crate::synth_data::parameter_names;
use crate::tcn_core::{batch_tensor, Mode, Network};
use crate::training::predict_params;
use crate::{Error, Result};

/// Nominal coverage levels reported by default.
pub const DEFAULT_LEVELS: [f64; 6] = [0.5, 0.7, 0.8, 0.9, 0.95, 0.99];
/// Smallest calibration set accepted by [`uq_report`].
pub const MIN_CALIBRATION: usize = 2000;

const BATCH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UqSource {
    McDropout,
    Ensemble,
}

/// Per-sample, per-parameter predictive mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveStats {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub source: UqSource,
}

/// Per-sample, per-parameter intervals at nominal level `level`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalSet {
    pub level: f64,
    pub lo: Vec<Vec<f64>>,
    pub hi: Vec<Vec<f64>>,
}

fn mean_std(draws: &[Vec<Vec<f64>>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let t = draws.len() as f64;
    let (n, k) = (draws[0].len(), draws[0][0].len());
    let mut mean = vec![vec![0.0; k]; n];
    let mut std = vec![vec![0.0; k]; n];
    for i in 0..n {
        for p in 0..k {
            let m = draws.iter().map(|d| d[i][p]).sum::<f64>() / t;
            let v = draws.iter().map(|d| (d[i][p] - m).powi(2)).sum::<f64>() / (t - 1.0);
            mean[i][p] = m;
            std[i][p] = v.sqrt();
        }
    }
    (mean, std)
}

/// `passes` stochastic forward passes with dropout active; pass `p` draws
/// its masks from stream `p` of `seed`.
pub fn mc_dropout_stats(net: &Network, samples: &[SampleTensor], passes: usize, seed: u64) -> Result<PredictiveStats> {
    if passes < 2 {
        return Err(Error::InvalidParameter("MC dropout needs at least 2 passes".into()));
    }
    if samples.is_empty() {
        return Err(Error::Shape("no samples".into()));
    }
    let draws = (0..passes)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let mut out = Vec::with_capacity(samples.len());
            for chunk in samples.chunks(BATCH) {
                let refs: Vec<&SampleTensor> = chunk.iter().collect();
                let pred = net.predict(&batch_tensor(&refs)?, Mode::Mc, &mut rng)?;
                out.extend((0..pred.batch).map(|b| pred.sample(b).to_vec()));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = mean_std(&draws);
    Ok(PredictiveStats { mean, std, source: UqSource::McDropout })
}

/// Mean and spread of eval-mode point predictions across members.
pub fn ensemble_stats(members: &[Network], samples: &[SampleTensor]) -> Result<PredictiveStats> {
    if members.len() < 2 {
        return Err(Error::InvalidParameter("an ensemble needs at least 2 members".into()));
    }
    if samples.is_empty() {
        return Err(Error::Shape("no samples".into()));
    }
    let draws = members.par_iter().map(|m| predict_params(m, samples, BATCH)).collect::<Result<Vec<_>>>()?;
    let (mean, std) = mean_std(&draws);
    Ok(PredictiveStats { mean, std, source: UqSource::Ensemble })
}

/// Two-sided standard-normal quantile for central coverage `level`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("coverage level must be in (0, 1), got {level}")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

/// `mean ± z * std`.
pub fn gaussian_interval(stats: &PredictiveStats, level: f64) -> Result<IntervalSet> {
    let z = normal_quantile(level)?;
    let band = |sign: f64| -> Vec<Vec<f64>> {
        stats
            .mean
            .iter()
            .zip(&stats.std)
            .map(|(m, s)| m.iter().zip(s).map(|(m, s)| m + sign * z * s).collect())
            .collect()
    };
    Ok(IntervalSet { level, lo: band(-1.0), hi: band(1.0) })
}

/// Per-parameter scale factors for the predictive standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct TemperatureFit {
    pub tau: Vec<f64>,
    /// Samples left out of each parameter's fit because their std was zero.
    pub excluded: Vec<usize>,
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Fit `tau_k` minimizing the Gaussian NLL of the targets under
/// `N(mean, (tau_k std)^2)`, by golden-section search over `[1e-2, 1e2]`.
pub fn fit_temperature(stats: &PredictiveStats, targets: &[Vec<f64>]) -> Result<TemperatureFit> {
    if stats.mean.len() != targets.len() || targets.is_empty() {
        return Err(Error::Shape("statistics and targets must cover the same non-empty samples".into()));
    }
    let k = targets[0].len();
    let mut tau = Vec::with_capacity(k);
    let mut excluded = Vec::with_capacity(k);
    for p in 0..k {
        let pairs: Vec<(f64, f64)> = (0..targets.len())
            .filter(|&i| stats.std[i][p] > 0.0)
            .map(|i| ((targets[i][p] - stats.mean[i][p]).powi(2), stats.std[i][p]))
            .collect();
        excluded.push(targets.len() - pairs.len());
        if pairs.is_empty() {
            return Err(Error::InvalidParameter(format!("every std of parameter {p} is zero")));
        }
        let nll = |t: f64| pairs.iter().map(|(r2, s)| (t * s).ln() + r2 / (2.0 * t * t * s * s)).sum::<f64>();
        tau.push(golden_section(nll, 1e-2, 1e2, 1e-4));
    }
    Ok(TemperatureFit { tau, excluded })
}

/// Scale the spread; the means are untouched.
pub fn apply_temperature(stats: &PredictiveStats, fit: &TemperatureFit) -> PredictiveStats {
    let std = stats.std.iter().map(|s| s.iter().zip(&fit.tau).map(|(s, t)| s * t).collect()).collect();
    PredictiveStats { mean: stats.mean.clone(), std, source: stats.source }
}

/// Finite-sample conformal quantile per parameter: the `ceil((n+1) level)`-th
/// smallest absolute residual, infinite when that rank exceeds `n`.
pub fn conformal_quantile(residuals: &[Vec<f64>], level: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::InvalidParameter(format!("coverage level must be in [0, 1], got {level}")));
    }
    let n = residuals.len();
    if n == 0 {
        return Err(Error::Shape("no calibration residuals".into()));
    }
    let rank = (((n + 1) as f64 * level).ceil() as usize).max(1);
    let k = residuals[0].len();
    Ok((0..k)
        .map(|p| {
            if rank > n {
                return f64::INFINITY;
            }
            let mut a: Vec<f64> = residuals.iter().map(|r| r[p].abs()).collect();
            a.sort_by(f64::total_cmp);
            a[rank - 1]
        })
        .collect())
}

/// `prediction ± q` per parameter.
pub fn conformal_intervals(pred: &[Vec<f64>], q: &[f64], level: f64) -> IntervalSet {
    let band = |sign: f64| pred.iter().map(|p| p.iter().zip(q).map(|(p, q)| p + sign * q).collect()).collect();
    IntervalSet { level, lo: band(-1.0), hi: band(1.0) }
}

/// Coverage (PICP) and mean width (MPIW) per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub level: f64,
    pub picp: Vec<f64>,
    pub mpiw: Vec<f64>,
}

pub fn coverage_metrics(intervals: &IntervalSet, targets: &[Vec<f64>]) -> Result<Coverage> {
    if intervals.lo.len() != targets.len() || targets.is_empty() {
        return Err(Error::Shape("intervals and targets must cover the same non-empty samples".into()));
    }
    let n = targets.len() as f64;
    let k = targets[0].len();
    let mut picp = vec![0.0; k];
    let mut mpiw = vec![0.0; k];
    for ((lo, hi), t) in intervals.lo.iter().zip(&intervals.hi).zip(targets) {
        for p in 0..k {
            if lo[p] <= t[p] && t[p] <= hi[p] {
                picp[p] += 1.0;
            }
            mpiw[p] += hi[p] - lo[p];
        }
    }
    Ok(Coverage { level: intervals.level, picp: picp.iter().map(|c| c / n).collect(), mpiw: mpiw.iter().map(|w| w / n).collect() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UqConfig {
    pub passes: usize,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub min_calibration: usize,
}

impl Default for UqConfig {
    fn default() -> Self {
        Self { passes: 100, levels: DEFAULT_LEVELS.to_vec(), seed: 0, min_calibration: MIN_CALIBRATION }
    }
}

/// Coverage of one method at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct UqRow {
    pub method: String,
    pub coverage: Coverage,
}

/// Calibrate on `cal` and measure coverage on `test` for MC dropout (raw
/// and temperature-scaled), split conformal and, when extra members are
/// supplied, a deep ensemble of `net` plus `members`.
pub fn uq_report(
    net: &Network,
    members: &[Network],
    layout: SampleLayout,
    cal: &SweepInput,
    test: &SweepInput,
    cfg: &UqConfig,
) -> Result<Vec<UqRow>> {
    if cal.len() < cfg.min_calibration {
        return Err(Error::Config(format!("calibration set has {} samples, need {}", cal.len(), cfg.min_calibration)));
    }
    let cal_x = cal.tensors(layout)?;
    let test_x = test.tensors(layout)?;
    let mut rows = Vec::new();
    let mut push = |method: &str, sets: Vec<IntervalSet>| -> Result<()> {
        for s in sets {
            rows.push(UqRow { method: method.to_string(), coverage: coverage_metrics(&s, &test.targets)? });
        }
        Ok(())
    };
    let gaussian = |stats: &PredictiveStats| cfg.levels.iter().map(|&l| gaussian_interval(stats, l)).collect::<Result<Vec<_>>>();

    if net.config().dropout.is_some() {
        let cal_stats = mc_dropout_stats(net, &cal_x, cfg.passes, cfg.seed)?;
        let test_stats = mc_dropout_stats(net, &test_x, cfg.passes, cfg.seed.wrapping_add(1))?;
        push("mc-dropout", gaussian(&test_stats)?)?;
        let fit = fit_temperature(&cal_stats, &cal.targets)?;
        push("mc-dropout-temperature", gaussian(&apply_temperature(&test_stats, &fit))?)?;
    }

    let cal_pred = predict_params(net, &cal_x, BATCH)?;
    let residuals: Vec<Vec<f64>> = cal_pred.iter().zip(&cal.targets).map(|(p, t)| p.iter().zip(t).map(|(a, b)| a - b).collect()).collect();
    let test_pred = predict_params(net, &test_x, BATCH)?;
    let conformal = cfg
        .levels
        .iter()
        .map(|&l| Ok(conformal_intervals(&test_pred, &conformal_quantile(&residuals, l)?, l)))
        .collect::<Result<Vec<_>>>()?;
    push("conformal", conformal)?;

    if !members.is_empty() {
        let all: Vec<Network> = std::iter::once(net).chain(members).map(clone_network).collect::<Result<_>>()?;
        push("ensemble", gaussian(&ensemble_stats(&all, &test_x)?)?)?;
    }
    Ok(rows)
}

fn clone_network(net: &Network) -> Result<Network> {
    let mut copy = Network::new(net.config().clone(), 0)?;
    copy.load_named_tensors(&net.named_tensors())?;
    Ok(copy)
}

/// One row per (method, level, parameter).
pub fn uq_table(rows: &[UqRow], k: usize) -> ReportTable {
    let mut t = ReportTable::new("uq", &["method", "level", "parameter", "picp", "mpiw"]);
    let names = parameter_names(k);
    for r in rows {
        for (p, name) in names.iter().enumerate() {
            t.push(vec![
                r.method.clone(),
                r.coverage.level.to_string(),
                name.to_string(),
                r.coverage.picp[p].to_string(),
                r.coverage.mpiw[p].to_string(),
            ]);
        }
    }
    t
}
