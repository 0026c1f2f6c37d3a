//! Iterative least-squares inversion of the transient data with projected
//! Levenberg-Marquardt or projected L-BFGS, multi-start orchestration and
//! a benchmark harness that scores the solvers on dataset samples.

mod objective;
mod solvers;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use objective::{
    fd_jacobian, penalized_objective, relative_misfit, transient_misfit, ForwardSetup, InverseProblem, Penalty,
    Residuals,
};
pub use solvers::{lbfgs_box_solve, lm_solve, LocalSolve, SolveStatus, StopRules};

use crate::em_forward::{forward_transient, FrequencyGrid, Transient};
use crate::evaluation::{r2_metrics, MetricsReport, ReportTable};
use crate::synth_data::{normalize_params, parameter_names, sample_parameters, DatasetHeader};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Lm,
    LbfgsBox,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartPolicy {
    /// The box midpoint only.
    Midpoint,
    /// Midpoint followed by `random_starts` uniform draws.
    #[default]
    MultiStart,
    /// A supplied estimate followed by `random_starts` uniform draws.
    Warm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    pub method: Method,
    pub ftol: f64,
    pub xtol: f64,
    /// Forward evaluations allowed per start.
    pub max_evals: usize,
    pub penalty: Penalty,
    pub starts: StartPolicy,
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            method: Method::Lm,
            ftol: 1e-6,
            xtol: 1e-6,
            max_evals: 2000,
            penalty: Penalty::None,
            starts: StartPolicy::MultiStart,
            random_starts: 7,
            seed: 0,
        }
    }
}

impl InversionConfig {
    /// Tight tolerances with a larger evaluation budget.
    pub fn tight(self) -> Self {
        Self { ftol: 1e-8, xtol: 1e-8, max_evals: 5000, ..self }
    }

    pub fn rules(&self) -> StopRules {
        StopRules { ftol: self.ftol, xtol: self.xtol, max_evals: self.max_evals }
    }
}

/// Best local solve over all starts, with aggregated cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub evals: usize,
    pub wall_seconds: f64,
    pub starts: Vec<LocalSolve>,
}

/// Start points for sample `index`: the midpoint (or `warm`) first, then
/// seeded uniform draws from a per-sample stream.
pub fn start_points(config: &InversionConfig, dim: usize, warm: Option<&[f64]>, index: u64) -> Result<Vec<Vec<f64>>> {
    let first = match (config.starts, warm) {
        (StartPolicy::Warm, Some(w)) => {
            if w.len() != dim {
                return Err(Error::Shape(format!("warm start has {} entries, expected {dim}", w.len())));
            }
            w.iter().map(|v| v.clamp(0.0, 1.0)).collect()
        }
        (StartPolicy::Warm, None) => return Err(Error::Config("warm starts need an initial estimate".into())),
        _ => vec![0.5; dim],
    };
    let mut out = vec![first];
    if config.starts != StartPolicy::Midpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(index);
        out.extend((0..config.random_starts).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()));
    }
    Ok(out)
}

/// Run the configured local solver from each start and keep the lowest objective.
pub fn multi_start_solve(problem: &mut dyn Residuals, starts: &[Vec<f64>], config: &InversionConfig) -> Result<InversionResult> {
    if starts.is_empty() {
        return Err(Error::Config("no start points".into()));
    }
    let t0 = Instant::now();
    let rules = config.rules();
    let mut solves = Vec::with_capacity(starts.len());
    for s in starts {
        solves.push(match config.method {
            Method::Lm => lm_solve(problem, s, &rules)?,
            Method::LbfgsBox => lbfgs_box_solve(problem, s, &rules)?,
        });
    }
    let best = solves
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("at least one start");
    Ok(InversionResult {
        theta: best.theta.clone(),
        objective: best.objective,
        evals: solves.iter().map(|s| s.evals).sum(),
        wall_seconds: t0.elapsed().as_secs_f64(),
        starts: solves,
    })
}

/// Invert observed transients for normalized parameters.
pub fn multi_start_invert(
    observed: &Transient,
    setup: &ForwardSetup,
    dim: usize,
    config: &InversionConfig,
    warm: Option<&[f64]>,
    index: u64,
) -> Result<InversionResult> {
    let mut problem = InverseProblem::new(observed, setup, dim, config.penalty.clone())?;
    let starts = start_points(config, dim, warm, index)?;
    multi_start_solve(&mut problem, &starts, config)
}

/// One benchmark sample: true normalized parameters, clean observations
/// and an optional warm-start estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkCase {
    pub index: usize,
    pub truth: Vec<f64>,
    pub observed: Transient,
    pub warm: Option<Vec<f64>>,
}

/// Rebuild noise-free observations of dataset samples from the header's
/// seed, on the setup's grid.
pub fn benchmark_cases(header: &DatasetHeader, indices: &[usize], setup: &ForwardSetup) -> Result<Vec<BenchmarkCase>> {
    let Some(&max) = indices.iter().max() else {
        return Ok(Vec::new());
    };
    if max >= header.count {
        return Err(Error::Config(format!("sample {max} beyond dataset of {}", header.count)));
    }
    let models = sample_parameters(header.seed, &header.ranges, max + 1, header.layers)?;
    indices
        .par_iter()
        .map(|&i| {
            let m = &models[i];
            Ok(BenchmarkCase {
                index: i,
                truth: normalize_params(m, &setup.ranges)?.0,
                observed: forward_transient(m, &setup.geometry, &setup.grid)?,
                warm: None,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkMethod {
    pub name: String,
    pub config: InversionConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodReport {
    pub name: String,
    pub metrics: MetricsReport,
    pub seconds_per_sample: f64,
    pub mean_evals: f64,
    pub mean_objective: f64,
    pub results: Vec<InversionResult>,
}

/// Invert every case with every method; samples run in parallel.
pub fn benchmark_run(cases: &[BenchmarkCase], methods: &[BenchmarkMethod], setup: &ForwardSetup) -> Result<Vec<MethodReport>> {
    if cases.is_empty() {
        return Err(Error::Config("benchmark needs at least one sample".into()));
    }
    let dim = cases[0].truth.len();
    methods
        .iter()
        .map(|m| {
            let results = cases
                .par_iter()
                .map(|c| multi_start_invert(&c.observed, setup, dim, &m.config, c.warm.as_deref(), c.index as u64))
                .collect::<Result<Vec<_>>>()?;
            let pred: Vec<Vec<f64>> = results.iter().map(|r| r.theta.clone()).collect();
            let truth: Vec<Vec<f64>> = cases.iter().map(|c| c.truth.clone()).collect();
            let n = results.len() as f64;
            Ok(MethodReport {
                name: m.name.clone(),
                metrics: r2_metrics(&pred, &truth, parameter_names(dim), &m.name)?,
                seconds_per_sample: results.iter().map(|r| r.wall_seconds).sum::<f64>() / n,
                mean_evals: results.iter().map(|r| r.evals as f64).sum::<f64>() / n,
                mean_objective: results.iter().map(|r| r.objective).sum::<f64>() / n,
                results,
            })
        })
        .collect()
}

/// One row per (method, parameter) plus a `mean` summary row per method.
pub fn benchmark_table(reports: &[MethodReport]) -> ReportTable {
    let mut t = ReportTable::new(
        "benchmark",
        &["method", "parameter", "r2", "rmse", "seconds_per_sample", "mean_evals", "mean_objective"],
    );
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        for p in &r.metrics.params {
            t.push(vec![r.name.clone(), p.name.clone(), cell(p.r2), p.rmse.to_string(), String::new(), String::new(), String::new()]);
        }
        t.push(vec![
            r.name.clone(),
            "mean".into(),
            cell(r.metrics.mean_r2),
            String::new(),
            r.seconds_per_sample.to_string(),
            r.mean_evals.to_string(),
            r.mean_objective.to_string(),
        ]);
    }
    t
}

/// Forward setup matching a dataset header.
pub fn setup_for(header: &DatasetHeader) -> ForwardSetup {
    ForwardSetup { geometry: header.geometry.clone(), grid: FrequencyGrid::paper64(), ranges: header.ranges.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_list_protocol() {
        let cfg = InversionConfig { seed: 5, ..Default::default() };
        let s = start_points(&cfg, 4, None, 3).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0], vec![0.5; 4]);
        assert_eq!(s, start_points(&cfg, 4, None, 3).unwrap());
        assert_ne!(s[1], start_points(&cfg, 4, None, 4).unwrap()[1]);
        let warm = [0.1, 0.2, 0.3, 0.4];
        let w = start_points(&InversionConfig { starts: StartPolicy::Warm, ..cfg.clone() }, 4, Some(&warm), 3).unwrap();
        assert_eq!(w[0], warm.to_vec());
        assert_eq!(w[1..], s[1..]);
        let m = start_points(&InversionConfig { starts: StartPolicy::Midpoint, ..cfg }, 4, None, 3).unwrap();
        assert_eq!(m, vec![vec![0.5; 4]]);
    }

    #[test]
    fn warm_policy_needs_estimate() {
        let cfg = InversionConfig { starts: StartPolicy::Warm, ..Default::default() };
        assert!(matches!(start_points(&cfg, 4, None, 0), Err(Error::Config(_))));
    }

    #[test]
    fn penalty_identities() {
        let th = [0.3, 0.6, 0.2, 0.9];
        assert_eq!(Penalty::Tikhonov { lambda: 2.0, prior: th.to_vec() }.value(&th), 0.0);
        assert_eq!(Penalty::Occam { lambda: 5.0 }.value(&[0.4; 4]), 0.0);
        assert_eq!(Penalty::Occam { lambda: 0.0 }.value(&th), 0.0);
        let t = Penalty::Tikhonov { lambda: 0.5, prior: vec![0.5; 4] }.value(&th);
        assert!((t - 0.5 * (0.04 + 0.01 + 0.09 + 0.16)).abs() < 1e-15);
        assert!(Penalty::Occam { lambda: -1.0 }.validate(4).is_err());
    }
}
