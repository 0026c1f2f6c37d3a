use serde::{Deserialize, Serialize};

use crate::em_forward::{forward_transient, FrequencyGrid, SurveyGeometry, Transient};
use crate::synth_data::{denormalize_params, ParamRanges};
use crate::{Error, Result};

/// Vector-valued objective over the unit box; the scalar objective is the
/// squared norm of the residuals.
pub trait Residuals {
    fn dim(&self) -> usize;
    fn residuals(&mut self, theta: &[f64]) -> Result<Vec<f64>>;
}

pub(crate) fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// `sum_r |obs - pred|^2 / |obs|^2` over receivers.
pub fn transient_misfit(observed: &Transient, predicted: &Transient) -> Result<f64> {
    Ok(sum_sq(&relative_residuals(observed, predicted)?))
}

fn relative_residuals(observed: &Transient, predicted: &Transient) -> Result<Vec<f64>> {
    if observed.receivers() != predicted.receivers() {
        return Err(Error::Shape(format!(
            "{} observed traces, {} predicted",
            observed.receivers(),
            predicted.receivers()
        )));
    }
    let mut out = Vec::with_capacity(observed.receivers() * crate::em_forward::N_TIME);
    for (j, (o, p)) in observed.traces.iter().zip(&predicted.traces).enumerate() {
        let norm = sum_sq(o).sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateSignal { receiver: j });
        }
        out.extend(o.iter().zip(p).map(|(a, b)| (a - b) / norm));
    }
    Ok(out)
}

/// Regularization added to the data misfit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Penalty {
    #[default]
    None,
    /// `lambda * |theta - prior|^2`
    Tikhonov { lambda: f64, prior: Vec<f64> },
    /// `lambda * |R theta|^2` with `R` the first-difference operator.
    Occam { lambda: f64 },
}

impl Penalty {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Penalty::None => Ok(()),
            Penalty::Tikhonov { lambda, prior } => {
                if prior.len() != dim {
                    return Err(Error::Config(format!("prior has {} entries, expected {dim}", prior.len())));
                }
                check_lambda(*lambda)
            }
            Penalty::Occam { lambda } => check_lambda(*lambda),
        }
    }

    /// Extra residuals whose squared norm is the penalty.
    pub fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            Penalty::None => Vec::new(),
            Penalty::Tikhonov { lambda, prior } => {
                let s = lambda.sqrt();
                theta.iter().zip(prior).map(|(t, p)| s * (t - p)).collect()
            }
            Penalty::Occam { lambda } => {
                let s = lambda.sqrt();
                theta.windows(2).map(|w| s * (w[1] - w[0])).collect()
            }
        }
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        sum_sq(&self.residuals(theta))
    }
}

fn check_lambda(l: f64) -> Result<()> {
    if !(l >= 0.0 && l.is_finite()) {
        return Err(Error::Config(format!("penalty weight must be >= 0, got {l}")));
    }
    Ok(())
}

/// Everything the forward operator needs besides the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardSetup {
    pub geometry: SurveyGeometry,
    pub grid: FrequencyGrid,
    pub ranges: ParamRanges,
}

impl Default for ForwardSetup {
    fn default() -> Self {
        Self { geometry: SurveyGeometry::default(), grid: FrequencyGrid::paper64(), ranges: ParamRanges::default() }
    }
}

impl ForwardSetup {
    pub fn simulate(&self, theta: &[f64]) -> Result<Transient> {
        forward_transient(&denormalize_params(theta, &self.ranges)?, &self.geometry, &self.grid)
    }
}

/// Relative transient misfit of normalized parameters against observed data.
pub fn relative_misfit(theta: &[f64], observed: &Transient, setup: &ForwardSetup) -> Result<f64> {
    transient_misfit(observed, &setup.simulate(theta)?)
}

pub fn penalized_objective(theta: &[f64], observed: &Transient, setup: &ForwardSetup, penalty: &Penalty) -> Result<f64> {
    penalty.validate(theta.len())?;
    Ok(relative_misfit(theta, observed, setup)? + penalty.value(theta))
}

/// Inversion target: observed transients, forward setup and penalty.
/// Counts every forward-solver invocation.
#[derive(Clone, Debug)]
pub struct InverseProblem<'a> {
    pub observed: &'a Transient,
    pub setup: &'a ForwardSetup,
    pub penalty: Penalty,
    dim: usize,
    evals: usize,
}

impl<'a> InverseProblem<'a> {
    pub fn new(observed: &'a Transient, setup: &'a ForwardSetup, dim: usize, penalty: Penalty) -> Result<Self> {
        if dim != 4 && dim != 6 {
            return Err(Error::Config(format!("inversion needs 4 or 6 parameters, got {dim}")));
        }
        penalty.validate(dim)?;
        Ok(Self { observed, setup, penalty, dim, evals: 0 })
    }

    pub fn evals(&self) -> usize {
        self.evals
    }
}

impl Residuals for InverseProblem<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn residuals(&mut self, theta: &[f64]) -> Result<Vec<f64>> {
        self.evals += 1;
        let mut r = relative_residuals(self.observed, &self.setup.simulate(theta)?)?;
        r.extend(self.penalty.residuals(theta));
        Ok(r)
    }
}

/// Forward-difference step for coordinate `k`, pointing back into the box
/// at the upper edge.
pub(crate) fn fd_step(x: f64) -> f64 {
    let h = 1e-6 * x.abs().max(1.0);
    if x + h > 1.0 {
        -h
    } else {
        h
    }
}

/// Forward-difference residual Jacobian, `m` rows of `n` entries, using
/// `n` extra evaluations around the already known `r0 = r(theta)`.
pub fn fd_jacobian(problem: &mut dyn Residuals, theta: &[f64], r0: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = theta.len();
    let mut jac = vec![vec![0.0; n]; r0.len()];
    let mut x = theta.to_vec();
    for k in 0..n {
        let h = fd_step(theta[k]);
        x[k] = theta[k] + h;
        let r = problem.residuals(&x)?;
        if r.len() != r0.len() {
            return Err(Error::Shape("residual length changed between evaluations".into()));
        }
        x[k] = theta[k];
        for (row, (a, b)) in jac.iter_mut().zip(r.iter().zip(r0)) {
            row[k] = (a - b) / h;
        }
    }
    Ok(jac)
}
