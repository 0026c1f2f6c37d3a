use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::objective::{fd_jacobian, sum_sq, Residuals};
use crate::{Error, Result};

const MAX_DAMPING: f64 = 1e12;
const INITIAL_DAMPING: f64 = 1e-3;
const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    FtolReached,
    XtolReached,
    MaxEvals,
    /// LM damping grew past its ceiling without finding a decrease.
    Stalled,
    LineSearchFailed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRules {
    pub ftol: f64,
    pub xtol: f64,
    pub max_evals: usize,
}

impl StopRules {
    pub fn validate(&self) -> Result<()> {
        if !(self.ftol > 0.0 && self.xtol > 0.0) || self.max_evals == 0 {
            return Err(Error::Config("tolerances and evaluation budget must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one local solve from one start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSolve {
    pub start: Vec<f64>,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub evals: usize,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Objective after every accepted iterate, starting with the start point.
    pub history: Vec<f64>,
}

/// Counts evaluations made through it.
struct Counted<'a> {
    inner: &'a mut dyn Residuals,
    evals: usize,
}

impl Residuals for Counted<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn residuals(&mut self, theta: &[f64]) -> Result<Vec<f64>> {
        self.evals += 1;
        let r = self.inner.residuals(theta)?;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: format!("residuals at {theta:?}") });
        }
        Ok(r)
    }
}

pub(crate) fn project(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

fn norm(x: &[f64]) -> f64 {
    sum_sq(x).sqrt()
}

/// Cholesky solve of a small symmetric positive definite system.
fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

fn xtol_met(step: &[f64], x: &[f64], xtol: f64) -> bool {
    norm(step) <= xtol * (norm(x) + xtol)
}

/// Levenberg-Marquardt on the residual vector with forward-difference
/// Jacobians. Damping is Marquardt-scaled, multiplied by 10 on rejection and
/// divided by 10 on acceptance; trial points are projected onto the unit box.
pub fn lm_solve(problem: &mut dyn Residuals, start: &[f64], rules: &StopRules) -> Result<LocalSolve> {
    rules.validate()?;
    let n = problem.dim();
    if start.len() != n {
        return Err(Error::Shape(format!("start has {} entries, expected {n}", start.len())));
    }
    let mut p = Counted { inner: problem, evals: 0 };
    let mut x = start.to_vec();
    project(&mut x);
    let mut r = p.residuals(&x)?;
    let mut f = sum_sq(&r);
    let mut history = vec![f];
    let mut mu = INITIAL_DAMPING;
    let mut iterations = 0;
    let status = 'outer: loop {
        if p.evals + n > rules.max_evals {
            break SolveStatus::MaxEvals;
        }
        let jac = fd_jacobian(&mut p, &x, &r)?;
        let mut a = vec![vec![0.0; n]; n];
        let mut g = vec![0.0; n];
        for (row, ri) in jac.iter().zip(&r) {
            for i in 0..n {
                g[i] += row[i] * ri;
                for j in 0..n {
                    a[i][j] += row[i] * row[j];
                }
            }
        }
        iterations += 1;
        loop {
            let mut damped = a.clone();
            for i in 0..n {
                damped[i][i] += mu * a[i][i].max(1e-12);
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let Some(delta) = solve_spd(&damped, &neg_g) else {
                mu *= 10.0;
                if mu > MAX_DAMPING {
                    break 'outer SolveStatus::Stalled;
                }
                continue;
            };
            let mut trial: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
            project(&mut trial);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if xtol_met(&step, &x, rules.xtol) {
                break 'outer SolveStatus::XtolReached;
            }
            if p.evals >= rules.max_evals {
                break 'outer SolveStatus::MaxEvals;
            }
            let rt = p.residuals(&trial)?;
            let ft = sum_sq(&rt);
            if ft < f {
                let reduction = f - ft;
                x = trial;
                r = rt;
                f = ft;
                history.push(f);
                mu = (mu / 10.0).max(1e-15);
                if reduction <= rules.ftol * (f + reduction) {
                    break 'outer SolveStatus::FtolReached;
                }
                break;
            }
            mu *= 10.0;
            if mu > MAX_DAMPING {
                break 'outer SolveStatus::Stalled;
            }
        }
    };
    Ok(LocalSolve { start: start.to_vec(), theta: x, objective: f, evals: p.evals, iterations, status, history })
}

/// Central-difference gradient of the scalar objective, one-sided at the
/// box faces.
fn fd_gradient(p: &mut Counted, x: &[f64], f0: f64) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut xt = x.to_vec();
    for k in 0..x.len() {
        let h = 1e-6 * x[k].abs().max(1.0);
        let up = x[k] + h <= 1.0;
        let down = x[k] - h >= 0.0;
        let eval = |p: &mut Counted, xt: &mut Vec<f64>, v: f64| -> Result<f64> {
            xt[k] = v;
            let f = sum_sq(&p.residuals(xt)?);
            xt[k] = x[k];
            Ok(f)
        };
        g[k] = match (up, down) {
            (true, true) => (eval(p, &mut xt, x[k] + h)? - eval(p, &mut xt, x[k] - h)?) / (2.0 * h),
            (true, false) => (eval(p, &mut xt, x[k] + h)? - f0) / h,
            _ => (f0 - eval(p, &mut xt, x[k] - h)?) / h,
        };
    }
    Ok(g)
}

/// Coordinates pinned at a face with the gradient pushing outward.
fn active_set(x: &[f64], g: &[f64]) -> Vec<bool> {
    x.iter().zip(g).map(|(&xi, &gi)| (xi <= 0.0 && gi > 0.0) || (xi >= 1.0 && gi < 0.0)).collect()
}

/// Projected limited-memory BFGS with a backtracking Armijo search along
/// the projection arc.
pub fn lbfgs_box_solve(problem: &mut dyn Residuals, start: &[f64], rules: &StopRules) -> Result<LocalSolve> {
    rules.validate()?;
    let n = problem.dim();
    if start.len() != n {
        return Err(Error::Shape(format!("start has {} entries, expected {n}", start.len())));
    }
    let mut p = Counted { inner: problem, evals: 0 };
    let mut x = start.to_vec();
    project(&mut x);
    let mut f = sum_sq(&p.residuals(&x)?);
    let mut g = fd_gradient(&mut p, &x, f)?;
    let mut history = vec![f];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(LBFGS_MEMORY);
    let mut iterations = 0;
    let status = loop {
        let active = active_set(&x, &g);
        let free_g: Vec<f64> = g.iter().zip(&active).map(|(&gi, &a)| if a { 0.0 } else { gi }).collect();
        if norm(&free_g) == 0.0 {
            break SolveStatus::XtolReached;
        }
        // Two-loop recursion on the free coordinates.
        let mut q = free_g.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * s.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = memory.back().map_or(1.0 / norm(&free_g).max(1.0), |(s, y, _)| {
            s.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sum_sq(y)
        });
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
            let b = rho * y.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().zip(&active).map(|(&v, &a)| if a { 0.0 } else { -v }).collect();
        if d.iter().zip(&free_g).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
            memory.clear();
            d = free_g.iter().map(|v| -v / norm(&free_g).max(1.0)).collect();
        }
        iterations += 1;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            if p.evals >= rules.max_evals {
                break;
            }
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            project(&mut trial);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
            if norm(&step) == 0.0 {
                break;
            }
            let ft = sum_sq(&p.residuals(&trial)?);
            if ft <= f + ARMIJO_C1 * decrease && ft < f {
                accepted = Some((trial, step, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, step, ft)) = accepted else {
            break if p.evals >= rules.max_evals { SolveStatus::MaxEvals } else { SolveStatus::LineSearchFailed };
        };
        let reduction = f - ft;
        let xtol = xtol_met(&step, &x, rules.xtol);
        x = trial;
        f = ft;
        history.push(f);
        if reduction <= rules.ftol * f.abs().max(f + reduction).max(1e-300) {
            break SolveStatus::FtolReached;
        }
        if xtol {
            break SolveStatus::XtolReached;
        }
        if p.evals + 2 * n > rules.max_evals {
            break SolveStatus::MaxEvals;
        }
        let g_new = fd_gradient(&mut p, &x, f)?;
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = step.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm(&step) * norm(&y) {
            if memory.len() == LBFGS_MEMORY {
                memory.pop_front();
            }
            memory.push_back((step, y, 1.0 / sy));
        }
        g = g_new;
    };
    Ok(LocalSolve { start: start.to_vec(), theta: x, objective: f, evals: p.evals, iterations, status, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Residuals `a_i (x_i - c_i)` plus optional coupling.
    struct Quadratic {
        a: Vec<f64>,
        c: Vec<f64>,
    }

    impl Residuals for Quadratic {
        fn dim(&self) -> usize {
            self.a.len()
        }
        fn residuals(&mut self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(x.iter().zip(&self.a).zip(&self.c).map(|((x, a), c)| a * (x - c)).collect())
        }
    }

    /// Rosenbrock valley on `u = 4 theta - 2`, minimum at `theta = (0.75, 0.75)`.
    struct Rosenbrock;

    impl Residuals for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn residuals(&mut self, x: &[f64]) -> Result<Vec<f64>> {
            let (u, v) = (4.0 * x[0] - 2.0, 4.0 * x[1] - 2.0);
            Ok(vec![10.0 * (v - u * u), 1.0 - u])
        }
    }

    fn tight() -> StopRules {
        StopRules { ftol: 1e-14, xtol: 1e-12, max_evals: 5000 }
    }

    #[test]
    fn fd_jacobian_matches_analytic() {
        let mut q = Quadratic { a: vec![1.0, 2.0, 3.0], c: vec![0.1, 0.5, 0.9] };
        let x = [0.3, 0.4, 1.0];
        let r0 = q.residuals(&x).unwrap();
        let jac = fd_jacobian(&mut q, &x, &r0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let exact = if i == j { q.a[i] } else { 0.0 };
                assert!((jac[i][j] - exact).abs() <= 1e-4);
            }
        }
        let mut r = Rosenbrock;
        let x = [0.3, 0.6];
        let r0 = r.residuals(&x).unwrap();
        let jac = fd_jacobian(&mut r, &x, &r0).unwrap();
        let u = 4.0 * x[0] - 2.0;
        let exact = [[-80.0 * u, 40.0], [-4.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((jac[i][j] - exact[i][j]).abs() <= 1e-4 * (1.0 + exact[i][j].abs()));
            }
        }
    }

    #[test]
    fn lm_reaches_rosenbrock_minimum_inside_box() {
        let s = lm_solve(&mut Rosenbrock, &[0.2, 0.9], &tight()).unwrap();
        assert!((s.theta[0] - 0.75).abs() < 1e-6 && (s.theta[1] - 0.75).abs() < 1e-6, "{s:?}");
        assert!(s.history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn lm_projects_onto_box() {
        let mut q = Quadratic { a: vec![1.0, 1.0], c: vec![1.7, -0.4] };
        let s = lm_solve(&mut q, &[0.5, 0.5], &tight()).unwrap();
        assert!(s.theta.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((s.theta[0] - 1.0).abs() < 1e-9 && s.theta[1].abs() < 1e-9);
    }

    #[test]
    fn lbfgs_quadratic_optimum() {
        let mut q = Quadratic { a: vec![1.0, 3.0, 0.5, 2.0], c: vec![0.2, 0.7, 0.45, 0.6] };
        let s = lbfgs_box_solve(&mut q, &[0.9, 0.1, 0.0, 1.0], &tight()).unwrap();
        for (x, c) in s.theta.iter().zip(&q.c) {
            assert!((x - c).abs() < 1e-8, "{s:?}");
        }
        assert!(s.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn lbfgs_leaves_corner_inward() {
        let mut q = Quadratic { a: vec![1.0; 3], c: vec![0.5; 3] };
        let rules = StopRules { max_evals: 10, ..tight() };
        let s = lbfgs_box_solve(&mut q, &[0.0; 3], &rules).unwrap();
        assert!(s.theta.iter().all(|&v| v > 0.0 && v < 1.0), "{s:?}");
    }

    #[test]
    fn lbfgs_stops_at_active_bound() {
        let mut q = Quadratic { a: vec![1.0, 1.0], c: vec![-0.5, 0.3] };
        let s = lbfgs_box_solve(&mut q, &[0.6, 0.6], &tight()).unwrap();
        assert!(s.theta[0].abs() < 1e-12 && (s.theta[1] - 0.3).abs() < 1e-8, "{s:?}");
    }

    #[test]
    fn eval_budget_is_respected() {
        let rules = StopRules { ftol: 1e-15, xtol: 1e-15, max_evals: 25 };
        let s = lm_solve(&mut Rosenbrock, &[0.0, 1.0], &rules).unwrap();
        assert!(s.evals <= 25);
        let s = lbfgs_box_solve(&mut Rosenbrock, &[0.0, 1.0], &rules).unwrap();
        assert!(s.evals <= 25);
    }
}
