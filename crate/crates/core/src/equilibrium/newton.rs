//! Damped Newton iteration with a central-difference Jacobian.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: u32,
    pub jacobian_step: f64,
    pub restarts: u32,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tolerance: 1e-10,
            max_iterations: 200,
            jacobian_step: 1e-7,
            restarts: 8,
            jitter: 0.25,
            seed: 0x5eed,
        }
    }
}

pub(crate) struct NewtonOutcome {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: u32,
    pub converged: bool,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, r| m.max(r.abs()))
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|r| r * r).sum()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// One Newton run from `start`. `f` returns `None` outside its domain.
fn run<F>(f: &F, start: &[f64], opts: &NewtonOptions) -> NewtonOutcome
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = start.len();
    let mut x = start.to_vec();
    let Some(mut r) = f(&x) else {
        return NewtonOutcome { residuals: vec![f64::INFINITY; n], x, iterations: 0, converged: false };
    };
    let mut iterations = 0;
    while iterations < opts.max_iterations && max_abs(&r) > opts.tolerance {
        iterations += 1;
        let mut jac = vec![vec![0.0; n]; n];
        for j in 0..n {
            let h = opts.jacobian_step * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (Some(rp), Some(rm)) = (f(&xp), f(&xm)) else {
                return NewtonOutcome { x, residuals: r, iterations, converged: false };
            };
            for i in 0..n {
                jac[i][j] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let Some(step) = solve_linear(jac, r.iter().map(|v| -v).collect()) else {
            break;
        };
        // backtrack on the squared residual norm
        let base = sum_sq(&r);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(xi, si)| xi + lambda * si).collect();
            if let Some(rt) = f(&trial) {
                if sum_sq(&rt) < base {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((xn, rn)) => {
                x = xn;
                r = rn;
            }
            None => break,
        }
    }
    let converged = max_abs(&r) <= opts.tolerance;
    NewtonOutcome { x, residuals: r, iterations, converged }
}

/// Runs Newton from `start`; on failure restarts from jittered copies of it
/// and keeps the best iterate seen.
pub(crate) fn solve<F>(f: F, start: &[f64], opts: &NewtonOptions) -> NewtonOutcome
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut best = run(&f, start, opts);
    let mut total = best.iterations;
    let mut rng = rng::seeded(opts.seed);
    for _ in 0..opts.restarts {
        if best.converged {
            break;
        }
        let jittered: Vec<f64> = start
            .iter()
            .map(|v| v * (1.0 + opts.jitter * (2.0 * rng.random::<f64>() - 1.0)))
            .collect();
        let attempt = run(&f, &jittered, opts);
        total += attempt.iterations;
        if attempt.converged || max_abs(&attempt.residuals) < max_abs(&best.residuals) {
            best = attempt;
        }
    }
    best.iterations = total;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_small_nonlinear_system() {
        // x^2 + y^2 = 4, x y = 1
        let f = |v: &[f64]| Some(vec![v[0] * v[0] + v[1] * v[1] - 4.0, v[0] * v[1] - 1.0]);
        let out = solve(f, &[2.0, 0.3], &NewtonOptions::default());
        assert!(out.converged);
        assert!((out.x[0] * out.x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reports_failure_without_root() {
        let f = |v: &[f64]| Some(vec![v[0] * v[0] + 1.0]);
        let out = solve(f, &[1.0], &NewtonOptions { restarts: 2, ..Default::default() });
        assert!(!out.converged);
        assert!(out.residuals[0] >= 1.0);
    }

    #[test]
    fn linear_solver_detects_singularity() {
        assert!(solve_linear(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 1.0]).is_none());
    }
}
