use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{OptResult, OptimError};
use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LMConfig {
    pub max_iterations: usize,
    /// Stop once the sum of squares falls to this value.
    pub residual_tolerance: f64,
    /// Stop once the infinity norm of `J^T r` falls to this value.
    pub gradient_tolerance: f64,
    /// Stop once a step is shorter than `step_tolerance * (1 + |x|)`.
    pub step_tolerance: f64,
    pub initial_damping: f64,
    /// Damping multiplier after a rejected step.
    pub damping_up: f64,
    /// Damping divisor after an accepted step.
    pub damping_down: f64,
}

impl Default for LMConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            residual_tolerance: 1e-24,
            gradient_tolerance: 1e-14,
            step_tolerance: 1e-14,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
        }
    }
}

impl LMConfig {
    fn validate(&self) -> Result<(), OptimError> {
        if self.max_iterations < 1 {
            return Err(OptimError::InvalidConfig("max_iterations must be >= 1"));
        }
        let positive = [
            self.residual_tolerance,
            self.gradient_tolerance,
            self.step_tolerance,
            self.initial_damping,
            self.damping_up,
            self.damping_down,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(OptimError::InvalidConfig("LM tolerances and damping must be positive"));
        }
        Ok(())
    }
}

/// Forward-difference Jacobian with step `max(1e-7, 1e-7 |x_i|)`.
///
/// Returns `None` if any perturbed evaluation is rejected or non-finite.
pub fn forward_difference_jacobian<F>(residual_fn: &F, x: &[f64], r0: &[f64]) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let m = r0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = (1e-7 * x[j].abs()).max(1e-7);
        xp[j] = x[j] + h;
        let step = xp[j] - x[j];
        let rp = residual_fn(&xp)?;
        if rp.len() != m {
            return None;
        }
        for i in 0..m {
            let d = (rp[i] - r0[i]) / step;
            if !d.is_finite() {
                return None;
            }
            jac[(i, j)] = d;
        }
        xp[j] = x[j];
    }
    Some(jac)
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn evaluate<F>(residual_fn: &F, x: &[f64]) -> Option<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let r = residual_fn(x)?;
    let cost = sum_sq(&r);
    cost.is_finite().then_some((r, cost))
}

/// Minimizes `sum(r(x)^2)` with a forward-difference Jacobian.
///
/// `residual_fn` returns `None` for parameter vectors it cannot evaluate
/// (for example a camera pose with a marker behind it); such trial steps are
/// rejected like steps that increase the cost.
pub fn levenberg_marquardt<F>(residual_fn: F, x0: &[f64], cfg: &LMConfig) -> Result<OptResult, OptimError>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let jac = |x: &[f64], r: &[f64]| forward_difference_jacobian(&residual_fn, x, r);
    lm_core(&residual_fn, jac, x0, cfg)
}

/// Same as [`levenberg_marquardt`] with a caller-supplied Jacobian.
pub fn levenberg_marquardt_with_jacobian<F, J>(
    residual_fn: F,
    jacobian_fn: J,
    x0: &[f64],
    cfg: &LMConfig,
) -> Result<OptResult, OptimError>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
    J: Fn(&[f64]) -> Option<DMatrix<f64>>,
{
    lm_core(&residual_fn, |x: &[f64], _r: &[f64]| jacobian_fn(x), x0, cfg)
}

fn lm_core<F, J>(residual_fn: &F, jacobian_fn: J, x0: &[f64], cfg: &LMConfig) -> Result<OptResult, OptimError>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
    J: Fn(&[f64], &[f64]) -> Option<DMatrix<f64>>,
{
    cfg.validate()?;
    let n = x0.len();
    let (mut r, mut cost) = evaluate(residual_fn, x0).ok_or(OptimError::NonFiniteStart)?;
    if r.len() < n {
        return Err(OptimError::Underdetermined {
            residuals: r.len(),
            parameters: n,
        });
    }
    let mut x = x0.to_vec();
    let mut lambda = cfg.initial_damping;
    let mut trace = vec![cost];
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < cfg.max_iterations {
        if cost <= cfg.residual_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let Some(jac) = jacobian_fn(&x, &r) else {
            // Cannot linearize here; nothing more to do from this point.
            break;
        };
        let rv = DVector::from_column_slice(&r);
        let jt = jac.transpose();
        let gradient = &jt * &rv;
        if gradient.amax() <= cfg.gradient_tolerance {
            converged = true;
            break;
        }
        let normal = &jt * &jac;
        let x_norm = DVector::from_column_slice(&x).norm();

        // Retry with growing damping until a step lowers the cost.
        loop {
            let mut damped = normal.clone();
            for i in 0..n {
                let d = normal[(i, i)].max(1e-12);
                damped[(i, i)] += lambda * d;
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&gradient)));
            let Some(step) = step else {
                lambda *= cfg.damping_up;
                if lambda > 1e32 {
                    break 'outer;
                }
                continue;
            };
            if step.norm() <= cfg.step_tolerance * (1.0 + x_norm) {
                converged = true;
                break 'outer;
            }
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            match evaluate(residual_fn, &trial) {
                Some((r_new, cost_new)) if cost_new < cost => {
                    x = trial;
                    r = r_new;
                    cost = cost_new;
                    lambda = (lambda / cfg.damping_down).max(1e-300);
                    break;
                }
                _ => {
                    lambda *= cfg.damping_up;
                    if lambda > 1e32 {
                        // No damping makes progress: the current point is a
                        // numerical minimum.
                        converged = true;
                        break 'outer;
                    }
                }
            }
        }
        trace.push(cost);
    }
    if trace.last() != Some(&cost) {
        trace.push(cost);
    }
    Ok(OptResult {
        solution: x,
        final_objective: cost,
        iterations,
        converged,
        trace,
    })
}
