use serde::{Deserialize, Serialize};

use super::{OptResult, OptimError};
use crate::prelude::*;

/// Nelder-Mead settings. Coefficients follow the Lagarias et al. naming:
/// reflection `rho`, expansion `chi`, contraction `gamma`, shrink `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NMConfig {
    pub max_iterations: usize,
    /// Converged once every vertex lies within this infinity-norm distance of
    /// the best vertex...
    pub simplex_tolerance: f64,
    /// ...and every vertex value is within this of the best value.
    pub objective_tolerance: f64,
    /// Offset of vertex `i + 1` from `x0` along coordinate `i`.
    pub initial_step: Vec<f64>,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl NMConfig {
    pub fn with_steps(initial_step: Vec<f64>) -> Self {
        Self {
            max_iterations: 20_000,
            simplex_tolerance: 1e-10,
            objective_tolerance: 1e-12,
            initial_step,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }

    fn validate(&self, n: usize) -> Result<(), OptimError> {
        if self.max_iterations < 1 {
            return Err(OptimError::InvalidConfig("max_iterations must be >= 1"));
        }
        if self.initial_step.len() != n {
            return Err(OptimError::InvalidConfig("initial_step length must match x0"));
        }
        if self.initial_step.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return Err(OptimError::InvalidConfig("initial steps must be finite and non-zero"));
        }
        if !(self.reflection > 0.0
            && self.expansion > 1.0
            && self.expansion > self.reflection
            && self.contraction > 0.0
            && self.contraction < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0)
        {
            return Err(OptimError::InvalidConfig("Nelder-Mead coefficients out of range"));
        }
        if !(self.simplex_tolerance >= 0.0 && self.objective_tolerance >= 0.0) {
            return Err(OptimError::InvalidConfig("tolerances must be non-negative"));
        }
        Ok(())
    }
}

struct Vertex {
    x: Vec<f64>,
    f: f64,
}

fn eval<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn affine(c: &[f64], toward: &[f64], t: f64) -> Vec<f64> {
    // c + t * (toward - c)
    c.iter().zip(toward).map(|(c, p)| c + t * (p - c)).collect()
}

/// Minimizes `objective` from `x0`.
pub fn nelder_mead<F>(objective: F, x0: &[f64], cfg: &NMConfig) -> Result<OptResult, OptimError>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    cfg.validate(n)?;

    let mut simplex = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut x = x0.to_vec();
        if i > 0 {
            x[i - 1] += cfg.initial_step[i - 1];
        }
        let f = objective(&x);
        if !f.is_finite() {
            return Err(if i == 0 {
                OptimError::NonFiniteStart
            } else {
                OptimError::NonFiniteSimplex { vertex: i }
            });
        }
        simplex.push(Vertex { x, f });
    }

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        // Stable sort keeps older vertices ahead on ties.
        simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
        trace.push(simplex[0].f);

        let best = &simplex[0];
        let f_spread = simplex.iter().map(|v| v.f - best.f).fold(0.0, f64::max);
        let x_spread = simplex
            .iter()
            .flat_map(|v| v.x.iter().zip(&best.x).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if x_spread <= cfg.simplex_tolerance && f_spread <= cfg.objective_tolerance {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iterations {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(&v.x) {
                *c += x;
            }
        }
        for c in &mut centroid {
            *c /= n as f64;
        }

        let worst_f = simplex[n].f;
        let second_worst_f = simplex[n - 1].f;
        let best_f = simplex[0].f;

        let xr = affine(&centroid, &simplex[n].x, -cfg.reflection);
        let fr = eval(&objective, &xr);

        let mut replacement = None;
        if fr < best_f {
            let xe = affine(&centroid, &simplex[n].x, -cfg.reflection * cfg.expansion);
            let fe = eval(&objective, &xe);
            replacement = Some(if fe < fr { Vertex { x: xe, f: fe } } else { Vertex { x: xr, f: fr } });
        } else if fr < second_worst_f {
            replacement = Some(Vertex { x: xr, f: fr });
        } else if fr < worst_f {
            let xc = affine(&centroid, &xr, cfg.contraction);
            let fc = eval(&objective, &xc);
            if fc <= fr {
                replacement = Some(Vertex { x: xc, f: fc });
            }
        } else {
            let xcc = affine(&centroid, &simplex[n].x, cfg.contraction);
            let fcc = eval(&objective, &xcc);
            if fcc < worst_f {
                replacement = Some(Vertex { x: xcc, f: fcc });
            }
        }

        match replacement {
            Some(v) => simplex[n] = v,
            None => {
                let (head, tail) = simplex.split_at_mut(1);
                let best_x = &head[0].x;
                for v in tail.iter_mut() {
                    v.x = affine(best_x, &v.x, cfg.shrink);
                    v.f = eval(&objective, &v.x);
                }
            }
        }
    }

    let best = simplex.swap_remove(0);
    Ok(OptResult {
        solution: best.x,
        final_objective: best.f,
        iterations,
        converged,
        trace,
    })
}
