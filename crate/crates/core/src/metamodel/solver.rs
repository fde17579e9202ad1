use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{metamodel_value_and_gradient, MetamodelProblem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Stop when `‖x − Π(x − ∇m)‖₂ ≤ tolerance · (1 + |m(x)|)`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-6,
            max_iterations: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome {
    pub point: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// The projected-gradient test was met before the iteration cap.
    pub converged: bool,
    /// `β₀ ≥ 0` and `δ > 0`, under which the subproblem is strictly convex.
    pub convex: bool,
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const MAX_STEP: f64 = 1e12;

fn projected_gradient_norm(problem: &MetamodelProblem, x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(problem.bounds.lower.iter().zip(&problem.bounds.upper))
        .map(|((&v, &gv), (&lo, &hi))| (v - (v - gv).clamp(lo, hi)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Minimises the metamodel over its box by projected gradient descent.
///
/// Each iteration proposes a Barzilai–Borwein step and backtracks along the
/// projection arc until the Armijo condition holds, so accepted objectives
/// never increase. Products with `P̃` and `P̃ᵀ` are the only matrix work,
/// which keeps an iteration linear in the number of stored entries.
pub fn solve_metamodel(
    problem: &MetamodelProblem,
    start: &[f64],
    settings: &SolverSettings,
) -> Result<SolveOutcome> {
    problem.validate()?;
    if !problem.bounds.contains(start, 1e-9) {
        return Err(Error::invalid("start point lies outside the bounds"));
    }
    let convex = problem.beta.scale >= 0.0 && problem.delta > 0.0;
    let mut x = problem.bounds.projected(start);
    let (mut f, mut g) = metamodel_value_and_gradient(&x, problem)?;
    check_finite(f, &g)?;

    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut step = if gmax > 0.0 { (1.0 / gmax).clamp(MIN_STEP, MAX_STEP) } else { 1.0 };

    for it in 0..settings.max_iterations {
        if projected_gradient_norm(problem, &x, &g) <= settings.tolerance * (1.0 + f.abs()) {
            return Ok(SolveOutcome {
                point: x,
                objective: f,
                iterations: it,
                converged: true,
                convex,
            });
        }

        let mut trial_step = step;
        let (x_new, f_new, g_new) = loop {
            let mut cand: Vec<f64> = x.iter().zip(&g).map(|(v, gv)| v - trial_step * gv).collect();
            problem.bounds.project(&mut cand);
            let decrease: f64 = g.iter().zip(cand.iter().zip(&x)).map(|(gv, (c, v))| gv * (c - v)).sum();
            let (fc, gc) = metamodel_value_and_gradient(&cand, problem)?;
            if fc.is_finite() && fc <= f + ARMIJO * decrease {
                break (cand, fc, gc);
            }
            trial_step *= 0.5;
            if trial_step < MIN_STEP * 1e-6 {
                // No representable descent left along the arc.
                let converged =
                    projected_gradient_norm(problem, &x, &g) <= settings.tolerance * (1.0 + f.abs());
                return Ok(SolveOutcome {
                    point: x,
                    objective: f,
                    iterations: it,
                    converged,
                    convex,
                });
            }
        };
        check_finite(f_new, &g_new)?;

        let mut ss = 0.0;
        let mut sy = 0.0;
        for k in 0..x.len() {
            let s = x_new[k] - x[k];
            ss += s * s;
            sy += s * (g_new[k] - g[k]);
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(MIN_STEP, MAX_STEP)
        } else {
            (trial_step * 2.0).min(MAX_STEP)
        };
        x = x_new;
        f = f_new;
        g = g_new;
    }

    let converged =
        projected_gradient_norm(problem, &x, &g) <= settings.tolerance * (1.0 + f.abs());
    Ok(SolveOutcome {
        point: x,
        objective: f,
        iterations: settings.max_iterations,
        converged,
        convex,
    })
}

fn check_finite(f: f64, g: &[f64]) -> Result<()> {
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("metamodel objective or gradient is not finite".into()));
    }
    Ok(())
}
