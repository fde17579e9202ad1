use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metamodel::Bounds;
use crate::network::AssignmentMatrix;
use crate::simulator::estimate_assignment;

use super::{
    CalibrationHistory, CalibrationProblem, CalibratorConfig, CountSimulator, LamConfig, Method, Recorder,
};

/// Averaging weight of the MSA update at iteration `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MsaIndexing {
    /// `A^{t+1} = (1 − 1/t) A^t + (1/t) Â^{t+1}`: the first update discards
    /// the estimate from the prior and `A^{t+1}` is the mean of
    /// `Â², …, Â^{t+1}`.
    #[default]
    AsPrinted,
    /// `A^{t+1} = (1 − 1/(t+1)) A^t + (1/(t+1)) Â^{t+1}`: a running mean of
    /// every estimate including the prior's.
    Shifted,
}

/// One MSA step at iteration `t ≥ 1`.
pub fn msa_update(
    current: &AssignmentMatrix,
    estimate: &AssignmentMatrix,
    t: usize,
    indexing: MsaIndexing,
) -> Result<AssignmentMatrix> {
    if t == 0 {
        return Err(Error::invalid("MSA iterations start at t = 1"));
    }
    let w = match indexing {
        MsaIndexing::AsPrinted => 1.0 / t as f64,
        MsaIndexing::Shifted => 1.0 / (t as f64 + 1.0),
    };
    current.linear_combination(1.0 - w, estimate, w)
}

/// Projected gradient descent with a fixed learning rate on
/// `(1/|I|) ‖y − A x‖² + (δ/|Z|) ‖x − x̃‖²` over the box, starting at `start`.
pub fn solve_lam_subproblem(
    assignment: &AssignmentMatrix,
    field_counts: &[f64],
    prior: &[f64],
    delta: f64,
    bounds: &Bounds,
    start: &[f64],
    settings: &LamConfig,
) -> Result<Vec<f64>> {
    let nz = assignment.ncols();
    if field_counts.len() != assignment.nrows() || prior.len() != nz || start.len() != nz || bounds.len() != nz {
        return Err(Error::invalid("LAM subproblem dimensions disagree"));
    }
    let ni = field_counts.len().max(1) as f64;
    let mut x = bounds.projected(start);
    for _ in 0..settings.inner_gd_steps {
        let ax = assignment.mul_vec(&x);
        let resid: Vec<f64> = field_counts.iter().zip(&ax).map(|(y, a)| y - a).collect();
        let back = assignment.mul_transpose_vec(&resid);
        let grad: Vec<f64> = (0..nz)
            .map(|z| -2.0 / ni * back[z] + 2.0 * delta / nz as f64 * (x[z] - prior[z]))
            .collect();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("LAM gradient is not finite".into()));
        }
        let mut next: Vec<f64> = x.iter().zip(&grad).map(|(v, g)| v - settings.learning_rate * g).collect();
        bounds.project(&mut next);
        let moved = x
            .iter()
            .zip(&grad)
            .zip(bounds.lower.iter().zip(&bounds.upper))
            .map(|((v, g), (lo, hi))| (v - (v - g).clamp(*lo, *hi)).powi(2))
            .sum::<f64>()
            .sqrt();
        if moved <= settings.tolerance {
            break;
        }
        x = next;
    }
    Ok(x)
}

/// LAM baseline: an analytic assignment matrix re-estimated from every
/// simulation and smoothed by the method of successive averages.
///
/// The prior's simulation gives `A¹`. Iteration `t` solves the analytic
/// problem with `A^t`, simulates the solution, and folds its estimate into
/// `A^{t+1}`. One simulation call per iteration.
pub fn run_lam(
    problem: &CalibrationProblem,
    config: &CalibratorConfig,
    sim: &mut dyn CountSimulator,
) -> Result<CalibrationHistory> {
    config.validate()?;
    let bounds = config.resolved_bounds(&problem.prior)?;
    let network = problem.network;

    let mut rec = Recorder::new(Method::Lam, problem, config.delta);
    let mut x = bounds.projected(&problem.prior);
    let res = sim.simulate(&x)?;
    let f0 = rec.objective(&x, &res)?;
    rec.push(0, &x, &x, f0, &res.measured_counts, sim.calls())?;
    let mut a = estimate_assignment(&res, network)?.matrix;

    for t in 1..=config.max_iterations {
        let outcome = (|| -> Result<()> {
            x = solve_lam_subproblem(
                &a,
                &problem.field_counts,
                &problem.prior,
                config.delta,
                &bounds,
                &x,
                &config.lam,
            )?;
            let res = sim.simulate(&x)?;
            let f = rec.objective(&x, &res)?;
            let estimate = estimate_assignment(&res, network)?.matrix;
            a = msa_update(&a, &estimate, t, config.lam.msa)?;
            rec.push(t, &x, &x, f, &res.measured_counts, sim.calls())
        })();
        if let Err(e) = outcome {
            return Ok(rec.finish(Some(e)));
        }
    }
    Ok(rec.finish(None))
}
