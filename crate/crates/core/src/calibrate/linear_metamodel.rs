use crate::error::Result;
use crate::metamodel::{fit_beta, solve_metamodel, Beta, MetamodelProblem, Observation};
use crate::network::build_assignment_matrix;
use crate::route_choice::{route_probabilities, ChoiceParams, TravelTimeTable};

use super::{CalibrationHistory, CalibrationProblem, CalibratorConfig, CountSimulator, Method, Recorder};

/// Metamodel calibration.
///
/// `P̃` is built once from the exogenous travel times. The prior is
/// simulated first; iteration `k` then fits β to every observation so far
/// (the physical β `(1, 0, …)` on the first iteration), minimises the
/// metamodel from the best point found so far, and simulates the result.
/// One simulation call per iteration.
///
/// Failures after the initial evaluation end the run early with the partial
/// history and `aborted` set.
pub fn run_linear_metamodel(
    problem: &CalibrationProblem,
    config: &CalibratorConfig,
    times: &TravelTimeTable,
    params: &ChoiceParams,
    sim: &mut dyn CountSimulator,
) -> Result<CalibrationHistory> {
    config.validate()?;
    let bounds = config.resolved_bounds(&problem.prior)?;
    let probabilities = route_probabilities(problem.network, times, params)?;
    let assignment = build_assignment_matrix(problem.network, &probabilities)?;
    let nz = problem.network.num_ods();
    let mut meta = MetamodelProblem {
        assignment,
        field_counts: problem.field_counts.clone(),
        prior: problem.prior.clone(),
        delta: config.delta,
        bounds: bounds.clone(),
        beta: Beta::physical(nz),
    };
    meta.validate()?;

    let mut rec = Recorder::new(Method::LinearMetamodel, problem, config.delta);
    let x0 = bounds.projected(&problem.prior);
    let res = sim.simulate(&x0)?;
    let f0 = rec.objective(&x0, &res)?;
    rec.push(0, &x0, &x0, f0, &res.measured_counts, sim.calls())?;
    let mut observations = vec![Observation {
        point: x0,
        objective_estimate: f0,
    }];

    let mut step = |k: usize, rec: &mut Recorder, observations: &mut Vec<Observation>| -> Result<()> {
        let current = rec.best_point().to_vec();
        meta.beta = if k == 1 {
            Beta::physical(nz)
        } else {
            fit_beta(observations, &current, &meta, &config.metamodel.fit)?
        };
        let out = solve_metamodel(&meta, &current, &config.metamodel.solver)?;
        let res = sim.simulate(&out.point)?;
        let f = rec.objective(&out.point, &res)?;
        rec.push(k, &out.point, &out.point, f, &res.measured_counts, sim.calls())?;
        observations.push(Observation {
            point: out.point,
            objective_estimate: f,
        });
        Ok(())
    };

    for k in 1..=config.max_iterations {
        if let Err(e) = step(k, &mut rec, &mut observations) {
            return Ok(rec.finish(Some(e)));
        }
    }
    Ok(rec.finish(None))
}
