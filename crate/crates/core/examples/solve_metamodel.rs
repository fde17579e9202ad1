//! Builds one metamodel subproblem by hand and solves it over its box.
//!
//! ```bash
//! cargo run -p odcal --example solve_metamodel
//! ```

use odcal::metamodel::{metamodel_value, solve_metamodel, Beta, Bounds, MetamodelProblem, SolverSettings};
use odcal::network::AssignmentMatrix;

fn main() -> odcal::Result<()> {
    // Three measured roads, two OD pairs.
    let assignment =
        AssignmentMatrix::from_triplets(3, 2, vec![(0, 0, 1.0), (1, 0, 0.4), (1, 1, 0.6), (2, 1, 1.0)])?;
    let prior = vec![150.0, 150.0];
    let mut problem = MetamodelProblem {
        assignment,
        field_counts: vec![200.0, 140.0, 100.0],
        prior: prior.clone(),
        delta: 1.0,
        bounds: Bounds::around_prior(&prior),
        beta: Beta::physical(2),
    };

    let out = solve_metamodel(&problem, &prior, &SolverSettings::default())?;
    println!(
        "physical beta:  x = [{:.2}, {:.2}]  m = {:.3}  ({} iterations)",
        out.point[0], out.point[1], out.objective, out.iterations
    );

    // A fitted correction that penalises the first OD pair.
    problem.beta = Beta::from_slice(&[0.8, 10.0, 2.0, 0.0])?;
    let out = solve_metamodel(&problem, &prior, &SolverSettings::default())?;
    println!(
        "fitted beta:    x = [{:.2}, {:.2}]  m = {:.3}  convex = {}",
        out.point[0],
        out.point[1],
        metamodel_value(&out.point, &problem)?,
        out.convex
    );

    problem.bounds = Bounds::new(vec![0.0, 0.0], vec![120.0, 300.0])?;
    let out = solve_metamodel(&problem, &[100.0, 100.0], &SolverSettings::default())?;
    println!("tighter box:    x = [{:.2}, {:.2}]", out.point[0], out.point[1]);
    Ok(())
}
