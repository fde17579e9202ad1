//! Calibrates one generated benchmark instance with the linear metamodel and
//! writes the report artifacts to a temporary directory.
//!
//! ```bash
//! cargo run -p odcal --example calibrate_metamodel
//! ```

use odcal::calibrate::{CalibratorConfig, Method};
use odcal::experiment::{run_method, GenerateSpec, SyntheticExperiment};
use odcal::report::{export_best_od, export_convergence, export_history, export_scatter, FitReport};

fn main() -> odcal::Result<()> {
    let spec = GenerateSpec::benchmark();
    let exp = SyntheticExperiment::generate(&spec, 2)?;
    let problem = exp.problem()?;
    let config = CalibratorConfig::default();
    let history = run_method(
        Method::LinearMetamodel,
        &problem,
        &config,
        &exp.travel_times,
        &spec.choice,
        &spec.sim,
    )?;

    for r in &history.records {
        println!(
            "iter {:>2}  calls {:>2}  objective {:>10.1}  nRMSE {:>5.1}%",
            r.iteration, r.sim_calls, r.objective, r.nrmse
        );
    }
    let best = history.best();
    let err: f64 = best.point.iter().zip(&exp.truth).map(|(x, t)| (x - t).abs()).sum::<f64>()
        / exp.truth.len() as f64;
    let prior_err: f64 = exp.prior.iter().zip(&exp.truth).map(|(x, t)| (x - t).abs()).sum::<f64>()
        / exp.truth.len() as f64;
    println!("mean |x - truth|: prior {prior_err:.1}, best {err:.1} veh/h");

    let dir = std::env::temp_dir().join("odcal_calibration");
    std::fs::create_dir_all(&dir).map_err(|e| odcal::Error::Io { path: dir.clone(), source: e })?;
    export_history(&history, dir.join("history.csv"))?;
    export_best_od(&history, dir.join("best_od.csv"))?;
    export_convergence(std::slice::from_ref(&history), dir.join("convergence.csv"), dir.join("convergence.svg"))?;
    let report = FitReport::new(&exp.network, &exp.field_counts, &best.counts, &best.point, &exp.prior)?;
    export_scatter(&report, dir.join("scatter.csv"), dir.join("scatter.svg"))?;
    println!("wrote report files to {}", dir.display());
    Ok(())
}
