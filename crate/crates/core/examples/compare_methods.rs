//! Runs the three calibrators on ten generated benchmark instances and prints
//! how far each one brings the nRMSE down from the prior.
//!
//! ```bash
//! cargo run -p odcal --example compare_methods --release
//! ```

use std::time::Instant;

use odcal::calibrate::{CalibratorConfig, Method};
use odcal::experiment::{run_method, GenerateSpec, SyntheticExperiment};
use odcal::simulator::SimConfig;

fn main() -> odcal::Result<()> {
    let spec = GenerateSpec::benchmark();
    let started = Instant::now();
    println!("seed  |Z|  |I|  prior%   lm%  spsa%   lam%   lm/prior  lm<=spsa");
    for seed in 0..10u64 {
        let exp = SyntheticExperiment::generate(&spec, seed)?;
        let problem = exp.problem()?;
        let config = CalibratorConfig {
            seed,
            ..CalibratorConfig::default()
        };
        let sim = SimConfig { seed, ..spec.sim.clone() };
        let mut runs = Vec::new();
        for method in Method::ALL {
            runs.push(run_method(method, &problem, &config, &exp.travel_times, &spec.choice, &sim)?);
        }
        let (lm, spsa, lam) = (&runs[0], &runs[1], &runs[2]);
        let initial = lm.initial().nrmse;
        println!(
            "{seed:>4} {:>4} {:>4} {initial:>7.1} {:>6.1} {:>6.1} {:>6.1} {:>10.2} {:>9}",
            exp.network.num_ods(),
            exp.network.num_measured(),
            lm.best().nrmse,
            spsa.best().nrmse,
            lam.best().nrmse,
            lm.best().nrmse / initial,
            lm.best_objective() <= spsa.best_objective(),
        );
    }
    println!("elapsed {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}
