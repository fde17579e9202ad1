//! Runs the stochastic simulator and compares its replication mean with the
//! analytic expectation.
//!
//! ```bash
//! cargo run -p odcal --example simulate_counts
//! ```

use odcal::network::{build_assignment_matrix, generate_synthetic_network, predict_counts, ScenarioSpec};
use odcal::route_choice::{route_probabilities, ChoiceParams, TimeSource, TravelTimeTable};
use odcal::simulator::{estimate_assignment, simulate, SimConfig};

fn main() -> odcal::Result<()> {
    let spec = ScenarioSpec {
        routes_per_od: 3,
        measured_fraction: 0.2,
        ..ScenarioSpec::default()
    };
    let net = generate_synthetic_network(&spec, 3)?;
    let demand = net.prior();
    let params = ChoiceParams::default();
    let config = SimConfig {
        replications: 50,
        seed: 11,
        ..SimConfig::default()
    };
    let result = simulate(&net, &demand, &config, &params)?;

    // Expected counts under the probabilities the simulator converged to.
    let times = TravelTimeTable::from_aligned(&net, result.converged_route_times.clone(), TimeSource::Simulator)?;
    let probs = route_probabilities(&net, &times, &params)?;
    let expected = predict_counts(&build_assignment_matrix(&net, &probs)?, &demand)?;

    println!("edge   mean  expected");
    for ((id, m), e) in net.measured_edges().iter().zip(&result.measured_counts).zip(&expected).take(10) {
        println!("{id:>4} {m:>7.1} {e:>9.1}");
    }

    let est = estimate_assignment(&result, &net)?;
    println!("estimated assignment matrix: {} nonzeros", est.matrix.nnz());

    let path = std::env::temp_dir().join("odcal_replications.csv");
    odcal::io::write_replication_counts(&path, &net, &result)?;
    println!("wrote {}", path.display());
    Ok(())
}
