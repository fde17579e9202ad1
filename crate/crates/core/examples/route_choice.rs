//! Logit route probabilities and the assignment matrix they induce.
//!
//! ```bash
//! cargo run -p odcal --example route_choice
//! ```

use odcal::network::{build_assignment_matrix, generate_synthetic_network, predict_counts, ScenarioSpec};
use odcal::route_choice::{get_travel_times, route_probabilities, ChoiceParams, TravelTimeProvider};

fn main() -> odcal::Result<()> {
    let spec = ScenarioSpec {
        nodes: 16,
        edges: 40,
        od_pairs: 4,
        routes_per_od: 3,
        measured_fraction: 0.4,
        ..ScenarioSpec::default()
    };
    let net = generate_synthetic_network(&spec, 1)?;
    let times = get_travel_times(&TravelTimeProvider::FreeFlow, &net)?;

    for theta in [0.0, -0.1, -1.0] {
        let params = ChoiceParams::per_minute(theta);
        let probs = route_probabilities(&net, &times, &params)?;
        let shares: Vec<String> = net
            .routes_of_od(0)
            .iter()
            .map(|&r| format!("{:.3} ({:.0} s)", probs.as_slice()[r], times.as_slice()[r]))
            .collect();
        println!("theta {theta:>5}/min  OD 1: {}", shares.join(", "));
    }

    let probs = route_probabilities(&net, &times, &ChoiceParams::default())?;
    let p = build_assignment_matrix(&net, &probs)?;
    println!("assignment matrix: {} x {}, {} nonzeros", p.nrows(), p.ncols(), p.nnz());
    let counts = predict_counts(&p, &net.prior())?;
    for (id, c) in net.measured_edges().iter().zip(&counts) {
        println!("  edge {id:>3}: {c:.1} veh/h");
    }
    Ok(())
}
