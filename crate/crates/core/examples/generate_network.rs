//! Generates a benchmark-sized network and prints its shape and a few routes.
//!
//! ```bash
//! cargo run -p odcal --example generate_network
//! ```

use odcal::network::{generate_synthetic_network, route_overlap, ScenarioSpec};

fn main() -> odcal::Result<()> {
    let spec = ScenarioSpec {
        routes_per_od: 3,
        measured_fraction: 0.2,
        ..ScenarioSpec::default()
    };
    let net = generate_synthetic_network(&spec, 7)?;
    println!(
        "od_pairs={}, edges={}, routes={}, measured={}",
        net.num_ods(),
        net.edges().len(),
        net.num_routes(),
        net.num_measured()
    );

    let od = &net.od_pairs()[0];
    println!("OD {} ({} -> {}):", od.od_id, od.origin_node, od.destination_node);
    let routes: Vec<_> = net.routes_of_od(0).iter().map(|&r| &net.routes()[r]).collect();
    for r in &routes {
        println!("  route {} edges {:?} free-flow {:.0} s", r.route_id, r.edge_sequence, r.travel_time);
    }
    for (i, a) in routes.iter().enumerate() {
        for b in &routes[i + 1..] {
            println!("  overlap({}, {}) = {:.2}", a.route_id, b.route_id, route_overlap(a, b, &net)?);
        }
    }

    let path = std::env::temp_dir().join("odcal_network.json");
    net.write_json_file(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
