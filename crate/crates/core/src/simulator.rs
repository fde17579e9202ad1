//! Seeded stochastic network loader standing in for a microscopic simulator.
//!
//! One replication runs a volume-delay fixed point on expected volumes,
//! samples a Poisson trip count per OD pair, splits the trips across routes
//! multinomially by the converged logit probabilities, and counts traversals
//! of measured edges.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{AssignmentMatrix, Network};
use crate::route_choice::{logit, ChoiceParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub inner_fixed_point_iters: usize,
    /// BPR α.
    pub vdf_alpha: f64,
    /// BPR β.
    pub vdf_beta: f64,
    pub replications: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            inner_fixed_point_iters: 5,
            vdf_alpha: 0.15,
            vdf_beta: 4.0,
            replications: 1,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_fixed_point_iters == 0 || self.replications == 0 {
            return Err(Error::invalid(
                "inner_fixed_point_iters and replications must be >= 1",
            ));
        }
        if !(self.vdf_alpha >= 0.0 && self.vdf_beta >= 0.0) {
            return Err(Error::invalid("VDF parameters must be >= 0"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Converged state of the volume-delay fixed point.
#[derive(Clone, Debug)]
pub struct LoadedState {
    pub edge_volumes: Vec<f64>,
    pub edge_times: Vec<f64>,
    pub route_times: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Integer outcome of a single replication.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replication {
    pub measured_counts: Vec<u64>,
    pub route_flows: Vec<u64>,
    pub od_trips: Vec<u64>,
}

/// Outcome of one simulation call, averaged over its replications.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationResult {
    /// Vehicles per hour on each measured edge, in measured-row order.
    pub measured_counts: Vec<f64>,
    /// Vehicles per route.
    pub route_flows: Vec<f64>,
    /// Trips per OD pair.
    pub od_trips: Vec<f64>,
    pub converged_route_times: Vec<f64>,
    pub route_probabilities: Vec<f64>,
    pub demand_used: Vec<f64>,
    /// Per-replication integer outcomes; empty for expectation-only results.
    pub replications: Vec<Replication>,
}

impl SimulationResult {
    /// Noise-free result in which every flow equals its expectation
    /// `P_r x_{O(r)}` under the given probabilities and times.
    pub fn expected(
        network: &Network,
        demand: &[f64],
        probabilities: &[f64],
        route_times: &[f64],
    ) -> Result<Self> {
        check_demand(network, demand)?;
        if probabilities.len() != network.num_routes() || route_times.len() != network.num_routes() {
            return Err(Error::invalid("probabilities/times must cover every route"));
        }
        let route_flows: Vec<f64> = (0..network.num_routes())
            .map(|r| probabilities[r] * demand[network.od_of_route(r)])
            .collect();
        let mut measured_counts = vec![0.0; network.num_measured()];
        for (r, &f) in route_flows.iter().enumerate() {
            for &i in network.route_measured_rows(r) {
                measured_counts[i] += f;
            }
        }
        Ok(SimulationResult {
            measured_counts,
            route_flows,
            od_trips: demand.to_vec(),
            converged_route_times: route_times.to_vec(),
            route_probabilities: probabilities.to_vec(),
            demand_used: demand.to_vec(),
            replications: Vec::new(),
        })
    }
}

fn check_demand(network: &Network, demand: &[f64]) -> Result<()> {
    if demand.len() != network.num_ods() {
        return Err(Error::invalid(format!(
            "demand has length {}, network has {} OD pairs",
            demand.len(),
            network.num_ods()
        )));
    }
    if let Some(z) = demand.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::invalid(format!(
            "demand of OD {} is {}",
            z + 1,
            demand[z]
        )));
    }
    Ok(())
}

/// Runs the volume-delay fixed point on expected volumes.
///
/// Starting from free-flow times, each of the `inner_fixed_point_iters`
/// rounds computes logit probabilities, expected edge volumes
/// `v_e = Σ_{r ∋ e} P_r x_{O(r)}`, BPR edge times
/// `t_e = t_e⁰ (1 + α (v_e / c_e)^β)` and the resulting route times. The
/// returned probabilities are evaluated at the final route times.
pub fn equilibrate(
    network: &Network,
    demand: &[f64],
    config: &SimConfig,
    params: &ChoiceParams,
) -> Result<LoadedState> {
    config.validate()?;
    check_demand(network, demand)?;
    let edges = network.edges();
    let mut edge_times: Vec<f64> = edges.iter().map(|e| e.free_flow_time).collect();
    let mut edge_volumes = vec![0.0; edges.len()];
    let mut route_times: Vec<f64> = (0..network.num_routes())
        .map(|r| network.route_free_flow_time(r))
        .collect();

    for _ in 0..config.inner_fixed_point_iters {
        let p = logit(network, &route_times, params.theta)?;
        edge_volumes.iter_mut().for_each(|v| *v = 0.0);
        for (r, &pr) in p.iter().enumerate() {
            let flow = pr * demand[network.od_of_route(r)];
            for &e in network.route_edge_positions(r) {
                edge_volumes[e] += flow;
            }
        }
        for (e, edge) in edges.iter().enumerate() {
            let ratio = edge_volumes[e] / edge.capacity;
            edge_times[e] =
                edge.free_flow_time * (1.0 + config.vdf_alpha * ratio.powf(config.vdf_beta));
            if !edge_times[e].is_finite() {
                return Err(Error::Numeric(format!(
                    "travel time of edge {} diverged",
                    edge.edge_id
                )));
            }
        }
        for (r, t) in route_times.iter_mut().enumerate() {
            *t = network
                .route_edge_positions(r)
                .iter()
                .map(|&e| edge_times[e])
                .sum();
        }
    }
    let probabilities = logit(network, &route_times, params.theta)?;
    Ok(LoadedState {
        edge_volumes,
        edge_times,
        route_times,
        probabilities,
    })
}

fn replication_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn run_replication(
    network: &Network,
    demand: &[f64],
    probabilities: &[f64],
    seed: u64,
    index: usize,
) -> Result<Replication> {
    let mut rng = replication_rng(seed, index);
    let mut od_trips = vec![0u64; network.num_ods()];
    let mut route_flows = vec![0u64; network.num_routes()];
    for (z, &x) in demand.iter().enumerate() {
        let trips = if x > 0.0 {
            let poisson = Poisson::new(x)
                .map_err(|e| Error::Numeric(format!("Poisson({x}) for OD {}: {e}", z + 1)))?;
            poisson.sample(&mut rng) as u64
        } else {
            0
        };
        od_trips[z] = trips;

        // multinomial split by sequential conditional binomials
        let routes = network.routes_of_od(z);
        let mut left = trips;
        let mut mass = 1.0;
        for (k, &r) in routes.iter().enumerate() {
            if left == 0 {
                break;
            }
            if k + 1 == routes.len() {
                route_flows[r] = left;
                break;
            }
            let share = if mass > 0.0 {
                (probabilities[r] / mass).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let drawn = Binomial::new(left, share)
                .map_err(|e| Error::Numeric(format!("Binomial({left}, {share}): {e}")))?
                .sample(&mut rng);
            route_flows[r] = drawn;
            left -= drawn;
            mass -= probabilities[r];
        }
    }
    let mut measured_counts = vec![0u64; network.num_measured()];
    for (r, &f) in route_flows.iter().enumerate() {
        for &i in network.route_measured_rows(r) {
            measured_counts[i] += f;
        }
    }
    Ok(Replication {
        measured_counts,
        route_flows,
        od_trips,
    })
}

fn mean_of(reps: &[Replication], field: impl Fn(&Replication) -> &[u64]) -> Vec<f64> {
    let n = reps.len() as f64;
    let len = field(&reps[0]).len();
    (0..len)
        .map(|k| reps.iter().map(|r| field(r)[k] as f64).sum::<f64>() / n)
        .collect()
}

/// Simulates the network at `demand`. Replications run in parallel with
/// streams derived from `(config.seed, replication index)` and are merged in
/// replication order, so the result is a pure function of the inputs.
pub fn simulate(
    network: &Network,
    demand: &[f64],
    config: &SimConfig,
    params: &ChoiceParams,
) -> Result<SimulationResult> {
    let state = equilibrate(network, demand, config, params)?;
    let replications = (0..config.replications)
        .into_par_iter()
        .map(|k| run_replication(network, demand, &state.probabilities, config.seed, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationResult {
        measured_counts: mean_of(&replications, |r| &r.measured_counts),
        route_flows: mean_of(&replications, |r| &r.route_flows),
        od_trips: mean_of(&replications, |r| &r.od_trips),
        converged_route_times: state.route_times,
        route_probabilities: state.probabilities,
        demand_used: demand.to_vec(),
        replications,
    })
}

/// Simulation-based estimate of the assignment matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentEstimate {
    pub matrix: AssignmentMatrix,
}

/// Estimates `Â(i, z)` as the share of OD `z`'s sampled trips that crossed
/// measured edge `i`. An OD without sampled trips falls back to the analytic
/// column built from the converged route probabilities.
pub fn estimate_assignment(result: &SimulationResult, network: &Network) -> Result<AssignmentEstimate> {
    if result.route_flows.len() != network.num_routes()
        || result.od_trips.len() != network.num_ods()
        || result.route_probabilities.len() != network.num_routes()
        || result.measured_counts.len() != network.num_measured()
    {
        return Err(Error::invalid(
            "simulation result does not match the network's shape",
        ));
    }
    let mut triplets = Vec::new();
    for z in 0..network.num_ods() {
        let trips = result.od_trips[z];
        for &r in network.routes_of_od(z) {
            let share = if trips > 0.0 {
                result.route_flows[r] / trips
            } else {
                result.route_probabilities[r]
            };
            for &i in network.route_measured_rows(r) {
                triplets.push((i, z, share));
            }
        }
    }
    let matrix =
        AssignmentMatrix::from_triplets(network.num_measured(), network.num_ods(), triplets)?;
    Ok(AssignmentEstimate { matrix })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::{edge, od, route};
    use crate::network::{build_assignment_matrix, predict_counts, Network};
    use crate::route_choice::RouteProbabilities;

    fn net() -> Network {
        Network::new(
            vec![edge(1, 60.0, true), edge(2, 60.0, false), edge(3, 100.0, true)],
            vec![od(1, 100.0), od(2, 50.0)],
            vec![
                route(1, 1, &[1, 2], 120.0),
                route(2, 1, &[3], 100.0),
                route(3, 2, &[3], 100.0),
            ],
            vec![1, 3],
        )
        .unwrap()
    }

    #[test]
    fn zero_demand_gives_zero_counts_and_free_flow() {
        let n = net();
        let r = simulate(&n, &[0.0, 0.0], &SimConfig::default(), &ChoiceParams::default()).unwrap();
        assert_eq!(r.measured_counts, vec![0.0, 0.0]);
        assert_eq!(r.converged_route_times, vec![120.0, 100.0, 100.0]);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let n = net();
        let cfg = SimConfig {
            replications: 4,
            seed: 42,
            ..SimConfig::default()
        };
        let a = simulate(&n, &[300.0, 80.0], &cfg, &ChoiceParams::default()).unwrap();
        let b = simulate(&n, &[300.0, 80.0], &cfg, &ChoiceParams::default()).unwrap();
        assert_eq!(a, b);
        let c = simulate(&n, &[300.0, 80.0], &cfg.with_seed(43), &ChoiceParams::default()).unwrap();
        assert_ne!(a.replications, c.replications);
    }

    #[test]
    fn flows_conserve_trips_per_replication() {
        let n = net();
        let cfg = SimConfig {
            replications: 8,
            seed: 7,
            ..SimConfig::default()
        };
        let r = simulate(&n, &[250.0, 40.0], &cfg, &ChoiceParams::default()).unwrap();
        for rep in &r.replications {
            for z in 0..n.num_ods() {
                let s: u64 = n.routes_of_od(z).iter().map(|&k| rep.route_flows[k]).sum();
                assert_eq!(s, rep.od_trips[z]);
            }
        }
    }

    #[test]
    fn congestion_shifts_route_times_up() {
        let n = net();
        let light = equilibrate(&n, &[10.0, 10.0], &SimConfig::default(), &ChoiceParams::default()).unwrap();
        let heavy = equilibrate(&n, &[5000.0, 5000.0], &SimConfig::default(), &ChoiceParams::default()).unwrap();
        for (a, b) in light.edge_times.iter().zip(&heavy.edge_times) {
            assert!(b >= a);
        }
        assert!(heavy.route_times[1] > 100.0);
    }

    #[test]
    fn forced_assignment_estimate_is_one() {
        let n = Network::new(
            vec![edge(1, 10.0, true)],
            vec![od(1, 1.0)],
            vec![route(1, 1, &[1], 10.0)],
            vec![1],
        )
        .unwrap();
        let r = simulate(&n, &[30.0], &SimConfig::default(), &ChoiceParams::default()).unwrap();
        let a = estimate_assignment(&r, &n).unwrap();
        assert_eq!(a.matrix.get(0, 0), 1.0);
    }

    #[test]
    fn estimate_is_sampled_share() {
        let n = Network::new(
            vec![edge(1, 10.0, true), edge(2, 10.0, false)],
            vec![od(1, 1.0)],
            vec![route(1, 1, &[1], 10.0), route(2, 1, &[2], 10.0)],
            vec![1],
        )
        .unwrap();
        let mut r = simulate(&n, &[10.0], &SimConfig::default(), &ChoiceParams::default()).unwrap();
        r.route_flows = vec![7.0, 3.0];
        r.od_trips = vec![10.0];
        let a = estimate_assignment(&r, &n).unwrap();
        assert!((a.matrix.get(0, 0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_sample_falls_back_to_analytic_column() {
        let n = net();
        let r = simulate(&n, &[0.0, 0.0], &SimConfig::default(), &ChoiceParams::default()).unwrap();
        let est = estimate_assignment(&r, &n).unwrap();
        let analytic = build_assignment_matrix(
            &n,
            &RouteProbabilities::new(r.route_probabilities.clone()),
        )
        .unwrap();
        assert_eq!(est.matrix.to_dense(), analytic.to_dense());
    }

    #[test]
    fn expected_result_matches_predict_counts() {
        let n = net();
        let p = vec![0.25, 0.75, 1.0];
        let r = SimulationResult::expected(&n, &[100.0, 40.0], &p, &[1.0, 1.0, 1.0]).unwrap();
        let m = build_assignment_matrix(&n, &RouteProbabilities::new(p)).unwrap();
        assert_eq!(r.measured_counts, predict_counts(&m, &[100.0, 40.0]).unwrap());
    }

    #[test]
    fn rejects_bad_config_and_demand() {
        let n = net();
        let bad = SimConfig {
            replications: 0,
            ..SimConfig::default()
        };
        assert!(simulate(&n, &[1.0, 1.0], &bad, &ChoiceParams::default()).is_err());
        assert!(simulate(&n, &[1.0], &SimConfig::default(), &ChoiceParams::default()).is_err());
        assert!(simulate(&n, &[1.0, -1.0], &SimConfig::default(), &ChoiceParams::default()).is_err());
    }
}
