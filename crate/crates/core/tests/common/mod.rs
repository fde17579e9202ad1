//! Seeded property checks shared by the proptest suite and the acceptance
//! runner. Each check builds its own random instance from `seed` and compares
//! library output against an independent computation.

#![allow(dead_code)]

use odcal::calibrate::{msa_update, MsaIndexing};
use odcal::metamodel::{
    metamodel_gradient, metamodel_value, solve_metamodel, Beta, Bounds, MetamodelProblem, SolverSettings,
};
use odcal::network::{build_assignment_matrix, generate_synthetic_network, AssignmentMatrix, Network, ScenarioSpec};
use odcal::route_choice::{route_probabilities, ChoiceParams, RouteProbabilities, TimeSource, TravelTimeTable};
use odcal::simulator::{simulate, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn small_network(seed: u64) -> Network {
    let spec = ScenarioSpec {
        nodes: 16,
        edges: 40,
        od_pairs: 6,
        routes_per_od: 3,
        measured_fraction: 0.5,
        ..ScenarioSpec::default()
    };
    generate_synthetic_network(&spec, seed).expect("small scenario is feasible")
}

fn random_times(net: &Network, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..net.num_routes()).map(|_| rng.random_range(10.0..1000.0)).collect()
}

fn od_routes(net: &Network) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); net.num_ods()];
    for (r, route) in net.routes().iter().enumerate() {
        out[route.od_id as usize - 1].push(r);
    }
    out
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Per-OD probabilities sum to one, are unchanged by a common shift of an
/// OD's route times, and respond monotonically to a single route's time.
pub fn logit_properties(seed: u64, theta_per_minute: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = small_network(seed % 50);
    let params = ChoiceParams::per_minute(theta_per_minute);
    let times = random_times(&net, &mut rng);
    let probs = |t: &[f64]| -> Result<Vec<f64>, String> {
        let table = TravelTimeTable::from_aligned(&net, t.to_vec(), TimeSource::File).map_err(|e| e.to_string())?;
        Ok(route_probabilities(&net, &table, &params).map_err(|e| e.to_string())?.into_vec())
    };
    let p = probs(&times)?;
    let groups = od_routes(&net);
    for (z, rs) in groups.iter().enumerate() {
        let sum: f64 = rs.iter().map(|&r| p[r]).sum();
        if !close(sum, 1.0, 1e-9) {
            return Err(format!("OD {} sums to {sum}", z + 1));
        }
    }

    let z = rng.random_range(0..groups.len());
    let shift = rng.random_range(-5.0..500.0);
    let mut shifted = times.clone();
    for &r in &groups[z] {
        shifted[r] += shift;
    }
    let q = probs(&shifted)?;
    for &r in &groups[z] {
        if !close(p[r], q[r], 1e-9) {
            return Err(format!("shift by {shift} moved route {r}: {} -> {}", p[r], q[r]));
        }
    }

    let r = groups[z][rng.random_range(0..groups[z].len())];
    let mut slower = times.clone();
    slower[r] += rng.random_range(1.0..300.0);
    let s = probs(&slower)?;
    if s[r] > p[r] + 1e-9 {
        return Err(format!("slower route {r} gained share {} -> {}", p[r], s[r]));
    }
    for &o in groups[z].iter().filter(|&&o| o != r) {
        if s[o] < p[o] - 1e-9 {
            return Err(format!("route {o} lost share when route {r} slowed"));
        }
    }
    Ok(())
}

/// The assignment matrix equals `Σ_{r of z, r ∋ edge_i} P_r` computed by a
/// double loop over measured edges and routes.
pub fn assignment_brute_force(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = small_network(seed % 50);
    let groups = od_routes(&net);
    let mut p = vec![0.0; net.num_routes()];
    for rs in &groups {
        let w: Vec<f64> = rs.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = w.iter().sum();
        for (&r, wr) in rs.iter().zip(w) {
            p[r] = wr / total;
        }
    }
    let m = build_assignment_matrix(&net, &RouteProbabilities::new(p.clone())).map_err(|e| e.to_string())?;
    for (i, &edge_id) in net.measured_edges().iter().enumerate() {
        for (z, rs) in groups.iter().enumerate() {
            let mut want = 0.0;
            for &r in rs {
                if net.routes()[r].edge_sequence.contains(&edge_id) {
                    want += p[r];
                }
            }
            if !close(m.get(i, z), want, 1e-9) {
                return Err(format!("entry ({i},{z}) = {} expected {want}", m.get(i, z)));
            }
        }
    }
    Ok(())
}

pub fn random_problem(rng: &mut ChaCha8Rng, convex: bool) -> MetamodelProblem {
    let ni = rng.random_range(1..8);
    let nz = rng.random_range(1..8);
    let mut triplets = Vec::new();
    for i in 0..ni {
        for z in 0..nz {
            if rng.random_bool(0.5) {
                triplets.push((i, z, rng.random_range(0.0..1.0)));
            }
        }
    }
    let prior: Vec<f64> = (0..nz).map(|_| rng.random_range(10.0..400.0)).collect();
    let mut beta = vec![
        if convex { rng.random_range(0.0..2.0) } else { rng.random_range(-1.0..2.0) },
        rng.random_range(-100.0..100.0),
    ];
    beta.extend((0..nz).map(|_| rng.random_range(-5.0..5.0)));
    MetamodelProblem {
        assignment: AssignmentMatrix::from_triplets(ni, nz, triplets).unwrap(),
        field_counts: (0..ni).map(|_| rng.random_range(0.0..800.0)).collect(),
        bounds: Bounds::around_prior(&prior),
        prior,
        delta: if convex { rng.random_range(0.01..5.0) } else { rng.random_range(0.0..5.0) },
        beta: Beta::from_slice(&beta).unwrap(),
    }
}

/// Analytic gradient against central differences with step
/// `1e-5·max(1, |x_z|)` at 20 random points.
pub fn gradient_matches_differences(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = random_problem(&mut rng, false);
    let nz = problem.prior.len();
    for _ in 0..20 {
        let x: Vec<f64> = (0..nz).map(|_| rng.random_range(0.0..1000.0)).collect();
        let g = metamodel_gradient(&x, &problem).map_err(|e| e.to_string())?;
        for z in 0..nz {
            let h = 1e-5 * x[z].abs().max(1.0);
            let (mut up, mut down) = (x.clone(), x.clone());
            up[z] += h;
            down[z] -= h;
            let fd = (metamodel_value(&up, &problem).unwrap() - metamodel_value(&down, &problem).unwrap()) / (2.0 * h);
            let scale = g[z].abs().max(fd.abs()).max(1.0);
            if (g[z] - fd).abs() > 1e-4 * scale {
                return Err(format!("z={z}: analytic {} vs central {fd}", g[z]));
            }
        }
    }
    Ok(())
}

/// Box-KKT conditions at the solver's output for a convex subproblem.
pub fn solver_satisfies_kkt(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = random_problem(&mut rng, true);
    let start = problem.bounds.projected(&problem.prior);
    let out = solve_metamodel(&problem, &start, &SolverSettings::default()).map_err(|e| e.to_string())?;
    if !problem.bounds.contains(&out.point, 0.0) {
        return Err("solution leaves the box".into());
    }
    if !out.converged {
        return Err(format!("no convergence after {} iterations", out.iterations));
    }
    let g = metamodel_gradient(&out.point, &problem).map_err(|e| e.to_string())?;
    let tol = 1e-5 * (1.0 + out.objective.abs());
    for (z, &gz) in g.iter().enumerate() {
        let x = out.point[z];
        let ok = gz.abs() <= tol
            || (x <= problem.bounds.lower[z] && gz >= 0.0)
            || (x >= problem.bounds.upper[z] && gz <= 0.0);
        if !ok {
            return Err(format!("z={z}: x={x} gradient {gz} (tol {tol})"));
        }
    }
    Ok(())
}

/// After `t ≤ 10` printed-convention MSA updates, the matrix equals the plain
/// mean of the estimates `Â², …, Â^{t+1}`.
pub fn msa_trailing_mean(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, cols) = (rng.random_range(1..6), rng.random_range(1..6));
    let random_matrix = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect() };
    let to_sparse = |d: &[f64]| {
        let t: Vec<_> = (0..rows * cols).map(|k| (k / cols, k % cols, d[k])).collect();
        AssignmentMatrix::from_triplets(rows, cols, t).unwrap()
    };
    let mut a = to_sparse(&random_matrix(&mut rng));
    let mut sum = vec![0.0; rows * cols];
    for t in 1..=10usize {
        let est = random_matrix(&mut rng);
        for (s, e) in sum.iter_mut().zip(&est) {
            *s += e;
        }
        a = msa_update(&a, &to_sparse(&est), t, MsaIndexing::AsPrinted).map_err(|e| e.to_string())?;
        for (k, s) in sum.iter().enumerate() {
            let mean = s / t as f64;
            if !close(a.get(k / cols, k % cols), mean, 1e-12) {
                return Err(format!("t={t} entry {k}: {} vs mean {mean}", a.get(k / cols, k % cols)));
            }
        }
    }
    Ok(())
}

/// Every replication splits each OD's trips exactly over its routes, and
/// measured counts are the sums of the crossing routes' flows.
pub fn replication_conservation(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = small_network(seed % 50);
    let demand: Vec<f64> = (0..net.num_ods()).map(|_| rng.random_range(0.0..300.0)).collect();
    let config = SimConfig {
        replications: 3,
        seed,
        ..SimConfig::default()
    };
    let res = simulate(&net, &demand, &config, &ChoiceParams::default()).map_err(|e| e.to_string())?;
    let groups = od_routes(&net);
    for (k, rep) in res.replications.iter().enumerate() {
        for (z, rs) in groups.iter().enumerate() {
            let routed: u64 = rs.iter().map(|&r| rep.route_flows[r]).sum();
            if routed != rep.od_trips[z] {
                return Err(format!("replication {k} OD {}: {routed} routed of {}", z + 1, rep.od_trips[z]));
            }
        }
        for (i, &edge_id) in net.measured_edges().iter().enumerate() {
            let crossing: u64 = net
                .routes()
                .iter()
                .enumerate()
                .filter(|(_, r)| r.edge_sequence.contains(&edge_id))
                .map(|(r, _)| rep.route_flows[r])
                .sum();
            if crossing != rep.measured_counts[i] {
                return Err(format!("replication {k} edge {edge_id}: {} vs {crossing}", rep.measured_counts[i]));
            }
        }
    }
    Ok(())
}

/// Two runs with the same seed agree bit for bit.
pub fn simulate_is_deterministic(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = small_network(seed % 50);
    let demand: Vec<f64> = (0..net.num_ods()).map(|_| rng.random_range(0.0..500.0)).collect();
    let config = SimConfig {
        replications: 4,
        seed,
        ..SimConfig::default()
    };
    let params = ChoiceParams::default();
    let a = simulate(&net, &demand, &config, &params).map_err(|e| e.to_string())?;
    let b = simulate(&net, &demand, &config, &params).map_err(|e| e.to_string())?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    if a.replications != b.replications
        || bits(&a.measured_counts) != bits(&b.measured_counts)
        || bits(&a.route_flows) != bits(&b.route_flows)
        || bits(&a.converged_route_times) != bits(&b.converged_route_times)
    {
        return Err("repeated simulation differs".into());
    }
    Ok(())
}
