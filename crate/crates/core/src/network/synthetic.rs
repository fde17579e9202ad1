//! Seeded synthetic scenarios: a perturbed grid road graph, OD pairs, and
//! diverse route sets drawn from k-shortest paths under an overlap cap.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Edge, Network, OdPair, Route};

/// Parameters of a synthetic scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub nodes: usize,
    /// Number of directed edges.
    pub edges: usize,
    pub od_pairs: usize,
    pub routes_per_od: usize,
    /// Maximum pairwise distance-based overlap between routes of one OD.
    pub overlap_cap: f64,
    /// Free-flow time range in seconds for axis-aligned edges; diagonal
    /// edges are scaled by √2.
    pub free_flow_time: (f64, f64),
    /// Capacity range in vehicles per hour.
    pub capacity: (f64, f64),
    /// Fraction of route-carrying edges that receive a counter.
    pub measured_fraction: f64,
    /// Range of the prior demand written to each OD pair.
    pub prior_demand: (f64, f64),
    /// Minimum number of hops on the shortest path between origin and destination.
    pub min_od_hops: usize,
    /// How many k-shortest candidates to examine per OD before giving up on
    /// filling `routes_per_od`.
    pub candidate_paths: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            nodes: 36,
            edges: 150,
            od_pairs: 40,
            routes_per_od: 10,
            overlap_cap: 0.7,
            free_flow_time: (30.0, 120.0),
            capacity: (600.0, 1800.0),
            measured_fraction: 0.25,
            prior_demand: (50.0, 500.0),
            min_od_hops: 3,
            candidate_paths: 40,
        }
    }
}

impl ScenarioSpec {
    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Generation(msg));
        if self.nodes < 2 {
            return fail(format!("need at least 2 nodes, got {}", self.nodes));
        }
        if self.od_pairs == 0 {
            return fail("need at least 1 OD pair".into());
        }
        if self.routes_per_od == 0 {
            return fail("routes_per_od must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.overlap_cap) {
            return fail(format!("overlap cap {} outside [0, 1]", self.overlap_cap));
        }
        let (t0, t1) = self.free_flow_time;
        if !(t0 > 0.0 && t0 <= t1) {
            return fail(format!("bad free-flow time range ({t0}, {t1})"));
        }
        let (c0, c1) = self.capacity;
        if !(c0 > 0.0 && c0 <= c1) {
            return fail(format!("bad capacity range ({c0}, {c1})"));
        }
        let (d0, d1) = self.prior_demand;
        if !(d0 >= 0.0 && d0 <= d1) {
            return fail(format!("bad demand range ({d0}, {d1})"));
        }
        if !(self.measured_fraction > 0.0 && self.measured_fraction <= 1.0) {
            return fail(format!(
                "measured fraction {} outside (0, 1]",
                self.measured_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Arc {
    from: usize,
    to: usize,
    weight: f64,
}

struct Graph {
    nodes: usize,
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
}

impl Graph {
    fn new(nodes: usize, arcs: Vec<Arc>) -> Self {
        let mut out = vec![Vec::new(); nodes];
        for (k, a) in arcs.iter().enumerate() {
            out[a.from].push(k);
        }
        Graph { nodes, arcs, out }
    }

    fn reachable_from(&self, src: usize, reverse: bool, skip: &[bool]) -> usize {
        let mut adj = vec![Vec::new(); self.nodes];
        for (k, a) in self.arcs.iter().enumerate() {
            if skip[k] {
                continue;
            }
            if reverse {
                adj[a.to].push(a.from);
            } else {
                adj[a.from].push(a.to);
            }
        }
        let mut seen = vec![false; self.nodes];
        let mut stack = vec![src];
        seen[src] = true;
        let mut count = 1;
        while let Some(n) = stack.pop() {
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    count += 1;
                    stack.push(m);
                }
            }
        }
        count
    }

    fn strongly_connected_without(&self, skip: &[bool]) -> bool {
        self.reachable_from(0, false, skip) == self.nodes
            && self.reachable_from(0, true, skip) == self.nodes
    }

    fn path_cost(&self, path: &[usize]) -> f64 {
        path.iter().map(|&k| self.arcs[k].weight).sum()
    }

    fn path_nodes(&self, src: usize, path: &[usize]) -> Vec<usize> {
        let mut nodes = Vec::with_capacity(path.len() + 1);
        nodes.push(src);
        nodes.extend(path.iter().map(|&k| self.arcs[k].to));
        nodes
    }

    /// Dijkstra over arcs, returning the arc sequence of a cheapest path.
    fn shortest_path(
        &self,
        src: usize,
        dst: usize,
        banned_arcs: &HashSet<usize>,
        banned_nodes: &[bool],
    ) -> Option<Vec<usize>> {
        let mut dist = vec![f64::INFINITY; self.nodes];
        let mut via: Vec<Option<usize>> = vec![None; self.nodes];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Frontier { cost: 0.0, node: src });
        while let Some(Frontier { cost, node }) = heap.pop() {
            if node == dst {
                break;
            }
            if cost > dist[node] {
                continue;
            }
            for &k in &self.out[node] {
                let a = &self.arcs[k];
                if banned_nodes[a.to] || banned_arcs.contains(&k) {
                    continue;
                }
                let next = cost + a.weight;
                if next < dist[a.to] {
                    dist[a.to] = next;
                    via[a.to] = Some(k);
                    heap.push(Frontier { cost: next, node: a.to });
                }
            }
        }
        if !dist[dst].is_finite() {
            return None;
        }
        let mut path = Vec::new();
        let mut node = dst;
        while node != src {
            let k = via[node]?;
            path.push(k);
            node = self.arcs[k].from;
        }
        path.reverse();
        Some(path)
    }

    fn hop_distance(&self, src: usize, dst: usize) -> Option<usize> {
        let mut depth = vec![usize::MAX; self.nodes];
        let mut queue = std::collections::VecDeque::from([src]);
        depth[src] = 0;
        while let Some(n) = queue.pop_front() {
            if n == dst {
                return Some(depth[n]);
            }
            for &k in &self.out[n] {
                let m = self.arcs[k].to;
                if depth[m] == usize::MAX {
                    depth[m] = depth[n] + 1;
                    queue.push_back(m);
                }
            }
        }
        None
    }
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(PartialEq)]
struct Candidate {
    cost: f64,
    path: Vec<usize>,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.path.cmp(&self.path))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Yen's algorithm, yielding loopless paths in nondecreasing cost order.
struct KShortestPaths<'g> {
    graph: &'g Graph,
    src: usize,
    dst: usize,
    found: Vec<Vec<usize>>,
    candidates: BinaryHeap<Candidate>,
    seen: HashSet<Vec<usize>>,
    started: bool,
}

impl<'g> KShortestPaths<'g> {
    fn new(graph: &'g Graph, src: usize, dst: usize) -> Self {
        KShortestPaths {
            graph,
            src,
            dst,
            found: Vec::new(),
            candidates: BinaryHeap::new(),
            seen: HashSet::new(),
            started: false,
        }
    }

    fn push_candidate(&mut self, path: Vec<usize>) {
        if self.seen.insert(path.clone()) {
            let cost = self.graph.path_cost(&path);
            self.candidates.push(Candidate { cost, path });
        }
    }

    fn expand_last(&mut self) {
        let prev = self.found.last().unwrap().clone();
        let nodes = self.graph.path_nodes(self.src, &prev);
        let mut banned_nodes = vec![false; self.graph.nodes];
        for i in 0..prev.len() {
            let spur = nodes[i];
            let root = &prev[..i];
            let banned_arcs: HashSet<usize> = self
                .found
                .iter()
                .filter(|p| p.len() > i && &p[..i] == root)
                .map(|p| p[i])
                .collect();
            if i > 0 {
                banned_nodes[nodes[i - 1]] = true;
            }
            if let Some(spur_path) =
                self.graph
                    .shortest_path(spur, self.dst, &banned_arcs, &banned_nodes)
            {
                let mut full = root.to_vec();
                full.extend(spur_path);
                self.push_candidate(full);
            }
        }
    }
}

impl Iterator for KShortestPaths<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if !self.started {
            self.started = true;
            let none = vec![false; self.graph.nodes];
            let first = self
                .graph
                .shortest_path(self.src, self.dst, &HashSet::new(), &none)?;
            self.seen.insert(first.clone());
            self.found.push(first.clone());
            return Some(first);
        }
        if self.found.is_empty() {
            return None;
        }
        self.expand_last();
        let next = self.candidates.pop()?.path;
        self.found.push(next.clone());
        Some(next)
    }
}

fn overlap(graph: &Graph, a: &[usize], b: &[usize]) -> f64 {
    let in_a: HashSet<usize> = a.iter().copied().collect();
    let shared: f64 = b
        .iter()
        .filter(|k| in_a.contains(k))
        .map(|&k| graph.arcs[k].weight)
        .sum();
    shared / graph.path_cost(a).min(graph.path_cost(b))
}

fn build_graph(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let cols = (spec.nodes as f64).sqrt().ceil() as usize;
    let at = |r: usize, c: usize| r * cols + c;
    let exists = |r: usize, c: usize| c < cols && at(r, c) < spec.nodes;
    let rows = spec.nodes.div_ceil(cols);

    let mut axis = Vec::new();
    let mut diagonal = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if !exists(r, c) {
                continue;
            }
            let n = at(r, c);
            if exists(r, c + 1) {
                axis.push((n, at(r, c + 1)));
                axis.push((at(r, c + 1), n));
            }
            if exists(r + 1, c) {
                axis.push((n, at(r + 1, c)));
                axis.push((at(r + 1, c), n));
            }
            if exists(r + 1, c + 1) {
                diagonal.push((n, at(r + 1, c + 1)));
                diagonal.push((at(r + 1, c + 1), n));
            }
            if c > 0 && exists(r + 1, c - 1) {
                diagonal.push((n, at(r + 1, c - 1)));
                diagonal.push((at(r + 1, c - 1), n));
            }
        }
    }
    if spec.edges > axis.len() + diagonal.len() {
        return Err(Error::Generation(format!(
            "{} edges requested but a {}-node grid supports at most {}",
            spec.edges,
            spec.nodes,
            axis.len() + diagonal.len()
        )));
    }

    let (t0, t1) = spec.free_flow_time;
    let weight = |rng: &mut ChaCha8Rng, scale: f64| -> f64 {
        let t = if t1 > t0 { rng.random_range(t0..=t1) } else { t0 };
        t * scale
    };
    let mut arcs: Vec<Arc> = axis
        .iter()
        .map(|&(from, to)| Arc {
            from,
            to,
            weight: weight(rng, 1.0),
        })
        .collect();

    if spec.edges >= arcs.len() {
        diagonal.shuffle(rng);
        let extra = spec.edges - arcs.len();
        for &(from, to) in diagonal.iter().take(extra) {
            arcs.push(Arc {
                from,
                to,
                weight: weight(rng, std::f64::consts::SQRT_2),
            });
        }
        let graph = Graph::new(spec.nodes, arcs);
        if !graph.strongly_connected_without(&vec![false; graph.arcs.len()]) {
            return Err(Error::Generation("grid is not strongly connected".into()));
        }
        return Ok(graph);
    }

    // Thin the grid while it stays strongly connected.
    let mut order: Vec<usize> = (0..arcs.len()).collect();
    order.shuffle(rng);
    let graph = Graph::new(spec.nodes, arcs);
    let mut removed = vec![false; graph.arcs.len()];
    let mut remaining = graph.arcs.len();
    for k in order {
        if remaining == spec.edges {
            break;
        }
        removed[k] = true;
        if graph.strongly_connected_without(&removed) {
            remaining -= 1;
        } else {
            removed[k] = false;
        }
    }
    if remaining != spec.edges {
        return Err(Error::Generation(format!(
            "cannot thin the grid to {} edges while keeping it strongly connected",
            spec.edges
        )));
    }
    let kept = graph
        .arcs
        .into_iter()
        .zip(removed)
        .filter(|(_, gone)| !gone)
        .map(|(a, _)| a)
        .collect();
    let graph = Graph::new(spec.nodes, kept);
    Ok(graph)
}

/// Generates a synthetic network. The result is a pure function of
/// `(spec, seed)`.
pub fn generate_synthetic_network(spec: &ScenarioSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = build_graph(spec, &mut rng)?;

    let max_pairs = spec.nodes * (spec.nodes - 1);
    let mut chosen = HashSet::new();
    let mut od_nodes = Vec::with_capacity(spec.od_pairs);
    let mut attempts = 0;
    while od_nodes.len() < spec.od_pairs {
        attempts += 1;
        if attempts > 200 * spec.od_pairs.max(max_pairs) {
            return Err(Error::Generation(format!(
                "could only place {} of {} OD pairs at >= {} hops",
                od_nodes.len(),
                spec.od_pairs,
                spec.min_od_hops
            )));
        }
        let o = rng.random_range(0..spec.nodes);
        let d = rng.random_range(0..spec.nodes);
        if o == d || chosen.contains(&(o, d)) {
            continue;
        }
        match graph.hop_distance(o, d) {
            Some(h) if h >= spec.min_od_hops => {
                chosen.insert((o, d));
                od_nodes.push((o, d));
            }
            _ => {}
        }
    }

    let mut routes = Vec::new();
    let mut used_arcs = vec![false; graph.arcs.len()];
    for (z, &(o, d)) in od_nodes.iter().enumerate() {
        let mut accepted: Vec<Vec<usize>> = Vec::new();
        for path in KShortestPaths::new(&graph, o, d).take(spec.candidate_paths.max(1)) {
            if accepted
                .iter()
                .all(|p| overlap(&graph, p, &path) <= spec.overlap_cap + 1e-12)
            {
                accepted.push(path);
                if accepted.len() == spec.routes_per_od {
                    break;
                }
            }
        }
        if accepted.is_empty() {
            return Err(Error::Generation(format!(
                "no route between nodes {o} and {d}"
            )));
        }
        for path in accepted {
            for &k in &path {
                used_arcs[k] = true;
            }
            routes.push(Route {
                route_id: routes.len() as u32 + 1,
                od_id: z as u32 + 1,
                travel_time: graph.path_cost(&path),
                edge_sequence: path.iter().map(|&k| k as u32 + 1).collect(),
            });
        }
    }

    let mut candidates: Vec<usize> = (0..graph.arcs.len()).filter(|&k| used_arcs[k]).collect();
    let n_measured = ((spec.measured_fraction * candidates.len() as f64).round() as usize)
        .clamp(1, candidates.len());
    candidates.shuffle(&mut rng);
    let mut measured: Vec<usize> = candidates[..n_measured].to_vec();
    measured.sort_unstable();
    let mut is_measured = vec![false; graph.arcs.len()];
    for &k in &measured {
        is_measured[k] = true;
    }

    let (c0, c1) = spec.capacity;
    let edges = graph
        .arcs
        .iter()
        .enumerate()
        .map(|(k, a)| Edge {
            edge_id: k as u32 + 1,
            free_flow_time: a.weight,
            capacity: if c1 > c0 { rng.random_range(c0..=c1) } else { c0 },
            is_measured: is_measured[k],
        })
        .collect();

    let (d0, d1) = spec.prior_demand;
    let od_pairs = od_nodes
        .iter()
        .enumerate()
        .map(|(z, &(o, d))| OdPair {
            od_id: z as u32 + 1,
            origin_node: o as u32,
            destination_node: d as u32,
            prior_demand: if d1 > d0 { rng.random_range(d0..=d1) } else { d0 },
        })
        .collect();

    Network::new(
        edges,
        od_pairs,
        routes,
        measured.iter().map(|&k| k as u32 + 1).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::route_overlap;

    fn small(routes_per_od: usize, overlap_cap: f64) -> ScenarioSpec {
        ScenarioSpec {
            od_pairs: 40,
            routes_per_od,
            overlap_cap,
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let spec = small(3, 0.7);
        let a = generate_synthetic_network(&spec, 1).unwrap();
        let b = generate_synthetic_network(&spec, 1).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = generate_synthetic_network(&spec, 2).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn sizes_match_spec() {
        let net = generate_synthetic_network(&small(3, 0.7), 4).unwrap();
        assert_eq!(net.edges().len(), 150);
        assert_eq!(net.num_ods(), 40);
        assert!(net.num_measured() > 0);
        for z in 0..net.num_ods() {
            let k = net.routes_of_od(z).len();
            assert!((1..=3).contains(&k));
        }
    }

    #[test]
    fn overlap_cap_is_respected() {
        for cap in [0.0, 0.3, 0.7] {
            let net = generate_synthetic_network(&small(4, cap), 9).unwrap();
            for z in 0..net.num_ods() {
                let rs = net.routes_of_od(z);
                for (i, &a) in rs.iter().enumerate() {
                    for &b in &rs[i + 1..] {
                        let o = route_overlap(&net.routes()[a], &net.routes()[b], &net).unwrap();
                        assert!(o <= cap + 1e-9, "overlap {o} > cap {cap}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_cap_routes_are_edge_disjoint() {
        let net = generate_synthetic_network(&small(3, 0.0), 3).unwrap();
        for z in 0..net.num_ods() {
            let mut seen = HashSet::new();
            for &r in net.routes_of_od(z) {
                for &e in &net.routes()[r].edge_sequence {
                    assert!(seen.insert(e), "edge {e} shared within OD {}", z + 1);
                }
            }
        }
    }

    #[test]
    fn single_route_per_od() {
        let net = generate_synthetic_network(&small(1, 0.7), 5).unwrap();
        for z in 0..net.num_ods() {
            assert_eq!(net.routes_of_od(z).len(), 1);
        }
    }

    #[test]
    fn rejects_infeasible_specs() {
        let zero = ScenarioSpec {
            od_pairs: 0,
            ..ScenarioSpec::default()
        };
        assert!(matches!(
            generate_synthetic_network(&zero, 1),
            Err(Error::Generation(_))
        ));
        let dense = ScenarioSpec {
            edges: 10_000,
            ..ScenarioSpec::default()
        };
        assert!(generate_synthetic_network(&dense, 1).is_err());
        let tiny = ScenarioSpec {
            nodes: 4,
            edges: 8,
            od_pairs: 3,
            min_od_hops: 5,
            ..ScenarioSpec::default()
        };
        assert!(generate_synthetic_network(&tiny, 1).is_err());
    }

    #[test]
    fn thinned_grid_stays_connected() {
        let spec = ScenarioSpec {
            nodes: 25,
            edges: 70,
            od_pairs: 10,
            routes_per_od: 3,
            ..ScenarioSpec::default()
        };
        let net = generate_synthetic_network(&spec, 11).unwrap();
        assert_eq!(net.edges().len(), 70);
    }

    #[test]
    fn yen_paths_are_sorted_and_simple() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let graph = build_graph(&ScenarioSpec::default(), &mut rng).unwrap();
        let paths: Vec<_> = KShortestPaths::new(&graph, 0, 35).take(15).collect();
        assert_eq!(paths.len(), 15);
        for w in paths.windows(2) {
            assert!(graph.path_cost(&w[0]) <= graph.path_cost(&w[1]) + 1e-9);
        }
        for p in &paths {
            let nodes = graph.path_nodes(0, p);
            let uniq: HashSet<_> = nodes.iter().collect();
            assert_eq!(uniq.len(), nodes.len());
            assert_eq!(*nodes.last().unwrap(), 35);
        }
        let uniq: HashSet<_> = paths.iter().collect();
        assert_eq!(uniq.len(), paths.len());
    }
}
