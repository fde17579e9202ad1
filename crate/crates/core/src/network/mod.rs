//! Road network topology, OD pairs, route sets and the analytic assignment matrix.
//!
//! A [`Network`] is immutable once built. Construction validates every
//! cross-reference (routes to edges, routes to OD pairs, measured edges) and
//! precomputes the position indices the numerical code relies on, so the hot
//! paths never touch a hash map.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod assignment;
mod synthetic;

pub use assignment::{build_assignment_matrix, predict_counts, AssignmentMatrix};
pub use synthetic::{generate_synthetic_network, ScenarioSpec};

/// A directed road segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub edge_id: u32,
    /// Seconds.
    pub free_flow_time: f64,
    /// Vehicles per hour.
    pub capacity: f64,
    pub is_measured: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdPair {
    /// Contiguous 1-based index into the demand vector.
    pub od_id: u32,
    pub origin_node: u32,
    pub destination_node: u32,
    /// Prior (seed) demand in vehicles per hour.
    pub prior_demand: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub route_id: u32,
    pub od_id: u32,
    pub edge_sequence: Vec<u32>,
    /// Reference travel time in seconds.
    pub travel_time: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct NetworkFile {
    edges: Vec<Edge>,
    od_pairs: Vec<OdPair>,
    routes: Vec<Route>,
    measured_edges: Vec<u32>,
}

/// Validated road network with route sets.
///
/// Positions (`usize`) index the `edges()`, `od_pairs()` and `routes()`
/// slices; ids (`u32`) are the values carried in files. OD position `z`
/// always has id `z + 1`. Row `i` of every count vector corresponds to
/// `measured_edges()[i]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct Network {
    edges: Vec<Edge>,
    od_pairs: Vec<OdPair>,
    routes: Vec<Route>,
    measured_edges: Vec<u32>,
    edge_pos: HashMap<u32, usize>,
    route_pos: HashMap<u32, usize>,
    routes_by_od: Vec<Vec<usize>>,
    route_edges: Vec<Vec<usize>>,
    route_rows: Vec<Vec<usize>>,
    measured_pos: Vec<usize>,
}

impl TryFrom<NetworkFile> for Network {
    type Error = Error;

    fn try_from(file: NetworkFile) -> Result<Self> {
        Network::new(file.edges, file.od_pairs, file.routes, file.measured_edges)
    }
}

impl From<Network> for NetworkFile {
    fn from(net: Network) -> Self {
        NetworkFile {
            edges: net.edges,
            od_pairs: net.od_pairs,
            routes: net.routes,
            measured_edges: net.measured_edges,
        }
    }
}

impl Network {
    pub fn new(
        edges: Vec<Edge>,
        od_pairs: Vec<OdPair>,
        routes: Vec<Route>,
        measured_edges: Vec<u32>,
    ) -> Result<Self> {
        let mut edge_pos = HashMap::with_capacity(edges.len());
        for (pos, e) in edges.iter().enumerate() {
            if !(e.free_flow_time > 0.0 && e.free_flow_time.is_finite()) {
                return Err(Error::invalid(format!(
                    "edge {} has non-positive free-flow time {}",
                    e.edge_id, e.free_flow_time
                )));
            }
            if !(e.capacity > 0.0 && e.capacity.is_finite()) {
                return Err(Error::invalid(format!(
                    "edge {} has non-positive capacity {}",
                    e.edge_id, e.capacity
                )));
            }
            if edge_pos.insert(e.edge_id, pos).is_some() {
                return Err(Error::invalid(format!("duplicate edge id {}", e.edge_id)));
            }
        }

        for (pos, od) in od_pairs.iter().enumerate() {
            if od.od_id as usize != pos + 1 {
                return Err(Error::invalid(format!(
                    "OD ids must be contiguous 1..|Z| in order; found {} at position {}",
                    od.od_id, pos
                )));
            }
            if !(od.prior_demand >= 0.0 && od.prior_demand.is_finite()) {
                return Err(Error::invalid(format!(
                    "OD {} has invalid prior demand {}",
                    od.od_id, od.prior_demand
                )));
            }
        }

        let mut route_pos = HashMap::with_capacity(routes.len());
        let mut routes_by_od = vec![Vec::new(); od_pairs.len()];
        let mut route_edges = Vec::with_capacity(routes.len());
        for (pos, r) in routes.iter().enumerate() {
            if route_pos.insert(r.route_id, pos).is_some() {
                return Err(Error::invalid(format!("duplicate route id {}", r.route_id)));
            }
            if r.od_id == 0 || r.od_id as usize > od_pairs.len() {
                return Err(Error::invalid(format!(
                    "route {} references unknown OD {}",
                    r.route_id, r.od_id
                )));
            }
            if r.edge_sequence.is_empty() {
                return Err(Error::invalid(format!("route {} has no edges", r.route_id)));
            }
            if !(r.travel_time > 0.0 && r.travel_time.is_finite()) {
                return Err(Error::invalid(format!(
                    "route {} has non-positive travel time {}",
                    r.route_id, r.travel_time
                )));
            }
            let mut seen = HashSet::with_capacity(r.edge_sequence.len());
            let mut positions = Vec::with_capacity(r.edge_sequence.len());
            for id in &r.edge_sequence {
                let p = *edge_pos.get(id).ok_or_else(|| {
                    Error::invalid(format!("route {} uses unknown edge {}", r.route_id, id))
                })?;
                if !seen.insert(*id) {
                    return Err(Error::invalid(format!(
                        "route {} visits edge {} twice",
                        r.route_id, id
                    )));
                }
                positions.push(p);
            }
            routes_by_od[r.od_id as usize - 1].push(pos);
            route_edges.push(positions);
        }
        if let Some(z) = routes_by_od.iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!("OD {} has no routes", z + 1)));
        }

        let mut row_of_edge = vec![None; edges.len()];
        let mut measured_pos = Vec::with_capacity(measured_edges.len());
        for (row, id) in measured_edges.iter().enumerate() {
            let p = *edge_pos
                .get(id)
                .ok_or_else(|| Error::invalid(format!("measured edge {id} does not exist")))?;
            if !edges[p].is_measured {
                return Err(Error::invalid(format!(
                    "measured edge {id} is not flagged is_measured"
                )));
            }
            if row_of_edge[p].replace(row).is_some() {
                return Err(Error::invalid(format!("measured edge {id} listed twice")));
            }
            measured_pos.push(p);
        }
        let route_rows = route_edges
            .iter()
            .map(|es| es.iter().filter_map(|&p| row_of_edge[p]).collect())
            .collect();

        Ok(Network {
            edges,
            od_pairs,
            routes,
            measured_edges,
            edge_pos,
            route_pos,
            routes_by_od,
            route_edges,
            route_rows,
            measured_pos,
        })
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn od_pairs(&self) -> &[OdPair] {
        &self.od_pairs
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    /// Measured edge ids in row order.
    pub fn measured_edges(&self) -> &[u32] {
        &self.measured_edges
    }

    pub fn num_ods(&self) -> usize {
        self.od_pairs.len()
    }

    pub fn num_routes(&self) -> usize {
        self.routes.len()
    }

    pub fn num_measured(&self) -> usize {
        self.measured_edges.len()
    }

    pub fn edge_position(&self, edge_id: u32) -> Option<usize> {
        self.edge_pos.get(&edge_id).copied()
    }

    pub fn route_position(&self, route_id: u32) -> Option<usize> {
        self.route_pos.get(&route_id).copied()
    }

    /// Route positions belonging to OD position `z`.
    pub fn routes_of_od(&self, z: usize) -> &[usize] {
        &self.routes_by_od[z]
    }

    /// OD position of the route at position `r`.
    pub fn od_of_route(&self, r: usize) -> usize {
        self.routes[r].od_id as usize - 1
    }

    /// Edge positions traversed by the route at position `r`.
    pub fn route_edge_positions(&self, r: usize) -> &[usize] {
        &self.route_edges[r]
    }

    /// Measured-edge rows crossed by the route at position `r`.
    pub fn route_measured_rows(&self, r: usize) -> &[usize] {
        &self.route_rows[r]
    }

    /// Edge position of measured row `i`.
    pub fn measured_edge_position(&self, row: usize) -> usize {
        self.measured_pos[row]
    }

    /// Sum of edge free-flow times along the route at position `r`.
    pub fn route_free_flow_time(&self, r: usize) -> f64 {
        self.route_edges[r]
            .iter()
            .map(|&p| self.edges[p].free_flow_time)
            .sum()
    }

    /// Prior demand vector, indexed by OD position.
    pub fn prior(&self) -> Vec<f64> {
        self.od_pairs.iter().map(|od| od.prior_demand).collect()
    }

    /// Copy of the network with the OD prior demands replaced.
    pub fn with_prior(&self, prior: &[f64]) -> Result<Network> {
        if prior.len() != self.num_ods() {
            return Err(Error::invalid(format!(
                "prior has length {}, network has {} OD pairs",
                prior.len(),
                self.num_ods()
            )));
        }
        let mut od_pairs = self.od_pairs.clone();
        for (od, &p) in od_pairs.iter_mut().zip(prior) {
            od.prior_demand = p;
        }
        Network::new(
            self.edges.clone(),
            od_pairs,
            self.routes.clone(),
            self.measured_edges.clone(),
        )
    }

    fn owns(&self, route: &Route) -> bool {
        self.route_position(route.route_id)
            .is_some_and(|p| self.routes[p] == *route)
    }
}

/// Distance-based overlap of two routes: the free-flow length of the shared
/// edges divided by the length of the shorter route.
pub fn route_overlap(a: &Route, b: &Route, network: &Network) -> Result<f64> {
    for r in [a, b] {
        if !network.owns(r) {
            return Err(Error::invalid(format!(
                "route {} does not belong to the network",
                r.route_id
            )));
        }
    }
    let length = |r: &Route| -> f64 {
        r.edge_sequence
            .iter()
            .map(|id| network.edges[network.edge_pos[id]].free_flow_time)
            .sum()
    };
    let in_a: HashSet<u32> = a.edge_sequence.iter().copied().collect();
    let shared: f64 = b
        .edge_sequence
        .iter()
        .filter(|id| in_a.contains(id))
        .map(|id| network.edges[network.edge_pos[id]].free_flow_time)
        .sum();
    Ok((shared / length(a).min(length(b))).clamp(0.0, 1.0))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn edge(id: u32, t: f64, measured: bool) -> Edge {
        Edge {
            edge_id: id,
            free_flow_time: t,
            capacity: 1000.0,
            is_measured: measured,
        }
    }

    pub(crate) fn od(id: u32, prior: f64) -> OdPair {
        OdPair {
            od_id: id,
            origin_node: 0,
            destination_node: id,
            prior_demand: prior,
        }
    }

    pub(crate) fn route(id: u32, od_id: u32, edges: &[u32], t: f64) -> Route {
        Route {
            route_id: id,
            od_id,
            edge_sequence: edges.to_vec(),
            travel_time: t,
        }
    }

    /// One OD, routes {e1,e2} and {e3}, measured {e1,e3}.
    pub(crate) fn two_route_network() -> Network {
        Network::new(
            vec![edge(1, 60.0, true), edge(2, 60.0, false), edge(3, 180.0, true)],
            vec![od(1, 100.0)],
            vec![route(1, 1, &[1, 2], 120.0), route(2, 1, &[3], 180.0)],
            vec![1, 3],
        )
        .unwrap()
    }

    #[test]
    fn rejects_unknown_edge_in_route() {
        let err = Network::new(
            vec![edge(1, 10.0, false)],
            vec![od(1, 1.0)],
            vec![route(1, 1, &[2], 10.0)],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn rejects_repeated_edge_in_route() {
        let err = Network::new(
            vec![edge(1, 10.0, false), edge(2, 10.0, false)],
            vec![od(1, 1.0)],
            vec![route(1, 1, &[1, 2, 1], 30.0)],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("twice"));
    }

    #[test]
    fn rejects_od_without_routes() {
        let err = Network::new(
            vec![edge(1, 10.0, false)],
            vec![od(1, 1.0), od(2, 1.0)],
            vec![route(1, 1, &[1], 10.0)],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("OD 2"));
    }

    #[test]
    fn rejects_unflagged_measured_edge() {
        let err = Network::new(
            vec![edge(1, 10.0, false)],
            vec![od(1, 1.0)],
            vec![route(1, 1, &[1], 10.0)],
            vec![1],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn rejects_non_contiguous_od_ids() {
        let err = Network::new(
            vec![edge(1, 10.0, false)],
            vec![od(2, 1.0)],
            vec![route(1, 2, &[1], 10.0)],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("contiguous"));
    }

    #[test]
    fn measured_rows_follow_measured_order() {
        let net = two_route_network();
        assert_eq!(net.route_measured_rows(0), &[0]);
        assert_eq!(net.route_measured_rows(1), &[1]);
        assert_eq!(net.route_free_flow_time(0), 120.0);
    }

    #[test]
    fn json_round_trip_preserves_network() {
        let net = two_route_network();
        let text = serde_json::to_string(&net).unwrap();
        let back: Network = serde_json::from_str(&text).unwrap();
        assert_eq!(back.routes(), net.routes());
        assert_eq!(back.measured_edges(), net.measured_edges());
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["edges", "od_pairs", "routes", "measured_edges"] {
            assert!(value.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn invalid_json_network_is_rejected() {
        let text = r#"{"edges":[],"od_pairs":[{"od_id":1,"origin_node":0,"destination_node":1,"prior_demand":1.0}],"routes":[],"measured_edges":[]}"#;
        assert!(serde_json::from_str::<Network>(text).is_err());
    }

    #[test]
    fn overlap_examples() {
        let net = Network::new(
            vec![edge(1, 60.0, false), edge(2, 60.0, false), edge(3, 180.0, false), edge(4, 5.0, false)],
            vec![od(1, 1.0)],
            vec![
                route(1, 1, &[1, 2], 120.0),
                route(2, 1, &[1, 3], 240.0),
                route(3, 1, &[4], 5.0),
            ],
            vec![],
        )
        .unwrap();
        let r = net.routes();
        assert_eq!(route_overlap(&r[0], &r[0], &net).unwrap(), 1.0);
        assert_eq!(route_overlap(&r[0], &r[2], &net).unwrap(), 0.0);
        // 60 / min(120, 240)
        assert!((route_overlap(&r[0], &r[1], &net).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            route_overlap(&r[0], &r[1], &net).unwrap(),
            route_overlap(&r[1], &r[0], &net).unwrap()
        );
    }

    #[test]
    fn overlap_rejects_foreign_route() {
        let net = two_route_network();
        let foreign = route(99, 1, &[1], 60.0);
        assert!(route_overlap(&foreign, &net.routes()[0], &net).is_err());
    }
}
