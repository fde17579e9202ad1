//! Multinomial logit route choice and exogenous travel-time providers.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::simulator::{self, SimConfig};

/// Logit travel-time sensitivity.
///
/// `theta` is stored per second. Files carry it per minute
/// (`theta_per_minute`), which is the unit the default is quoted in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "ChoiceParamsFile", into = "ChoiceParamsFile")]
pub struct ChoiceParams {
    pub theta: f64,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
struct ChoiceParamsFile {
    theta_per_minute: f64,
}

impl Default for ChoiceParamsFile {
    fn default() -> Self {
        ChoiceParamsFile {
            theta_per_minute: -0.1,
        }
    }
}

impl From<ChoiceParamsFile> for ChoiceParams {
    fn from(f: ChoiceParamsFile) -> Self {
        ChoiceParams::per_minute(f.theta_per_minute)
    }
}

impl From<ChoiceParams> for ChoiceParamsFile {
    fn from(p: ChoiceParams) -> Self {
        ChoiceParamsFile {
            theta_per_minute: p.theta * 60.0,
        }
    }
}

impl ChoiceParams {
    pub fn per_second(theta: f64) -> Self {
        ChoiceParams { theta }
    }

    pub fn per_minute(theta: f64) -> Self {
        ChoiceParams { theta: theta / 60.0 }
    }
}

impl Default for ChoiceParams {
    /// θ = −0.1 per minute.
    fn default() -> Self {
        ChoiceParams::per_minute(-0.1)
    }
}

/// Where a travel-time table came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSource {
    FreeFlow,
    File,
    Simulator,
}

/// Route travel times in seconds, aligned with `Network::routes()`.
#[derive(Clone, Debug, PartialEq)]
pub struct TravelTimeTable {
    times: Vec<f64>,
    source: TimeSource,
}

impl TravelTimeTable {
    /// Builds a table from times aligned with the network's route order.
    pub fn from_aligned(network: &Network, times: Vec<f64>, source: TimeSource) -> Result<Self> {
        if times.len() != network.num_routes() {
            return Err(Error::invalid(format!(
                "{} travel times for {} routes",
                times.len(),
                network.num_routes()
            )));
        }
        check_positive(network, &times)?;
        Ok(TravelTimeTable { times, source })
    }

    /// Builds a table from a `route_id → seconds` map. Every route must be
    /// covered; ids unknown to the network are rejected.
    pub fn from_route_map(
        network: &Network,
        map: &HashMap<u32, f64>,
        source: TimeSource,
    ) -> Result<Self> {
        if let Some(id) = map.keys().find(|id| network.route_position(**id).is_none()) {
            return Err(Error::invalid(format!("travel time given for unknown route {id}")));
        }
        let missing: Vec<u32> = network
            .routes()
            .iter()
            .map(|r| r.route_id)
            .filter(|id| !map.contains_key(id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Coverage { missing });
        }
        let times = network.routes().iter().map(|r| map[&r.route_id]).collect();
        TravelTimeTable::from_aligned(network, times, source)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.times
    }

    pub fn source(&self) -> TimeSource {
        self.source
    }

    /// Pairs of `(route_id, seconds)` in route order.
    pub fn entries<'a>(&'a self, network: &'a Network) -> impl Iterator<Item = (u32, f64)> + 'a {
        network
            .routes()
            .iter()
            .zip(&self.times)
            .map(|(r, &t)| (r.route_id, t))
    }
}

fn check_positive(network: &Network, times: &[f64]) -> Result<()> {
    match times.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
        Some(r) => Err(Error::invalid(format!(
            "route {} has travel time {} (must be > 0)",
            network.routes()[r].route_id,
            times[r]
        ))),
        None => Ok(()),
    }
}

/// Route choice probabilities aligned with `Network::routes()`.
#[derive(Clone, Debug, PartialEq)]
pub struct RouteProbabilities {
    values: Vec<f64>,
}

impl RouteProbabilities {
    /// Wraps probabilities aligned with the network's route order. Validation
    /// happens where they are consumed.
    pub fn new(values: Vec<f64>) -> Self {
        RouteProbabilities { values }
    }

    /// Builds aligned probabilities from a `route_id → probability` map.
    pub fn from_route_map(network: &Network, map: &HashMap<u32, f64>) -> Result<Self> {
        let values = network
            .routes()
            .iter()
            .map(|r| {
                map.get(&r.route_id).copied().ok_or_else(|| {
                    Error::invalid(format!("missing probability for route {}", r.route_id))
                })
            })
            .collect::<Result<_>>()?;
        Ok(RouteProbabilities { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Logit probabilities `exp(θ t_r) / Σ_{j of the same OD} exp(θ t_j)`.
pub fn route_probabilities(
    network: &Network,
    times: &TravelTimeTable,
    params: &ChoiceParams,
) -> Result<RouteProbabilities> {
    if times.as_slice().len() != network.num_routes() {
        return Err(Error::invalid(format!(
            "{} travel times for {} routes",
            times.as_slice().len(),
            network.num_routes()
        )));
    }
    logit(network, times.as_slice(), params.theta).map(RouteProbabilities::new)
}

/// Logit over raw aligned times, stabilised by subtracting the largest
/// utility within each OD's choice set.
pub(crate) fn logit(network: &Network, times: &[f64], theta: f64) -> Result<Vec<f64>> {
    let mut p = vec![0.0; network.num_routes()];
    for z in 0..network.num_ods() {
        let routes = network.routes_of_od(z);
        let utilities: Vec<f64> = routes.iter().map(|&r| theta * times[r]).collect();
        let top = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = utilities.iter().map(|u| (u - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        if !top.is_finite() || !total.is_finite() || total <= 0.0 {
            return Err(Error::Numeric(format!(
                "logit for OD {} is not finite (theta {theta})",
                z + 1
            )));
        }
        for (&r, w) in routes.iter().zip(weights) {
            p[r] = w / total;
        }
    }
    Ok(p)
}

/// Source of exogenous route travel times. No provider touches the network.
#[derive(Clone, Debug)]
pub enum TravelTimeProvider {
    /// Sum of edge free-flow times along each route.
    FreeFlow,
    /// Two-column CSV `route_id,travel_time_seconds`.
    File(PathBuf),
    /// Converged route times of the simulator's volume-delay fixed point at
    /// the given demand.
    Simulator {
        demand: Vec<f64>,
        config: SimConfig,
        params: ChoiceParams,
    },
}

pub fn get_travel_times(provider: &TravelTimeProvider, network: &Network) -> Result<TravelTimeTable> {
    match provider {
        TravelTimeProvider::FreeFlow => {
            let times = (0..network.num_routes())
                .map(|r| network.route_free_flow_time(r))
                .collect();
            TravelTimeTable::from_aligned(network, times, TimeSource::FreeFlow)
        }
        TravelTimeProvider::File(path) => crate::io::read_travel_times(path, network),
        TravelTimeProvider::Simulator {
            demand,
            config,
            params,
        } => {
            let state = simulator::equilibrate(network, demand, config, params)?;
            TravelTimeTable::from_aligned(network, state.route_times, TimeSource::Simulator)
        }
    }
}
