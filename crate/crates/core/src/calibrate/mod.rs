//! Calibration drivers sharing one evaluation-budget protocol.
//!
//! Every run starts by simulating the (box-projected) prior. After that:
//!
//! | method            | simulation calls per iteration | total for N iterations |
//! |-------------------|--------------------------------|------------------------|
//! | linear metamodel  | 1                              | N + 1                  |
//! | LAM               | 1                              | N + 1                  |
//! | SPSA              | 2                              | 2N + 1                 |
//!
//! A [`CalibrationHistory`] keeps one record per iteration (iteration 0 is
//! the prior) with the cumulative number of simulation calls, so runs can be
//! compared per call.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metamodel::{regularization, Bounds, FitSettings, SolverSettings};
use crate::network::Network;
use crate::report::nrmse;
use crate::route_choice::ChoiceParams;
use crate::simulator::{simulate, SimConfig, SimulationResult};

mod lam;
mod linear_metamodel;
mod spsa;

pub use lam::{msa_update, run_lam, solve_lam_subproblem, MsaIndexing};
pub use linear_metamodel::run_linear_metamodel;
pub use spsa::run_spsa;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LinearMetamodel,
    Spsa,
    Lam,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::LinearMetamodel, Method::Spsa, Method::Lam];

    pub fn name(self) -> &'static str {
        match self {
            Method::LinearMetamodel => "linear-metamodel",
            Method::Spsa => "spsa",
            Method::Lam => "lam",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// SPSA gains `a_k = a / (A + k + 1)^α`, `c_k = c / (k + 1)^γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpsaConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub c: f64,
    pub a: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        SpsaConfig {
            alpha: 0.602,
            gamma: 0.101,
            c: 1.9,
            a: 0.16,
            big_a: 0.02,
        }
    }
}

impl SpsaConfig {
    /// `(a_k, c_k)` for the 0-based iteration `k`.
    pub fn gains(&self, k: usize) -> (f64, f64) {
        let k = k as f64;
        (
            self.a / (self.big_a + k + 1.0).powf(self.alpha),
            self.c / (k + 1.0).powf(self.gamma),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LamConfig {
    pub learning_rate: f64,
    pub inner_gd_steps: usize,
    /// Early stop on the projected-gradient norm.
    pub tolerance: f64,
    pub msa: MsaIndexing,
}

impl Default for LamConfig {
    fn default() -> Self {
        LamConfig {
            learning_rate: 0.001,
            inner_gd_steps: 5000,
            tolerance: 1e-6,
            msa: MsaIndexing::AsPrinted,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetamodelConfig {
    pub fit: FitSettings,
    pub solver: SolverSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibratorConfig {
    pub max_iterations: usize,
    /// Regularisation weight δ.
    pub delta: f64,
    /// Feasible box; `None` means `[0, 3·max x̃]` per OD.
    pub bounds: Option<Bounds>,
    pub seed: u64,
    pub spsa: SpsaConfig,
    pub lam: LamConfig,
    pub metamodel: MetamodelConfig,
}

impl Default for CalibratorConfig {
    fn default() -> Self {
        CalibratorConfig {
            max_iterations: 15,
            delta: 1.0,
            bounds: None,
            seed: 0,
            spsa: SpsaConfig::default(),
            lam: LamConfig::default(),
            metamodel: MetamodelConfig::default(),
        }
    }
}

impl CalibratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("delta must be >= 0"));
        }
        let s = &self.spsa;
        if !(s.c > 0.0 && s.a > 0.0 && s.alpha > 0.0 && s.gamma > 0.0 && s.big_a >= 0.0) {
            return Err(Error::invalid("SPSA gains must be positive"));
        }
        if !(self.lam.learning_rate > 0.0) {
            return Err(Error::invalid("LAM learning rate must be > 0"));
        }
        Ok(())
    }

    pub(crate) fn resolved_bounds(&self, prior: &[f64]) -> Result<Bounds> {
        let bounds = self
            .bounds
            .clone()
            .unwrap_or_else(|| Bounds::around_prior(prior));
        bounds.validate()?;
        if bounds.len() != prior.len() {
            return Err(Error::invalid(format!(
                "bounds cover {} ODs, prior has {}",
                bounds.len(),
                prior.len()
            )));
        }
        Ok(bounds)
    }
}

/// Network, field counts `y` and prior `x̃` of one calibration.
#[derive(Clone, Debug)]
pub struct CalibrationProblem<'a> {
    pub network: &'a Network,
    pub field_counts: Vec<f64>,
    pub prior: Vec<f64>,
}

impl<'a> CalibrationProblem<'a> {
    pub fn new(network: &'a Network, field_counts: Vec<f64>, prior: Vec<f64>) -> Result<Self> {
        if field_counts.len() != network.num_measured() {
            return Err(Error::invalid(format!(
                "{} field counts for {} measured edges",
                field_counts.len(),
                network.num_measured()
            )));
        }
        if prior.len() != network.num_ods() {
            return Err(Error::invalid(format!(
                "prior has {} entries for {} OD pairs",
                prior.len(),
                network.num_ods()
            )));
        }
        if field_counts.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::invalid("field counts must be finite and >= 0"));
        }
        if field_counts.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("field counts have zero mean"));
        }
        Ok(CalibrationProblem {
            network,
            field_counts,
            prior,
        })
    }

    /// Uses the network's OD prior demands as `x̃`.
    pub fn with_network_prior(network: &'a Network, field_counts: Vec<f64>) -> Result<Self> {
        CalibrationProblem::new(network, field_counts, network.prior())
    }
}

/// `(1/|I|) Σᵢ (yᵢ − countsᵢ)² + (δ/|Z|) Σ_z (x_z − x̃_z)²`, with the counts
/// taken from the replication average of `sim`.
pub fn objective_estimate(
    x: &[f64],
    sim: &SimulationResult,
    field_counts: &[f64],
    prior: &[f64],
    delta: f64,
) -> Result<f64> {
    objective_from_counts(x, &sim.measured_counts, field_counts, prior, delta)
}

pub fn objective_from_counts(
    x: &[f64],
    counts: &[f64],
    field_counts: &[f64],
    prior: &[f64],
    delta: f64,
) -> Result<f64> {
    if counts.len() != field_counts.len() || x.len() != prior.len() {
        return Err(Error::invalid(format!(
            "objective needs |counts| = |y| ({} vs {}) and |x| = |x̃| ({} vs {})",
            counts.len(),
            field_counts.len(),
            x.len(),
            prior.len()
        )));
    }
    let fit = if field_counts.is_empty() {
        0.0
    } else {
        field_counts
            .iter()
            .zip(counts)
            .map(|(y, c)| (y - c).powi(2))
            .sum::<f64>()
            / field_counts.len() as f64
    };
    Ok(fit + regularization(x, prior, delta))
}

/// The expensive black box mapping demand to measured counts.
pub trait CountSimulator {
    fn simulate(&mut self, demand: &[f64]) -> Result<SimulationResult>;

    /// Simulation calls made so far.
    fn calls(&self) -> usize;
}

/// The stochastic simulator. Call `n` runs with a seed derived from
/// `(config.seed, n)`, so a sequence of calls is reproducible.
pub struct StochasticSimulator<'a> {
    network: &'a Network,
    config: SimConfig,
    params: ChoiceParams,
    calls: usize,
}

impl<'a> StochasticSimulator<'a> {
    pub fn new(network: &'a Network, config: SimConfig, params: ChoiceParams) -> Self {
        StochasticSimulator {
            network,
            config,
            params,
            calls: 0,
        }
    }
}

/// SplitMix64 finaliser, used to spread call indices over the seed space.
pub(crate) fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl CountSimulator for StochasticSimulator<'_> {
    fn simulate(&mut self, demand: &[f64]) -> Result<SimulationResult> {
        let config = self.config.with_seed(mix_seed(self.config.seed, self.calls as u64));
        self.calls += 1;
        simulate(self.network, demand, &config, &self.params)
    }

    fn calls(&self) -> usize {
        self.calls
    }
}

/// Noise-free linear world: counts are exactly `P̃ x` for fixed route
/// probabilities.
pub struct ExpectedCounts<'a> {
    network: &'a Network,
    probabilities: Vec<f64>,
    route_times: Vec<f64>,
    calls: usize,
}

impl<'a> ExpectedCounts<'a> {
    pub fn new(network: &'a Network, probabilities: Vec<f64>, route_times: Vec<f64>) -> Self {
        ExpectedCounts {
            network,
            probabilities,
            route_times,
            calls: 0,
        }
    }
}

impl CountSimulator for ExpectedCounts<'_> {
    fn simulate(&mut self, demand: &[f64]) -> Result<SimulationResult> {
        self.calls += 1;
        SimulationResult::expected(self.network, demand, &self.probabilities, &self.route_times)
    }

    fn calls(&self) -> usize {
        self.calls
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cumulative simulation calls after this iteration.
    pub sim_calls: usize,
    /// Objective estimate of the simulated point.
    pub objective: f64,
    /// nRMSE (percent) of the simulated point's counts.
    pub nrmse: f64,
    /// Lowest objective seen up to and including this record.
    pub best_objective: f64,
    /// The simulated point this record scores.
    pub point: Vec<f64>,
    /// Method state after the iteration (equals `point` except for SPSA).
    pub iterate: Vec<f64>,
    pub counts: Vec<f64>,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationHistory {
    pub method: Method,
    pub records: Vec<IterationRecord>,
    /// Index into `records` of the best point (earliest on ties).
    pub best_index: usize,
    /// Set when the run stopped early; the records up to that point remain valid.
    pub aborted: Option<String>,
}

impl CalibrationHistory {
    pub fn best(&self) -> &IterationRecord {
        &self.records[self.best_index]
    }

    pub fn best_point(&self) -> &[f64] {
        &self.best().point
    }

    pub fn best_objective(&self) -> f64 {
        self.best().best_objective
    }

    pub fn initial(&self) -> &IterationRecord {
        &self.records[0]
    }

    pub fn sim_calls(&self) -> usize {
        self.records.last().map_or(0, |r| r.sim_calls)
    }

    /// nRMSE of the best point found up to each record, by objective.
    pub fn best_so_far_nrmse(&self) -> Vec<f64> {
        let mut best: Option<&IterationRecord> = None;
        self.records
            .iter()
            .map(|r| {
                if best.is_none_or(|b| r.objective < b.objective) {
                    best = Some(r);
                }
                best.unwrap().nrmse
            })
            .collect()
    }
}

struct Recorder<'p> {
    method: Method,
    problem: &'p CalibrationProblem<'p>,
    delta: f64,
    started: Instant,
    records: Vec<IterationRecord>,
    best_index: usize,
}

impl<'p> Recorder<'p> {
    fn new(method: Method, problem: &'p CalibrationProblem<'p>, delta: f64) -> Self {
        Recorder {
            method,
            problem,
            delta,
            started: Instant::now(),
            records: Vec::new(),
            best_index: 0,
        }
    }

    fn objective(&self, x: &[f64], sim: &SimulationResult) -> Result<f64> {
        objective_estimate(x, sim, &self.problem.field_counts, &self.problem.prior, self.delta)
    }

    fn push(
        &mut self,
        iteration: usize,
        point: &[f64],
        iterate: &[f64],
        objective: f64,
        counts: &[f64],
        sim_calls: usize,
    ) -> Result<()> {
        let score = nrmse(&self.problem.field_counts, counts)?;
        let best_objective = match self.records.get(self.best_index) {
            Some(best) if best.objective <= objective => best.objective,
            _ => {
                self.best_index = self.records.len();
                objective
            }
        };
        self.records.push(IterationRecord {
            iteration,
            sim_calls,
            objective,
            nrmse: score,
            best_objective,
            point: point.to_vec(),
            iterate: iterate.to_vec(),
            counts: counts.to_vec(),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        });
        Ok(())
    }

    fn best_point(&self) -> &[f64] {
        &self.records[self.best_index].point
    }

    fn finish(self, aborted: Option<Error>) -> CalibrationHistory {
        CalibrationHistory {
            method: self.method,
            records: self.records,
            best_index: self.best_index,
            aborted: aborted.map(|e| e.to_string()),
        }
    }
}
