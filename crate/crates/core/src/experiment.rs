//! Synthetic experiments: a generated network with a known true OD, the
//! field counts it produces, and a perturbed prior to calibrate from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibrate::{
    mix_seed, run_lam, run_linear_metamodel, run_spsa, CalibrationHistory, CalibrationProblem, CalibratorConfig,
    Method, StochasticSimulator,
};
use crate::error::{Error, Result};
use crate::network::{generate_synthetic_network, Network, ScenarioSpec};
use crate::route_choice::{get_travel_times, ChoiceParams, TravelTimeProvider, TravelTimeTable};
use crate::simulator::{simulate, SimConfig, SimulationResult};

/// Which exogenous travel times the metamodel's assignment matrix uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExogenousTimes {
    /// Uncongested route times.
    FreeFlow,
    /// Route times of the loaded network at the true demand, standing in for
    /// an observed travel-time source.
    #[default]
    Observed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateSpec {
    pub scenario: ScenarioSpec,
    /// True demand is uniform on this range (veh/h).
    pub truth_range: (f64, f64),
    /// Prior = truth × U(prior_noise).
    pub prior_noise: (f64, f64),
    pub sim: SimConfig,
    pub choice: ChoiceParams,
    /// Replications averaged into the field counts.
    pub count_replications: usize,
    pub travel_times: ExogenousTimes,
}

impl Default for GenerateSpec {
    fn default() -> Self {
        GenerateSpec {
            scenario: ScenarioSpec::default(),
            truth_range: (50.0, 500.0),
            prior_noise: (0.5, 1.5),
            sim: SimConfig::default(),
            choice: ChoiceParams::default(),
            count_replications: 10,
            travel_times: ExogenousTimes::default(),
        }
    }
}

impl GenerateSpec {
    /// Benchmark scale: about 40 ODs, 150 edges, 3 routes per OD and 25
    /// counters.
    pub fn benchmark() -> Self {
        GenerateSpec {
            scenario: ScenarioSpec {
                routes_per_od: 3,
                measured_fraction: 0.2,
                ..ScenarioSpec::default()
            },
            ..GenerateSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.truth_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid("truth_range must satisfy 0 <= lo <= hi"));
        }
        let (lo, hi) = self.prior_noise;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid("prior_noise must satisfy 0 <= lo <= hi"));
        }
        if self.count_replications == 0 {
            return Err(Error::invalid("count_replications must be >= 1"));
        }
        self.sim.validate()
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticExperiment {
    /// Network whose OD priors hold the perturbed prior.
    pub network: Network,
    pub truth: Vec<f64>,
    pub prior: Vec<f64>,
    /// Replication-averaged counts at the true demand, in measured-row order.
    pub field_counts: Vec<f64>,
    pub travel_times: TravelTimeTable,
    /// The simulation that produced `field_counts`.
    pub count_simulation: SimulationResult,
}

impl SyntheticExperiment {
    /// Builds the whole experiment from one seed.
    pub fn generate(spec: &GenerateSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let base = generate_synthetic_network(&spec.scenario, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
        let truth: Vec<f64> = (0..base.num_ods()).map(|_| uniform(&mut rng, spec.truth_range)).collect();
        let prior: Vec<f64> = truth.iter().map(|t| t * uniform(&mut rng, spec.prior_noise)).collect();
        let network = base.with_prior(&prior)?;

        let count_config = SimConfig {
            replications: spec.count_replications,
            seed: mix_seed(seed, 2),
            ..spec.sim.clone()
        };
        let count_simulation = simulate(&network, &truth, &count_config, &spec.choice)?;
        let provider = match spec.travel_times {
            ExogenousTimes::FreeFlow => TravelTimeProvider::FreeFlow,
            ExogenousTimes::Observed => TravelTimeProvider::Simulator {
                demand: truth.clone(),
                config: spec.sim.clone(),
                params: spec.choice,
            },
        };
        let travel_times = get_travel_times(&provider, &network)?;
        Ok(SyntheticExperiment {
            field_counts: count_simulation.measured_counts.clone(),
            network,
            truth,
            prior,
            travel_times,
            count_simulation,
        })
    }

    pub fn problem(&self) -> Result<CalibrationProblem<'_>> {
        CalibrationProblem::new(&self.network, self.field_counts.clone(), self.prior.clone())
    }
}

/// Runs one calibrator against the stochastic simulator.
///
/// `times` only feeds the linear metamodel; the other methods ignore it.
pub fn run_method(
    method: Method,
    problem: &CalibrationProblem,
    config: &CalibratorConfig,
    times: &TravelTimeTable,
    params: &ChoiceParams,
    sim_config: &SimConfig,
) -> Result<CalibrationHistory> {
    sim_config.validate()?;
    let mut sim = StochasticSimulator::new(problem.network, sim_config.clone(), *params);
    match method {
        Method::LinearMetamodel => run_linear_metamodel(problem, config, times, params, &mut sim),
        Method::Spsa => run_spsa(problem, config, &mut sim),
        Method::Lam => run_lam(problem, config, &mut sim),
    }
}
