//! Command-line driver: `generate`, `calibrate` and `evaluate`.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 numeric failure
//! (a calibration that aborted still writes its partial outputs).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::calibrate::{mix_seed, CalibrationHistory, CalibrationProblem, CalibratorConfig, Method};
use crate::error::{Error, Result};
use crate::experiment::{run_method, GenerateSpec, SyntheticExperiment};
use crate::io;
use crate::network::Network;
use crate::report::{export_best_od, export_convergence, export_history, export_scatter, fmt_sig, FitReport};
use crate::route_choice::{get_travel_times, ChoiceParams, TravelTimeProvider};
use crate::simulator::{simulate, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "odcal", version, about = "OD demand calibration against road counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic network, true OD, field counts and an experiment config.
    Generate(GenerateArgs),
    /// Calibrate OD demand as described by an experiment config.
    Calibrate(CalibrateArgs),
    /// Simulate one OD vector and score it against field counts.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario spec (JSON); defaults to the benchmark scale when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Replications averaged into the field counts.
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// linear-metamodel, spsa, lam or all.
    #[arg(long)]
    pub method: Option<MethodSelection>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replications per simulation call.
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// OD CSV `od_id,demand`.
    #[arg(long)]
    pub od: PathBuf,
    /// Counts CSV `edge_id,count`.
    #[arg(long)]
    pub counts: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replications: usize,
    /// Directory for the scatter artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MethodSelection {
    One(Method),
    All,
}

impl MethodSelection {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSelection::One(m) => vec![m],
            MethodSelection::All => Method::ALL.to_vec(),
        }
    }
}

impl std::str::FromStr for MethodSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(MethodSelection::All)
        } else {
            s.parse().map(MethodSelection::One)
        }
    }
}

impl TryFrom<String> for MethodSelection {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodSelection> for String {
    fn from(m: MethodSelection) -> String {
        match m {
            MethodSelection::One(m) => m.name().to_string(),
            MethodSelection::All => "all".to_string(),
        }
    }
}

/// Where the metamodel's exogenous travel times come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TravelTimeSource {
    #[default]
    FreeFlow,
    File { path: PathBuf },
    /// Loaded-network times at the prior demand.
    Simulator,
}

/// Ground truth of a synthetic experiment: counts are simulated from the
/// true OD and the prior is the truth times uniform noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTruth {
    pub true_od: PathBuf,
    pub prior_noise: (f64, f64),
    pub count_replications: usize,
    pub seed: u64,
}

impl Default for SyntheticTruth {
    fn default() -> Self {
        SyntheticTruth {
            true_od: PathBuf::from("true_od.csv"),
            prior_noise: (0.5, 1.5),
            count_replications: 10,
            seed: 0,
        }
    }
}

/// One calibration run. Relative paths resolve against the config's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: PathBuf,
    #[serde(default)]
    pub counts: Option<PathBuf>,
    #[serde(default)]
    pub synthetic_truth: Option<SyntheticTruth>,
    /// OD CSV overriding the network's prior demands.
    #[serde(default)]
    pub prior: Option<PathBuf>,
    #[serde(default)]
    pub travel_times: TravelTimeSource,
    #[serde(default = "default_method")]
    pub method: MethodSelection,
    #[serde(default)]
    pub calibrator: CalibratorConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub choice: ChoiceParams,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Overrides both the calibrator and simulator seeds when set.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_method() -> MethodSelection {
    MethodSelection::One(Method::LinearMetamodel)
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.network);
        resolve(&mut config.output_dir);
        if let Some(p) = config.counts.as_mut() {
            resolve(p);
        }
        if let Some(p) = config.prior.as_mut() {
            resolve(p);
        }
        if let Some(t) = config.synthetic_truth.as_mut() {
            resolve(&mut t.true_od);
        }
        if let TravelTimeSource::File { path } = &mut config.travel_times {
            resolve(path);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.is_some() == self.synthetic_truth.is_some() {
            return Err(Error::invalid(
                "exactly one of 'counts' and 'synthetic_truth' must be given",
            ));
        }
        let mut files = vec![&self.network];
        files.extend(&self.counts);
        files.extend(&self.prior);
        files.extend(self.synthetic_truth.as_ref().map(|t| &t.true_od));
        if let TravelTimeSource::File { path } = &self.travel_times {
            files.push(path);
        }
        if let Some(missing) = files.into_iter().find(|p| !p.is_file()) {
            return Err(Error::invalid(format!("file not found: {}", missing.display())));
        }
        self.calibrator.validate()?;
        self.sim.validate()
    }

    fn apply(&mut self, args: &CalibrateArgs) {
        if let Some(m) = args.method {
            self.method = m;
        }
        if let Some(n) = args.iterations {
            self.calibrator.max_iterations = n;
        }
        if let Some(s) = args.seed {
            self.seed = Some(s);
        }
        if let Some(out) = &args.out {
            self.output_dir = out.clone();
        }
        if let Some(r) = args.replications {
            self.sim.replications = r;
        }
        if let Some(s) = self.seed {
            self.calibrator.seed = s;
            self.sim.seed = s;
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| 0),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `network.json`, `true_od.csv`, `counts.csv`, `travel_times.csv`
/// and a ready-to-run `experiment.json` into `--out`.
pub fn cmd_generate(args: &GenerateArgs) -> Result<i32> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<GenerateSpec>(&text)?
        }
        None => GenerateSpec::benchmark(),
    };
    if let Some(r) = args.replications {
        spec.count_replications = r;
    }
    let exp = SyntheticExperiment::generate(&spec, args.seed)?;
    let out = &args.out;
    create_dir(out)?;
    exp.network.write_json_file(out.join("network.json"))?;
    io::write_od_vector(out.join("true_od.csv"), &exp.truth)?;
    io::write_counts(out.join("counts.csv"), &exp.network, &exp.field_counts)?;
    io::write_travel_times(out.join("travel_times.csv"), &exp.network, &exp.travel_times)?;
    let experiment = ExperimentConfig {
        network: "network.json".into(),
        counts: Some("counts.csv".into()),
        synthetic_truth: None,
        prior: None,
        travel_times: TravelTimeSource::File {
            path: "travel_times.csv".into(),
        },
        method: MethodSelection::All,
        calibrator: CalibratorConfig {
            seed: args.seed,
            ..CalibratorConfig::default()
        },
        sim: SimConfig {
            seed: args.seed,
            ..spec.sim.clone()
        },
        choice: spec.choice,
        output_dir: "out".into(),
        seed: None,
    };
    let path = out.join("experiment.json");
    fs::write(&path, serde_json::to_string_pretty(&experiment)? + "\n").map_err(|e| Error::io(&path, e))?;

    let net = &exp.network;
    println!(
        "od_pairs={}, edges={}, routes={}, measured={}",
        net.num_ods(),
        net.edges().len(),
        net.num_routes(),
        net.num_measured()
    );
    Ok(0)
}

struct LoadedExperiment {
    network: Network,
    field_counts: Vec<f64>,
    prior: Vec<f64>,
}

fn load_experiment(config: &ExperimentConfig) -> Result<LoadedExperiment> {
    let network = Network::from_json_file(&config.network)?;
    let mut prior = match &config.prior {
        Some(p) => io::read_od_vector(p, network.num_ods())?,
        None => network.prior(),
    };
    let field_counts = match (&config.counts, &config.synthetic_truth) {
        (Some(path), None) => io::read_counts(path, &network)?,
        (None, Some(truth)) => {
            let true_od = io::read_od_vector(&truth.true_od, network.num_ods())?;
            let (lo, hi) = truth.prior_noise;
            if !(lo >= 0.0 && hi >= lo) {
                return Err(Error::invalid("prior_noise must satisfy 0 <= lo <= hi"));
            }
            if config.prior.is_none() {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(truth.seed, 1));
                prior = true_od
                    .iter()
                    .map(|t| t * if hi > lo { rng.random_range(lo..hi) } else { lo })
                    .collect();
            }
            let sim = SimConfig {
                replications: truth.count_replications,
                seed: mix_seed(truth.seed, 2),
                ..config.sim.clone()
            };
            simulate(&network, &true_od, &sim, &config.choice)?.measured_counts
        }
        _ => unreachable!("validated"),
    };
    Ok(LoadedExperiment {
        network,
        field_counts,
        prior,
    })
}

/// Runs the configured method(s) and writes per-method history, best-OD and
/// scatter files plus a combined convergence chart.
pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<i32> {
    let mut config = ExperimentConfig::load(&args.config)?;
    config.apply(args);
    config.validate()?;
    let loaded = load_experiment(&config)?;
    let problem = CalibrationProblem::new(&loaded.network, loaded.field_counts.clone(), loaded.prior.clone())?;
    let provider = match &config.travel_times {
        TravelTimeSource::FreeFlow => TravelTimeProvider::FreeFlow,
        TravelTimeSource::File { path } => TravelTimeProvider::File(path.clone()),
        TravelTimeSource::Simulator => TravelTimeProvider::Simulator {
            demand: config.calibrator.resolved_bounds(&loaded.prior)?.projected(&loaded.prior),
            config: config.sim.clone(),
            params: config.choice,
        },
    };
    let times = get_travel_times(&provider, &loaded.network)?;

    let mut histories: Vec<CalibrationHistory> = Vec::new();
    for method in config.method.methods() {
        let h = run_method(method, &problem, &config.calibrator, &times, &config.choice, &config.sim)?;
        histories.push(h);
    }

    let out = &config.output_dir;
    create_dir(out)?;
    let mut code = 0;
    for h in &histories {
        let name = h.method.name();
        export_history(h, out.join(format!("history_{name}.csv")))?;
        export_best_od(h, out.join(format!("best_od_{name}.csv")))?;
        let best = h.best();
        let report = FitReport::new(&loaded.network, &loaded.field_counts, &best.counts, &best.point, &loaded.prior)?;
        export_scatter(
            &report,
            out.join(format!("scatter_{name}.csv")),
            out.join(format!("scatter_{name}.svg")),
        )?;
        println!(
            "{name}: initial nRMSE {}%, best nRMSE {}% (iteration {}, {} simulation calls)",
            fmt_sig(h.initial().nrmse),
            fmt_sig(best.nrmse),
            best.iteration,
            h.sim_calls()
        );
        if let Some(reason) = &h.aborted {
            eprintln!("{name}: aborted: {reason}");
            code = 3;
        }
    }
    export_convergence(&histories, out.join("convergence.csv"), out.join("convergence.svg"))?;
    Ok(code)
}

/// Simulates `--od`, prints its nRMSE against `--counts` and returns the report.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<FitReport> {
    let network = Network::from_json_file(&args.network)?;
    let demand = io::read_od_vector(&args.od, network.num_ods())?;
    let counts = io::read_counts(&args.counts, &network)?;
    let sim = SimConfig {
        replications: args.replications,
        seed: args.seed,
        ..SimConfig::default()
    };
    sim.validate()?;
    let result = simulate(&network, &demand, &sim, &ChoiceParams::default())?;
    let report = FitReport::new(&network, &counts, &result.measured_counts, &demand, &network.prior())?;
    if let Some(out) = &args.out {
        create_dir(out)?;
        export_scatter(&report, out.join("scatter.csv"), out.join("scatter.svg"))?;
    }
    println!("nRMSE {}%", fmt_sig(report.nrmse));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_selection_parses() {
        assert_eq!("all".parse::<MethodSelection>().unwrap(), MethodSelection::All);
        assert_eq!(
            "lam".parse::<MethodSelection>().unwrap(),
            MethodSelection::One(Method::Lam)
        );
        assert!("ols".parse::<MethodSelection>().is_err());
        assert_eq!(MethodSelection::All.methods().len(), 3);
    }

    #[test]
    fn config_requires_exactly_one_count_source() {
        let dir = tempfile::tempdir().unwrap();
        let net = dir.path().join("n.json");
        fs::write(&net, "{}").unwrap();
        let cfg_path = dir.path().join("c.json");
        fs::write(&cfg_path, r#"{"network": "n.json"}"#).unwrap();
        let cfg = ExperimentConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.network, net);
        assert!(cfg.validate().is_err());
        fs::write(&cfg_path, r#"{"network": "n.json", "counts": "missing.csv"}"#).unwrap();
        assert!(ExperimentConfig::load(&cfg_path).unwrap().validate().is_err());
        fs::write(&cfg_path, r#"{"network": "n.json", "bogus": 1}"#).unwrap();
        assert!(ExperimentConfig::load(&cfg_path).is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(r#"{"network": "n.json", "counts": "c.csv", "seed": 4}"#).unwrap();
        let args = CalibrateArgs {
            config: "x".into(),
            method: Some(MethodSelection::One(Method::Spsa)),
            iterations: Some(3),
            seed: None,
            out: Some("o".into()),
            replications: Some(2),
        };
        cfg.apply(&args);
        assert_eq!(cfg.method, MethodSelection::One(Method::Spsa));
        assert_eq!(cfg.calibrator.max_iterations, 3);
        assert_eq!((cfg.calibrator.seed, cfg.sim.seed), (4, 4));
        assert_eq!(cfg.sim.replications, 2);
        assert_eq!(cfg.output_dir, PathBuf::from("o"));
    }
}
