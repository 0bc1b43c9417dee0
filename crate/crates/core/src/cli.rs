//! The `outage` command line: infer, simulate, calibrate and evaluate.
//!
//! Exit codes: 0 success, 2 bad input (parse, validation, usage), 3 the
//! evidence has zero support under the model, 4 runtime failure. The worker
//! count of the shared thread pool comes from `OUTAGE_WORKERS`.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bn::{BayesNet, BnError, FactorTables};
use crate::calibration::{calibrate_iterations, CalibrationConfig, CalibrationError};
use crate::evidence::{EvidenceError, EvidenceSet};
use crate::exact::{exact_inference, ExactError, DEFAULT_LIMIT};
use crate::feeder::{FeederTopology, TopologyError};
use crate::gibbs::{
    decide_and_locate, locate, GibbsConfig, GibbsError, PosteriorEstimate, Sampler, ScanOrder,
};
use crate::metrics::{aggregate, confusion, metric_csv, MetricRow, MetricsError, ScenarioOutcome};
use crate::params::{ModelParams, ParamsError};
use crate::scenario::{
    generate_topology, run_monte_carlo, simulated_cases, ErrorRates, ScenarioError, ScenarioSpec,
    TopologySpec,
};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "OUTAGE_WORKERS";

pub const RUNTIME_CSV_HEADER: &str =
    "feeder,branches,customers,observability,n_outages,scenarios,mean_seconds";
pub const EVALUATION_CSV_HEADER: &str =
    "scenarios,accuracy,precision,recall,f1,system_accuracy,undefined_precision,undefined_recall";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("zero support: {0}")]
    ZeroSupport(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input { .. } => 2,
            CliError::ZeroSupport(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    fn input(path: &Path, message: impl ToString) -> Self {
        CliError::Input {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }
}

impl From<GibbsError> for CliError {
    fn from(e: GibbsError) -> Self {
        match e {
            GibbsError::Net(BnError::ZeroSupport(at)) => CliError::ZeroSupport(at),
            GibbsError::Net(e) => CliError::Usage(e.to_string()),
            GibbsError::Config(_) | GibbsError::EmptyRetained => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ExactError> for CliError {
    fn from(e: ExactError) -> Self {
        match e {
            ExactError::TooLarge { .. } => CliError::Usage(e.to_string()),
            ExactError::ZeroEvidence => CliError::ZeroSupport("every joint state".into()),
            ExactError::Net(BnError::ZeroSupport(at)) => CliError::ZeroSupport(at),
            ExactError::Net(e) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Sampler(g) => g.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Spec(m) => CliError::Usage(m),
            ScenarioError::Io(m) => CliError::Runtime(m),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "outage",
    version,
    about = "Outage location on radial distribution feeders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posterior de-energization probabilities and outage locations.
    Infer(InferArgs),
    /// Monte-Carlo scenarios with metrics and runtimes.
    Simulate(SimulateArgs),
    /// Choose the number of sweeps from the convergence diagnostic.
    Calibrate(CalibrateArgs),
    /// Score prediction files against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanArg {
    Topo,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Causes,
    States,
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    /// Sweeps per chain.
    #[arg(long, default_value_t = 4000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Fraction of each chain discarded before counting.
    #[arg(long = "burn-in", default_value_t = 0.0)]
    pub burn_in: f64,
    #[arg(long, value_enum, default_value_t = ScanArg::Topo)]
    pub scan: ScanArg,
    #[arg(long, value_enum, default_value_t = SamplerArg::Causes)]
    pub sampler: SamplerArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SamplerArgs {
    pub fn gibbs(&self) -> GibbsConfig {
        GibbsConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            scan_order: self.scan_order(),
            sampler: self.sampler(),
            chains: self.chains,
            seed: self.seed,
            keep_samples: false,
        }
    }

    fn scan_order(&self) -> ScanOrder {
        match self.scan {
            ScanArg::Topo => ScanOrder::Topological,
            ScanArg::Random => ScanOrder::Random,
        }
    }

    fn sampler(&self) -> Sampler {
        match self.sampler {
            SamplerArg::Causes => Sampler::Causes,
            SamplerArg::States => Sampler::States,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    /// Feeder topology file; repeat for several feeders.
    #[arg(long, required = true)]
    pub topology: Vec<PathBuf>,
    /// Evidence file, one per topology in the same order.
    #[arg(long, required = true)]
    pub evidence: Vec<PathBuf>,
    /// Model parameter file; built-in defaults otherwise.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Enumerate the posterior exactly instead of sampling.
    #[arg(long)]
    pub exact: bool,
    /// Largest number of unknowns `--exact` will enumerate.
    #[arg(long = "exact-limit", default_value_t = DEFAULT_LIMIT)]
    pub exact_limit: usize,
    /// Output directory; the branch CSV goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Feeder topology file; repeat for several feeders.
    #[arg(long)]
    pub topology: Vec<PathBuf>,
    /// Also simulate generated feeders of these sizes, e.g. `17,51,164`.
    #[arg(long, value_delimiter = ',')]
    pub generate: Vec<usize>,
    /// Customers per generated branch, `min-max`.
    #[arg(long, default_value = "6-18", value_parser = parse_range)]
    pub customers: (usize, usize),
    /// Seed of generated topologies.
    #[arg(long = "topology-seed", default_value_t = 1)]
    pub topology_seed: u64,
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Smart-meter fractions, e.g. `0.25,0.5,0.75`.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub observability: Vec<f64>,
    #[arg(long = "n-scenarios", default_value_t = 100)]
    pub n_scenarios: usize,
    /// Coinciding outages per scenario: `k`, `a,b,c` or `a..b`.
    #[arg(long = "n-outages", default_value = "1", value_parser = parse_count_list)]
    pub n_outages: CountList,
    /// Error rates `human_false,nlp_error,ami_fail`.
    #[arg(long = "error-rates", value_delimiter = ',', num_args = 1)]
    pub error_rates: Vec<f64>,
    /// True report rate per minute; twice the model rate when absent.
    #[arg(long = "report-lambda")]
    pub report_lambda: Option<f64>,
    /// Evidence window, minutes.
    #[arg(long = "delta-t", default_value_t = 10.0)]
    pub delta_t: f64,
    /// Wind speed range in m/s, `min-max`.
    #[arg(long, default_value = "20-40", value_parser = parse_float_range)]
    pub wind: (f64, f64),
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Skip writing per-scenario directories.
    #[arg(long = "no-dump")]
    pub no_dump: bool,
    #[arg(long, required = true)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub topology: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub generate: Vec<usize>,
    #[arg(long, default_value = "6-18", value_parser = parse_range)]
    pub customers: (usize, usize),
    #[arg(long = "topology-seed", default_value_t = 1)]
    pub topology_seed: u64,
    /// Evidence files used as calibration cases (single topology only);
    /// simulated scenarios otherwise.
    #[arg(long)]
    pub evidence: Vec<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Candidate sweep counts in increasing order.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1000,2000,4000,8000,12000,16000,20000"
    )]
    pub sweep: Vec<usize>,
    #[arg(long, default_value_t = crate::calibration::DEFAULT_CHAINS)]
    pub chains: usize,
    #[arg(long, default_value_t = crate::calibration::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Fraction of each sequence discarded before the diagnostic.
    #[arg(long, default_value_t = crate::calibration::DEFAULT_WARMUP)]
    pub warmup: f64,
    /// Simulated calibration cases per feeder.
    #[arg(long = "n-scenarios", default_value_t = crate::calibration::DEFAULT_CASES)]
    pub n_scenarios: usize,
    #[arg(long, default_value_t = 0.5)]
    pub observability: f64,
    #[arg(long = "n-outages", default_value_t = 1)]
    pub n_outages: usize,
    #[arg(long, default_value = "20-40", value_parser = parse_float_range)]
    pub wind: (f64, f64),
    #[arg(long, value_enum, default_value_t = ScanArg::Topo)]
    pub scan: ScanArg,
    #[arg(long, value_enum, default_value_t = SamplerArg::Causes)]
    pub sampler: SamplerArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Directory with one subdirectory per scenario holding `prediction.txt`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Directory with one subdirectory per scenario holding `truth.txt`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Outage counts to sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountList(pub Vec<usize>);

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('-').unwrap_or((s, s));
    let a: usize = a.trim().parse().map_err(|_| format!("bad range `{s}`"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range `{s}`"))?;
    if a > b {
        return Err(format!("empty range `{s}`"));
    }
    Ok((a, b))
}

fn parse_float_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once('-').unwrap_or((s, s));
    let a: f64 = a.trim().parse().map_err(|_| format!("bad range `{s}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad range `{s}`"))?;
    if !(a <= b) {
        return Err(format!("empty range `{s}`"));
    }
    Ok((a, b))
}

fn parse_count_list(s: &str) -> Result<CountList, String> {
    let bad = || format!("expected `k`, `a,b,c` or `a..b`, got `{s}`");
    let counts: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.parse().map_err(|_| bad())?;
        let b: usize = b.trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if counts.is_empty() || counts.contains(&0) {
        return Err(bad());
    }
    Ok(CountList(counts))
}

/// Provenance of one command run, written as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    pub config_paths: BTreeMap<String, Vec<String>>,
    pub seeds: BTreeMap<String, u64>,
    /// Wall-clock seconds per phase, in execution order.
    pub phases: Vec<Phase>,
    /// Files written by the run, relative to the output directory.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

impl RunManifest {
    fn new(command: &str, args: &[OsString]) -> Self {
        Self {
            command: command.to_string(),
            args: args
                .iter()
                .map(|a| a.to_string_lossy().into_owned())
                .collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_paths: BTreeMap::new(),
            seeds: BTreeMap::new(),
            phases: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn paths(&mut self, key: &str, paths: &[PathBuf]) {
        if !paths.is_empty() {
            self.config_paths.insert(
                key.to_string(),
                paths.iter().map(|p| p.display().to_string()).collect(),
            );
        }
    }

    fn phase(&mut self, name: impl Into<String>, since: Instant) {
        self.phases.push(Phase {
            name: name.into(),
            seconds: since.elapsed().as_secs_f64(),
        });
    }
}

/// Writes files under one output directory and records them.
struct Output<'m> {
    root: PathBuf,
    manifest: &'m mut RunManifest,
}

impl<'m> Output<'m> {
    fn new(root: &Path, manifest: &'m mut RunManifest) -> Result<Self, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        }
        fs::write(&path, contents)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        self.manifest.artifacts.push(rel.to_string());
        Ok(())
    }

    fn finish(self) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(&*self.manifest).expect("manifest serializes");
        let path = self.root.join("manifest.json");
        fs::write(&path, json + "\n")
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(path, e))
}

fn load_topology(path: &Path) -> Result<FeederTopology, CliError> {
    FeederTopology::parse(&read(path)?).map_err(|e: TopologyError| CliError::input(path, e))
}

fn load_evidence(path: &Path, topology: &FeederTopology) -> Result<EvidenceSet, CliError> {
    EvidenceSet::parse(&read(path)?, topology).map_err(|e: EvidenceError| CliError::input(path, e))
}

fn load_params(path: Option<&Path>) -> Result<ModelParams, CliError> {
    match path {
        None => Ok(ModelParams::default()),
        Some(p) => ModelParams::parse(&read(p)?).map_err(|e: ParamsError| CliError::input(p, e)),
    }
}

fn feeder_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "feeder".into())
}

/// Named feeders from files and generator sizes; names must be unique.
fn collect_feeders(
    files: &[PathBuf],
    generate: &[usize],
    customers: (usize, usize),
    topology_seed: u64,
) -> Result<Vec<(String, FeederTopology)>, CliError> {
    let mut feeders = Vec::new();
    for path in files {
        feeders.push((feeder_name(path), load_topology(path)?));
    }
    for &n in generate {
        let spec = TopologySpec {
            customers_per_branch: customers,
            ..TopologySpec::with_branches(n)
        };
        let t = generate_topology(&spec, topology_seed).map_err(CliError::from)?;
        feeders.push((format!("synthetic-{n}"), t));
    }
    if feeders.is_empty() {
        return Err(CliError::Usage(
            "give at least one --topology or --generate".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    for (name, _) in &feeders {
        if !seen.insert(name.clone()) {
            return Err(CliError::Usage(format!("duplicate feeder name `{name}`")));
        }
    }
    Ok(feeders)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command inside a pool sized by [`WORKERS_ENV`].
pub fn execute(cli: Cli, args: &[OsString]) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Usage(format!(
                "{WORKERS_ENV} must be a positive integer, got `{v}`"
            ))
        })?;
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let rest = args.get(1..).unwrap_or_default();
    pool.install(|| match cli.command {
        Command::Infer(a) => cmd_infer(&a, rest),
        Command::Simulate(a) => cmd_simulate(&a, rest),
        Command::Calibrate(a) => cmd_calibrate(&a, rest),
        Command::Evaluate(a) => cmd_evaluate(&a, rest),
    })
}

struct Inferred {
    name: String,
    topology: FeederTopology,
    estimate: PosteriorEstimate,
    seconds: f64,
}

pub fn cmd_infer(a: &InferArgs, args: &[OsString]) -> Result<(), CliError> {
    if a.topology.len() != a.evidence.len() {
        return Err(CliError::Usage(format!(
            "{} topology files but {} evidence files",
            a.topology.len(),
            a.evidence.len()
        )));
    }
    if a.topology.len() > 1 && a.out.is_none() {
        return Err(CliError::Usage("several feeders need --out".into()));
    }
    let cfg = a.sampler.gibbs();
    cfg.validate()?;
    let model = load_params(a.params.as_deref())?;
    let mut names = BTreeSet::new();
    let mut inputs = Vec::new();
    for (tp, ep) in a.topology.iter().zip(&a.evidence) {
        let name = feeder_name(tp);
        if !names.insert(name.clone()) {
            return Err(CliError::Usage(format!("duplicate feeder name `{name}`")));
        }
        let topology = load_topology(tp)?;
        let evidence = load_evidence(ep, &topology)?;
        inputs.push((name, topology, evidence));
    }

    let results: Vec<Inferred> = inputs
        .into_par_iter()
        .map(|(name, topology, evidence)| {
            let start = Instant::now();
            let estimate = if a.exact {
                infer_exact(&topology, &model, &evidence, cfg.seed, a.exact_limit)?
            } else {
                locate(&topology, &model, &evidence, &cfg)?
            };
            Ok(Inferred {
                name,
                topology,
                estimate,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_, CliError>>()?;

    let Some(out) = &a.out else {
        let r = &results[0];
        print!("{}", r.estimate.branch_csv(&r.topology));
        eprintln!(
            "locations: {}",
            r.estimate.location_ids(&r.topology).join(" ")
        );
        return Ok(());
    };
    let mut manifest = RunManifest::new("infer", args);
    manifest.paths("topology", &a.topology);
    manifest.paths("evidence", &a.evidence);
    manifest.paths("params", a.params.as_slice());
    manifest.seeds.insert("seed".into(), cfg.seed);
    for r in &results {
        manifest.phases.push(Phase {
            name: format!("infer:{}", r.name),
            seconds: r.seconds,
        });
    }
    let mut output = Output::new(out, &mut manifest)?;
    for r in &results {
        let prefix = if results.len() > 1 {
            format!("{}/", r.name)
        } else {
            String::new()
        };
        output.write(
            &format!("{prefix}branches.csv"),
            &r.estimate.branch_csv(&r.topology),
        )?;
        output.write(
            &format!("{prefix}customers.csv"),
            &r.estimate.customer_csv(&r.topology),
        )?;
        let mut locs = r.estimate.location_ids(&r.topology).join("\n");
        if !locs.is_empty() {
            locs.push('\n');
        }
        output.write(&format!("{prefix}locations.txt"), &locs)?;
        println!(
            "{}: {}",
            r.name,
            r.estimate.location_ids(&r.topology).join(" ")
        );
    }
    output.finish()
}

/// Exact posterior with the same episode draw the sampler would use.
pub fn infer_exact(
    topology: &FeederTopology,
    model: &ModelParams,
    ev: &EvidenceSet,
    seed: u64,
    limit: usize,
) -> Result<PosteriorEstimate, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let episode = model.draw(&mut rng);
    let bn = BayesNet::new(topology, &episode, &ev.meter_coverage());
    let exact = exact_inference(&bn, ev, limit)?;
    Ok(decide_and_locate(
        topology,
        exact.branch_marginals(&bn).to_vec(),
        exact.customer_marginals(&bn).to_vec(),
    ))
}

fn fmt_obs(o: f64) -> String {
    format!("{o:.2}")
}

pub fn cmd_simulate(a: &SimulateArgs, args: &[OsString]) -> Result<(), CliError> {
    let model = load_params(a.params.as_deref())?;
    let cfg = a.sampler.gibbs();
    cfg.validate()?;
    if a.observability.is_empty() {
        return Err(CliError::Usage(
            "--observability needs at least one value".into(),
        ));
    }
    let error_rates = match a.error_rates.as_slice() {
        [] => ErrorRates::default(),
        &[human_false, nlp_error, ami_fail] => ErrorRates {
            human_false,
            nlp_error,
            ami_fail,
        },
        other => {
            return Err(CliError::Usage(format!(
                "--error-rates needs three values, got {}",
                other.len()
            )))
        }
    };
    let feeders = collect_feeders(&a.topology, &a.generate, a.customers, a.topology_seed)?;
    let base = ScenarioSpec {
        n_scenarios: a.n_scenarios,
        delta_t: a.delta_t,
        error_rates,
        report_lambda: a.report_lambda.unwrap_or(2.0 * model.evidence.lambda1),
        wind: a.wind,
        seed: a.sampler.seed,
        ..ScenarioSpec::default()
    };
    let grid: Vec<ScenarioSpec> = a
        .observability
        .iter()
        .flat_map(|&observability| {
            a.n_outages.0.iter().map(move |&n_outages| ScenarioSpec {
                observability,
                n_outages,
                ..base
            })
        })
        .collect();
    for (_, t) in &feeders {
        for spec in &grid {
            spec.validate(t)?;
        }
    }

    struct Cell {
        feeder: usize,
        spec: ScenarioSpec,
        result: crate::scenario::MonteCarloResult,
        seconds: f64,
    }
    // feeders run concurrently; grid points and scenarios share the pool
    let cells: Vec<Cell> = feeders
        .par_iter()
        .enumerate()
        .flat_map_iter(|(fi, (_, t))| {
            grid.iter().map(move |spec| {
                let start = Instant::now();
                let result = run_monte_carlo(t, spec, &model, &cfg)?;
                Ok(Cell {
                    feeder: fi,
                    spec: *spec,
                    result,
                    seconds: start.elapsed().as_secs_f64(),
                })
            })
        })
        .collect::<Result<_, CliError>>()?;

    let mut manifest = RunManifest::new("simulate", args);
    manifest.paths("topology", &a.topology);
    manifest.paths("params", a.params.as_slice());
    manifest.seeds.insert("seed".into(), a.sampler.seed);
    manifest
        .seeds
        .insert("topology_seed".into(), a.topology_seed);
    let mut rows = Vec::new();
    let mut runtime = vec![];
    for c in &cells {
        let (name, t) = &feeders[c.feeder];
        manifest.phases.push(Phase {
            name: format!(
                "simulate:{name}:obs={}:outages={}",
                fmt_obs(c.spec.observability),
                c.spec.n_outages
            ),
            seconds: c.seconds,
        });
        if let Some(report) = c.result.report.clone() {
            rows.push(MetricRow {
                feeder: name.clone(),
                observability: c.spec.observability,
                n_outages: c.spec.n_outages,
                report,
                failed: c.result.failed,
            });
        } else {
            eprintln!(
                "warning: every scenario failed for {name} at observability {} with {} outages",
                fmt_obs(c.spec.observability),
                c.spec.n_outages
            );
        }
        runtime.push((
            name.clone(),
            t.branch_count(),
            t.customer_count(),
            c.spec.observability,
            c.spec.n_outages,
            c.result.results.len(),
            c.result.mean_seconds(),
        ));
    }
    runtime.sort_by(|x, y| x.0.cmp(&y.0).then(x.3.total_cmp(&y.3)).then(x.4.cmp(&y.4)));
    let mut runtime_csv = format!("{RUNTIME_CSV_HEADER}\n");
    for r in &runtime {
        runtime_csv.push_str(&format!(
            "{},{},{},{},{},{},{:.6}\n",
            r.0,
            r.1,
            r.2,
            fmt_obs(r.3),
            r.4,
            r.5,
            r.6
        ));
    }

    let dump_start = Instant::now();
    let mut output = Output::new(&a.out, &mut manifest)?;
    output.write("metrics.csv", &metric_csv(&rows))?;
    output.write("runtime.csv", &runtime_csv)?;
    if !a.no_dump {
        for (name, t) in &feeders {
            output.write(&format!("scenarios/{name}/topology.feeder"), &t.to_text())?;
        }
        for c in &cells {
            let (name, t) = &feeders[c.feeder];
            let cell_dir = format!(
                "scenarios/{name}/obs{}_outages{}",
                fmt_obs(c.spec.observability),
                c.spec.n_outages
            );
            let width = c
                .spec
                .n_scenarios
                .saturating_sub(1)
                .to_string()
                .len()
                .max(4);
            for r in &c.result.results {
                let rel = format!("{cell_dir}/s{:0width$}", r.scenario.index);
                r.dump(
                    &output.root.join(&rel),
                    name,
                    t,
                    &c.spec,
                    &cfg,
                    Some("../../../../manifest.json"),
                )?;
                output.manifest.artifacts.push(rel);
            }
        }
    }
    output.manifest.phase("write", dump_start);
    print!("{}", metric_csv(&rows));
    output.finish()
}

pub fn cmd_calibrate(a: &CalibrateArgs, args: &[OsString]) -> Result<(), CliError> {
    crate::calibration::validate_sweep(&a.sweep)?;
    let model = load_params(a.params.as_deref())?;
    let feeders = collect_feeders(&a.topology, &a.generate, a.customers, a.topology_seed)?;
    if !a.evidence.is_empty() && feeders.len() != 1 {
        return Err(CliError::Usage(
            "--evidence calibration cases need exactly one feeder".into(),
        ));
    }
    if feeders.len() > 1 && a.out.is_none() {
        return Err(CliError::Usage("several feeders need --out".into()));
    }
    let ccfg = CalibrationConfig {
        chains: a.chains,
        threshold: a.threshold,
        warmup: a.warmup,
        scan_order: match a.scan {
            ScanArg::Topo => ScanOrder::Topological,
            ScanArg::Random => ScanOrder::Random,
        },
        sampler: match a.sampler {
            SamplerArg::Causes => Sampler::Causes,
            SamplerArg::States => Sampler::States,
        },
        seed: a.seed,
    };
    // evidence cases with the episode parameters each one is inferred with
    let mut cases = Vec::new();
    for (_, t) in &feeders {
        let mut fc = Vec::new();
        if a.evidence.is_empty() {
            if a.n_scenarios == 0 {
                return Err(CliError::Usage("--n-scenarios must be >= 1".into()));
            }
            let spec = ScenarioSpec {
                observability: a.observability,
                n_scenarios: a.n_scenarios,
                n_outages: a.n_outages,
                wind: a.wind,
                report_lambda: 2.0 * model.evidence.lambda1,
                seed: a.seed,
                ..ScenarioSpec::default()
            };
            spec.validate(t)?;
            fc = simulated_cases(t, &spec, &model);
        } else {
            for (i, p) in a.evidence.iter().enumerate() {
                let ev = load_evidence(p, t)?;
                let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(i as u64));
                fc.push((model.draw(&mut rng), ev));
            }
        }
        cases.push(fc);
    }

    let outcomes: Vec<(crate::calibration::CalibrationOutcome, f64)> = feeders
        .par_iter()
        .zip(&cases)
        .map(|((_, t), fc)| {
            let start = Instant::now();
            let nets: Vec<BayesNet> = fc
                .iter()
                .map(|(ep, ev)| BayesNet::new(t, ep, &ev.meter_coverage()))
                .collect();
            let tables: Vec<FactorTables<'_>> = nets
                .iter()
                .zip(fc)
                .map(|(bn, (_, ev))| FactorTables::new(bn, ev))
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::from(GibbsError::from(e)))?;
            let outcome = calibrate_iterations(&tables, &a.sweep, &ccfg)?;
            Ok((outcome, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_, CliError>>()?;

    for ((name, _), (o, _)) in feeders.iter().zip(&outcomes) {
        let rep = o.final_report();
        let worst = rep
            .worst()
            .map(|(l, r)| format!(" (worst {l} R={r:.4})"))
            .unwrap_or_default();
        match o.chosen {
            Some(m) => println!("{name}: M = {m}, max R = {:.4}{worst}", rep.max_r),
            None => println!(
                "{name}: not converged at M = {}, max R = {:.4}{worst}",
                rep.iterations, rep.max_r
            ),
        }
    }
    let Some(out) = &a.out else {
        print!("{}", outcomes[0].0.to_csv());
        return Ok(());
    };
    let mut manifest = RunManifest::new("calibrate", args);
    manifest.paths("topology", &a.topology);
    manifest.paths("evidence", &a.evidence);
    manifest.paths("params", a.params.as_slice());
    manifest.seeds.insert("seed".into(), a.seed);
    manifest
        .seeds
        .insert("topology_seed".into(), a.topology_seed);
    for ((name, _), (_, secs)) in feeders.iter().zip(&outcomes) {
        manifest.phases.push(Phase {
            name: format!("calibrate:{name}"),
            seconds: *secs,
        });
    }
    let mut output = Output::new(out, &mut manifest)?;
    let mut chosen = String::from("feeder,chosen_iterations,max_r\n");
    for ((name, _), (o, _)) in feeders.iter().zip(&outcomes) {
        let prefix = if feeders.len() > 1 {
            format!("{name}/")
        } else {
            String::new()
        };
        output.write(&format!("{prefix}rhat.csv"), &o.to_csv())?;
        let m = o
            .chosen
            .map_or_else(|| "none".to_string(), |m| m.to_string());
        chosen.push_str(&format!("{name},{m},{:.6}\n", o.final_report().max_r));
    }
    output.write("chosen.csv", &chosen)?;
    output.finish()
}

/// Node states of one prediction or truth file, keyed by `D[id]` / `C[id]`.
pub fn parse_state_file(path: &Path) -> Result<BTreeMap<String, bool>, CliError> {
    let text = read(path)?;
    let mut states = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: &str| CliError::input(path, format!("line {}: {m}", n + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [kw, node, value] = fields[..] else {
            return Err(bad("expected `<keyword> <node> <0|1>`"));
        };
        if kw != "truth" && kw != "state" {
            return Err(bad(&format!("unknown keyword `{kw}`")));
        }
        if !(node.starts_with("D[") || node.starts_with("C[")) || !node.ends_with(']') {
            return Err(bad(&format!("node `{node}` is not D[id] or C[id]")));
        }
        let v = match value {
            "0" => false,
            "1" => true,
            _ => return Err(bad(&format!("expected 0 or 1, got `{value}`"))),
        };
        if states.insert(node.to_string(), v).is_some() {
            return Err(bad(&format!("duplicate node `{node}`")));
        }
    }
    Ok(states)
}

fn scenario_dirs(root: &Path) -> Result<BTreeSet<String>, CliError> {
    let entries = fs::read_dir(root).map_err(|e| CliError::input(root, e))?;
    let mut ids = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::input(root, e))?;
        if entry.path().is_dir() {
            ids.insert(entry.file_name().to_string_lossy().into_owned());
        }
    }
    Ok(ids)
}

fn split_kind(states: BTreeMap<String, bool>) -> (BTreeMap<String, bool>, BTreeMap<String, bool>) {
    states.into_iter().partition(|(k, _)| k.starts_with("D["))
}

/// Scores every scenario directory under `predictions` against the one of
/// the same name under `truth`.
pub fn evaluate_dirs(
    predictions: &Path,
    truth: &Path,
) -> Result<crate::metrics::AggregateReport, CliError> {
    let pred_ids = scenario_dirs(predictions)?;
    let truth_ids = scenario_dirs(truth)?;
    if pred_ids != truth_ids {
        let only_pred: Vec<_> = pred_ids.difference(&truth_ids).cloned().collect();
        let only_truth: Vec<_> = truth_ids.difference(&pred_ids).cloned().collect();
        return Err(CliError::Usage(format!(
            "scenario sets differ: only in predictions [{}], only in truth [{}]",
            only_pred.join(", "),
            only_truth.join(", ")
        )));
    }
    if pred_ids.is_empty() {
        return Err(CliError::Usage(format!(
            "no scenario directories in {}",
            predictions.display()
        )));
    }
    let mut outcomes = Vec::new();
    for id in &pred_ids {
        let tp = truth.join(id).join("truth.txt");
        if !tp.is_file() {
            return Err(CliError::input(&tp, "missing truth file"));
        }
        let pp = predictions.join(id).join("prediction.txt");
        if !pp.is_file() {
            return Err(CliError::input(&pp, "missing prediction file"));
        }
        let (pb, pc) = split_kind(parse_state_file(&pp)?);
        let (tb, tc) = split_kind(parse_state_file(&tp)?);
        let mismatch = |e: MetricsError| CliError::Usage(format!("scenario {id}: {e}"));
        outcomes.push(ScenarioOutcome {
            branches: confusion(&pb, &tb).map_err(mismatch)?,
            customers: confusion(&pc, &tc).map_err(mismatch)?,
        });
    }
    aggregate(&outcomes, 1.0).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn evaluation_csv(r: &crate::metrics::AggregateReport) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"));
    format!(
        "{EVALUATION_CSV_HEADER}\n{},{:.6},{},{},{},{:.6},{},{}\n",
        r.scenarios,
        r.accuracy,
        opt(r.precision),
        opt(r.recall),
        opt(r.f1),
        r.system_accuracy,
        r.undefined_precision,
        r.undefined_recall
    )
}

pub fn cmd_evaluate(a: &EvaluateArgs, _args: &[OsString]) -> Result<(), CliError> {
    let report = evaluate_dirs(&a.predictions, &a.truth)?;
    let csv = evaluation_csv(&report);
    match &a.out {
        Some(p) => {
            fs::write(p, csv).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
