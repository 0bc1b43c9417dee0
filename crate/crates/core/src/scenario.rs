//! Synthetic feeders and Monte-Carlo outage scenarios.
//!
//! A scenario picks the metered customers, the outaged branches and the
//! weather, propagates de-energization downstream and generates the
//! evidence an operator would see after the collection window, including
//! wrong evidence:
//!
//! - an energized customer reports an outage with probability `human_false`;
//! - an out customer reports with probability `1 - exp(-report_lambda * delta_t)`,
//!   and a collected report is then lost to text-processing errors with
//!   probability `nlp_error`;
//! - an out metered customer's last gasp is lost with probability `ami_fail`.
//!
//! Everything is a pure function of the spec seed and the scenario index.
//! Outage locations and weather use their own random stream, so scenarios
//! with the same index at different observability share them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bn::BayesNet;
use crate::evidence::EvidenceSet;
use crate::factors::{report_probability, Vegetation};
use crate::feeder::{BranchNode, BranchPhysical, CustomerNode, FeederTopology};
use crate::gibbs::{infer, GibbsConfig, PosteriorEstimate};
use crate::metrics::{aggregate, AggregateReport, ConfusionCounts, ScenarioOutcome};
use crate::params::{EpisodeParams, ModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario spec: {0}")]
    Spec(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// How new branches attach to the existing tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeShape {
    /// Every branch hangs below the previous one.
    Chain,
    /// Uniform parent among earlier branches that have spare capacity.
    Random { max_children: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec {
    pub n_branches: usize,
    pub shape: TreeShape,
    /// Inclusive range of customers per branch.
    pub customers_per_branch: (usize, usize),
    /// Inclusive range of poles per branch.
    pub poles: (u32, u32),
    pub conductors_per_span: u32,
    pub span_length_m: f64,
    pub underground_probability: f64,
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self {
            n_branches: 51,
            shape: TreeShape::Random { max_children: 3 },
            customers_per_branch: (6, 18),
            poles: (1, 4),
            conductors_per_span: 3,
            span_length_m: 60.0,
            underground_probability: 0.0,
        }
    }
}

impl TopologySpec {
    pub fn with_branches(n_branches: usize) -> Self {
        Self {
            n_branches,
            ..Self::default()
        }
    }
}

fn digits(n: usize) -> usize {
    n.max(1).to_string().len()
}

/// Random radial feeder, deterministic in `seed`. Ids are zero-padded so
/// that string order equals index order.
pub fn generate_topology(spec: &TopologySpec, seed: u64) -> Result<FeederTopology, ScenarioError> {
    if spec.n_branches == 0 {
        return Err(ScenarioError::Spec(
            "at least one branch is required".into(),
        ));
    }
    let (cmin, cmax) = spec.customers_per_branch;
    let (pmin, pmax) = spec.poles;
    if cmin > cmax || pmin > pmax {
        return Err(ScenarioError::Spec("empty range".into()));
    }
    if let TreeShape::Random { max_children: 0 } = spec.shape {
        return Err(ScenarioError::Spec("max_children must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bw = digits(spec.n_branches);
    let mut children = vec![0usize; spec.n_branches];
    let mut branches = Vec::with_capacity(spec.n_branches);
    let mut per_branch = Vec::with_capacity(spec.n_branches);
    for i in 0..spec.n_branches {
        let parent = match (i, spec.shape) {
            (0, _) => None,
            (_, TreeShape::Chain) => Some(i - 1),
            (_, TreeShape::Random { max_children }) => {
                let open: Vec<usize> = (0..i).filter(|&p| children[p] < max_children).collect();
                Some(open[rng.gen_range(0..open.len())])
            }
        };
        if let Some(p) = parent {
            children[p] += 1;
        }
        let poles = rng.gen_range(pmin..=pmax);
        branches.push(BranchNode {
            id: format!("b{i:0bw$}"),
            parent: parent.map(|p| format!("b{p:0bw$}")),
            physical: BranchPhysical {
                pole_count: poles,
                span_conductor_counts: vec![spec.conductors_per_span; poles as usize],
                length_m: spec.span_length_m * f64::from(poles),
                underground_probability: spec.underground_probability,
            },
        });
        per_branch.push(rng.gen_range(cmin..=cmax));
    }
    let total: usize = per_branch.iter().sum();
    let cw = digits(total);
    let mut customers = Vec::with_capacity(total);
    for (b, &count) in per_branch.iter().enumerate() {
        for _ in 0..count {
            customers.push(CustomerNode {
                id: format!("c{:0cw$}", customers.len()),
                branch: branches[b].id.clone(),
                has_meter: false,
            });
        }
    }
    FeederTopology::new(branches, customers).map_err(|e| ScenarioError::Spec(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    /// False report probability of an energized customer.
    pub human_false: f64,
    /// Loss probability of a collected report.
    pub nlp_error: f64,
    /// Loss probability of a last gasp.
    pub ami_fail: f64,
}

impl Default for ErrorRates {
    fn default() -> Self {
        Self {
            human_false: 0.10,
            nlp_error: 0.15,
            ami_fail: 0.03,
        }
    }
}

impl ErrorRates {
    pub fn none() -> Self {
        Self {
            human_false: 0.0,
            nlp_error: 0.0,
            ami_fail: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Fraction of customers with a smart meter.
    pub observability: f64,
    pub n_scenarios: usize,
    pub n_outages: usize,
    /// Evidence collection window, minutes.
    pub delta_t: f64,
    pub error_rates: ErrorRates,
    /// True report rate of out customers, per minute.
    pub report_lambda: f64,
    /// Inclusive range of per-branch wind speed, m/s.
    pub wind: (f64, f64),
    pub species_constant: f64,
    /// Inclusive range of tree diameters, cm.
    pub diameter_cm: (f64, f64),
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            observability: 0.5,
            n_scenarios: 100,
            n_outages: 1,
            delta_t: 10.0,
            error_rates: ErrorRates::default(),
            report_lambda: 2.0 * ModelParams::default().evidence.lambda1,
            wind: (20.0, 40.0),
            species_constant: 1.0,
            diameter_cm: (10.0, 40.0),
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self, topology: &FeederTopology) -> Result<(), ScenarioError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ScenarioError::Spec(format!("{name} = {v} outside [0,1]")))
            }
        };
        unit("observability", self.observability)?;
        unit("human_false", self.error_rates.human_false)?;
        unit("nlp_error", self.error_rates.nlp_error)?;
        unit("ami_fail", self.error_rates.ami_fail)?;
        if self.n_outages == 0 || self.n_outages > topology.branch_count() {
            return Err(ScenarioError::Spec(format!(
                "n_outages = {} must be in 1..={}",
                self.n_outages,
                topology.branch_count()
            )));
        }
        if !(self.delta_t >= 0.0) || !(self.report_lambda >= 0.0) {
            return Err(ScenarioError::Spec(
                "delta_t and report_lambda must be >= 0".into(),
            ));
        }
        if !(0.0 <= self.wind.0 && self.wind.0 <= self.wind.1) {
            return Err(ScenarioError::Spec(
                "wind range must satisfy 0 <= lo <= hi".into(),
            ));
        }
        if !(0.0 <= self.diameter_cm.0 && self.diameter_cm.0 <= self.diameter_cm.1)
            || !(self.species_constant >= 0.0)
        {
            return Err(ScenarioError::Spec(
                "vegetation ranges must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub index: usize,
    /// Per customer, whether it has a smart meter.
    pub meter_set: Vec<bool>,
    /// Outaged branches, ascending.
    pub true_outages: Vec<usize>,
    pub true_branch_states: Vec<bool>,
    pub true_customer_states: Vec<bool>,
    pub evidence: EvidenceSet,
    /// Minutes after midnight.
    pub outage_time: f64,
    /// Seed for the sampler on this scenario.
    pub inference_seed: u64,
}

impl Scenario {
    /// True outage locations (top of each de-energized region).
    pub fn true_locations(&self, topology: &FeederTopology) -> Vec<usize> {
        topology.select_outage_locations(&self.true_branch_states)
    }
}

/// Per-scenario seed derived from the spec seed and index.
fn scenario_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.gen()
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Builds scenario `index` of `spec`. Panics if `spec` fails validation.
pub fn generate_scenario(topology: &FeederTopology, spec: &ScenarioSpec, index: usize) -> Scenario {
    spec.validate(topology).expect("valid scenario spec");
    let base = scenario_seed(spec.seed, index);
    let mut world = stream(base, 0);
    let mut meters = stream(base, 1);
    let mut noise = stream(base, 2);
    let k = topology.branch_count();
    let n = topology.customer_count();

    let mut true_outages = sample(&mut world, k, spec.n_outages).into_vec();
    true_outages.sort_unstable();
    let wind: Vec<f64> = (0..k).map(|_| uniform(&mut world, spec.wind)).collect();
    let vegetation: Vec<Vegetation> = (0..k)
        .map(|_| Vegetation {
            species_constant: spec.species_constant,
            diameter_cm: uniform(&mut world, spec.diameter_cm),
        })
        .collect();
    let outage_time = world.gen_range(0.0..1440.0);
    let inference_seed = world.gen();

    let metered_count = (spec.observability * n as f64).round() as usize;
    let mut meter_set = vec![false; n];
    for c in sample(&mut meters, n, metered_count.min(n)) {
        meter_set[c] = true;
    }

    let true_branch_states = topology.propagate_outages(&true_outages);
    let true_customer_states: Vec<bool> = (0..n)
        .map(|c| true_branch_states[topology.customer_branch(c)])
        .collect();

    let rates = &spec.error_rates;
    let report = report_probability(spec.report_lambda, spec.delta_t);
    let mut human = vec![false; n];
    let mut meter = vec![None; n];
    for c in 0..n {
        // fixed draw count per customer keeps streams aligned across specs
        let (u_report, u_nlp, u_ami) = (noise.gen::<f64>(), noise.gen::<f64>(), noise.gen::<f64>());
        if true_customer_states[c] {
            human[c] = u_report < report && u_nlp >= rates.nlp_error;
        } else {
            human[c] = u_report < rates.human_false;
        }
        if meter_set[c] {
            meter[c] = Some(true_customer_states[c] && u_ami >= rates.ami_fail);
        }
    }

    Scenario {
        index,
        meter_set,
        true_outages,
        true_branch_states,
        true_customer_states,
        evidence: EvidenceSet {
            human,
            meter,
            wind,
            vegetation,
            elapsed_window: Some(spec.delta_t),
        },
        outage_time,
        inference_seed,
    }
}

/// `<keyword> D[id] <0|1>` then `<keyword> C[id] <0|1>` lines, each group
/// sorted by id.
pub fn state_lines(
    keyword: &str,
    topology: &FeederTopology,
    branch_states: &[bool],
    customer_states: &[bool],
) -> String {
    let mut branches: Vec<(&str, bool)> = topology
        .branches()
        .iter()
        .map(|b| b.id.as_str())
        .zip(branch_states.iter().copied())
        .collect();
    let mut customers: Vec<(&str, bool)> = topology
        .customers()
        .iter()
        .map(|c| c.id.as_str())
        .zip(customer_states.iter().copied())
        .collect();
    branches.sort_unstable();
    customers.sort_unstable();
    let mut out = String::new();
    for (id, d) in branches {
        writeln!(out, "{keyword} D[{id}] {}", u8::from(d)).unwrap();
    }
    for (id, c) in customers {
        writeln!(out, "{keyword} C[{id}] {}", u8::from(c)).unwrap();
    }
    out
}

/// Replay information written next to each scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub feeder: String,
    pub index: usize,
    pub spec: ScenarioSpec,
    pub inference_seed: u64,
    pub iterations: usize,
    pub chains: usize,
    pub burn_in: f64,
    pub scan_order: String,
    pub sampler: String,
    pub true_outages: Vec<String>,
    pub predicted_locations: Vec<String>,
    pub failure: Option<String>,
    /// Path of the run manifest, relative to this file.
    pub run_manifest: Option<String>,
}

/// Result of one Monte-Carlo scenario.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub estimate: Result<PosteriorEstimate, String>,
    pub seconds: f64,
}

impl ScenarioResult {
    pub fn outcome(&self) -> Option<ScenarioOutcome> {
        let est = self.estimate.as_ref().ok()?;
        Some(ScenarioOutcome {
            branches: ConfusionCounts::from_slices(
                &est.decided_branches,
                &self.scenario.true_branch_states,
            ),
            customers: ConfusionCounts::from_slices(
                &est.decided_customers,
                &self.scenario.true_customer_states,
            ),
        })
    }

    /// Writes `evidence.txt`, `truth.txt`, `prediction.txt` (when inference
    /// succeeded) and `manifest.json` into `dir`. Truth lines use the keyword
    /// `truth`, prediction lines `state`.
    pub fn dump(
        &self,
        dir: &Path,
        feeder: &str,
        topology: &FeederTopology,
        spec: &ScenarioSpec,
        cfg: &GibbsConfig,
        run_manifest: Option<&str>,
    ) -> Result<(), ScenarioError> {
        let io = |e: std::io::Error| ScenarioError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        let s = &self.scenario;
        fs::write(dir.join("evidence.txt"), s.evidence.to_text(topology)).map_err(io)?;
        fs::write(
            dir.join("truth.txt"),
            state_lines(
                "truth",
                topology,
                &s.true_branch_states,
                &s.true_customer_states,
            ),
        )
        .map_err(io)?;
        let ids = |v: &[usize]| {
            v.iter()
                .map(|&b| topology.branches()[b].id.clone())
                .collect()
        };
        let (predicted_locations, failure) = match &self.estimate {
            Ok(est) => {
                fs::write(
                    dir.join("prediction.txt"),
                    state_lines(
                        "state",
                        topology,
                        &est.decided_branches,
                        &est.decided_customers,
                    ),
                )
                .map_err(io)?;
                (ids(&est.locations), None)
            }
            Err(e) => (Vec::new(), Some(e.clone())),
        };
        let manifest = ScenarioManifest {
            feeder: feeder.to_string(),
            index: s.index,
            spec: *spec,
            inference_seed: s.inference_seed,
            iterations: cfg.iterations,
            chains: cfg.chains,
            burn_in: cfg.burn_in,
            scan_order: format!("{:?}", cfg.scan_order),
            sampler: format!("{:?}", cfg.sampler),
            true_outages: ids(&s.true_outages),
            predicted_locations,
            failure,
            run_manifest: run_manifest.map(str::to_string),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), json + "\n").map_err(io)?;
        Ok(())
    }
}

/// Evidence of the first `spec.n_scenarios` scenarios, each with the episode
/// parameters its inference would draw.
pub fn simulated_cases(
    topology: &FeederTopology,
    spec: &ScenarioSpec,
    model: &ModelParams,
) -> Vec<(EpisodeParams, EvidenceSet)> {
    (0..spec.n_scenarios)
        .map(|i| {
            let s = generate_scenario(topology, spec, i);
            let mut rng = ChaCha8Rng::seed_from_u64(s.inference_seed);
            (model.draw(&mut rng), s.evidence)
        })
        .collect()
}

/// Runs inference on one scenario with the sampler seeded per scenario.
pub fn run_scenario(
    topology: &FeederTopology,
    scenario: Scenario,
    model: &ModelParams,
    cfg: &GibbsConfig,
) -> ScenarioResult {
    let start = Instant::now();
    let cfg = GibbsConfig {
        seed: scenario.inference_seed,
        ..*cfg
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let episode = model.draw(&mut rng);
    let bn = BayesNet::new(topology, &episode, &scenario.meter_set);
    let estimate = infer(&bn, topology, &scenario.evidence, &cfg).map_err(|e| e.to_string());
    ScenarioResult {
        scenario,
        estimate,
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    /// Ordered by scenario index.
    pub results: Vec<ScenarioResult>,
    /// `None` when every scenario failed.
    pub report: Option<AggregateReport>,
    pub failed: usize,
}

impl MonteCarloResult {
    pub fn mean_seconds(&self) -> f64 {
        self.results.iter().map(|r| r.seconds).sum::<f64>() / self.results.len().max(1) as f64
    }
}

/// Generates and infers `spec.n_scenarios` scenarios in parallel.
pub fn run_monte_carlo(
    topology: &FeederTopology,
    spec: &ScenarioSpec,
    model: &ModelParams,
    cfg: &GibbsConfig,
) -> Result<MonteCarloResult, ScenarioError> {
    spec.validate(topology)?;
    cfg.validate()
        .map_err(|e| ScenarioError::Spec(e.to_string()))?;
    let results: Vec<ScenarioResult> = (0..spec.n_scenarios)
        .into_par_iter()
        .map(|i| run_scenario(topology, generate_scenario(topology, spec, i), model, cfg))
        .collect();
    let outcomes: Vec<ScenarioOutcome> =
        results.iter().filter_map(ScenarioResult::outcome).collect();
    let failed = results.len() - outcomes.len();
    Ok(MonteCarloResult {
        report: aggregate(&outcomes, 1.0).ok(),
        results,
        failed,
    })
}
