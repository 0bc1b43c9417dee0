//! Gibbs sampling over the outage network.
//!
//! Each chain starts from a uniformly random state of all branch and
//! customer variables and then sweeps the unknowns, drawing each one from
//! its local conditional given the latest values of everything else.
//! Marginals are sample frequencies; a branch or customer is declared
//! de-energized when its marginal is strictly above one half.
//!
//! A uniformly random start usually violates the deterministic factors (a
//! live branch under a dead one, a live customer on a dead branch). It is
//! projected onto the support before the first sweep: a branch stays
//! de-energized only when its whole subtree drew de-energized, and values
//! the evidence rules out are flipped. If no state of positive probability
//! exists the evidence is reported as inconsistent.
//!
//! Two update schemes share this driver. [`Sampler::States`] updates the
//! branch and customer states directly. Because a live branch cannot sit
//! under a dead one, moving an outage from a branch to its child has to pass
//! through improbable states, and chains can stay stuck for a long time.
//! [`Sampler::Causes`] instead updates one failure indicator per branch
//! (`P = P_l`) and one fault indicator per customer (`P = pi_2`); a branch is
//! dead when any branch on its path to the root failed, a customer when its
//! branch is dead or it has a fault. This induces exactly the same
//! distribution over states, and one update can move a whole dead region.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bn::{BayesNet, BnError, FactorTables};
use crate::evidence::EvidenceSet;
use crate::feeder::FeederTopology;
use crate::params::ModelParams;

/// Decision threshold on de-energization marginals.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GibbsError {
    #[error(transparent)]
    Net(#[from] BnError),
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("no samples left after discarding burn-in")]
    EmptyRetained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanOrder {
    /// Branches root-to-leaves, each followed by its customers.
    #[default]
    Topological,
    /// A fresh random permutation of the unknowns every sweep.
    Random,
}

/// Which variables a chain updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampler {
    /// Independent failure indicators per branch and fault indicators per
    /// customer; states follow by propagation. Same posterior over states,
    /// no deterministic constraints between the updated variables.
    #[default]
    Causes,
    /// The branch and customer states themselves, one at a time.
    States,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsConfig {
    /// Sweeps per chain (M).
    pub iterations: usize,
    /// Fraction of each chain discarded before counting.
    pub burn_in: f64,
    pub scan_order: ScanOrder,
    pub sampler: Sampler,
    pub chains: usize,
    pub seed: u64,
    /// Keep every sample for convergence diagnostics.
    pub keep_samples: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            burn_in: 0.0,
            scan_order: ScanOrder::Topological,
            sampler: Sampler::Causes,
            chains: 1,
            seed: 0,
            keep_samples: false,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<(), GibbsError> {
        if self.iterations == 0 {
            return Err(GibbsError::Config("iterations must be >= 1".into()));
        }
        if self.chains == 0 {
            return Err(GibbsError::Config("chains must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(GibbsError::Config(format!(
                "burn-in fraction {} outside [0,1)",
                self.burn_in
            )));
        }
        if retained_start(self.iterations, self.burn_in) >= self.iterations {
            return Err(GibbsError::EmptyRetained);
        }
        Ok(())
    }
}

/// Number of leading samples dropped for a burn-in fraction.
pub fn retained_start(len: usize, burn_in: f64) -> usize {
    (burn_in * len as f64).floor() as usize
}

/// All samples of one chain, sweep-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    vars: usize,
    samples: Vec<u8>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        if self.vars == 0 {
            0
        } else {
            self.samples.len() / self.vars
        }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn var_count(&self) -> usize {
        self.vars
    }

    pub fn sweep(&self, tau: usize) -> &[u8] {
        &self.samples[tau * self.vars..(tau + 1) * self.vars]
    }

    /// Sample sequence of unknown `u`.
    pub fn sequence(&self, u: usize) -> Vec<u8> {
        self.samples
            .iter()
            .skip(u)
            .step_by(self.vars)
            .copied()
            .collect()
    }
}

/// Traces of every chain of one inference run, ordered by chain index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainSamples {
    pub chains: Vec<ChainTrace>,
}

impl ChainSamples {
    /// One sequence per chain for unknown `u`, as `f64`.
    pub fn sequences(&self, u: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.sequence(u).into_iter().map(f64::from).collect())
            .collect()
    }
}

/// Result of one chain: post-burn-in counts and, optionally, the trace.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub ones: Vec<u64>,
    pub retained: u64,
    pub trace: Option<ChainTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEstimate {
    /// `P(D_i = 1 | E)` per branch index.
    pub branch_marginals: Vec<f64>,
    /// `P(C_j = 1 | E)` per customer index.
    pub customer_marginals: Vec<f64>,
    pub decided_branches: Vec<bool>,
    pub decided_customers: Vec<bool>,
    /// Top branch of each de-energized region, ascending index.
    pub locations: Vec<usize>,
    pub chain_samples: Option<ChainSamples>,
}

impl PosteriorEstimate {
    /// `branch,p_deenergized,state` rows sorted by branch id.
    pub fn branch_csv(&self, topology: &FeederTopology) -> String {
        let ids = topology.branches().iter().map(|b| b.id.as_str());
        marginal_csv(
            "branch",
            ids,
            &self.branch_marginals,
            &self.decided_branches,
        )
    }

    /// `customer,p_deenergized,state` rows sorted by customer id.
    pub fn customer_csv(&self, topology: &FeederTopology) -> String {
        let ids = topology.customers().iter().map(|c| c.id.as_str());
        marginal_csv(
            "customer",
            ids,
            &self.customer_marginals,
            &self.decided_customers,
        )
    }

    /// Ids of the located outage branches, sorted.
    pub fn location_ids(&self, topology: &FeederTopology) -> Vec<String> {
        let mut ids: Vec<String> = self
            .locations
            .iter()
            .map(|&b| topology.branches()[b].id.clone())
            .collect();
        ids.sort();
        ids
    }
}

fn marginal_csv<'a>(
    kind: &str,
    ids: impl Iterator<Item = &'a str>,
    marginals: &[f64],
    decided: &[bool],
) -> String {
    let mut rows: Vec<(&str, f64, bool)> = ids
        .zip(marginals)
        .zip(decided)
        .map(|((id, &p), &d)| (id, p, d))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0));
    let mut out = format!("{kind},p_deenergized,state\n");
    for (id, p, d) in rows {
        out.push_str(&format!("{id},{p:.6},{}\n", u8::from(d)));
    }
    out
}

fn scan_list(bn: &BayesNet) -> Vec<usize> {
    let k = bn.branch_count();
    let mut order = Vec::with_capacity(bn.unknown_count());
    for &b in bn.branch_order() {
        order.push(b);
        order.extend(bn.branch_customers(b).iter().map(|&c| k + c));
    }
    order
}

/// Random stream of chain `chain_index` under `seed`.
pub fn chain_rng(seed: u64, chain_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index as u64 + 1);
    rng
}

#[inline]
fn draw(w: [f64; 2], rng: &mut ChaCha8Rng) -> bool {
    if w[1] == 0.0 {
        false
    } else if w[0] == 0.0 {
        true
    } else {
        // inverse transform on the two-point CDF
        rng.gen::<f64>() * (w[0] + w[1]) >= w[0]
    }
}

fn sweep(tables: &FactorTables<'_>, order: &[usize], state: &mut [bool], rng: &mut ChaCha8Rng) {
    for &u in order {
        let w = tables.weights(u, state);
        // the held value has positive weight in a feasible state; only
        // underflow leaves both weights at zero
        if w[0] + w[1] > 0.0 {
            state[u] = draw(w, rng);
        }
    }
}

/// Gibbs state over failure causes.
///
/// `fail[b]` is the branch's own failure, `fault[j]` a customer-side fault.
/// Invariants: `dead[b] = dead[parent] || fail[b]` and the customer state is
/// `fault[j] || dead[branch]`.
struct CauseChain<'t, 'a> {
    tables: &'t FactorTables<'a>,
    fail: Vec<bool>,
    fault: Vec<bool>,
    dead: Vec<bool>,
    ln_fail: Vec<[f64; 2]>,
    ln_fault: [f64; 2],
    ln_lik: Vec<[f64; 2]>,
    region: Vec<usize>,
}

fn ln_pair(p: f64) -> [f64; 2] {
    [(1.0 - p).ln(), p.ln()]
}

impl<'t, 'a> CauseChain<'t, 'a> {
    /// Starts from a feasible state of branch and customer values.
    fn new(tables: &'t FactorTables<'a>, state: &[bool]) -> Self {
        let bn = tables.net();
        let k = bn.branch_count();
        let pl = tables.branch_failure();
        let pi2 = tables.customer_fault();
        let dead = state[..k].to_vec();
        let fail = (0..k)
            .map(|b| match bn.branch_parent(b) {
                Some(p) if dead[p] => pl[b] >= 1.0,
                _ => dead[b],
            })
            .collect();
        let fault = (0..bn.customer_count())
            .map(|j| {
                if dead[bn.customer_branch(j)] {
                    pi2 >= 1.0
                } else {
                    state[k + j]
                }
            })
            .collect();
        Self {
            tables,
            fail,
            fault,
            dead,
            ln_fail: pl.iter().map(|&p| ln_pair(p)).collect(),
            ln_fault: ln_pair(pi2),
            ln_lik: (0..bn.customer_count())
                .map(|j| {
                    let l = tables.customer_likelihood(j);
                    [l[0].ln(), l[1].ln()]
                })
                .collect(),
            region: Vec::new(),
        }
    }

    fn update(&mut self, u: usize, rng: &mut ChaCha8Rng) {
        let bn = self.tables.net();
        let k = bn.branch_count();
        if u < k {
            self.update_branch(u, rng);
        } else {
            let j = u - k;
            let lw = if self.dead[bn.customer_branch(j)] {
                self.ln_fault
            } else {
                [
                    self.ln_fault[0] + self.ln_lik[j][0],
                    self.ln_fault[1] + self.ln_lik[j][1],
                ]
            };
            if let Some(v) = draw_log(lw, rng) {
                self.fault[j] = v;
            }
        }
    }

    /// Log-likelihood, alive and dead, of the customers without a fault on
    /// `c` and the descendants whose state follows `c` (pruned below at
    /// branches that failed themselves). The branches are appended to
    /// `self.region`.
    fn follower_lik(&mut self, c: usize) -> [f64; 2] {
        let bn = self.tables.net();
        let first = self.region.len();
        self.region.push(c);
        let mut i = first;
        let mut lw = [0.0; 2];
        while i < self.region.len() {
            let r = self.region[i];
            i += 1;
            for &j in bn.branch_customers(r) {
                if !self.fault[j] {
                    lw[0] += self.ln_lik[j][0];
                    lw[1] += self.ln_lik[j][1];
                }
            }
            for &g in bn.branch_children(r) {
                if !self.fail[g] {
                    self.region.push(g);
                }
            }
        }
        lw
    }

    /// Draws the failure of `b` jointly with those of its children. Moving
    /// an outage from a branch to one child is then a single step; with
    /// one-at-a-time updates it needs the child's failure to be drawn from
    /// the prior first, which is rare.
    fn update_branch(&mut self, b: usize, rng: &mut ChaCha8Rng) {
        let bn = self.tables.net();
        if bn.branch_parent(b).is_some_and(|p| self.dead[p]) {
            // the state of the subtree does not depend on this cause
            if let Some(v) = draw_log(self.ln_fail[b], rng) {
                self.fail[b] = v;
            }
            return;
        }
        let children = bn.branch_children(b);
        let mut own = [0.0; 2];
        for &j in bn.branch_customers(b) {
            if !self.fault[j] {
                own[0] += self.ln_lik[j][0];
                own[1] += self.ln_lik[j][1];
            }
        }
        self.region.clear();
        let mut bounds = [0usize; 8];
        let mut child_lw = [[0.0; 2]; 8];
        let blocked = children.len() < bounds.len();
        if !blocked {
            // wide fan-out: plain update of the failure of b alone
            let mut lw = [self.ln_fail[b][0] + own[0], self.ln_fail[b][1] + own[1]];
            for &c in children {
                if !self.fail[c] {
                    let l = self.follower_lik(c);
                    lw[0] += l[0];
                    lw[1] += l[1];
                }
            }
            if let Some(v) = draw_log(lw, rng) {
                self.fail[b] = v;
                self.dead[b] = v;
                for &r in &self.region {
                    self.dead[r] = v;
                }
            }
            return;
        }
        // b failed: every child is dead whatever its own cause.
        // b held: each child lives or dies by its own cause.
        let mut lw = [self.ln_fail[b][0] + own[0], self.ln_fail[b][1] + own[1]];
        for (i, &c) in children.iter().enumerate() {
            let l = self.follower_lik(c);
            bounds[i + 1] = self.region.len();
            child_lw[i] = [self.ln_fail[c][0] + l[0], self.ln_fail[c][1] + l[1]];
            lw[0] += log_add(child_lw[i][0], child_lw[i][1]);
            lw[1] += l[1];
        }
        let Some(v) = draw_log(lw, rng) else { return };
        self.fail[b] = v;
        self.dead[b] = v;
        for (i, &c) in children.iter().enumerate() {
            let w = if v { self.ln_fail[c] } else { child_lw[i] };
            let Some(fc) = draw_log(w, rng) else { continue };
            self.fail[c] = fc;
            for r in bounds[i]..bounds[i + 1] {
                let r = self.region[r];
                self.dead[r] = v || fc;
            }
        }
    }

    fn write_state(&self, state: &mut [bool]) {
        let bn = self.tables.net();
        let k = bn.branch_count();
        state[..k].copy_from_slice(&self.dead);
        for (j, s) in state[k..].iter_mut().enumerate() {
            *s = self.fault[j] || self.dead[bn.customer_branch(j)];
        }
    }
}

/// `ln(e^a + e^b)`.
#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Two-point draw from log weights; `None` when both are impossible.
#[inline]
fn draw_log(lw: [f64; 2], rng: &mut ChaCha8Rng) -> Option<bool> {
    let m = lw[0].max(lw[1]);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return None;
    }
    Some(draw([(lw[0] - m).exp(), (lw[1] - m).exp()], rng))
}

/// Runs chain `chain_index` on precomputed tables.
pub fn run_chain_with_tables(
    tables: &FactorTables<'_>,
    cfg: &GibbsConfig,
    chain_index: usize,
) -> Result<ChainRun, GibbsError> {
    cfg.validate()?;
    let bn = tables.net();
    let n = bn.unknown_count();
    let mut rng = chain_rng(cfg.seed, chain_index);
    let mut state: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    tables.project_to_support(&mut state)?;
    let mut order = scan_list(bn);
    let mut causes = (cfg.sampler == Sampler::Causes).then(|| CauseChain::new(tables, &state));

    let start = retained_start(cfg.iterations, cfg.burn_in);
    let mut ones = vec![0u64; n];
    let mut trace = cfg
        .keep_samples
        .then(|| Vec::with_capacity(cfg.iterations * n));
    for tau in 0..cfg.iterations {
        if cfg.scan_order == ScanOrder::Random {
            order.shuffle(&mut rng);
        }
        match causes.as_mut() {
            Some(chain) => {
                for &u in &order {
                    chain.update(u, &mut rng);
                }
                chain.write_state(&mut state);
            }
            None => sweep(tables, &order, &mut state, &mut rng),
        }
        if tau >= start {
            for (count, &s) in ones.iter_mut().zip(&state) {
                *count += u64::from(s);
            }
        }
        if let Some(t) = trace.as_mut() {
            t.extend(state.iter().map(|&s| u8::from(s)));
        }
    }
    Ok(ChainRun {
        ones,
        retained: (cfg.iterations - start) as u64,
        trace: trace.map(|samples| ChainTrace { vars: n, samples }),
    })
}

/// Runs one chain and returns its full sample trace.
pub fn run_chain(
    bn: &BayesNet,
    ev: &EvidenceSet,
    cfg: &GibbsConfig,
    chain_index: usize,
) -> Result<ChainTrace, GibbsError> {
    let tables = FactorTables::new(bn, ev)?;
    let cfg = GibbsConfig {
        keep_samples: true,
        ..*cfg
    };
    Ok(run_chain_with_tables(&tables, &cfg, chain_index)?
        .trace
        .expect("trace requested"))
}

/// Frequency of ones after discarding the leading `burn_in` fraction.
pub fn estimate_marginal(samples: &[u8], burn_in: f64) -> Result<f64, GibbsError> {
    let start = retained_start(samples.len(), burn_in);
    let kept = &samples[start.min(samples.len())..];
    if kept.is_empty() {
        return Err(GibbsError::EmptyRetained);
    }
    Ok(kept.iter().map(|&s| f64::from(s)).sum::<f64>() / kept.len() as f64)
}

/// Pooled marginals over several traces of the same variables.
pub fn estimate_marginals(traces: &[ChainTrace], burn_in: f64) -> Result<Vec<f64>, GibbsError> {
    let vars = traces.first().map_or(0, ChainTrace::var_count);
    let mut ones = vec![0u64; vars];
    let mut kept = 0u64;
    for t in traces {
        let start = retained_start(t.len(), burn_in);
        for tau in start..t.len() {
            for (o, &s) in ones.iter_mut().zip(t.sweep(tau)) {
                *o += u64::from(s);
            }
        }
        kept += (t.len() - start) as u64;
    }
    if kept == 0 {
        return Err(GibbsError::EmptyRetained);
    }
    Ok(ones.into_iter().map(|o| o as f64 / kept as f64).collect())
}

/// Thresholds marginals and locates outages.
pub fn decide_and_locate(
    topology: &FeederTopology,
    branch_marginals: Vec<f64>,
    customer_marginals: Vec<f64>,
) -> PosteriorEstimate {
    let decided_branches: Vec<bool> = branch_marginals
        .iter()
        .map(|&p| p > DECISION_THRESHOLD)
        .collect();
    let decided_customers = customer_marginals
        .iter()
        .map(|&p| p > DECISION_THRESHOLD)
        .collect();
    let locations = topology.select_outage_locations(&decided_branches);
    PosteriorEstimate {
        branch_marginals,
        customer_marginals,
        decided_branches,
        decided_customers,
        locations,
        chain_samples: None,
    }
}

/// Runs `cfg.chains` chains and pools their retained samples.
pub fn infer_with_tables(
    tables: &FactorTables<'_>,
    topology: &FeederTopology,
    cfg: &GibbsConfig,
) -> Result<PosteriorEstimate, GibbsError> {
    cfg.validate()?;
    let runs: Vec<ChainRun> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain_with_tables(tables, cfg, c))
        .collect::<Result<_, _>>()?;
    let n = tables.unknown_count();
    let mut ones = vec![0u64; n];
    let mut kept = 0;
    for r in &runs {
        for (o, x) in ones.iter_mut().zip(&r.ones) {
            *o += x;
        }
        kept += r.retained;
    }
    let k = tables.net().branch_count();
    let marginals: Vec<f64> = ones.iter().map(|&o| o as f64 / kept as f64).collect();
    let mut estimate =
        decide_and_locate(topology, marginals[..k].to_vec(), marginals[k..].to_vec());
    if cfg.keep_samples {
        estimate.chain_samples = Some(ChainSamples {
            chains: runs.into_iter().filter_map(|r| r.trace).collect(),
        });
    }
    Ok(estimate)
}

/// Gibbs inference of branch and customer de-energization given `ev`.
pub fn infer(
    bn: &BayesNet,
    topology: &FeederTopology,
    ev: &EvidenceSet,
    cfg: &GibbsConfig,
) -> Result<PosteriorEstimate, GibbsError> {
    let tables = FactorTables::new(bn, ev)?;
    infer_with_tables(&tables, topology, cfg)
}

/// Draws the episode's parameters from `model`, builds the network with the
/// evidence's meter coverage and runs [`infer`].
pub fn locate(
    topology: &FeederTopology,
    model: &ModelParams,
    ev: &EvidenceSet,
    cfg: &GibbsConfig,
) -> Result<PosteriorEstimate, GibbsError> {
    // stream 0 is reserved for parameter draws; chains use 1..
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let episode = model.draw(&mut rng);
    let bn = BayesNet::new(topology, &episode, &ev.meter_coverage());
    infer(&bn, topology, ev, cfg)
}
