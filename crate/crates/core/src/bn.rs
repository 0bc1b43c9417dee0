//! Bayesian network over feeder branch and customer states.
//!
//! Structure, per branch `i` and customer `j` on it:
//!
//! ```text
//! D_parent ─┐
//! E^w_i ────┤
//! E^v_i ────┼─> D_i ──> C_i^j ──> E^h_ij
//! E^b_i ────┘                └──> E^m_ij   (metered customers only)
//! ```
//!
//! The root branch's upstream state is the substation, which is always
//! energized. Wind, vegetation and physical evidence are fixed conditioning
//! values folded into the branch factor; they are never sampled.
//!
//! Two evaluation paths exist. [`BayesNet::joint_log_prob`] and
//! [`BayesNet::local_conditional`] work on a full [`Assignment`] and
//! evaluate the factor functions directly. [`FactorTables`] caches the
//! per-episode numbers (branch failure probabilities, evidence likelihoods)
//! over a dense state vector and is what the samplers use.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::evidence::EvidenceSet;
use crate::factors::{
    branch_failure_probability, branch_state_factor, customer_state_factor, human_evidence_factor,
    meter_evidence_factor, BinaryDist, BranchEvidence, Vegetation,
};
use crate::feeder::{BranchPhysical, FeederTopology};
use crate::params::EpisodeParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BnError {
    #[error("assignment is missing a value for {0}")]
    Incomplete(String),
    #[error("{0} is an evidence node, not an unknown state")]
    NotUnknown(String),
    #[error("zero support at {0}: hard evidence contradicts the deterministic factors")]
    ZeroSupport(String),
    #[error("assignment holds a value of the wrong type for {0}")]
    WrongValue(String),
    #[error("evidence does not match the network: {0}")]
    EvidenceMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    BranchState,
    CustomerState,
    HumanEvidence,
    MeterEvidence,
    WindEvidence,
    VegetationEvidence,
    PhysicalEvidence,
}

/// A vertex of the network; `branch` and `customer` are topology indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub branch: usize,
    pub customer: Option<usize>,
}

impl NodeRef {
    pub fn branch_state(branch: usize) -> Self {
        Self {
            kind: NodeKind::BranchState,
            branch,
            customer: None,
        }
    }

    fn customer_node(kind: NodeKind, branch: usize, customer: usize) -> Self {
        Self {
            kind,
            branch,
            customer: Some(customer),
        }
    }

    fn branch_node(kind: NodeKind, branch: usize) -> Self {
        Self {
            kind,
            branch,
            customer: None,
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self.kind, NodeKind::BranchState | NodeKind::CustomerState)
    }
}

/// Which conditional distribution is attached to a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    BranchState,
    CustomerState,
    HumanReport,
    MeterReport,
    /// Observed context; no factor.
    Conditioning,
}

/// A value held by an assignment.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Binary(bool),
    Wind(f64),
    Vegetation(Vegetation),
    Physical(BranchPhysical),
}

/// Values for (some of) the network's nodes, indexed by node position.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    values: Vec<Option<Value>>,
}

impl Assignment {
    pub fn empty(bn: &BayesNet) -> Self {
        Self {
            values: vec![None; bn.node_count()],
        }
    }

    /// Evidence nodes from `ev`, unknown states from `states` (branches
    /// then customers, see [`BayesNet::unknown_count`]).
    pub fn from_evidence(bn: &BayesNet, ev: &EvidenceSet, states: &[bool]) -> Self {
        assert_eq!(states.len(), bn.unknown_count());
        let mut a = Self::empty(bn);
        for (i, node) in bn.nodes.iter().enumerate() {
            let v = match node.kind {
                NodeKind::BranchState => Value::Binary(states[node.branch]),
                NodeKind::CustomerState => {
                    Value::Binary(states[bn.branch_count() + node.customer.unwrap()])
                }
                NodeKind::HumanEvidence => Value::Binary(ev.human[node.customer.unwrap()]),
                NodeKind::MeterEvidence => {
                    Value::Binary(ev.meter[node.customer.unwrap()].unwrap_or(false))
                }
                NodeKind::WindEvidence => Value::Wind(ev.wind[node.branch]),
                NodeKind::VegetationEvidence => Value::Vegetation(ev.vegetation[node.branch]),
                NodeKind::PhysicalEvidence => Value::Physical(bn.physical[node.branch].clone()),
            };
            a.values[i] = Some(v);
        }
        a
    }

    pub fn set(&mut self, node: usize, value: Value) {
        self.values[node] = Some(value);
    }

    pub fn clear(&mut self, node: usize) {
        self.values[node] = None;
    }

    pub fn get(&self, node: usize) -> Option<&Value> {
        self.values[node].as_ref()
    }
}

/// The outage Bayesian network of one feeder.
#[derive(Debug, Clone)]
pub struct BayesNet {
    nodes: Vec<NodeRef>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    index: HashMap<NodeRef, usize>,
    params: EpisodeParams,
    branch_ids: Vec<String>,
    customer_ids: Vec<String>,
    branch_parent: Vec<Option<usize>>,
    branch_children: Vec<Vec<usize>>,
    branch_customers: Vec<Vec<usize>>,
    customer_branch: Vec<usize>,
    metered: Vec<bool>,
    physical: Vec<BranchPhysical>,
    branch_order: Vec<usize>,
}

impl BayesNet {
    /// Builds the network for `topology` with one meter-evidence node per
    /// customer flagged in `meter_coverage`.
    pub fn new(topology: &FeederTopology, params: &EpisodeParams, meter_coverage: &[bool]) -> Self {
        let k = topology.branch_count();
        let n = topology.customer_count();
        assert_eq!(
            meter_coverage.len(),
            n,
            "meter coverage must list every customer"
        );

        let mut nodes = Vec::new();
        nodes.extend((0..k).map(NodeRef::branch_state));
        for j in 0..n {
            nodes.push(NodeRef::customer_node(
                NodeKind::CustomerState,
                topology.customer_branch(j),
                j,
            ));
        }
        for j in 0..n {
            nodes.push(NodeRef::customer_node(
                NodeKind::HumanEvidence,
                topology.customer_branch(j),
                j,
            ));
        }
        for j in (0..n).filter(|&j| meter_coverage[j]) {
            nodes.push(NodeRef::customer_node(
                NodeKind::MeterEvidence,
                topology.customer_branch(j),
                j,
            ));
        }
        for kind in [
            NodeKind::WindEvidence,
            NodeKind::VegetationEvidence,
            NodeKind::PhysicalEvidence,
        ] {
            nodes.extend((0..k).map(|b| NodeRef::branch_node(kind, b)));
        }
        let index: HashMap<NodeRef, usize> =
            nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();

        let mut parents = vec![Vec::new(); nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            let b = node.branch;
            parents[i] = match node.kind {
                NodeKind::BranchState => {
                    let mut p = Vec::with_capacity(4);
                    if let Some(up) = topology.parent(b) {
                        p.push(index[&NodeRef::branch_state(up)]);
                    }
                    p.push(index[&NodeRef::branch_node(NodeKind::WindEvidence, b)]);
                    p.push(index[&NodeRef::branch_node(NodeKind::VegetationEvidence, b)]);
                    p.push(index[&NodeRef::branch_node(NodeKind::PhysicalEvidence, b)]);
                    p
                }
                NodeKind::CustomerState => vec![index[&NodeRef::branch_state(b)]],
                NodeKind::HumanEvidence | NodeKind::MeterEvidence => vec![
                    index[&NodeRef::customer_node(
                        NodeKind::CustomerState,
                        b,
                        node.customer.unwrap(),
                    )],
                ],
                _ => Vec::new(),
            };
        }
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(i);
            }
        }

        Self {
            nodes,
            parents,
            children,
            index,
            params: *params,
            branch_ids: topology.branches().iter().map(|b| b.id.clone()).collect(),
            customer_ids: topology.customers().iter().map(|c| c.id.clone()).collect(),
            branch_parent: (0..k).map(|b| topology.parent(b)).collect(),
            branch_children: (0..k).map(|b| topology.children(b).to_vec()).collect(),
            branch_customers: (0..k)
                .map(|b| topology.branch_customers(b).to_vec())
                .collect(),
            customer_branch: (0..n).map(|j| topology.customer_branch(j)).collect(),
            metered: meter_coverage.to_vec(),
            physical: topology
                .branches()
                .iter()
                .map(|b| b.physical.clone())
                .collect(),
            branch_order: topology.topological_order().to_vec(),
        }
    }

    pub fn params(&self) -> &EpisodeParams {
        &self.params
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeRef] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> NodeRef {
        self.nodes[i]
    }

    pub fn index_of(&self, node: &NodeRef) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn branch_count(&self) -> usize {
        self.branch_ids.len()
    }

    pub fn customer_count(&self) -> usize {
        self.customer_ids.len()
    }

    /// Number of unknown state variables: all branches, then all customers.
    /// Unknown `u < branch_count()` is branch `u`; otherwise customer
    /// `u - branch_count()`. These are also node indices.
    pub fn unknown_count(&self) -> usize {
        self.branch_count() + self.customer_count()
    }

    pub fn metered(&self) -> &[bool] {
        &self.metered
    }

    pub fn branch_id(&self, b: usize) -> &str {
        &self.branch_ids[b]
    }

    pub fn customer_id(&self, c: usize) -> &str {
        &self.customer_ids[c]
    }

    pub fn branch_order(&self) -> &[usize] {
        &self.branch_order
    }

    pub fn branch_parent(&self, b: usize) -> Option<usize> {
        self.branch_parent[b]
    }

    pub fn branch_children(&self, b: usize) -> &[usize] {
        &self.branch_children[b]
    }

    pub fn branch_customers(&self, b: usize) -> &[usize] {
        &self.branch_customers[b]
    }

    pub fn customer_branch(&self, c: usize) -> usize {
        self.customer_branch[c]
    }

    pub fn factor_kind(&self, i: usize) -> FactorKind {
        match self.nodes[i].kind {
            NodeKind::BranchState => FactorKind::BranchState,
            NodeKind::CustomerState => FactorKind::CustomerState,
            NodeKind::HumanEvidence => FactorKind::HumanReport,
            NodeKind::MeterEvidence => FactorKind::MeterReport,
            _ => FactorKind::Conditioning,
        }
    }

    /// Human readable node label, e.g. `D[b3]`, `Em[c12]`.
    pub fn label(&self, i: usize) -> String {
        let node = self.nodes[i];
        let cust = || &self.customer_ids[node.customer.unwrap()];
        match node.kind {
            NodeKind::BranchState => format!("D[{}]", self.branch_ids[node.branch]),
            NodeKind::CustomerState => format!("C[{}]", cust()),
            NodeKind::HumanEvidence => format!("Eh[{}]", cust()),
            NodeKind::MeterEvidence => format!("Em[{}]", cust()),
            NodeKind::WindEvidence => format!("Ew[{}]", self.branch_ids[node.branch]),
            NodeKind::VegetationEvidence => format!("Ev[{}]", self.branch_ids[node.branch]),
            NodeKind::PhysicalEvidence => format!("Eb[{}]", self.branch_ids[node.branch]),
        }
    }

    /// Kahn topological order over all nodes; `None` if the graph had a
    /// cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &c in &self.children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// Nodes that are neither `i` nor reachable from `i`.
    pub fn non_descendants(&self, i: usize) -> Vec<usize> {
        let mut seen = HashSet::from([i]);
        let mut stack = vec![i];
        while let Some(x) = stack.pop() {
            for &c in &self.children[x] {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        (0..self.nodes.len())
            .filter(|x| !seen.contains(x))
            .collect()
    }

    /// Free parameters of the factorized model: a binary node with `p`
    /// binary state parents needs `2^p` Bernoulli parameters. Continuous
    /// conditioning parents are folded into the branch parameter.
    pub fn parameter_count(&self) -> usize {
        (0..self.unknown_count())
            .map(|i| {
                let binary_parents = self.parents[i]
                    .iter()
                    .filter(|&&p| self.nodes[p].is_unknown())
                    .count();
                1usize << binary_parents
            })
            .sum()
    }

    fn binary(&self, a: &Assignment, i: usize) -> Result<bool, BnError> {
        match a.get(i) {
            Some(Value::Binary(v)) => Ok(*v),
            Some(_) => Err(BnError::WrongValue(self.label(i))),
            None => Err(BnError::Incomplete(self.label(i))),
        }
    }

    /// Value of the factor bound to node `i` at assignment `a`.
    fn factor_value(&self, i: usize, a: &Assignment) -> Result<f64, BnError> {
        let node = self.nodes[i];
        let value = match node.kind {
            NodeKind::BranchState => {
                let b = node.branch;
                let parent_out = match self.branch_parent[b] {
                    Some(p) => self.binary(a, p)?,
                    None => false,
                };
                let ps = &self.parents[i];
                let ctx = &ps[ps.len() - 3..];
                let wind = match a.get(ctx[0]) {
                    Some(Value::Wind(w)) => *w,
                    Some(_) => return Err(BnError::WrongValue(self.label(ctx[0]))),
                    None => return Err(BnError::Incomplete(self.label(ctx[0]))),
                };
                let vegetation = match a.get(ctx[1]) {
                    Some(Value::Vegetation(v)) => *v,
                    Some(_) => return Err(BnError::WrongValue(self.label(ctx[1]))),
                    None => return Err(BnError::Incomplete(self.label(ctx[1]))),
                };
                let physical = match a.get(ctx[2]) {
                    Some(Value::Physical(p)) => p,
                    Some(_) => return Err(BnError::WrongValue(self.label(ctx[2]))),
                    None => return Err(BnError::Incomplete(self.label(ctx[2]))),
                };
                let ev = BranchEvidence {
                    wind_speed: wind,
                    vegetation,
                    physical,
                };
                branch_state_factor(parent_out, &ev, &self.params.fragility)
                    .prob(self.binary(a, i)?)
            }
            NodeKind::CustomerState => {
                customer_state_factor(self.binary(a, self.parents[i][0])?, self.params.pi2)
                    .prob(self.binary(a, i)?)
            }
            NodeKind::HumanEvidence => {
                human_evidence_factor(self.binary(a, self.parents[i][0])?, &self.params)
                    .prob(self.binary(a, i)?)
            }
            NodeKind::MeterEvidence => meter_evidence_factor(
                self.binary(a, self.parents[i][0])?,
                self.params.pi4,
                self.params.pi5,
            )
            .prob(self.binary(a, i)?),
            _ => {
                // conditioning inputs carry no factor but must be present
                a.get(i).ok_or_else(|| BnError::Incomplete(self.label(i)))?;
                1.0
            }
        };
        Ok(value)
    }

    /// `log P(D, C, E)` at a complete assignment; `-inf` when a
    /// deterministic factor is violated.
    pub fn joint_log_prob(&self, a: &Assignment) -> Result<f64, BnError> {
        let mut total = 0.0;
        for i in 0..self.nodes.len() {
            total += self.factor_value(i, a)?.ln();
        }
        Ok(total)
    }

    /// `P(x | everything else)`, from the factor of `x` and the factors of
    /// its children. The value currently held by `x` in `a`, if any, is
    /// ignored.
    pub fn local_conditional(&self, x: usize, a: &Assignment) -> Result<BinaryDist, BnError> {
        if !self.nodes[x].is_unknown() {
            return Err(BnError::NotUnknown(self.label(x)));
        }
        let mut scratch = a.clone();
        let mut w = [0.0; 2];
        for (v, slot) in [false, true].into_iter().zip(w.iter_mut()) {
            scratch.set(x, Value::Binary(v));
            let mut p = self.factor_value(x, &scratch)?;
            for &c in &self.children[x] {
                p *= self.factor_value(c, &scratch)?;
            }
            *slot = p;
        }
        let z = w[0] + w[1];
        if z <= 0.0 {
            return Err(BnError::ZeroSupport(self.label(x)));
        }
        Ok(BinaryDist {
            p0: w[0] / z,
            p1: w[1] / z,
        })
    }
}

impl fmt::Display for BayesNet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BayesNet({} branches, {} customers, {} nodes)",
            self.branch_count(),
            self.customer_count(),
            self.node_count()
        )
    }
}

/// Per-episode factor numbers over a dense unknown-state vector.
///
/// `state[u]` follows the unknown numbering of [`BayesNet::unknown_count`].
#[derive(Debug, Clone)]
pub struct FactorTables<'a> {
    bn: &'a BayesNet,
    branch_fail: Vec<f64>,
    pi2: f64,
    /// `P(E^h = obs | C = v) * P(E^m = obs | C = v)` per customer.
    customer_lik: Vec<[f64; 2]>,
}

impl<'a> FactorTables<'a> {
    pub fn new(bn: &'a BayesNet, ev: &EvidenceSet) -> Result<Self, BnError> {
        if ev.human.len() != bn.customer_count() || ev.wind.len() != bn.branch_count() {
            return Err(BnError::EvidenceMismatch(
                "evidence sized for a different feeder".into(),
            ));
        }
        if ev.meter_coverage() != bn.metered {
            return Err(BnError::EvidenceMismatch(
                "meter evidence does not match the network's meter coverage".into(),
            ));
        }
        let mut params = bn.params;
        if let Some(w) = ev.elapsed_window {
            params.delta_t = w;
        }
        let branch_fail = (0..bn.branch_count())
            .map(|b| {
                branch_failure_probability(
                    &BranchEvidence {
                        wind_speed: ev.wind[b],
                        vegetation: ev.vegetation[b],
                        physical: &bn.physical[b],
                    },
                    &params.fragility,
                )
            })
            .collect();
        let customer_lik = (0..bn.customer_count())
            .map(|c| {
                let lik = |out: bool| {
                    let mut p = human_evidence_factor(out, &params).prob(ev.human[c]);
                    if let Some(m) = ev.meter[c] {
                        p *= meter_evidence_factor(out, params.pi4, params.pi5).prob(m);
                    }
                    p
                };
                [lik(false), lik(true)]
            })
            .collect();
        Ok(Self {
            bn,
            branch_fail,
            pi2: params.pi2,
            customer_lik,
        })
    }

    /// Tables with explicit branch failure probabilities in place of the
    /// fragility model.
    pub fn with_failure_probabilities(
        bn: &'a BayesNet,
        ev: &EvidenceSet,
        branch_fail: Vec<f64>,
    ) -> Result<Self, BnError> {
        assert_eq!(branch_fail.len(), bn.branch_count());
        let mut t = Self::new(bn, ev)?;
        t.branch_fail = branch_fail;
        Ok(t)
    }

    pub fn net(&self) -> &'a BayesNet {
        self.bn
    }

    pub fn unknown_count(&self) -> usize {
        self.bn.unknown_count()
    }

    pub fn branch_failure(&self) -> &[f64] {
        &self.branch_fail
    }

    /// Probability of a customer-side fault.
    pub fn customer_fault(&self) -> f64 {
        self.pi2
    }

    /// `[P(evidence | C_j = 0), P(evidence | C_j = 1)]` for customer `j`.
    pub fn customer_likelihood(&self, j: usize) -> [f64; 2] {
        self.customer_lik[j]
    }

    /// Unnormalized `[w(0), w(1)]` of the local conditional of unknown `u`.
    #[inline]
    pub fn weights(&self, u: usize, state: &[bool]) -> [f64; 2] {
        let k = self.bn.branch_count();
        if u < k {
            let parent_out = self.bn.branch_parent[u].is_some_and(|p| state[p]);
            let pl = self.branch_fail[u];
            let (mut w0, mut w1) = if parent_out {
                (0.0, 1.0)
            } else {
                (1.0 - pl, pl)
            };
            for &c in &self.bn.branch_children[u] {
                if state[c] {
                    w0 *= self.branch_fail[c];
                } else {
                    w0 *= 1.0 - self.branch_fail[c];
                    w1 = 0.0;
                }
            }
            for &j in &self.bn.branch_customers[u] {
                if state[k + j] {
                    w0 *= self.pi2;
                } else {
                    w0 *= 1.0 - self.pi2;
                    w1 = 0.0;
                }
            }
            [w0, w1]
        } else {
            let j = u - k;
            let lik = self.customer_lik[j];
            if state[self.bn.customer_branch[j]] {
                [0.0, lik[1]]
            } else {
                [(1.0 - self.pi2) * lik[0], self.pi2 * lik[1]]
            }
        }
    }

    /// Moves `state` to a nearby state of positive probability, or reports
    /// that none exists.
    ///
    /// A branch keeps the value 1 only if it and everything it feeds are 1
    /// in `state`; otherwise the value 0 is preferred. Where the preferred
    /// value is impossible under the evidence, the other one is taken.
    /// Customers keep their value whenever it is possible.
    pub fn project_to_support(&self, state: &mut [bool]) -> Result<(), BnError> {
        let bn = self.bn;
        let k = bn.branch_count();
        let n = bn.customer_count();
        let lik = &self.customer_lik;
        let pc = |c: bool| if c { self.pi2 } else { 1.0 - self.pi2 };
        // customer value c possible on an energized branch
        let cust_ok0 = |j: usize, c: bool| pc(c) * lik[j][usize::from(c)] > 0.0;
        let cust_ok1 = |j: usize| lik[j][1] > 0.0;

        // sub[b][d]: the subtree of b has a possible completion given D_b = d
        let mut sub = vec![[false; 2]; k];
        let mut all_out = vec![false; k];
        for &b in bn.branch_order.iter().rev() {
            let custs = &bn.branch_customers[b];
            let kids = &bn.branch_children[b];
            sub[b][1] = custs.iter().all(|&j| cust_ok1(j)) && kids.iter().all(|&c| sub[c][1]);
            sub[b][0] = custs
                .iter()
                .all(|&j| cust_ok0(j, false) || cust_ok0(j, true))
                && kids
                    .iter()
                    .all(|&c| self.allowed(c, false, &sub) || self.allowed(c, true, &sub));
            all_out[b] =
                state[b] && custs.iter().all(|&j| state[k + j]) && kids.iter().all(|&c| all_out[c]);
        }
        let root = bn.branch_order[0];
        if !self.allowed(root, false, &sub) && !self.allowed(root, true, &sub) {
            let culprit = (0..n)
                .find(|&j| !cust_ok1(j) && !cust_ok0(j, false) && !cust_ok0(j, true))
                .map_or_else(|| bn.label(root), |j| bn.label(k + j));
            return Err(BnError::ZeroSupport(culprit));
        }
        for &b in &bn.branch_order {
            let d = match bn.branch_parent[b] {
                Some(p) if state[p] => true,
                _ => {
                    let want = all_out[b];
                    if self.allowed(b, want, &sub) {
                        want
                    } else {
                        !want
                    }
                }
            };
            state[b] = d;
            for &j in &bn.branch_customers[b] {
                state[k + j] = d
                    || if cust_ok0(j, state[k + j]) {
                        state[k + j]
                    } else {
                        !state[k + j]
                    };
            }
        }
        debug_assert!(self.is_feasible(state));
        Ok(())
    }

    /// Branch `b` may take value `d` below an energized parent.
    fn allowed(&self, b: usize, d: bool, sub: &[[bool; 2]]) -> bool {
        let pl = self.branch_fail[b];
        let prior = if d { pl } else { 1.0 - pl };
        prior > 0.0 && sub[b][usize::from(d)]
    }

    /// `[P(x=0 | Pa), P(x=1 | Pa)]` for unknown `u`, ignoring its children.
    #[inline]
    pub fn prior_weights(&self, u: usize, state: &[bool]) -> [f64; 2] {
        let k = self.bn.branch_count();
        let (parent_out, p) = if u < k {
            (
                self.bn.branch_parent[u].is_some_and(|p| state[p]),
                self.branch_fail[u],
            )
        } else {
            (state[self.bn.customer_branch[u - k]], self.pi2)
        };
        if parent_out {
            [0.0, 1.0]
        } else {
            [1.0 - p, p]
        }
    }

    /// `log P(state, E)` including every evidence factor.
    pub fn log_joint(&self, state: &[bool]) -> f64 {
        let k = self.bn.branch_count();
        let mut total = 0.0;
        for b in 0..k {
            let parent_out = self.bn.branch_parent[b].is_some_and(|p| state[p]);
            let pl = self.branch_fail[b];
            let p = match (parent_out, state[b]) {
                (true, true) => 1.0,
                (true, false) => 0.0,
                (false, true) => pl,
                (false, false) => 1.0 - pl,
            };
            total += p.ln();
        }
        for j in 0..self.bn.customer_count() {
            let out = state[k + j];
            let p = match (state[self.bn.customer_branch[j]], out) {
                (true, true) => 1.0,
                (true, false) => 0.0,
                (false, true) => self.pi2,
                (false, false) => 1.0 - self.pi2,
            };
            total += (p * self.customer_lik[j][usize::from(out)]).ln();
        }
        total
    }

    pub fn is_feasible(&self, state: &[bool]) -> bool {
        self.log_joint(state) > f64::NEG_INFINITY
    }
}
