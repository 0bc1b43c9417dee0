//! Radial feeder topologies.
//!
//! A feeder is a rooted tree of branches. The root branch hangs off the
//! substation, which is always energized. Customers attach to exactly one
//! branch and may or may not carry a smart meter.
//!
//! Topologies are read from and written to a line-oriented text format:
//!
//! ```text
//! # comment
//! branch b1 parent=none poles=4 spans=3,3,3 length_m=420 p_underground=0
//! branch b2 parent=b1 poles=2 spans=3,3 length_m=150 p_underground=0.5
//! customer c1 branch=b2 meter=1
//! ```

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::Read;

use thiserror::Error;

/// Errors raised while parsing or validating a topology.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("feeder has no branches")]
    Empty,
    #[error("duplicate branch id `{0}`")]
    DuplicateBranch(String),
    #[error("duplicate customer id `{0}`")]
    DuplicateCustomer(String),
    #[error("branch `{0}` is its own parent")]
    SelfParent(String),
    #[error("branch `{branch}` references unknown parent `{parent}`")]
    UnknownParent { branch: String, parent: String },
    #[error("customer `{customer}` references unknown branch `{branch}`")]
    DanglingCustomer { customer: String, branch: String },
    #[error("feeder has no root branch (every branch has a parent)")]
    NoRoot,
    #[error("feeder has several root branches: `{0}` and `{1}`")]
    MultipleRoots(String, String),
    #[error("cycle detected through branch `{0}`")]
    Cycle(String),
    #[error("branch `{id}`: {message}")]
    InvalidPhysical { id: String, message: String },
    #[error("unknown branch id `{0}`")]
    UnknownBranch(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Physical description of a branch, used by the fragility model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BranchPhysical {
    /// Number of supporting poles.
    pub pole_count: u32,
    /// Conductor count per span between neighbouring poles.
    pub span_conductor_counts: Vec<u32>,
    /// Total conductor length in meters.
    pub length_m: f64,
    /// Probability that a conductor of this branch is underground.
    pub underground_probability: f64,
}

impl BranchPhysical {
    /// Total number of conductors over all spans.
    pub fn conductor_count(&self) -> u32 {
        self.span_conductor_counts.iter().sum()
    }

    fn validate(&self, id: &str) -> Result<(), TopologyError> {
        if !(0.0..=1.0).contains(&self.underground_probability) {
            return Err(TopologyError::InvalidPhysical {
                id: id.to_string(),
                message: format!(
                    "p_underground {} outside [0,1]",
                    self.underground_probability
                ),
            });
        }
        if !(self.length_m >= 0.0) {
            return Err(TopologyError::InvalidPhysical {
                id: id.to_string(),
                message: format!("negative or NaN length {}", self.length_m),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchNode {
    pub id: String,
    pub parent: Option<String>,
    pub physical: BranchPhysical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomerNode {
    pub id: String,
    pub branch: String,
    pub has_meter: bool,
}

/// A validated radial feeder.
///
/// Branch and customer indices are positions in [`branches`](Self::branches)
/// and [`customers`](Self::customers). Immutable once built.
#[derive(Debug, Clone)]
pub struct FeederTopology {
    branches: Vec<BranchNode>,
    customers: Vec<CustomerNode>,
    root: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    branch_customers: Vec<Vec<usize>>,
    customer_branch: Vec<usize>,
    order: Vec<usize>,
    branch_index: HashMap<String, usize>,
    customer_index: HashMap<String, usize>,
}

impl FeederTopology {
    /// Validates branches and customers and builds the lookup tables.
    pub fn new(
        branches: Vec<BranchNode>,
        customers: Vec<CustomerNode>,
    ) -> Result<Self, TopologyError> {
        if branches.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut branch_index = HashMap::with_capacity(branches.len());
        for (i, b) in branches.iter().enumerate() {
            if branch_index.insert(b.id.clone(), i).is_some() {
                return Err(TopologyError::DuplicateBranch(b.id.clone()));
            }
            b.physical.validate(&b.id)?;
        }

        let mut parent = vec![None; branches.len()];
        let mut children = vec![Vec::new(); branches.len()];
        let mut root = None;
        for (i, b) in branches.iter().enumerate() {
            match &b.parent {
                None => match root {
                    None => root = Some(i),
                    Some(r) => {
                        return Err(TopologyError::MultipleRoots(
                            branches[r].id.clone(),
                            b.id.clone(),
                        ))
                    }
                },
                Some(p) if *p == b.id => return Err(TopologyError::SelfParent(b.id.clone())),
                Some(p) => {
                    let pi = *branch_index
                        .get(p)
                        .ok_or_else(|| TopologyError::UnknownParent {
                            branch: b.id.clone(),
                            parent: p.clone(),
                        })?;
                    parent[i] = Some(pi);
                    children[pi].push(i);
                }
            }
        }
        let Some(root) = root else {
            // Every branch has a parent, so the parent graph must contain a cycle.
            let culprit = find_cycle(&parent).unwrap_or(0);
            return Err(TopologyError::Cycle(branches[culprit].id.clone()));
        };

        let mut order = Vec::with_capacity(branches.len());
        let mut queue = VecDeque::from([root]);
        while let Some(b) = queue.pop_front() {
            order.push(b);
            queue.extend(children[b].iter().copied());
        }
        if order.len() != branches.len() {
            let culprit = find_cycle(&parent)
                .unwrap_or_else(|| (0..branches.len()).find(|i| !order.contains(i)).unwrap());
            return Err(TopologyError::Cycle(branches[culprit].id.clone()));
        }

        let mut customer_index = HashMap::with_capacity(customers.len());
        let mut branch_customers = vec![Vec::new(); branches.len()];
        let mut customer_branch = Vec::with_capacity(customers.len());
        for (j, c) in customers.iter().enumerate() {
            if customer_index.insert(c.id.clone(), j).is_some() {
                return Err(TopologyError::DuplicateCustomer(c.id.clone()));
            }
            let bi =
                *branch_index
                    .get(&c.branch)
                    .ok_or_else(|| TopologyError::DanglingCustomer {
                        customer: c.id.clone(),
                        branch: c.branch.clone(),
                    })?;
            branch_customers[bi].push(j);
            customer_branch.push(bi);
        }

        Ok(Self {
            branches,
            customers,
            root,
            parent,
            children,
            branch_customers,
            customer_branch,
            order,
            branch_index,
            customer_index,
        })
    }

    /// Parses and validates a topology from the text format.
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut branches = Vec::new();
        let mut customers = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = n + 1;
            let perr = |message: String| TopologyError::Parse {
                line: lineno,
                message,
            };
            let mut tokens = line.split_whitespace();
            let kind = tokens.next().unwrap();
            let id = tokens
                .next()
                .ok_or_else(|| perr(format!("`{kind}` record without an id")))?
                .to_string();
            match kind {
                "branch" => {
                    let mut parent = None;
                    let mut physical = BranchPhysical::default();
                    for tok in tokens {
                        let (key, value) = split_kv(tok).map_err(&perr)?;
                        match key {
                            "parent" => {
                                parent = Some(if value == "none" {
                                    None
                                } else {
                                    Some(value.to_string())
                                })
                            }
                            "poles" => {
                                physical.pole_count = parse_num(key, value).map_err(&perr)?
                            }
                            "spans" => {
                                physical.span_conductor_counts = if value.is_empty() {
                                    Vec::new()
                                } else {
                                    value
                                        .split(',')
                                        .map(|v| parse_num(key, v))
                                        .collect::<Result<_, _>>()
                                        .map_err(&perr)?
                                }
                            }
                            "length_m" => {
                                physical.length_m = parse_num(key, value).map_err(&perr)?
                            }
                            "p_underground" => {
                                physical.underground_probability =
                                    parse_num(key, value).map_err(&perr)?
                            }
                            other => return Err(perr(format!("unknown branch key `{other}`"))),
                        }
                    }
                    let parent =
                        parent.ok_or_else(|| perr(format!("branch `{id}` missing parent=")))?;
                    branches.push(BranchNode {
                        id,
                        parent,
                        physical,
                    });
                }
                "customer" => {
                    let mut branch = None;
                    let mut has_meter = false;
                    for tok in tokens {
                        let (key, value) = split_kv(tok).map_err(&perr)?;
                        match key {
                            "branch" => branch = Some(value.to_string()),
                            "meter" => {
                                has_meter = match value {
                                    "0" => false,
                                    "1" => true,
                                    _ => {
                                        return Err(perr(format!(
                                            "meter must be 0 or 1, got `{value}`"
                                        )))
                                    }
                                }
                            }
                            other => return Err(perr(format!("unknown customer key `{other}`"))),
                        }
                    }
                    let branch =
                        branch.ok_or_else(|| perr(format!("customer `{id}` missing branch=")))?;
                    customers.push(CustomerNode {
                        id,
                        branch,
                        has_meter,
                    });
                }
                other => return Err(perr(format!("unknown record type `{other}`"))),
            }
        }
        Self::new(branches, customers)
    }

    /// Reads a topology file from any byte stream.
    pub fn load<R: Read>(mut source: R) -> Result<Self, TopologyError> {
        let mut text = String::new();
        source
            .read_to_string(&mut text)
            .map_err(|e| TopologyError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn branches(&self) -> &[BranchNode] {
        &self.branches
    }

    pub fn customers(&self) -> &[CustomerNode] {
        &self.customers
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn customer_count(&self) -> usize {
        self.customers.len()
    }

    /// Index of the branch adjacent to the substation.
    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, branch: usize) -> Option<usize> {
        self.parent[branch]
    }

    pub fn children(&self, branch: usize) -> &[usize] {
        &self.children[branch]
    }

    /// Customer indices attached to `branch`.
    pub fn branch_customers(&self, branch: usize) -> &[usize] {
        &self.branch_customers[branch]
    }

    pub fn customer_branch(&self, customer: usize) -> usize {
        self.customer_branch[customer]
    }

    /// Branch indices in breadth-first order from the root; parents always
    /// precede their children.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn branch_index(&self, id: &str) -> Option<usize> {
        self.branch_index.get(id).copied()
    }

    pub fn customer_index(&self, id: &str) -> Option<usize> {
        self.customer_index.get(id).copied()
    }

    /// Branch ids on the path from `id` up to the root, inclusive.
    pub fn path_to_root(&self, id: &str) -> Result<Vec<&str>, TopologyError> {
        let start = self
            .branch_index(id)
            .ok_or_else(|| TopologyError::UnknownBranch(id.to_string()))?;
        Ok(self
            .path_to_root_indices(start)
            .into_iter()
            .map(|b| self.branches[b].id.as_str())
            .collect())
    }

    pub fn path_to_root_indices(&self, branch: usize) -> Vec<usize> {
        let mut path = vec![branch];
        let mut cur = branch;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path
    }

    /// All branches strictly below `branch`.
    pub fn descendants(&self, branch: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.children[branch].clone();
        while let Some(b) = stack.pop() {
            out.push(b);
            stack.extend(self.children[b].iter().copied());
        }
        out
    }

    /// Returns every de-energized branch whose upstream neighbour is
    /// energized (the substation counts as energized), in ascending index
    /// order. Each connected de-energized region yields its top branch.
    ///
    /// `states[i]` is `true` when branch `i` is de-energized.
    pub fn select_outage_locations(&self, states: &[bool]) -> Vec<usize> {
        assert_eq!(
            states.len(),
            self.branches.len(),
            "branch state vector must cover every branch"
        );
        (0..self.branches.len())
            .filter(|&b| states[b] && self.parent[b].map_or(true, |p| !states[p]))
            .collect()
    }

    /// Marks `outages` and everything below them as de-energized.
    pub fn propagate_outages(&self, outages: &[usize]) -> Vec<bool> {
        let mut states = vec![false; self.branches.len()];
        for &b in &self.order {
            let parent_out = self.parent[b].is_some_and(|p| states[p]);
            states[b] = parent_out || outages.contains(&b);
        }
        states
    }

    /// Serializes back into the text format.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FeederTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.branches {
            let spans: Vec<String> = b
                .physical
                .span_conductor_counts
                .iter()
                .map(u32::to_string)
                .collect();
            writeln!(
                f,
                "branch {} parent={} poles={} spans={} length_m={} p_underground={}",
                b.id,
                b.parent.as_deref().unwrap_or("none"),
                b.physical.pole_count,
                spans.join(","),
                b.physical.length_m,
                b.physical.underground_probability
            )?;
        }
        for c in &self.customers {
            writeln!(
                f,
                "customer {} branch={} meter={}",
                c.id,
                c.branch,
                u8::from(c.has_meter)
            )?;
        }
        Ok(())
    }
}

fn split_kv(tok: &str) -> Result<(&str, &str), String> {
    tok.split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{tok}`"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .trim()
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

/// Finds a branch that lies on a parent cycle, if any.
fn find_cycle(parent: &[Option<usize>]) -> Option<usize> {
    let n = parent.len();
    // 0 = unvisited, 1 = on current walk, 2 = finished
    let mut mark = vec![0u8; n];
    for start in 0..n {
        let mut walk = Vec::new();
        let mut cur = Some(start);
        while let Some(b) = cur {
            match mark[b] {
                1 => return Some(b),
                2 => break,
                _ => {
                    mark[b] = 1;
                    walk.push(b);
                    cur = parent[b];
                }
            }
        }
        for b in walk {
            mark[b] = 2;
        }
    }
    None
}
