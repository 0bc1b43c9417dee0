//! Exact inference by enumerating every joint state of the unknowns.
//!
//! Exponential in the number of branch and customer variables; meant as a
//! reference for small networks.

use rayon::prelude::*;
use thiserror::Error;

use crate::bn::{BayesNet, BnError, FactorTables};
use crate::evidence::EvidenceSet;

pub const DEFAULT_LIMIT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("too large: {unknowns} unknown variables exceed the enumeration limit of {limit}")]
    TooLarge { unknowns: usize, limit: usize },
    #[error("zero evidence: every joint state has probability zero")]
    ZeroEvidence,
    #[error(transparent)]
    Net(#[from] BnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    /// `P(x = 1 | E)` per unknown (branches, then customers).
    pub marginals: Vec<f64>,
    /// Most probable joint state.
    pub map_assignment: Vec<bool>,
    /// `log P(E)`.
    pub log_evidence: f64,
}

impl ExactResult {
    pub fn branch_marginals(&self, bn: &BayesNet) -> &[f64] {
        &self.marginals[..bn.branch_count()]
    }

    pub fn customer_marginals(&self, bn: &BayesNet) -> &[f64] {
        &self.marginals[bn.branch_count()..]
    }
}

fn decode(bits: u64, n: usize, state: &mut [bool]) {
    for (i, s) in state.iter_mut().enumerate().take(n) {
        *s = bits >> i & 1 == 1;
    }
}

/// Enumerates all `2^r` states and returns `log P(state, E)` for each.
pub fn enumerate_log_joint(
    tables: &FactorTables<'_>,
    limit: usize,
) -> Result<Vec<f64>, ExactError> {
    let n = tables.unknown_count();
    if n > limit {
        return Err(ExactError::TooLarge { unknowns: n, limit });
    }
    let total = 1u64 << n;
    Ok((0..total)
        .into_par_iter()
        .map_init(
            || vec![false; n],
            |state, bits| {
                decode(bits, n, state);
                tables.log_joint(state)
            },
        )
        .collect())
}

pub fn exact_inference_with_tables(
    tables: &FactorTables<'_>,
    limit: usize,
) -> Result<ExactResult, ExactError> {
    let n = tables.unknown_count();
    let logs = enumerate_log_joint(tables, limit)?;
    let (best, max) =
        logs.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &l)| if l > acc.1 { (i, l) } else { acc },
        );
    if max == f64::NEG_INFINITY {
        return Err(ExactError::ZeroEvidence);
    }
    let mut z = 0.0;
    let mut ones = vec![0.0; n];
    for (bits, &l) in logs.iter().enumerate() {
        let w = (l - max).exp();
        if w == 0.0 {
            continue;
        }
        z += w;
        for (i, o) in ones.iter_mut().enumerate() {
            if bits >> i & 1 == 1 {
                *o += w;
            }
        }
    }
    let mut map_assignment = vec![false; n];
    decode(best as u64, n, &mut map_assignment);
    Ok(ExactResult {
        marginals: ones.into_iter().map(|o| o / z).collect(),
        map_assignment,
        log_evidence: max + z.ln(),
    })
}

/// Exact posterior marginals of every branch and customer state.
pub fn exact_inference(
    bn: &BayesNet,
    ev: &EvidenceSet,
    limit: usize,
) -> Result<ExactResult, ExactError> {
    let tables = FactorTables::new(bn, ev)?;
    exact_inference_with_tables(&tables, limit)
}
