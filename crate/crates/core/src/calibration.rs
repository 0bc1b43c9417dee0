//! Convergence diagnostics for the sampler and the offline choice of the
//! number of sweeps.
//!
//! Each retained sequence is split in half, giving `2n` rows of `m` samples
//! from `n` chains. With row means `t_j`, grand mean `t` and row variances
//! `s_j^2` (denominator `m - 1`):
//!
//! ```text
//! B = m / (2n - 1) * sum_j (t_j - t)^2
//! V = 1 / (2n) * sum_j s_j^2
//! R = sqrt(((n - 1) / n * V + B / n) / V)
//! ```
//!
//! `n` in the last line is the number of chains before splitting, not the
//! number of rows.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::bn::FactorTables;
use crate::gibbs::{run_chain_with_tables, GibbsConfig, GibbsError, Sampler, ScanOrder};

pub const DEFAULT_THRESHOLD: f64 = 1.1;
pub const DEFAULT_WARMUP: f64 = 0.5;
pub const DEFAULT_CHAINS: usize = 10;
/// Simulated evidence cases per feeder; R is the worst case over them.
pub const DEFAULT_CASES: usize = 10;
/// Candidate sweep counts tried by default. R with the chain count in the
/// denominator barely moves with M once a sampler mixes, so a well mixed net
/// is accepted at the first point; that point is set where one chain's
/// marginals are already within about 0.01 of the exact values.
pub const DEFAULT_SWEEP: [usize; 7] = [1000, 2000, 4000, 8000, 12000, 16000, 20000];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("no sequences given")]
    NoSequences,
    #[error("sequences have different lengths ({0} and {1})")]
    RaggedSequences(usize, usize),
    #[error("sequences hold {0} samples after warm-up; at least 2 are needed")]
    TooShort(usize),
    #[error("sweep must be a non-empty increasing list of positive sweep counts")]
    BadSweep,
    #[error("invalid calibration setting: {0}")]
    Config(String),
    #[error(transparent)]
    Sampler(#[from] GibbsError),
}

/// Split sequences, `2n` rows of `m` samples each.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMatrix {
    rows: Vec<Vec<f64>>,
    /// Chains before splitting.
    pub n: usize,
    /// Samples per row.
    pub m: usize,
}

impl ChainMatrix {
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Splits each of the `n` equal-length sequences into two halves. An odd
/// length drops the last sample.
pub fn split_and_stack(sequences: &[Vec<f64>]) -> Result<ChainMatrix, CalibrationError> {
    let first = sequences.first().ok_or(CalibrationError::NoSequences)?;
    let len = first.len();
    if let Some(bad) = sequences.iter().find(|s| s.len() != len) {
        return Err(CalibrationError::RaggedSequences(len, bad.len()));
    }
    if len < 2 {
        return Err(CalibrationError::TooShort(len));
    }
    let m = len / 2;
    let rows = sequences
        .iter()
        .flat_map(|s| [s[..m].to_vec(), s[m..2 * m].to_vec()])
        .collect();
    Ok(ChainMatrix {
        rows,
        n: sequences.len(),
        m,
    })
}

/// Drops the leading `warmup` fraction of every sequence, then splits.
pub fn discard_and_split(
    sequences: &[Vec<f64>],
    warmup: f64,
) -> Result<ChainMatrix, CalibrationError> {
    let len = sequences.first().map_or(0, Vec::len);
    let start = (warmup * len as f64).floor() as usize;
    let kept: Vec<Vec<f64>> = sequences
        .iter()
        .map(|s| s[start.min(s.len())..].to_vec())
        .collect();
    split_and_stack(&kept)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RHat {
    /// Between-sequence variance.
    pub b: f64,
    /// Mean within-sequence variance.
    pub v: f64,
    pub r: f64,
    /// `V = 0`: no sequence moved. `R` is 1 when all rows agree and
    /// infinite when they are stuck at different values.
    pub degenerate: bool,
}

impl RHat {
    pub fn converged(&self, threshold: f64) -> bool {
        self.r <= threshold
    }
}

/// Potential scale reduction of one variable.
pub fn r_hat(matrix: &ChainMatrix) -> Result<RHat, CalibrationError> {
    let m = matrix.m;
    if m < 2 {
        return Err(CalibrationError::TooShort(m));
    }
    let rows = matrix.rows.len() as f64;
    let means: Vec<f64> = matrix
        .rows
        .iter()
        .map(|r| r.iter().sum::<f64>() / m as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / rows;
    let b = m as f64 / (rows - 1.0) * means.iter().map(|t| (t - grand).powi(2)).sum::<f64>();
    let v = matrix
        .rows
        .iter()
        .zip(&means)
        .map(|(r, t)| r.iter().map(|x| (x - t).powi(2)).sum::<f64>() / (m as f64 - 1.0))
        .sum::<f64>()
        / rows;
    if v == 0.0 {
        let r = if b == 0.0 { 1.0 } else { f64::INFINITY };
        return Ok(RHat {
            b,
            v,
            r,
            degenerate: true,
        });
    }
    Ok(RHat {
        b,
        v,
        r: r_from_components(b, v, matrix.n),
        degenerate: false,
    })
}

/// `R` from its variance components and the original chain count.
pub fn r_from_components(b: f64, v: f64, n: usize) -> f64 {
    let n = n as f64;
    (((n - 1.0) / n * v + b / n) / v).sqrt()
}

/// Diagnostics of every unknown at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct RHatReport {
    pub iterations: usize,
    /// Per unknown, the worst value over calibration cases.
    pub per_variable: Vec<RHat>,
    pub labels: Vec<String>,
    pub max_r: f64,
    pub threshold: f64,
}

impl RHatReport {
    pub fn converged(&self) -> bool {
        self.max_r <= self.threshold
    }

    /// Label and value of the worst variable.
    pub fn worst(&self) -> Option<(&str, f64)> {
        self.per_variable
            .iter()
            .zip(&self.labels)
            .max_by(|a, b| a.0.r.total_cmp(&b.0.r))
            .map(|(r, l)| (l.as_str(), r.r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub chains: usize,
    pub threshold: f64,
    /// Fraction of each chain discarded before the diagnostic.
    pub warmup: f64,
    pub scan_order: ScanOrder,
    pub sampler: Sampler,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            chains: DEFAULT_CHAINS,
            threshold: DEFAULT_THRESHOLD,
            warmup: DEFAULT_WARMUP,
            scan_order: ScanOrder::Topological,
            sampler: Sampler::Causes,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    /// Smallest swept M at which every variable passed, if any.
    pub chosen: Option<usize>,
    /// One report per sweep point, in sweep order.
    pub reports: Vec<RHatReport>,
}

impl CalibrationOutcome {
    pub fn converged(&self) -> bool {
        self.chosen.is_some()
    }

    /// The report for the chosen M, or for the largest M when none passed.
    pub fn final_report(&self) -> &RHatReport {
        let m = self
            .chosen
            .unwrap_or_else(|| self.reports.last().unwrap().iterations);
        self.reports.iter().find(|r| r.iterations == m).unwrap()
    }

    /// `iterations,variable,r_hat` rows, sweep order then variable order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iterations,variable,r_hat\n");
        for rep in &self.reports {
            for (l, r) in rep.labels.iter().zip(&rep.per_variable) {
                writeln!(out, "{},{},{:.6}", rep.iterations, l, r.r).unwrap();
            }
        }
        out
    }
}

pub fn validate_sweep(sweep: &[usize]) -> Result<(), CalibrationError> {
    if sweep.is_empty() || sweep[0] == 0 || sweep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CalibrationError::BadSweep);
    }
    Ok(())
}

/// Worst-case `R` per unknown over `cases`, at each sweep point.
///
/// Every case runs `chains` chains to the largest swept M; shorter sweep
/// points use the leading part of the same chains, which is exactly what a
/// run of that length would produce.
pub fn calibrate_iterations(
    cases: &[FactorTables<'_>],
    sweep: &[usize],
    cfg: &CalibrationConfig,
) -> Result<CalibrationOutcome, CalibrationError> {
    validate_sweep(sweep)?;
    if cases.is_empty() {
        return Err(CalibrationError::Config(
            "at least one evidence case is required".into(),
        ));
    }
    if cfg.chains == 0 {
        return Err(CalibrationError::Config("chains must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&cfg.warmup) {
        return Err(CalibrationError::Config(format!(
            "warm-up fraction {} outside [0,1)",
            cfg.warmup
        )));
    }
    let vars = cases[0].unknown_count();
    if cases.iter().any(|c| c.unknown_count() != vars) {
        return Err(CalibrationError::Config(
            "cases must share one network".into(),
        ));
    }
    let labels: Vec<String> = (0..vars).map(|u| cases[0].net().label(u)).collect();
    let max_m = *sweep.last().unwrap();
    let gibbs = GibbsConfig {
        iterations: max_m,
        burn_in: 0.0,
        scan_order: cfg.scan_order,
        sampler: cfg.sampler,
        chains: cfg.chains,
        seed: cfg.seed,
        keep_samples: true,
    };

    let mut worst = vec![
        vec![
            RHat {
                b: 0.0,
                v: 0.0,
                r: 0.0,
                degenerate: true
            };
            vars
        ];
        sweep.len()
    ];
    for (case_index, tables) in cases.iter().enumerate() {
        let case_cfg = GibbsConfig {
            seed: cfg.seed.wrapping_add(case_index as u64),
            ..gibbs
        };
        let traces: Vec<_> = (0..cfg.chains)
            .into_par_iter()
            .map(|c| run_chain_with_tables(tables, &case_cfg, c).map(|r| r.trace.unwrap()))
            .collect::<Result<_, _>>()?;
        let per_point: Vec<Vec<RHat>> = sweep
            .par_iter()
            .map(|&m| {
                (0..vars)
                    .map(|u| {
                        let seqs: Vec<Vec<f64>> = traces
                            .iter()
                            .map(|t| t.sequence(u)[..m].iter().map(|&s| f64::from(s)).collect())
                            .collect();
                        r_hat(&discard_and_split(&seqs, cfg.warmup)?)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        for (acc, point) in worst.iter_mut().zip(per_point) {
            for (a, r) in acc.iter_mut().zip(point) {
                if r.r > a.r || (r.r == a.r && !r.degenerate) {
                    *a = r;
                }
            }
        }
    }

    let reports: Vec<RHatReport> = sweep
        .iter()
        .zip(worst)
        .map(|(&m, per_variable)| RHatReport {
            iterations: m,
            max_r: per_variable.iter().map(|r| r.r).fold(0.0, f64::max),
            per_variable,
            labels: labels.clone(),
            threshold: cfg.threshold,
        })
        .collect();
    let chosen = reports.iter().find(|r| r.converged()).map(|r| r.iterations);
    Ok(CalibrationOutcome { chosen, reports })
}
