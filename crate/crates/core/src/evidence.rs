//! Observed evidence for one outage episode.
//!
//! Text format, one record per line:
//!
//! ```text
//! human <customer-id> <0|1>
//! meter <customer-id> <0|1>
//! wind <branch-id> <m/s>
//! veg <branch-id> <species-const> <diameter-cm>
//! window <minutes>
//! ```
//!
//! Customers without a `human` line did not report. Metered customers
//! without a `meter` line sent no last gasp. A `meter` line for a customer
//! the topology lists as unmetered marks that customer as metered for this
//! episode. `window` gives the time actually waited for reports; without it
//! the model's default window applies.

use std::fmt::Write as _;
use std::io::Read;

use thiserror::Error;

use crate::factors::Vegetation;
use crate::feeder::FeederTopology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvidenceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown customer `{id}`")]
    UnknownCustomer { line: usize, id: String },
    #[error("line {line}: unknown branch `{id}`")]
    UnknownBranch { line: usize, id: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Evidence for every customer and branch of one feeder, indexed like the
/// topology.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceSet {
    /// Trouble call or social-media report received, per customer.
    pub human: Vec<bool>,
    /// Last gasp per customer; `None` for customers without a meter.
    pub meter: Vec<Option<bool>>,
    /// Wind speed per branch, m/s.
    pub wind: Vec<f64>,
    pub vegetation: Vec<Vegetation>,
    /// Window actually waited before inference, overriding the model's
    /// default when set.
    pub elapsed_window: Option<f64>,
}

impl EvidenceSet {
    /// No reports, no last gasps, calm weather. Meter coverage follows the
    /// topology's `has_meter` flags.
    pub fn quiet(topology: &FeederTopology) -> Self {
        Self {
            human: vec![false; topology.customer_count()],
            meter: topology
                .customers()
                .iter()
                .map(|c| c.has_meter.then_some(false))
                .collect(),
            wind: vec![0.0; topology.branch_count()],
            vegetation: vec![Vegetation::default(); topology.branch_count()],
            elapsed_window: None,
        }
    }

    /// Per-customer meter coverage implied by this evidence.
    pub fn meter_coverage(&self) -> Vec<bool> {
        self.meter.iter().map(Option::is_some).collect()
    }

    pub fn parse(text: &str, topology: &FeederTopology) -> Result<Self, EvidenceError> {
        let mut ev = Self::quiet(topology);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = n + 1;
            let perr = |message: String| EvidenceError::Parse {
                line: lineno,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let customer = |id: &str| {
                topology
                    .customer_index(id)
                    .ok_or_else(|| EvidenceError::UnknownCustomer {
                        line: lineno,
                        id: id.to_string(),
                    })
            };
            let branch = |id: &str| {
                topology
                    .branch_index(id)
                    .ok_or_else(|| EvidenceError::UnknownBranch {
                        line: lineno,
                        id: id.to_string(),
                    })
            };
            let num = |s: &str| -> Result<f64, EvidenceError> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| *v >= 0.0 && v.is_finite())
                    .ok_or_else(|| perr(format!("expected a non-negative number, got `{s}`")))
            };
            let bit = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(perr(format!("expected 0 or 1, got `{s}`"))),
            };
            match (fields[0], fields.len()) {
                ("human", 3) => ev.human[customer(fields[1])?] = bit(fields[2])?,
                ("meter", 3) => ev.meter[customer(fields[1])?] = Some(bit(fields[2])?),
                ("wind", 3) => ev.wind[branch(fields[1])?] = num(fields[2])?,
                ("veg", 4) => {
                    ev.vegetation[branch(fields[1])?] = Vegetation {
                        species_constant: num(fields[2])?,
                        diameter_cm: num(fields[3])?,
                    }
                }
                ("window", 2) => ev.elapsed_window = Some(num(fields[1])?),
                ("human" | "meter" | "wind" | "veg" | "window", k) => {
                    return Err(perr(format!("`{}` record has {} fields", fields[0], k)))
                }
                (other, _) => return Err(perr(format!("unknown record type `{other}`"))),
            }
        }
        Ok(ev)
    }

    pub fn load<R: Read>(mut source: R, topology: &FeederTopology) -> Result<Self, EvidenceError> {
        let mut text = String::new();
        source
            .read_to_string(&mut text)
            .map_err(|e| EvidenceError::Io(e.to_string()))?;
        Self::parse(&text, topology)
    }

    /// Writes every record explicitly, in topology order.
    pub fn to_text(&self, topology: &FeederTopology) -> String {
        let mut out = String::new();
        if let Some(w) = self.elapsed_window {
            writeln!(out, "window {w}").unwrap();
        }
        for (c, node) in topology.customers().iter().enumerate() {
            writeln!(out, "human {} {}", node.id, u8::from(self.human[c])).unwrap();
        }
        for (c, node) in topology.customers().iter().enumerate() {
            if let Some(m) = self.meter[c] {
                writeln!(out, "meter {} {}", node.id, u8::from(m)).unwrap();
            }
        }
        for (b, node) in topology.branches().iter().enumerate() {
            writeln!(out, "wind {} {}", node.id, self.wind[b]).unwrap();
            let v = self.vegetation[b];
            writeln!(
                out,
                "veg {} {} {}",
                node.id, v.species_constant, v.diameter_cm
            )
            .unwrap();
        }
        out
    }
}
