//! Outage location on radial distribution feeders.
//!
//! Evidence from smart-meter last gasps, trouble calls, social-media
//! reports, wind, vegetation and the feeder's physical data is fused in a
//! Bayesian network built from the feeder topology. Gibbs sampling yields
//! per-branch and per-customer de-energization probabilities, which are
//! thresholded to locate outages.

pub mod bn;
pub mod calibration;
pub mod cli;
pub mod evidence;
pub mod exact;
pub mod factors;
pub mod feeder;
pub mod gibbs;
pub mod metrics;
pub mod params;
pub mod scenario;

pub use bn::{Assignment, BayesNet, BnError, FactorTables, NodeKind, NodeRef};
pub use evidence::EvidenceSet;
pub use factors::{BinaryDist, FragilityParams, Vegetation};
pub use feeder::{BranchNode, BranchPhysical, CustomerNode, FeederTopology, TopologyError};
pub use params::{BetaPrior, EpisodeParams, EvidenceParams, ModelParams, ProbabilitySpec};
