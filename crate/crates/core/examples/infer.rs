//! Locate an outage on a small feeder from a last gasp and a trouble call.
//!
//! ```text
//! cargo run --release --example infer
//! ```

use outage_locator::gibbs::{locate, GibbsConfig};
use outage_locator::{EvidenceSet, FeederTopology, ModelParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let topology = FeederTopology::parse(include_str!("data/three_branch.feeder"))?;
    let evidence = EvidenceSet::parse(include_str!("data/three_branch.evidence"), &topology)?;
    let cfg = GibbsConfig {
        iterations: 4000,
        chains: 4,
        seed: 7,
        ..GibbsConfig::default()
    };
    let estimate = locate(&topology, &ModelParams::default(), &evidence, &cfg)?;

    print!("{}", estimate.branch_csv(&topology));
    println!("outage at: {}", estimate.location_ids(&topology).join(", "));
    Ok(())
}
