//! Exact posterior by enumeration next to the sampler's estimate.
//!
//! Enumeration visits all 2^u joint states of the u unknowns, so it is only
//! usable on small networks; it is the reference the sampler is tested
//! against.
//!
//! ```text
//! cargo run --release --example exact_oracle
//! ```

use outage_locator::exact::exact_inference;
use outage_locator::gibbs::{infer, GibbsConfig};
use outage_locator::{BayesNet, EvidenceSet, FeederTopology, ModelParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let topology = FeederTopology::parse(include_str!("data/three_branch.feeder"))?;
    let evidence = EvidenceSet::parse(include_str!("data/three_branch.evidence"), &topology)?;
    let bn = BayesNet::new(
        &topology,
        &ModelParams::default().expected(),
        &evidence.meter_coverage(),
    );

    let exact = exact_inference(&bn, &evidence, 20)?;
    let sampled = infer(
        &bn,
        &topology,
        &evidence,
        &GibbsConfig {
            iterations: 20_000,
            chains: 4,
            ..GibbsConfig::default()
        },
    )?;

    println!(
        "{} unknowns, log P(E) = {:.4}",
        bn.unknown_count(),
        exact.log_evidence
    );
    println!("{:<8} {:>8} {:>8}", "node", "exact", "gibbs");
    let sampled_all = sampled
        .branch_marginals
        .iter()
        .chain(&sampled.customer_marginals);
    for (u, (e, g)) in exact.marginals.iter().zip(sampled_all).enumerate() {
        println!("{:<8} {:>8.4} {:>8.4}", bn.label(u), e, g);
    }
    Ok(())
}
