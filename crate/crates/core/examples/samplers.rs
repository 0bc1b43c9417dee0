//! The two update schemes on a feeder where the evidence is ambiguous
//! between a lateral and its parent, measured against enumeration.
//!
//! Both schemes target the same posterior and both errors shrink with M.
//! On a net this small the state sampler still mixes well; its trouble
//! shows on deeper feeders, where moving an outage down several levels
//! needs a run of improbable intermediate states (compare `outage
//! calibrate --sampler states` with the default).
//!
//! ```text
//! cargo run --release --example samplers
//! ```

use outage_locator::exact::exact_inference;
use outage_locator::gibbs::{infer, GibbsConfig, Sampler};
use outage_locator::{BayesNet, EvidenceSet, FeederTopology, ModelParams};

const FEEDER: &str = "\
branch main parent=none poles=3 spans=3,3
branch lat parent=main poles=3 spans=3,3
customer m1 branch=main meter=0
customer l1 branch=lat meter=1
customer l2 branch=lat meter=1
";

const EVIDENCE: &str = "\
meter l1 1
meter l2 1
wind main 40
wind lat 40
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let topology = FeederTopology::parse(FEEDER)?;
    let evidence = EvidenceSet::parse(EVIDENCE, &topology)?;
    let bn = BayesNet::new(
        &topology,
        &ModelParams::default().expected(),
        &evidence.meter_coverage(),
    );
    let exact = exact_inference(&bn, &evidence, 20)?;

    for sampler in [Sampler::States, Sampler::Causes] {
        for iterations in [1000, 10_000, 100_000] {
            let est = infer(
                &bn,
                &topology,
                &evidence,
                &GibbsConfig {
                    iterations,
                    chains: 4,
                    sampler,
                    seed: 3,
                    ..GibbsConfig::default()
                },
            )?;
            let err = est
                .branch_marginals
                .iter()
                .chain(&est.customer_marginals)
                .zip(&exact.marginals)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            println!("{sampler:?} M = {iterations:>6}: max |error| = {err:.4}");
        }
    }
    Ok(())
}
