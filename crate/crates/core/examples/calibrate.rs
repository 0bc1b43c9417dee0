//! Choose the number of sweeps M for a generated feeder from the potential
//! scale reduction of every unknown, worst case over simulated evidence.
//!
//! ```text
//! cargo run --release --example calibrate
//! ```

use outage_locator::calibration::{calibrate_iterations, CalibrationConfig};
use outage_locator::scenario::{generate_topology, simulated_cases, ScenarioSpec, TopologySpec};
use outage_locator::{BayesNet, FactorTables, ModelParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let topology = generate_topology(&TopologySpec::with_branches(17), 1)?;
    let model = ModelParams::default();
    let spec = ScenarioSpec {
        n_scenarios: 4,
        ..ScenarioSpec::default()
    };
    let cases = simulated_cases(&topology, &spec, &model);
    let nets: Vec<BayesNet> = cases
        .iter()
        .map(|(p, ev)| BayesNet::new(&topology, p, &ev.meter_coverage()))
        .collect();
    let tables = nets
        .iter()
        .zip(&cases)
        .map(|(bn, (_, ev))| FactorTables::new(bn, ev))
        .collect::<Result<Vec<_>, _>>()?;

    let outcome = calibrate_iterations(
        &tables,
        &[250, 500, 1000, 2000, 4000],
        &CalibrationConfig::default(),
    )?;
    for rep in &outcome.reports {
        let (label, _) = rep.worst().unwrap();
        println!(
            "M = {:>5}: max R = {:.4} ({label})",
            rep.iterations, rep.max_r
        );
    }
    match outcome.chosen {
        Some(m) => println!("chosen M = {m}"),
        None => println!("no swept M reached the threshold"),
    }
    Ok(())
}
