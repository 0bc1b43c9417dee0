//! Score predictions against ground truth: confusion counts per scenario,
//! branch metrics and system-level accuracy.
//!
//! ```text
//! cargo run --example evaluate
//! ```

use std::collections::BTreeMap;

use outage_locator::metrics::{aggregate, confusion, metrics, ConfusionCounts, ScenarioOutcome};

fn states(pairs: &[(&str, u8)]) -> BTreeMap<String, bool> {
    pairs
        .iter()
        .map(|&(k, v)| (k.to_string(), v == 1))
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = states(&[("main", 0), ("lat_a", 1), ("lat_b", 0)]);
    let exact = states(&[("main", 0), ("lat_a", 1), ("lat_b", 0)]);
    let spread = states(&[("main", 0), ("lat_a", 1), ("lat_b", 1)]);

    let mut outcomes = Vec::new();
    for pred in [&exact, &spread] {
        let branches = confusion(pred, &truth)?;
        let m = metrics(&branches, 1.0);
        println!(
            "tp {} tn {} fp {} fn {}: accuracy {:.3}, precision {:?}, recall {:?}",
            branches.tp, branches.tn, branches.fp, branches.fn_, m.accuracy, m.precision, m.recall
        );
        outcomes.push(ScenarioOutcome {
            branches,
            customers: ConfusionCounts::default(),
        });
    }
    let report = aggregate(&outcomes, 1.0)?;
    println!(
        "mean accuracy {:.3}, F1 {:.3}, system accuracy {:.2}",
        report.accuracy,
        report.f1.unwrap_or(f64::NAN),
        report.system_accuracy
    );
    Ok(())
}
