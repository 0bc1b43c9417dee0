//! Branch failure probability against wind speed for an overhead lateral,
//! split into the pole and conductor terms of the series model.
//!
//! ```text
//! cargo run --example fragility
//! ```

use outage_locator::factors::{
    branch_failure_probability, conductor_failure_probability, pole_failure_probability,
    BranchEvidence,
};
use outage_locator::{BranchPhysical, FragilityParams, Vegetation};

fn main() {
    let fp = FragilityParams::default();
    let lateral = BranchPhysical {
        pole_count: 6,
        span_conductor_counts: vec![3; 5],
        length_m: 400.0,
        underground_probability: 0.0,
    };
    let vegetation = Vegetation {
        species_constant: 1.2,
        diameter_cm: 35.0,
    };
    println!(
        "{:>6} {:>10} {:>10} {:>10}",
        "wind", "pole", "conductor", "branch"
    );
    for wind in (0..=60).step_by(5) {
        let ev = BranchEvidence {
            wind_speed: f64::from(wind),
            vegetation,
            physical: &lateral,
        };
        println!(
            "{:>6} {:>10.5} {:>10.5} {:>10.5}",
            wind,
            pole_failure_probability(ev.wind_speed, &fp),
            conductor_failure_probability(&ev, &fp),
            branch_failure_probability(&ev, &fp)
        );
    }
}
