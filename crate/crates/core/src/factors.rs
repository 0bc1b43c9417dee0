//! Conditional probability factors of the outage network.
//!
//! Every factor returns a [`BinaryDist`] over the child variable given the
//! parent values. The branch factor embeds a series fragility model: a
//! branch survives only if every pole and every conductor survives.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::feeder::BranchPhysical;
use crate::params::{BetaPrior, EpisodeParams};

/// A distribution over `{0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryDist {
    pub p0: f64,
    pub p1: f64,
}

impl BinaryDist {
    /// Bernoulli distribution with `P(1) = p`.
    pub fn bernoulli(p: f64) -> Self {
        Self { p0: 1.0 - p, p1: p }
    }

    /// Point mass on `value`.
    pub fn certain(value: bool) -> Self {
        if value {
            Self { p0: 0.0, p1: 1.0 }
        } else {
            Self { p0: 1.0, p1: 0.0 }
        }
    }

    pub fn prob(&self, value: bool) -> f64 {
        if value {
            self.p1
        } else {
            self.p0
        }
    }
}

/// Vegetation record of a branch corridor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vegetation {
    /// Species-specific constant (dimensionless).
    pub species_constant: f64,
    /// Representative tree diameter in centimeters.
    pub diameter_cm: f64,
}

/// Ratio of conductor wind loading to its rated perpendicular force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindForceModel {
    /// `(w / w_crit)^2`; drag scales with the square of wind speed.
    Quadratic { w_crit: f64 },
}

impl WindForceModel {
    pub fn ratio(&self, wind_speed: f64) -> f64 {
        match *self {
            WindForceModel::Quadratic { w_crit } => (wind_speed / w_crit).powi(2),
        }
    }
}

/// Probability that a falling tree brings down a conductor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeFailureModel {
    /// `logistic(intercept + slope * species * diameter * wind)`.
    Logistic { intercept: f64, slope: f64 },
}

impl TreeFailureModel {
    pub fn probability(&self, vegetation: &Vegetation, wind_speed: f64) -> f64 {
        match *self {
            TreeFailureModel::Logistic { intercept, slope } => {
                let x = intercept
                    + slope * vegetation.species_constant * vegetation.diameter_cm * wind_speed;
                1.0 / (1.0 + (-x).exp())
            }
        }
    }
}

/// Parameters of the pole and conductor fragility curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FragilityParams {
    /// Median wind speed of the pole fragility curve (m/s).
    pub chi: f64,
    /// Logarithmic standard deviation of the pole fragility curve.
    pub xi: f64,
    /// Average tree-induced damage factor for overhead conductors.
    pub alpha_tree: f64,
    pub wind_force: WindForceModel,
    pub tree_failure: TreeFailureModel,
}

impl Default for FragilityParams {
    fn default() -> Self {
        Self {
            chi: 50.0,
            xi: 0.3,
            alpha_tree: 0.1,
            wind_force: WindForceModel::Quadratic { w_crit: 300.0 },
            tree_failure: TreeFailureModel::Logistic {
                intercept: -6.0,
                slope: 0.004,
            },
        }
    }
}

/// Observed context of one branch: wind, vegetation and physical data.
#[derive(Debug, Clone, Copy)]
pub struct BranchEvidence<'a> {
    pub wind_speed: f64,
    pub vegetation: Vegetation,
    pub physical: &'a BranchPhysical,
}

/// Standard normal CDF.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Failure probability of a single pole at `wind_speed`.
pub fn pole_failure_probability(wind_speed: f64, fp: &FragilityParams) -> f64 {
    if wind_speed <= 0.0 {
        return 0.0;
    }
    standard_normal_cdf((wind_speed / fp.chi).ln() / fp.xi)
}

/// Failure probability of a single conductor.
pub fn conductor_failure_probability(ev: &BranchEvidence<'_>, fp: &FragilityParams) -> f64 {
    let wind = fp.wind_force.ratio(ev.wind_speed).min(1.0);
    let tree = fp.alpha_tree * fp.tree_failure.probability(&ev.vegetation, ev.wind_speed);
    (1.0 - ev.physical.underground_probability) * wind.max(tree)
}

/// Series-system failure probability of a branch: it fails unless every
/// pole and every conductor survives.
pub fn branch_failure_probability(ev: &BranchEvidence<'_>, fp: &FragilityParams) -> f64 {
    let poles = ev.physical.pole_count as i32;
    let conductors = ev.physical.conductor_count() as i32;
    let pole_survival = (1.0 - pole_failure_probability(ev.wind_speed, fp)).powi(poles);
    let conductor_survival = (1.0 - conductor_failure_probability(ev, fp)).powi(conductors);
    (1.0 - pole_survival * conductor_survival).clamp(0.0, 1.0)
}

/// `P(D | D_parent)` for a branch whose failure probability is already known.
pub fn branch_state_given(parent_deenergized: bool, failure_probability: f64) -> BinaryDist {
    if parent_deenergized {
        BinaryDist::certain(true)
    } else {
        BinaryDist::bernoulli(failure_probability)
    }
}

/// `P(D | D_parent, wind, vegetation, physical)`.
pub fn branch_state_factor(
    parent_deenergized: bool,
    ev: &BranchEvidence<'_>,
    fp: &FragilityParams,
) -> BinaryDist {
    if parent_deenergized {
        BinaryDist::certain(true)
    } else {
        BinaryDist::bernoulli(branch_failure_probability(ev, fp))
    }
}

/// `P(C | D)`: a customer on a de-energized branch is out; otherwise it is
/// out only through a customer-side fault.
pub fn customer_state_factor(branch_deenergized: bool, pi2: f64) -> BinaryDist {
    if branch_deenergized {
        BinaryDist::certain(true)
    } else {
        BinaryDist::bernoulli(pi2)
    }
}

/// Probability that an out customer reports within the window, with
/// exponentially distributed report times.
pub fn report_probability(lambda1: f64, delta_t: f64) -> f64 {
    -(-lambda1 * delta_t).exp_m1()
}

/// `P(E^h | C)`: trouble calls and social-media reports.
pub fn human_evidence_factor(customer_out: bool, params: &EpisodeParams) -> BinaryDist {
    if customer_out {
        BinaryDist::bernoulli(report_probability(params.lambda1, params.delta_t))
    } else {
        BinaryDist::bernoulli(params.pi3)
    }
}

/// `P(E^m | C)`: smart-meter last gasp.
pub fn meter_evidence_factor(customer_out: bool, pi4: f64, pi5: f64) -> BinaryDist {
    if customer_out {
        BinaryDist::bernoulli(pi4)
    } else {
        BinaryDist::bernoulli(pi5)
    }
}

/// Draws a probability from a Beta prior.
pub fn sample_parameter<R: Rng + ?Sized>(prior: &BetaPrior, rng: &mut R) -> f64 {
    Beta::new(prior.alpha, prior.beta)
        .expect("validated Beta prior")
        .sample(rng)
}
