//! Model parameters and the parameter config file.
//!
//! The config is line oriented, one `key value` pair per line:
//!
//! ```text
//! pi2 beta=2,38
//! pi3 fixed=0.05
//! pi4 beta=97,3
//! pi5 fixed=0.005
//! lambda1 0.035
//! delta_t_min 10
//! chi 50
//! ```
//!
//! Omitted keys keep their defaults. `pi3`, `alpha_tree` and the tree-model
//! coefficients ship with placeholder values that should be replaced with
//! utility-specific estimates.

use std::fmt;
use std::io::Read;

use rand::Rng;
use thiserror::Error;

use crate::factors::{sample_parameter, FragilityParams, TreeFailureModel, WindForceModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid parameter `{name}`: {message}")]
    Invalid { name: &'static str, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Beta hyper-parameters; both shapes strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ParamsError> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(ParamsError::Invalid {
                name: "beta",
                message: format!("shapes must be positive, got ({alpha}, {beta})"),
            });
        }
        Ok(Self { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// A probability that is either fixed or drawn once per inference episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbabilitySpec {
    Fixed(f64),
    Beta(BetaPrior),
}

impl ProbabilitySpec {
    pub fn mean(&self) -> f64 {
        match self {
            ProbabilitySpec::Fixed(p) => *p,
            ProbabilitySpec::Beta(b) => b.mean(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ProbabilitySpec::Fixed(p) => *p,
            ProbabilitySpec::Beta(b) => sample_parameter(b, rng),
        }
    }

    fn validate(&self, name: &'static str) -> Result<(), ParamsError> {
        match self {
            ProbabilitySpec::Fixed(p) => check_probability(name, *p),
            ProbabilitySpec::Beta(b) => BetaPrior::new(b.alpha, b.beta).map(|_| ()),
        }
    }

    fn parse(name: &'static str, value: &str) -> Result<Self, String> {
        if let Some(v) = value.strip_prefix("fixed=") {
            let p: f64 = v.parse().map_err(|_| format!("bad probability `{v}`"))?;
            Ok(ProbabilitySpec::Fixed(p))
        } else if let Some(v) = value.strip_prefix("beta=") {
            let (a, b) = v
                .split_once(',')
                .ok_or_else(|| format!("`{name}` beta needs `a,b`"))?;
            let a: f64 = a.parse().map_err(|_| format!("bad shape `{a}`"))?;
            let b: f64 = b.parse().map_err(|_| format!("bad shape `{b}`"))?;
            Ok(ProbabilitySpec::Beta(BetaPrior { alpha: a, beta: b }))
        } else {
            value
                .parse()
                .map(ProbabilitySpec::Fixed)
                .map_err(|_| format!("`{name}` expects fixed=<p> or beta=<a>,<b>"))
        }
    }
}

impl fmt::Display for ProbabilitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbabilitySpec::Fixed(p) => write!(f, "fixed={p}"),
            ProbabilitySpec::Beta(b) => write!(f, "beta={},{}", b.alpha, b.beta),
        }
    }
}

/// Parameters of the customer and evidence factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidenceParams {
    /// Customer-side fault probability on an energized branch.
    pub pi2: ProbabilitySpec,
    /// False-positive human report probability.
    pub pi3: f64,
    /// Last-gasp delivery reliability.
    pub pi4: ProbabilitySpec,
    /// Spurious last gasp from a meter's own failure.
    pub pi5: ProbabilitySpec,
    /// Report rate of out customers, per minute.
    pub lambda1: f64,
    /// Evidence collection window, minutes.
    pub delta_t: f64,
}

impl Default for EvidenceParams {
    fn default() -> Self {
        Self {
            pi2: ProbabilitySpec::Beta(BetaPrior {
                alpha: 2.0,
                beta: 38.0,
            }),
            pi3: 0.05,
            pi4: ProbabilitySpec::Beta(BetaPrior {
                alpha: 97.0,
                beta: 3.0,
            }),
            pi5: ProbabilitySpec::Fixed(0.005),
            lambda1: 0.035,
            delta_t: 10.0,
        }
    }
}

/// Everything needed to parameterize the network factors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelParams {
    pub evidence: EvidenceParams,
    pub fragility: FragilityParams,
}

/// Parameters with all probabilities resolved for one inference episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeParams {
    pub pi2: f64,
    pub pi3: f64,
    pub pi4: f64,
    pub pi5: f64,
    pub lambda1: f64,
    pub delta_t: f64,
    pub fragility: FragilityParams,
}

impl ModelParams {
    /// Resolves Beta priors to their means.
    pub fn expected(&self) -> EpisodeParams {
        let e = &self.evidence;
        EpisodeParams {
            pi2: e.pi2.mean(),
            pi3: e.pi3,
            pi4: e.pi4.mean(),
            pi5: e.pi5.mean(),
            lambda1: e.lambda1,
            delta_t: e.delta_t,
            fragility: self.fragility,
        }
    }

    /// Draws one value per Beta prior; the draw applies feeder-wide.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> EpisodeParams {
        let e = &self.evidence;
        EpisodeParams {
            pi2: e.pi2.draw(rng),
            pi3: e.pi3,
            pi4: e.pi4.draw(rng),
            pi5: e.pi5.draw(rng),
            lambda1: e.lambda1,
            delta_t: e.delta_t,
            fragility: self.fragility,
        }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let e = &self.evidence;
        e.pi2.validate("pi2")?;
        check_probability("pi3", e.pi3)?;
        e.pi4.validate("pi4")?;
        e.pi5.validate("pi5")?;
        if !(e.lambda1 > 0.0 && e.lambda1.is_finite()) {
            return Err(invalid(
                "lambda1",
                format!("must be > 0, got {}", e.lambda1),
            ));
        }
        if !(e.delta_t >= 0.0) {
            return Err(invalid(
                "delta_t_min",
                format!("must be >= 0, got {}", e.delta_t),
            ));
        }
        let f = &self.fragility;
        if !(f.chi > 0.0) {
            return Err(invalid("chi", format!("must be > 0, got {}", f.chi)));
        }
        if !(f.xi > 0.0) {
            return Err(invalid("xi", format!("must be > 0, got {}", f.xi)));
        }
        check_probability("alpha_tree", f.alpha_tree)?;
        let WindForceModel::Quadratic { w_crit } = f.wind_force;
        if !(w_crit > 0.0) {
            return Err(invalid("w_crit", format!("must be > 0, got {w_crit}")));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ParamsError> {
        let mut p = ModelParams::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |message: String| ParamsError::Parse {
                line: n + 1,
                message,
            };
            let (key, value) = line
                .split_once(char::is_whitespace)
                .map(|(k, v)| (k, v.trim()))
                .ok_or_else(|| perr(format!("expected `key value`, got `{line}`")))?;
            let num = || -> Result<f64, ParamsError> {
                let v = value.strip_prefix("fixed=").unwrap_or(value);
                v.parse()
                    .map_err(|_| perr(format!("invalid number `{value}` for `{key}`")))
            };
            let TreeFailureModel::Logistic {
                mut intercept,
                mut slope,
            } = p.fragility.tree_failure;
            match key {
                "pi2" => p.evidence.pi2 = ProbabilitySpec::parse("pi2", value).map_err(perr)?,
                "pi3" => p.evidence.pi3 = num()?,
                "pi4" => p.evidence.pi4 = ProbabilitySpec::parse("pi4", value).map_err(perr)?,
                "pi5" => p.evidence.pi5 = ProbabilitySpec::parse("pi5", value).map_err(perr)?,
                "lambda1" => p.evidence.lambda1 = num()?,
                "delta_t_min" => p.evidence.delta_t = num()?,
                "chi" => p.fragility.chi = num()?,
                "xi" => p.fragility.xi = num()?,
                "alpha_tree" => p.fragility.alpha_tree = num()?,
                "w_crit" => p.fragility.wind_force = WindForceModel::Quadratic { w_crit: num()? },
                "tree_intercept" => intercept = num()?,
                "tree_slope" => slope = num()?,
                other => return Err(perr(format!("unknown key `{other}`"))),
            }
            p.fragility.tree_failure = TreeFailureModel::Logistic { intercept, slope };
        }
        p.validate()?;
        Ok(p)
    }

    pub fn load<R: Read>(mut source: R) -> Result<Self, ParamsError> {
        let mut text = String::new();
        source
            .read_to_string(&mut text)
            .map_err(|e| ParamsError::Io(e.to_string()))?;
        Self::parse(&text)
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.evidence;
        let fr = &self.fragility;
        let WindForceModel::Quadratic { w_crit } = fr.wind_force;
        let TreeFailureModel::Logistic { intercept, slope } = fr.tree_failure;
        writeln!(f, "pi2 {}", e.pi2)?;
        writeln!(f, "pi3 fixed={}", e.pi3)?;
        writeln!(f, "pi4 {}", e.pi4)?;
        writeln!(f, "pi5 {}", e.pi5)?;
        writeln!(f, "lambda1 {}", e.lambda1)?;
        writeln!(f, "delta_t_min {}", e.delta_t)?;
        writeln!(f, "chi {}", fr.chi)?;
        writeln!(f, "xi {}", fr.xi)?;
        writeln!(f, "alpha_tree {}", fr.alpha_tree)?;
        writeln!(f, "w_crit {w_crit}")?;
        writeln!(f, "tree_intercept {intercept}")?;
        writeln!(f, "tree_slope {slope}")
    }
}

fn invalid(name: &'static str, message: String) -> ParamsError {
    ParamsError::Invalid { name, message }
}

fn check_probability(name: &'static str, p: f64) -> Result<(), ParamsError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(name, format!("{p} outside [0,1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fixed_and_beta() {
        let p = ModelParams::parse(
            "# test\npi2 beta=2,98\npi3 0.1\npi4 fixed=1\npi5 fixed=0\nlambda1 0.2\ndelta_t_min 5\nw_crit 120\ntree_slope 0.01\n",
        )
        .unwrap();
        assert_eq!(
            p.evidence.pi2,
            ProbabilitySpec::Beta(BetaPrior {
                alpha: 2.0,
                beta: 98.0
            })
        );
        assert_eq!(p.evidence.pi3, 0.1);
        assert_eq!(p.evidence.pi4, ProbabilitySpec::Fixed(1.0));
        assert_eq!(p.evidence.lambda1, 0.2);
        assert_eq!(
            p.fragility.wind_force,
            WindForceModel::Quadratic { w_crit: 120.0 }
        );
        assert_eq!(
            p.fragility.tree_failure,
            TreeFailureModel::Logistic {
                intercept: -6.0,
                slope: 0.01
            }
        );
        let e = p.expected();
        assert!((e.pi2 - 0.02).abs() < 1e-15);
    }

    #[test]
    fn display_round_trips() {
        let p = ModelParams::default();
        assert_eq!(ModelParams::parse(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            ModelParams::parse("pi3 1.5\n").unwrap_err(),
            ParamsError::Invalid { name: "pi3", .. }
        ));
        assert!(matches!(
            ModelParams::parse("pi2 beta=0,1\n").unwrap_err(),
            ParamsError::Invalid { .. }
        ));
        assert!(matches!(
            ModelParams::parse("lambda1 0\n").unwrap_err(),
            ParamsError::Invalid {
                name: "lambda1",
                ..
            }
        ));
        assert!(matches!(
            ModelParams::parse("gamma 3\n").unwrap_err(),
            ParamsError::Parse { line: 1, .. }
        ));
        assert!(matches!(
            ModelParams::parse("pi4 beta=3\n").unwrap_err(),
            ParamsError::Parse { .. }
        ));
    }

    #[test]
    fn fixed_draw_is_identity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::parse("pi2 fixed=0.3\npi4 fixed=0.9\npi5 fixed=0.01\n").unwrap();
        let e = p.draw(&mut rng);
        assert_eq!((e.pi2, e.pi4, e.pi5), (0.3, 0.9, 0.01));
    }
}
