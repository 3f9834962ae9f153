//! Safety-margin strategies.
//!
//! A strategy sees the recent prediction errors and usage of one
//! (host, metric) pair and returns the fraction of capacity to hold back
//! above the prediction for the next step.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::MetricKind;

/// Largest margin any strategy may return.
pub const MAX_MARGIN: f64 = 0.99;

/// Fraction of capacity reserved above the prediction, in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct Margin(f64);

impl Margin {
    pub const ZERO: Margin = Margin(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..1.0).contains(&value) {
            Ok(Margin(value))
        } else {
            Err(Error::domain(format!("margin {value} outside [0,1)")))
        }
    }

    /// Clamps into `[0, MAX_MARGIN]`; NaN maps to 0.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            return Margin(0.0);
        }
        Margin(value.clamp(0.0, MAX_MARGIN))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// What a strategy is allowed to see before choosing a margin for step `t`.
/// Every window holds data up to step `t - 1`, oldest first, front-padded
/// with zeros.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub host_index: usize,
    pub host_id: &'a str,
    pub metric: MetricKind,
    /// Exactly `w_state` errors `usage - prediction`, clipped to `[-1, 1]`.
    pub error_window: &'a [f64],
    /// At least `w_state` usage samples.
    pub usage_window: &'a [f64],
    pub last_margin: f64,
}

pub trait MarginStrategy: Send {
    fn name(&self) -> String;

    fn select_margin(&mut self, obs: &Observation<'_>) -> Margin;

    /// How many usage samples the strategy wants to see, if more than the
    /// error window length.
    fn usage_history(&self) -> usize {
        0
    }
}

/// Same margin for every host, metric and step.
#[derive(Debug, Clone)]
pub struct FixedStrategy {
    margin: Margin,
}

impl FixedStrategy {
    pub fn new(margin: f64) -> Result<Self> {
        Ok(FixedStrategy {
            margin: Margin::new(margin)?,
        })
    }
}

impl MarginStrategy for FixedStrategy {
    fn name(&self) -> String {
        format!("fixed:{}", self.margin.value())
    }

    fn select_margin(&mut self, _obs: &Observation<'_>) -> Margin {
        self.margin
    }
}

/// Uniform draw from `[0, 0.99)`, independent of observations.
#[derive(Debug, Clone)]
pub struct RandomStrategy {
    rng: ChaCha8Rng,
}

impl RandomStrategy {
    pub fn new(seed: u64) -> Self {
        RandomStrategy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl MarginStrategy for RandomStrategy {
    fn name(&self) -> String {
        "random".to_string()
    }

    fn select_margin(&mut self, _obs: &Observation<'_>) -> Margin {
        Margin::clamped(self.rng.random_range(0.0..MAX_MARGIN))
    }
}

/// Base margin plus the last step's underestimation error.
#[derive(Debug, Clone)]
pub struct FeedbackStrategy {
    base: Margin,
}

impl FeedbackStrategy {
    pub fn new(base: f64) -> Result<Self> {
        Ok(FeedbackStrategy {
            base: Margin::new(base)?,
        })
    }
}

impl MarginStrategy for FeedbackStrategy {
    fn name(&self) -> String {
        format!("feedback:{}", self.base.value())
    }

    fn select_margin(&mut self, obs: &Observation<'_>) -> Margin {
        let last = obs.error_window.last().copied().unwrap_or(0.0);
        // Overestimation is not subtracted: the margin never drops below base.
        Margin::clamped(self.base.value() + last.max(0.0))
    }
}

/// Population standard deviation of recent usage.
#[derive(Debug, Clone)]
pub struct ScavengerStrategy {
    window: usize,
}

impl ScavengerStrategy {
    pub fn new(window: usize) -> Result<Self> {
        if window < 2 {
            return Err(Error::domain("scavenger window must be >= 2"));
        }
        Ok(ScavengerStrategy { window })
    }
}

pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    // Shifting by the first sample keeps a constant window at exactly 0.
    let n = xs.len() as f64;
    let d: Vec<f64> = xs.iter().map(|x| x - xs[0]).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt()
}

impl MarginStrategy for ScavengerStrategy {
    fn name(&self) -> String {
        format!("scavenger:{}", self.window)
    }

    fn select_margin(&mut self, obs: &Observation<'_>) -> Margin {
        let u = obs.usage_window;
        let tail = &u[u.len().saturating_sub(self.window)..];
        Margin::clamped(population_std(tail))
    }

    fn usage_history(&self) -> usize {
        self.window
    }
}

/// Parsed strategy selector as written in scenario files:
/// `fixed:0.05`, `random`, `feedback:0.05`, `scavenger:10`, `releaser`.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategySpec {
    Fixed(f64),
    Random,
    Feedback(f64),
    Scavenger(Option<usize>),
    Releaser,
}

impl StrategySpec {
    /// Instantiates a heuristic strategy. `Releaser` has no standalone
    /// instance and yields `None`.
    pub fn build(&self, random_seed: u64, default_window: usize) -> Result<Option<Box<dyn MarginStrategy>>> {
        Ok(Some(match *self {
            StrategySpec::Fixed(m) => Box::new(FixedStrategy::new(m)?),
            StrategySpec::Random => Box::new(RandomStrategy::new(random_seed)),
            StrategySpec::Feedback(b) => Box::new(FeedbackStrategy::new(b)?),
            StrategySpec::Scavenger(w) => Box::new(ScavengerStrategy::new(w.unwrap_or(default_window))?),
            StrategySpec::Releaser => return Ok(None),
        }))
    }

    pub fn is_releaser(&self) -> bool {
        matches!(self, StrategySpec::Releaser)
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::Fixed(m) => write!(f, "fixed:{m}"),
            StrategySpec::Random => f.write_str("random"),
            StrategySpec::Feedback(b) => write!(f, "feedback:{b}"),
            StrategySpec::Scavenger(Some(w)) => write!(f, "scavenger:{w}"),
            StrategySpec::Scavenger(None) => f.write_str("scavenger"),
            StrategySpec::Releaser => f.write_str("releaser"),
        }
    }
}

impl FromStr for StrategySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let bad = || Error::config(format!("invalid strategy `{s}`"));
        let frac = |a: Option<&str>, default: f64| -> Result<f64> {
            let v = a.map_or(Ok(default), |a| a.parse::<f64>().map_err(|_| bad()))?;
            Margin::new(v).map_err(|_| bad())?;
            Ok(v)
        };
        match kind {
            "fixed" => Ok(StrategySpec::Fixed(frac(arg, 0.05)?)),
            "feedback" => Ok(StrategySpec::Feedback(frac(arg, 0.05)?)),
            "random" if arg.is_none() => Ok(StrategySpec::Random),
            "releaser" if arg.is_none() => Ok(StrategySpec::Releaser),
            "scavenger" => match arg {
                None => Ok(StrategySpec::Scavenger(None)),
                Some(a) => {
                    let w: usize = a.parse().map_err(|_| bad())?;
                    if w < 2 {
                        return Err(bad());
                    }
                    Ok(StrategySpec::Scavenger(Some(w)))
                }
            },
            _ => Err(bad()),
        }
    }
}
