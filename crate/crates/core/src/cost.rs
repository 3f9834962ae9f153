//! Leasing, pricing and delay-dependent SLA penalties.
//!
//! A host-day earns `sum(containers * ppm * ts)` over its steps. If the host
//! accumulated more than 15 violation minutes that day, a tiered discount of
//! that revenue is paid back as a penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{steps_per_day, HostSpec, MINUTES_PER_DAY};

/// Discount applied when violation minutes fall in `(lower, upper]`.
/// `upper = None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountTier {
    pub lower_exclusive: u32,
    pub upper_inclusive: Option<u32>,
    pub discount: f64,
}

impl DiscountTier {
    fn contains(&self, minutes: u32) -> bool {
        minutes > self.lower_exclusive && self.upper_inclusive.is_none_or(|u| minutes <= u)
    }
}

pub fn default_tiers() -> Vec<DiscountTier> {
    vec![
        DiscountTier {
            lower_exclusive: 15,
            upper_inclusive: Some(120),
            discount: 0.10,
        },
        DiscountTier {
            lower_exclusive: 120,
            upper_inclusive: Some(720),
            discount: 0.15,
        },
        DiscountTier {
            lower_exclusive: 720,
            upper_inclusive: None,
            discount: 0.30,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    pub container_cpu: f64,
    pub container_ram_gb: f64,
    pub price_per_hour: f64,
    pub tiers: Vec<DiscountTier>,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            container_cpu: 2.0,
            container_ram_gb: 8.0,
            price_per_hour: 0.0317,
            tiers: default_tiers(),
        }
    }
}

/// Revenue split for one host-day.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Settlement {
    pub potential_saving: f64,
    pub penalty: f64,
    pub net_saving: f64,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.container_cpu) {
            return Err(Error::config("cost.container_cpu must be > 0"));
        }
        if !pos(self.container_ram_gb) {
            return Err(Error::config("cost.container_ram_gb must be > 0"));
        }
        if !pos(self.price_per_hour) {
            return Err(Error::config("cost.price_per_hour must be > 0"));
        }
        let mut prev: Option<&DiscountTier> = None;
        for (i, t) in self.tiers.iter().enumerate() {
            if !(0.0..=1.0).contains(&t.discount) {
                return Err(Error::config(format!("cost.tiers[{i}]: discount outside [0,1]")));
            }
            if let Some(u) = t.upper_inclusive {
                if u <= t.lower_exclusive {
                    return Err(Error::config(format!("cost.tiers[{i}]: empty interval")));
                }
            }
            if let Some(p) = prev {
                if p.upper_inclusive != Some(t.lower_exclusive) {
                    return Err(Error::config(format!(
                        "cost.tiers[{i}]: must start where the previous tier ends"
                    )));
                }
                if t.discount < p.discount {
                    return Err(Error::config(format!("cost.tiers[{i}]: discounts must not decrease")));
                }
            }
            prev = Some(t);
        }
        if let Some(last) = prev {
            if last.upper_inclusive.is_some_and(|u| u < MINUTES_PER_DAY) {
                return Err(Error::config("cost.tiers: last tier must reach 1440 minutes"));
            }
        }
        Ok(())
    }

    pub fn price_per_minute(&self) -> f64 {
        self.price_per_hour / 60.0
    }

    pub fn max_discount(&self) -> f64 {
        self.tiers.iter().map(|t| t.discount).fold(0.0, f64::max)
    }

    /// Discount fraction for a day with `violation_minutes` of SLA
    /// violation. Minutes below the first tier carry no discount.
    pub fn discount_for(&self, violation_minutes: u32) -> Result<f64> {
        if violation_minutes > MINUTES_PER_DAY {
            return Err(Error::domain(format!(
                "{violation_minutes} violation minutes exceed a day"
            )));
        }
        Ok(self
            .tiers
            .iter()
            .find(|t| t.contains(violation_minutes))
            .map_or(0.0, |t| t.discount))
    }

    /// Number of whole containers that fit in the given headroom fractions.
    pub fn containers_fitting(&self, spec: &HostSpec, headroom_cpu: f64, headroom_ram: f64) -> u32 {
        let by_cpu = (headroom_cpu.clamp(0.0, 1.0) * spec.cpu_cores as f64 / self.container_cpu).floor();
        let by_ram = (headroom_ram.clamp(0.0, 1.0) * spec.ram_gb / self.container_ram_gb).floor();
        by_cpu.min(by_ram).max(0.0) as u32
    }

    /// Settles one host-day from its per-step container counts.
    pub fn settle_day(
        &self,
        per_step_containers: &[u32],
        violation_minutes: u32,
        step_minutes: u32,
    ) -> Result<Settlement> {
        let spd = steps_per_day(step_minutes)?;
        if per_step_containers.len() != spd {
            return Err(Error::domain(format!(
                "expected {spd} step counts, got {}",
                per_step_containers.len()
            )));
        }
        let ppm = self.price_per_minute();
        let ts = step_minutes as f64;
        let potential_saving = per_step_containers
            .iter()
            .fold(0.0, |acc, &n| acc + n as f64 * ppm * ts);
        let penalty = potential_saving * self.discount_for(violation_minutes)?;
        Ok(Settlement {
            potential_saving,
            penalty,
            net_saving: potential_saving - penalty,
        })
    }
}

/// Adds one step's worth of minutes to the day's violation clock.
pub fn accumulate_violation(violation_minutes: u32, violated: bool, step_minutes: u32) -> u32 {
    if violated {
        violation_minutes + step_minutes
    } else {
        violation_minutes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayLedger {
    pub host_id: String,
    pub day: usize,
    pub violation_minutes: u32,
    pub potential_saving: f64,
    pub penalty: f64,
    pub net_saving: f64,
    pub per_step_containers: Vec<u32>,
}
