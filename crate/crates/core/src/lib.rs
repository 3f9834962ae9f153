//! Trace-driven simulation of safety margins on reclaimed cloud capacity.
//!
//! Hosts expose a usage series and a forecast per metric. A margin strategy
//! picks the headroom kept back at each step; the unused remainder is sold
//! as containers, and SLA violations are charged at the end of each day.

pub mod cost;
pub mod ddpg;
pub mod error;
pub mod fsutil;
pub mod nn;
pub mod report;
pub mod scenario;
pub mod seed;
pub mod sim;
pub mod strategy;
pub mod trace;

pub use cost::{CostModel, DayLedger, DiscountTier, Settlement};
pub use ddpg::{DdpgAgent, DdpgConfig, OuProcess, ReplayBuffer, Transition};
pub use error::{Error, Result};
pub use report::{EvaluationReport, Totals};
pub use scenario::{Scenario, ScenarioConfig};
pub use sim::{MetricPolicy, Mode, RewardMode, SimulationConfig};
pub use strategy::{Margin, MarginStrategy, StrategySpec};
pub use trace::{Datacenter, HostSpec, HostTrace, MetricKind, SyntheticConfig, TraceSample};
