//! Time-stepped replay of a datacenter trace under margin policies.
//!
//! For every step and host the engine asks each metric's policy for a
//! margin (using data up to the previous step), fits containers into the
//! headroom `1 - prediction - margin`, flags a violation when usage exceeds
//! `prediction + margin` on either metric, and settles each host-day. In
//! training mode it also feeds transitions to DDPG agents.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::cost::{accumulate_violation, CostModel, DayLedger};
use crate::ddpg::{DdpgAgent, Transition};
use crate::error::{Error, Result};
use crate::report::{summarize_margins, EvaluationReport, MarginSeries, MetricCdfs};
use crate::strategy::{MarginStrategy, Observation};
use crate::trace::{steps_per_day, underestimation_cdf, Datacenter, HostCdf, MetricKind, TraceSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Evaluate,
}

/// How a host's dollars are turned into per-step agent rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Each step earns `ppm * ts * containers`; the last step of a day also
    /// pays the whole day's penalty.
    DayEndPenalty,
    /// Each step earns the change in the day's running net saving,
    /// `potential_so_far * (1 - discount(minutes_so_far))`. Summed over a
    /// day this equals the day's net saving.
    RunningNet,
    /// Each step earns `ppm * ts * containers`; at day end the day's
    /// penalty is split equally over that host's violating steps. Agents
    /// learn from a host's transitions once its day is settled.
    ViolationShare,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub step_minutes: u32,
    pub mode: Mode,
    pub days: Range<usize>,
    pub w_state: usize,
    pub reward: RewardMode,
}

impl SimulationConfig {
    pub fn evaluate(days: Range<usize>) -> Self {
        SimulationConfig {
            step_minutes: crate::trace::DEFAULT_STEP_MINUTES,
            mode: Mode::Evaluate,
            days,
            w_state: 10,
            reward: RewardMode::DayEndPenalty,
        }
    }

    pub fn validate(&self, dc: &Datacenter) -> Result<()> {
        steps_per_day(self.step_minutes)?;
        if self.step_minutes != dc.step_minutes {
            return Err(Error::domain(format!(
                "simulation step {} min does not match trace step {} min",
                self.step_minutes, dc.step_minutes
            )));
        }
        if self.days.is_empty() || self.days.end > dc.num_days() {
            return Err(Error::domain(format!(
                "day range {:?} not within the trace's {} days",
                self.days,
                dc.num_days()
            )));
        }
        if self.w_state == 0 {
            return Err(Error::domain("w_state must be positive"));
        }
        Ok(())
    }
}

/// The margin source bound to one metric.
pub enum MetricPolicy {
    Strategy(Box<dyn MarginStrategy>),
    /// A single shared agent, or exactly one agent per host.
    Agents(Vec<DdpgAgent>),
}

impl MetricPolicy {
    pub fn name(&self) -> String {
        match self {
            MetricPolicy::Strategy(s) => s.name(),
            MetricPolicy::Agents(_) => "releaser".to_string(),
        }
    }

    fn usage_history(&self) -> usize {
        match self {
            MetricPolicy::Strategy(s) => s.usage_history(),
            MetricPolicy::Agents(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub host_index: usize,
    pub step: usize,
    pub margins: [f64; 2],
    pub containers: u32,
    /// `prediction + margin - usage` per metric.
    pub effective_error: [f64; 2],
    pub violated: bool,
}

/// One row per simulated step of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    /// Mean critic loss over the updates made this step; NaN if none.
    pub critic_loss: f64,
    pub mean_reward: f64,
    pub mean_margin: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: EvaluationReport,
    pub train_log: Vec<TrainLogRow>,
}

/// Sliding windows of recent errors and usage for one (host, metric).
struct History {
    errors: Vec<f64>,
    usage: Vec<f64>,
}

impl History {
    fn new(w_state: usize, usage_len: usize, past: &[TraceSample]) -> Self {
        let mut h = History {
            errors: vec![0.0; w_state],
            usage: vec![0.0; usage_len],
        };
        for s in past.iter().rev().take(usage_len.max(w_state)).rev() {
            h.push(s);
        }
        h
    }

    fn push(&mut self, s: &TraceSample) {
        self.errors.rotate_left(1);
        *self.errors.last_mut().unwrap() = s.error().clamp(-1.0, 1.0);
        self.usage.rotate_left(1);
        *self.usage.last_mut().unwrap() = s.usage;
    }
}

/// A training transition held back until its host-day is settled.
#[derive(Clone)]
struct Pending {
    metric: usize,
    violated: bool,
    own: bool,
    transition: Transition,
}

fn agent_index(agents: &[DdpgAgent], host: usize) -> usize {
    if agents.len() == 1 {
        0
    } else {
        host
    }
}

/// Replays `sim.days` of `dc`. Policies are indexed by
/// [`MetricKind::index`]; agents are trained in place when
/// `sim.mode == Mode::Train`.
pub fn run(
    dc: &Datacenter,
    cost: &CostModel,
    sim: &SimulationConfig,
    policies: &mut [MetricPolicy; 2],
) -> Result<RunOutput> {
    run_observed(dc, cost, sim, policies, |_| {})
}

/// Like [`run`], calling `observer` with every step outcome.
pub fn run_observed(
    dc: &Datacenter,
    cost: &CostModel,
    sim: &SimulationConfig,
    policies: &mut [MetricPolicy; 2],
    mut observer: impl FnMut(&StepOutcome),
) -> Result<RunOutput> {
    sim.validate(dc)?;
    cost.validate()?;
    for (metric, p) in MetricKind::ALL.iter().zip(policies.iter()) {
        if let MetricPolicy::Agents(agents) = p {
            if agents.len() != 1 && agents.len() != dc.hosts.len() {
                return Err(Error::domain(format!(
                    "{metric}: need one shared agent or one per host, got {}",
                    agents.len()
                )));
            }
            if let Some(a) = agents.iter().find(|a| a.config().w_state != sim.w_state) {
                return Err(Error::domain(format!(
                    "{metric}: agent state size {} differs from w_state {}",
                    a.config().w_state,
                    sim.w_state
                )));
            }
        }
    }

    let spd = dc.steps_per_day();
    let ts = sim.step_minutes;
    let train = sim.mode == Mode::Train;
    let first_step = sim.days.start * spd;
    let usage_len = policies
        .iter()
        .map(MetricPolicy::usage_history)
        .fold(sim.w_state, usize::max);
    let step_value = cost.price_per_minute() * ts as f64;
    let num_hosts = dc.hosts.len();

    let mut history: Vec<[History; 2]> = dc
        .hosts
        .iter()
        .map(|h| MetricKind::ALL.map(|m| History::new(sim.w_state, usage_len, &h.series(m)[..first_step])))
        .collect();
    let mut last_margin = vec![[0.0f64; 2]; num_hosts];
    let mut margins: Vec<[Vec<f64>; 2]> = vec![[Vec::new(), Vec::new()]; num_hosts];
    let mut ledgers = Vec::with_capacity(num_hosts * sim.days.len());
    let mut train_log = Vec::new();
    let deferred = train && sim.reward == RewardMode::ViolationShare;
    let mut pending: Vec<Vec<Pending>> = vec![Vec::new(); num_hosts];

    for day in sim.days.clone() {
        let mut violation = vec![0u32; num_hosts];
        let mut containers: Vec<Vec<u32>> = vec![Vec::with_capacity(spd); num_hosts];
        let mut running_potential = vec![0.0f64; num_hosts];
        let mut running_net = vec![0.0f64; num_hosts];

        for t in 0..spd {
            let step = day * spd + t;
            let mut log_loss = (0.0, 0usize);
            let mut log_reward = (0.0, 0usize);
            let mut log_margin = (0.0, 0usize);

            for (h, host) in dc.hosts.iter().enumerate() {
                let samples = MetricKind::ALL.map(|m| host.series(m)[step]);
                let mut chosen = [0.0f64; 2];
                for m in MetricKind::ALL {
                    let k = m.index();
                    let hist = &history[h][k];
                    chosen[k] = match &mut policies[k] {
                        MetricPolicy::Strategy(s) => {
                            let obs = Observation {
                                host_index: h,
                                host_id: host.host_id(),
                                metric: m,
                                error_window: &hist.errors,
                                usage_window: &hist.usage,
                                last_margin: last_margin[h][k],
                            };
                            s.select_margin(&obs).value()
                        }
                        MetricPolicy::Agents(agents) => {
                            let i = agent_index(agents, h);
                            let margin = agents[i].act(&hist.errors, train)?.value();
                            log_margin.0 += margin;
                            log_margin.1 += 1;
                            margin
                        }
                    };
                }

                let [cpu, ram] = samples;
                let headroom = |s: &TraceSample, m: f64| (1.0 - s.prediction - m).max(0.0);
                let nb = cost.containers_fitting(&host.spec, headroom(&cpu, chosen[0]), headroom(&ram, chosen[1]));
                let effective_error = [
                    cpu.prediction + chosen[0] - cpu.usage,
                    ram.prediction + chosen[1] - ram.usage,
                ];
                let violated = effective_error.iter().any(|e| *e < 0.0);
                violation[h] = accumulate_violation(violation[h], violated, ts);
                containers[h].push(nb);

                observer(&StepOutcome {
                    host_index: h,
                    step,
                    margins: chosen,
                    containers: nb,
                    effective_error,
                    violated,
                });

                let day_end = t + 1 == spd;
                let mut day_penalty = 0.0;
                if day_end {
                    let s = cost.settle_day(&containers[h], violation[h], ts)?;
                    day_penalty = s.penalty;
                    ledgers.push(DayLedger {
                        host_id: host.host_id().to_string(),
                        day,
                        violation_minutes: violation[h],
                        potential_saving: s.potential_saving,
                        penalty: s.penalty,
                        net_saving: s.net_saving,
                        per_step_containers: std::mem::take(&mut containers[h]),
                    });
                }

                let step_revenue = nb as f64 * step_value;
                running_potential[h] += step_revenue;
                let reward = match sim.reward {
                    RewardMode::DayEndPenalty => step_revenue - day_penalty,
                    RewardMode::ViolationShare => step_revenue,
                    RewardMode::RunningNet => {
                        let net = running_potential[h] * (1.0 - cost.discount_for(violation[h])?);
                        let r = net - running_net[h];
                        running_net[h] = net;
                        r
                    }
                };

                for m in MetricKind::ALL {
                    let k = m.index();
                    let before = train.then(|| history[h][k].errors.clone());
                    history[h][k].push(&samples[k]);
                    last_margin[h][k] = chosen[k];
                    margins[h][k].push(chosen[k]);
                    if let (Some(state), MetricPolicy::Agents(agents)) = (before, &mut policies[k]) {
                        let transition = Transition {
                            state,
                            action: chosen[k],
                            reward,
                            next_state: history[h][k].errors.clone(),
                        };
                        if deferred {
                            pending[h].push(Pending {
                                metric: k,
                                violated,
                                own: effective_error[k] < 0.0,
                                transition,
                            });
                            continue;
                        }
                        let i = agent_index(agents, h);
                        let stats = agents[i].store_and_learn(transition);
                        if let Some(l) = stats.critic_loss {
                            log_loss.0 += l;
                            log_loss.1 += 1;
                        }
                        log_reward.0 += reward;
                        log_reward.1 += 1;
                    }
                }

                if deferred && day_end {
                    let steps = pending[h]
                        .iter()
                        .filter(|p| p.violated && p.metric == pending[h][0].metric)
                        .count();
                    let share = if steps == 0 { 0.0 } else { day_penalty / steps as f64 };
                    for mut p in std::mem::take(&mut pending[h]) {
                        if p.own {
                            p.transition.reward -= share;
                        }
                        log_reward.0 += p.transition.reward;
                        log_reward.1 += 1;
                        if let MetricPolicy::Agents(agents) = &mut policies[p.metric] {
                            let i = agent_index(agents, h);
                            if let Some(l) = agents[i].store_and_learn(p.transition).critic_loss {
                                log_loss.0 += l;
                                log_loss.1 += 1;
                            }
                        }
                    }
                }
            }

            if train {
                let mean = |(s, n): (f64, usize)| if n == 0 { f64::NAN } else { s / n as f64 };
                train_log.push(TrainLogRow {
                    step,
                    critic_loss: mean(log_loss),
                    mean_reward: mean(log_reward),
                    mean_margin: mean(log_margin),
                });
            }
        }
    }

    let host_ids: Vec<String> = dc.hosts.iter().map(|h| h.host_id().to_string()).collect();
    let (host_totals, totals) = EvaluationReport::totals_from_ledgers(&host_ids, &ledgers);
    let range = first_step..sim.days.end * spd;
    let mut margin_summaries = Vec::new();
    let mut margin_series = Vec::new();
    for (h, id) in host_ids.iter().enumerate() {
        for m in MetricKind::ALL {
            let values = std::mem::take(&mut margins[h][m.index()]);
            margin_summaries.push(summarize_margins(id, m, &values));
            margin_series.push(MarginSeries {
                host_id: id.clone(),
                metric: m,
                first_step,
                values,
            });
        }
    }
    let error_cdfs = MetricKind::ALL
        .iter()
        .map(|&m| MetricCdfs {
            metric: m,
            hosts: dc
                .hosts
                .iter()
                .map(|h| HostCdf {
                    host_id: h.host_id().to_string(),
                    points: underestimation_cdf(h.series(m)[range.clone()].iter().map(TraceSample::error)),
                })
                .collect(),
        })
        .collect();

    let strategy = if policies[0].name() == policies[1].name() {
        policies[0].name()
    } else {
        format!("cpu={},ram={}", policies[0].name(), policies[1].name())
    };

    Ok(RunOutput {
        report: EvaluationReport {
            strategy,
            datacenter: dc.name.clone(),
            step_minutes: ts,
            first_day: sim.days.start,
            end_day: sim.days.end,
            totals,
            host_totals,
            ledgers,
            margin_summaries,
            error_cdfs,
            margins: margin_series,
        },
        train_log,
    })
}

/// Chronological split into whole training and test days.
pub fn train_test_split(num_days: usize, train_fraction: f64) -> Result<(Range<usize>, Range<usize>)> {
    if num_days < 2 {
        return Err(Error::domain(format!("need at least 2 days to split, have {num_days}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::domain("train fraction must lie in (0,1)"));
    }
    let train = ((num_days as f64 * train_fraction + 1e-9).floor() as usize).clamp(1, num_days - 1);
    Ok((0..train, train..num_days))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub potential_saving: f64,
    pub penalty: f64,
    pub net_saving: f64,
    /// `net / baseline net`.
    pub net_ratio: f64,
    /// `penalty / baseline penalty`.
    pub penalty_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
    pub reports: Vec<EvaluationReport>,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

/// Runs each named policy pair over the same range, one thread per entry,
/// and tabulates totals against the entry named `baseline`.
pub fn compare_strategies(
    dc: &Datacenter,
    cost: &CostModel,
    sim: &SimulationConfig,
    entries: Vec<(String, [MetricPolicy; 2])>,
    baseline: &str,
) -> Result<Comparison> {
    let names: Vec<String> = entries.iter().map(|(n, _)| n.clone()).collect();
    let Some(base_idx) = names.iter().position(|n| n == baseline) else {
        return Err(Error::config(format!(
            "baseline `{baseline}` is not among the compared strategies"
        )));
    };
    let results: Vec<Result<RunOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = entries
            .into_iter()
            .map(|(_, mut policies)| scope.spawn(move || run(dc, cost, sim, &mut policies)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let mut reports = Vec::with_capacity(results.len());
    for (name, r) in names.iter().zip(results) {
        let mut report = r?.report;
        report.strategy = name.clone();
        reports.push(report);
    }
    let base = reports[base_idx].totals;
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            strategy: r.strategy.clone(),
            potential_saving: r.totals.potential_saving,
            penalty: r.totals.penalty,
            net_saving: r.totals.net_saving,
            net_ratio: ratio(r.totals.net_saving, base.net_saving),
            penalty_ratio: ratio(r.totals.penalty, base.penalty),
        })
        .collect();
    Ok(Comparison {
        baseline: baseline.to_string(),
        rows,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::FixedStrategy;
    use crate::trace::{HostSpec, HostTrace};

    fn flat_dc(days: usize, usage: f64, prediction: f64) -> Datacenter {
        let n = days * 480;
        let series = |_| {
            (0..n)
                .map(|step| TraceSample {
                    step,
                    usage,
                    prediction,
                })
                .collect::<Vec<_>>()
        };
        let host = HostTrace::new(HostSpec::new("h0", 24, 128.0).unwrap(), series(0), series(1)).unwrap();
        Datacenter::new("flat", 3, vec![host]).unwrap()
    }

    fn fixed(m: f64) -> [MetricPolicy; 2] {
        [
            MetricPolicy::Strategy(Box::new(FixedStrategy::new(m).unwrap())),
            MetricPolicy::Strategy(Box::new(FixedStrategy::new(m).unwrap())),
        ]
    }

    #[test]
    fn perfect_predictions_never_violate() {
        let dc = flat_dc(2, 0.5, 0.5);
        let cost = CostModel::default();
        let out = run(&dc, &cost, &SimulationConfig::evaluate(0..2), &mut fixed(0.0)).unwrap();
        assert_eq!(out.report.totals.penalty, 0.0);
        let per_day = cost.settle_day(&[6; 480], 0, 3).unwrap();
        for l in &out.report.ledgers {
            assert_eq!(l.violation_minutes, 0);
            assert_eq!(l.potential_saving, per_day.potential_saving);
        }
    }

    #[test]
    fn worst_case_hits_top_tier() {
        let dc = flat_dc(1, 1.0, 0.0);
        let cost = CostModel::default();
        let out = run(&dc, &cost, &SimulationConfig::evaluate(0..1), &mut fixed(0.0)).unwrap();
        let l = &out.report.ledgers[0];
        assert_eq!(l.violation_minutes, 1440);
        assert_eq!(l.penalty, 0.30 * l.potential_saving);
        assert!(l.potential_saving > 0.0);
    }

    #[test]
    fn split_examples() {
        assert_eq!(train_test_split(10, 0.8).unwrap(), (0..8, 8..10));
        assert_eq!(train_test_split(2, 0.5).unwrap(), (0..1, 1..2));
        assert_eq!(train_test_split(30, 0.8).unwrap(), (0..24, 24..30));
        assert!(train_test_split(1, 0.8).is_err());
    }

    #[test]
    fn bad_range_rejected() {
        let dc = flat_dc(1, 0.5, 0.5);
        let r = run(
            &dc,
            &CostModel::default(),
            &SimulationConfig::evaluate(0..2),
            &mut fixed(0.0),
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn self_comparison_ratios_are_one() {
        let dc = flat_dc(1, 0.7, 0.5);
        let sim = SimulationConfig::evaluate(0..1);
        let cmp = compare_strategies(
            &dc,
            &CostModel::default(),
            &sim,
            vec![("a".into(), fixed(0.05)), ("b".into(), fixed(0.05))],
            "a",
        )
        .unwrap();
        for row in &cmp.rows {
            assert_eq!(row.net_ratio, 1.0);
            assert_eq!(row.penalty_ratio, 1.0);
        }
    }
}
