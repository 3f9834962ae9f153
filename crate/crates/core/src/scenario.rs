//! Scenario files and the generate / train / evaluate pipeline.
//!
//! A scenario is one TOML document. Relative paths inside it resolve
//! against the file's directory. All randomness is derived from the
//! top-level `seed` through named sub-seeds:
//!
//! | label                      | consumer                          |
//! |----------------------------|-----------------------------------|
//! | `trace`                    | synthetic trace generator         |
//! | `agent/<metric>[/<host>]`  | agent init, replay, OU, warmup    |
//! | `random-strategy/<metric>` | the random baseline               |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::ddpg::{DdpgAgent, DdpgConfig};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::report::round4;
use crate::seed;
use crate::sim::{
    compare_strategies, run, train_test_split, Comparison, MetricPolicy, Mode, RewardMode, SimulationConfig,
    TrainLogRow,
};
use crate::strategy::StrategySpec;
use crate::trace::{
    generate_synthetic, load_capacities, load_traces, write_capacities, write_traces, Datacenter, MetricKind,
    SyntheticConfig, DEFAULT_STEP_MINUTES,
};

pub const TRACES_FILE: &str = "traces.csv";
pub const CAPACITIES_FILE: &str = "capacities.csv";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const EVAL_DIR: &str = "eval";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFiles {
    pub path: PathBuf,
    pub capacities: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub step_minutes: u32,
    pub reward: RewardMode,
    /// Passes over the training split.
    pub train_passes: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            step_minutes: DEFAULT_STEP_MINUTES,
            reward: RewardMode::DayEndPenalty,
            train_passes: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategySection {
    pub cpu: String,
    pub ram: String,
    /// Extra strategies evaluated on both metrics next to the binding.
    pub compare: Vec<String>,
    /// Entry the comparison ratios are taken against.
    pub baseline: String,
    pub scavenger_window: usize,
}

impl Default for StrategySection {
    fn default() -> Self {
        StrategySection {
            cpu: "releaser".into(),
            ram: "releaser".into(),
            compare: vec![
                "fixed:0.05".into(),
                "random".into(),
                "scavenger".into(),
                "feedback:0.05".into(),
            ],
            baseline: "fixed:0.05".into(),
            scavenger_window: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub synthetic: Option<SyntheticConfig>,
    pub traces: Option<TraceFiles>,
    /// Per-host capacities for a synthetic scenario, assigned to the
    /// generated hosts in `host_id` order.
    pub capacities: Option<PathBuf>,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub strategies: StrategySection,
    #[serde(default)]
    pub ddpg: DdpgConfig,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One strategy run requested by the scenario: a spec per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub specs: [StrategySpec; 2],
}

/// A validated scenario with paths resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub output_dir: PathBuf,
    pub binding: [StrategySpec; 2],
    pub entries: Vec<Entry>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))
    }
}

fn entry_name(specs: &[StrategySpec; 2]) -> String {
    if specs[0] == specs[1] {
        specs[0].to_string()
    } else {
        format!("cpu={},ram={}", specs[0], specs[1])
    }
}

fn parse_spec(field: &str, s: &str) -> Result<StrategySpec> {
    s.parse()
        .map_err(|_| Error::config(format!("{field}: invalid strategy `{s}`")))
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read scenario `{}`: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_config(ScenarioConfig::from_toml(&text)?, base)
    }

    /// Validates `config`, resolving relative paths against `base`.
    pub fn from_config(mut config: ScenarioConfig, base: &Path) -> Result<Self> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        match (&mut config.synthetic, &mut config.traces) {
            (Some(_), Some(_)) => return Err(Error::config("give either [synthetic] or [traces], not both")),
            (None, None) => return Err(Error::config("a [synthetic] or [traces] section is required")),
            (Some(syn), None) => {
                if syn.seed != 0 {
                    return Err(Error::config("synthetic.seed: use the top-level seed"));
                }
                syn.seed = seed::derive(config.seed, "trace");
                syn.validate()?;
                if syn.step_minutes != config.simulation.step_minutes {
                    return Err(Error::config(
                        "synthetic.step_minutes: must equal simulation.step_minutes",
                    ));
                }
            }
            (None, Some(files)) => {
                files.path = resolve(&files.path);
                files.capacities = resolve(&files.capacities);
                for (field, p) in [("traces.path", &files.path), ("traces.capacities", &files.capacities)] {
                    if !p.is_file() {
                        return Err(Error::config(format!("{field}: `{}` does not exist", p.display())));
                    }
                }
            }
        }
        if let Some(path) = &mut config.capacities {
            let Some(syn) = &config.synthetic else {
                return Err(Error::config(
                    "capacities: only valid with [synthetic]; use traces.capacities",
                ));
            };
            *path = resolve(path);
            if !path.is_file() {
                return Err(Error::config(format!(
                    "capacities: `{}` does not exist",
                    path.display()
                )));
            }
            let n = load_capacities(&*path)?.len();
            if n != syn.num_hosts {
                return Err(Error::config(format!(
                    "capacities: file lists {n} hosts but synthetic.num_hosts is {}",
                    syn.num_hosts
                )));
            }
        }
        crate::trace::steps_per_day(config.simulation.step_minutes)
            .map_err(|e| Error::config(format!("simulation.step_minutes: {e}")))?;
        if config.simulation.train_passes == 0 {
            return Err(Error::config("simulation.train_passes: must be >= 1"));
        }
        config.cost.validate()?;
        config.ddpg.validate()?;

        let s = &config.strategies;
        if s.scavenger_window < 2 {
            return Err(Error::config("strategies.scavenger_window: must be >= 2"));
        }
        let binding = [
            parse_spec("strategies.cpu", &s.cpu)?,
            parse_spec("strategies.ram", &s.ram)?,
        ];
        let mut entries = vec![Entry {
            name: entry_name(&binding),
            specs: binding.clone(),
        }];
        for c in &s.compare {
            let spec = parse_spec("strategies.compare", c)?;
            let specs = [spec.clone(), spec];
            let name = entry_name(&specs);
            if !entries.iter().any(|e| e.name == name) {
                entries.push(Entry { name, specs });
            }
        }
        let baseline = parse_spec("strategies.baseline", &s.baseline)?.to_string();
        if !entries.iter().any(|e| e.name == baseline) {
            return Err(Error::config(format!(
                "strategies.baseline: `{baseline}` is not among the evaluated strategies"
            )));
        }
        config.strategies.baseline = baseline;

        let output_dir = resolve(&config.output_dir);
        Ok(Scenario {
            config,
            output_dir,
            binding,
            entries,
        })
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = dir.into();
        self
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Loads trace files or generates the synthetic datacenter in memory.
    pub fn datacenter(&self) -> Result<Datacenter> {
        let mut dc = match (&self.config.synthetic, &self.config.traces) {
            (Some(syn), _) => {
                let mut dc = generate_synthetic(syn)?;
                if let Some(path) = &self.config.capacities {
                    let mut specs: Vec<_> = load_capacities(path)?.into_values().collect();
                    specs.sort_by(|a, b| a.host_id.cmp(&b.host_id));
                    for (host, spec) in dc.hosts.iter_mut().zip(specs) {
                        host.spec = spec;
                    }
                    dc.validate()?;
                }
                dc
            }
            (None, Some(files)) => {
                let caps = load_capacities(&files.capacities)?;
                load_traces(&files.path, &caps, self.config.simulation.step_minutes)?
            }
            (None, None) => unreachable!("validated at load"),
        };
        dc.name = self.config.name.clone();
        Ok(dc)
    }

    fn simulation(&self, mode: Mode, days: std::ops::Range<usize>) -> SimulationConfig {
        SimulationConfig {
            step_minutes: self.config.simulation.step_minutes,
            mode,
            days,
            w_state: self.config.ddpg.w_state,
            reward: self.config.simulation.reward,
        }
    }

    /// `ppm * ts * (largest container count any host can fit)`.
    pub fn reward_scale(&self, dc: &Datacenter) -> f64 {
        let cost = &self.config.cost;
        let max = dc
            .hosts
            .iter()
            .map(|h| cost.containers_fitting(&h.spec, 1.0, 1.0))
            .max()
            .unwrap_or(1)
            .max(1);
        cost.price_per_minute() * self.config.simulation.step_minutes as f64 * max as f64
    }

    fn agent_labels(&self, dc: &Datacenter, metric: MetricKind) -> Vec<String> {
        if self.config.ddpg.per_host_agents {
            dc.hosts
                .iter()
                .map(|h| format!("agent/{metric}/{}", h.host_id()))
                .collect()
        } else {
            vec![format!("agent/{metric}")]
        }
    }

    /// Checkpoint paths for one metric, one per agent.
    pub fn checkpoint_paths(&self, dc: &Datacenter, metric: MetricKind) -> Vec<PathBuf> {
        if self.config.ddpg.per_host_agents {
            dc.hosts
                .iter()
                .map(|h| self.output_dir.join(format!("agent_{metric}_{}.ckpt", h.host_id())))
                .collect()
        } else {
            vec![self.output_dir.join(format!("agent_{metric}.ckpt"))]
        }
    }

    fn heuristic(&self, spec: &StrategySpec, metric: MetricKind) -> Result<MetricPolicy> {
        let seed = seed::derive(self.seed(), &format!("random-strategy/{metric}"));
        let s = spec
            .build(seed, self.config.strategies.scavenger_window)?
            .expect("releaser handled by caller");
        Ok(MetricPolicy::Strategy(s))
    }
}

/// Per-metric numbers printed after `generate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub metric: MetricKind,
    pub mean_usage: f64,
    /// Fraction of samples with `usage > prediction`.
    pub underestimation_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub hosts: usize,
    pub days: usize,
    pub metrics: Vec<MetricSummary>,
}

pub fn summarize_traces(dc: &Datacenter) -> GenerateSummary {
    let metrics = MetricKind::ALL
        .iter()
        .map(|&m| {
            let (mut n, mut usage, mut under) = (0usize, 0.0, 0usize);
            for s in dc.hosts.iter().flat_map(|h| h.series(m)) {
                n += 1;
                usage += s.usage;
                under += usize::from(s.error() > 0.0);
            }
            let n_f = n.max(1) as f64;
            MetricSummary {
                metric: m,
                mean_usage: usage / n_f,
                underestimation_rate: under as f64 / n_f,
            }
        })
        .collect();
    GenerateSummary {
        hosts: dc.hosts.len(),
        days: dc.num_days(),
        metrics,
    }
}

/// Writes `traces.csv` and `capacities.csv` for a synthetic scenario.
pub fn generate(scenario: &Scenario) -> Result<GenerateSummary> {
    if scenario.config.synthetic.is_none() {
        return Err(Error::config("generate needs a [synthetic] section"));
    }
    let dc = scenario.datacenter()?;
    fs::create_dir_all(&scenario.output_dir)?;
    let mut buf = Vec::new();
    write_traces(&dc, &mut buf)?;
    write_atomic(&scenario.output_dir.join(TRACES_FILE), &buf)?;
    buf.clear();
    write_capacities(&dc.host_specs(), &mut buf)?;
    write_atomic(&scenario.output_dir.join(CAPACITIES_FILE), &buf)?;
    Ok(summarize_traces(&dc))
}

#[derive(Debug)]
pub struct TrainOutput {
    /// Trained agents indexed by [`MetricKind::index`]; empty when the
    /// metric is bound to a heuristic.
    pub agents: [Vec<DdpgAgent>; 2],
    pub log: Vec<TrainLogRow>,
    pub checkpoints: Vec<PathBuf>,
}

/// Trains the agents bound by the scenario on the training split.
pub fn train_agents(scenario: &Scenario, dc: &Datacenter) -> Result<([Vec<DdpgAgent>; 2], Vec<TrainLogRow>)> {
    if !scenario.binding.iter().any(StrategySpec::is_releaser) {
        return Err(Error::config(
            "train needs `releaser` bound to strategies.cpu or strategies.ram",
        ));
    }
    let cfg = &scenario.config;
    let (train_days, _) = train_test_split(dc.num_days(), cfg.ddpg.train_fraction)?;
    let scale = scenario.reward_scale(dc);
    let spd = dc.steps_per_day();
    let mut policies = Vec::with_capacity(2);
    for m in MetricKind::ALL {
        let spec = &scenario.binding[m.index()];
        policies.push(if spec.is_releaser() {
            let agents = scenario
                .agent_labels(dc, m)
                .iter()
                .map(|label| DdpgAgent::new(cfg.ddpg.clone(), spd, scale, seed::derive(cfg.seed, label)))
                .collect::<Result<Vec<_>>>()?;
            MetricPolicy::Agents(agents)
        } else {
            scenario.heuristic(spec, m)?
        });
    }
    let mut policies: [MetricPolicy; 2] = policies.try_into().ok().expect("two metrics");
    let sim = scenario.simulation(Mode::Train, train_days);
    let mut log = Vec::new();
    for _ in 0..cfg.simulation.train_passes {
        log.extend(run(dc, &cfg.cost, &sim, &mut policies)?.train_log);
    }
    let agents = policies.map(|p| match p {
        MetricPolicy::Agents(a) => a,
        MetricPolicy::Strategy(_) => Vec::new(),
    });
    Ok((agents, log))
}

fn fmt_opt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

pub fn write_train_log(rows: &[TrainLogRow], loss_name: &str, w: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let loss_col = format!("critic_{loss_name}");
    w.write_record(["step", loss_col.as_str(), "mean_reward", "mean_margin"])?;
    for r in rows {
        w.write_record(&[
            r.step.to_string(),
            fmt_opt(r.critic_loss),
            fmt_opt(r.mean_reward),
            fmt_opt(r.mean_margin),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains and writes one checkpoint per agent plus `train_log.csv`.
pub fn train(scenario: &Scenario) -> Result<TrainOutput> {
    let dc = scenario.datacenter()?;
    let (agents, log) = train_agents(scenario, &dc)?;
    fs::create_dir_all(&scenario.output_dir)?;
    let mut checkpoints = Vec::new();
    for m in MetricKind::ALL {
        let metric_agents = &agents[m.index()];
        if metric_agents.is_empty() {
            continue;
        }
        for (agent, path) in metric_agents.iter().zip(scenario.checkpoint_paths(&dc, m)) {
            write_atomic(&path, agent.to_checkpoint().as_bytes())?;
            checkpoints.push(path);
        }
    }
    let loss_name = match scenario.config.ddpg.critic_loss {
        crate::nn::Loss::Mae => "mae",
        crate::nn::Loss::Mse => "mse",
    };
    let mut buf = Vec::new();
    write_train_log(&log, loss_name, &mut buf)?;
    write_atomic(&scenario.output_dir.join(TRAIN_LOG_FILE), &buf)?;
    Ok(TrainOutput {
        agents,
        log,
        checkpoints,
    })
}

/// Reads the checkpoints of every metric some entry binds to `releaser`.
pub fn load_agents(scenario: &Scenario, dc: &Datacenter) -> Result<[Vec<DdpgAgent>; 2]> {
    let mut out: [Vec<DdpgAgent>; 2] = [Vec::new(), Vec::new()];
    for m in MetricKind::ALL {
        if !scenario.entries.iter().any(|e| e.specs[m.index()].is_releaser()) {
            continue;
        }
        for path in scenario.checkpoint_paths(dc, m) {
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::config(format!("cannot read checkpoint `{}`: {e}", path.display())))?;
            let agent = DdpgAgent::from_checkpoint(&text)?;
            if agent.config().w_state != scenario.config.ddpg.w_state {
                return Err(Error::checkpoint(
                    "header",
                    format!(
                        "`{}` has w_state {} but the scenario uses {}",
                        path.display(),
                        agent.config().w_state,
                        scenario.config.ddpg.w_state
                    ),
                ));
            }
            out[m.index()].push(agent);
        }
    }
    Ok(out)
}

/// Directory name for an entry's report files.
pub fn entry_slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs every scenario entry on the test split with the given agents.
pub fn evaluate_with(scenario: &Scenario, dc: &Datacenter, agents: &[Vec<DdpgAgent>; 2]) -> Result<Comparison> {
    let (_, test_days) = train_test_split(dc.num_days(), scenario.config.ddpg.train_fraction)?;
    let sim = scenario.simulation(Mode::Evaluate, test_days);
    let mut runs = Vec::with_capacity(scenario.entries.len());
    for e in &scenario.entries {
        let mut policies = Vec::with_capacity(2);
        for m in MetricKind::ALL {
            let spec = &e.specs[m.index()];
            policies.push(if spec.is_releaser() {
                if agents[m.index()].is_empty() {
                    return Err(Error::config(format!("`{}` needs a trained {m} agent", e.name)));
                }
                MetricPolicy::Agents(agents[m.index()].clone())
            } else {
                scenario.heuristic(spec, m)?
            });
        }
        let policies: [MetricPolicy; 2] = policies.try_into().ok().expect("two metrics");
        runs.push((e.name.clone(), policies));
    }
    compare_strategies(
        dc,
        &scenario.config.cost,
        &sim,
        runs,
        &scenario.config.strategies.baseline,
    )
}

pub fn write_comparison_csv(cmp: &Comparison, w: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["strategy", "potential", "penalty", "net", "net_ratio", "penalty_ratio"])?;
    for r in &cmp.rows {
        w.write_record(&[
            r.strategy.clone(),
            format!("{:.4}", r.potential_saving),
            format!("{:.4}", r.penalty),
            format!("{:.4}", r.net_saving),
            fmt_opt(round4(r.net_ratio)),
            fmt_opt(round4(r.penalty_ratio)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Loads checkpoints, evaluates every entry and writes `eval/<entry>/`
/// report directories plus `comparison.csv`.
pub fn evaluate(scenario: &Scenario) -> Result<Comparison> {
    let dc = scenario.datacenter()?;
    let agents = load_agents(scenario, &dc)?;
    let cmp = evaluate_with(scenario, &dc, &agents)?;
    let eval_dir = scenario.output_dir.join(EVAL_DIR);
    for report in &cmp.reports {
        report.write_dir(&eval_dir.join(entry_slug(&report.strategy)))?;
    }
    let mut buf = Vec::new();
    write_comparison_csv(&cmp, &mut buf)?;
    write_atomic(&scenario.output_dir.join(COMPARISON_FILE), &buf)?;
    Ok(cmp)
}

/// Aligned plain-text table of a comparison.
pub fn format_comparison(cmp: &Comparison) -> String {
    let width = cmp.rows.iter().map(|r| r.strategy.len()).max().unwrap_or(8).max(8);
    let mut out = format!(
        "{:<width$}  {:>12}  {:>12}  {:>12}  {:>9}  {:>9}\n",
        "strategy", "potential", "penalty", "net", "net/base", "pen/base"
    );
    for r in &cmp.rows {
        out.push_str(&format!(
            "{:<width$}  {:>12.4}  {:>12.4}  {:>12.4}  {:>9.4}  {:>9.4}\n",
            r.strategy, r.potential_saving, r.penalty, r.net_saving, r.net_ratio, r.penalty_ratio
        ));
    }
    out.push_str(&format!("baseline: {}\n", cmp.baseline));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
        seed = 5
        [synthetic]
        num_hosts = 2
        num_days = 4
        [ddpg]
        warmup_steps = 200
        batch_size = 16
        replay_capacity = 5000
    "#;

    fn tiny(dir: &Path) -> Scenario {
        Scenario::from_config(ScenarioConfig::from_toml(TINY).unwrap(), Path::new("."))
            .unwrap()
            .with_output_dir(dir)
    }

    #[test]
    fn missing_seed_is_named() {
        let err = ScenarioConfig::from_toml("[synthetic]\nnum_hosts = 2\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ScenarioConfig::from_toml("seed = 1\n[synthetic]\nnum_hostz = 2\n").unwrap_err();
        assert!(err.to_string().contains("num_hostz"), "{err}");
        assert!(ScenarioConfig::from_toml("seed = 1\ncolour = 2\n").is_err());
    }

    #[test]
    fn invalid_values_name_the_field() {
        let cfg = ScenarioConfig::from_toml("seed = 1\n[synthetic]\nnoise_sigma = 2.0\n").unwrap();
        let err = Scenario::from_config(cfg, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("synthetic.noise_sigma"), "{err}");

        let cfg =
            ScenarioConfig::from_toml("seed = 1\n[traces]\npath = \"nope.csv\"\ncapacities = \"nope2.csv\"\n").unwrap();
        let err = Scenario::from_config(cfg, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("traces.path"), "{err}");
    }

    #[test]
    fn entries_deduplicate_the_binding() {
        let cfg = ScenarioConfig::from_toml(
            "seed = 1\n[synthetic]\n[strategies]\ncompare = [\"releaser\", \"fixed:0.1\"]\nbaseline = \"fixed:0.1\"\n",
        )
        .unwrap();
        let s = Scenario::from_config(cfg, Path::new(".")).unwrap();
        let names: Vec<_> = s.entries.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["releaser", "fixed:0.1"]);
    }

    #[test]
    fn tiny_pipeline_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = tiny(dir.path());
        let summary = generate(&s).unwrap();
        assert_eq!(summary.hosts, 2);
        let caps = load_capacities(dir.path().join(CAPACITIES_FILE)).unwrap();
        let reloaded = load_traces(dir.path().join(TRACES_FILE), &caps, 3).unwrap();
        assert_eq!(reloaded.hosts, s.datacenter().unwrap().hosts);

        let out = train(&s).unwrap();
        let (train_days, _) = train_test_split(4, 0.8).unwrap();
        assert_eq!(out.log.len(), train_days.len() * 480);
        assert_eq!(out.checkpoints.len(), 2);

        let cmp = evaluate(&s).unwrap();
        assert_eq!(cmp.rows.len(), s.entries.len());
        assert!(dir.path().join("eval/releaser/ledger.csv").is_file());
        assert!(dir.path().join(COMPARISON_FILE).is_file());
    }
}
