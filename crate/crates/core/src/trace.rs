//! Host usage/prediction time series: data model, CSV ingestion and a
//! reproducible synthetic workload generator.
//!
//! Usage and prediction are stored as fractions of host capacity. Absolute
//! cores and GB only appear when containers are fitted (see [`crate::cost`]).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const MINUTES_PER_DAY: u32 = 1440;
pub const DEFAULT_STEP_MINUTES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Cpu,
    Ram,
}

impl MetricKind {
    pub const ALL: [MetricKind; 2] = [MetricKind::Cpu, MetricKind::Ram];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Cpu => "cpu",
            MetricKind::Ram => "ram",
        }
    }

    pub fn index(self) -> usize {
        match self {
            MetricKind::Cpu => 0,
            MetricKind::Ram => 1,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpu" => Ok(MetricKind::Cpu),
            "ram" => Ok(MetricKind::Ram),
            other => Err(Error::domain(format!("unknown metric `{other}`"))),
        }
    }
}

/// Number of steps in a day for a given step length, or an error when the
/// step does not divide the day.
pub fn steps_per_day(step_minutes: u32) -> Result<usize> {
    if step_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(step_minutes) {
        return Err(Error::domain(format!(
            "step length {step_minutes} min does not divide a 1440-minute day"
        )));
    }
    Ok((MINUTES_PER_DAY / step_minutes) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub step: usize,
    pub usage: f64,
    pub prediction: f64,
}

impl TraceSample {
    /// Signed prediction error `usage - prediction`; positive means the
    /// forecast underestimated.
    pub fn error(&self) -> f64 {
        self.usage - self.prediction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    pub host_id: String,
    pub cpu_cores: u32,
    pub ram_gb: f64,
}

impl HostSpec {
    pub fn new(host_id: impl Into<String>, cpu_cores: u32, ram_gb: f64) -> Result<Self> {
        let spec = HostSpec {
            host_id: host_id.into(),
            cpu_cores,
            ram_gb,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.host_id.is_empty() {
            return Err(Error::config("host_id must not be empty"));
        }
        if self.cpu_cores < 1 {
            return Err(Error::config(format!(
                "host `{}`: cpu_cores must be >= 1",
                self.host_id
            )));
        }
        if !(self.ram_gb > 0.0 && self.ram_gb.is_finite()) {
            return Err(Error::config(format!("host `{}`: ram_gb must be > 0", self.host_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostTrace {
    pub spec: HostSpec,
    /// Indexed by [`MetricKind::index`].
    series: [Vec<TraceSample>; 2],
}

impl HostTrace {
    /// Builds a host trace, checking that both series are equal length,
    /// contiguous from step 0 and range-valid.
    pub fn new(spec: HostSpec, cpu: Vec<TraceSample>, ram: Vec<TraceSample>) -> Result<Self> {
        spec.validate()?;
        let trace = HostTrace {
            spec,
            series: [cpu, ram],
        };
        trace.validate()?;
        Ok(trace)
    }

    fn validate(&self) -> Result<()> {
        let id = &self.spec.host_id;
        let [cpu, ram] = &self.series;
        if cpu.len() != ram.len() {
            return Err(Error::schema(format!(
                "host `{id}`: cpu has {} samples but ram has {}",
                cpu.len(),
                ram.len()
            )));
        }
        for metric in MetricKind::ALL {
            for (i, s) in self.series(metric).iter().enumerate() {
                if s.step != i {
                    return Err(Error::schema(format!(
                        "host `{id}` {metric}: expected step {i}, found {}",
                        s.step
                    )));
                }
                if !in_unit(s.usage) || !in_unit(s.prediction) {
                    return Err(Error::schema(format!(
                        "host `{id}` {metric} step {i}: values outside [0,1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn series(&self, metric: MetricKind) -> &[TraceSample] {
        &self.series[metric.index()]
    }

    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn host_id(&self) -> &str {
        &self.spec.host_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datacenter {
    pub name: String,
    pub step_minutes: u32,
    pub hosts: Vec<HostTrace>,
}

impl Datacenter {
    pub fn new(name: impl Into<String>, step_minutes: u32, hosts: Vec<HostTrace>) -> Result<Self> {
        let dc = Datacenter {
            name: name.into(),
            step_minutes,
            hosts,
        };
        dc.validate()?;
        Ok(dc)
    }

    /// Checks the cross-host invariants: unique ids, shared length, and a
    /// whole number of days.
    pub fn validate(&self) -> Result<()> {
        let spd = steps_per_day(self.step_minutes)?;
        let mut seen = HashSet::new();
        for h in &self.hosts {
            if !seen.insert(h.host_id()) {
                return Err(Error::schema(format!("duplicate host_id `{}`", h.host_id())));
            }
        }
        if let Some(first) = self.hosts.first() {
            let len = first.len();
            if let Some(bad) = self.hosts.iter().find(|h| h.len() != len) {
                return Err(Error::schema(format!(
                    "host `{}` has {} steps, expected {len}",
                    bad.host_id(),
                    bad.len()
                )));
            }
            if len % spd != 0 {
                return Err(Error::schema(format!(
                    "series length {len} is not a whole number of {spd}-step days"
                )));
            }
        }
        Ok(())
    }

    pub fn steps_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.step_minutes) as usize
    }

    pub fn num_steps(&self) -> usize {
        self.hosts.first().map_or(0, HostTrace::len)
    }

    pub fn num_days(&self) -> usize {
        self.num_steps() / self.steps_per_day()
    }

    pub fn host_specs(&self) -> Vec<HostSpec> {
        self.hosts.iter().map(|h| h.spec.clone()).collect()
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

const TRACE_HEADER: [&str; 5] = ["host_id", "metric", "step", "usage", "prediction"];

/// Reads a trace CSV (`host_id,metric,step,usage,prediction`). Rows may come
/// in any order; duplicates are rejected.
pub fn load_traces(
    path: impl AsRef<Path>,
    capacities: &HashMap<String, HostSpec>,
    step_minutes: u32,
) -> Result<Datacenter> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "datacenter".to_string());
    read_traces(file, name, capacities, step_minutes)
}

pub fn read_traces(
    reader: impl Read,
    name: impl Into<String>,
    capacities: &HashMap<String, HostSpec>,
    step_minutes: u32,
) -> Result<Datacenter> {
    steps_per_day(step_minutes)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`", TRACE_HEADER.join(",")),
        });
    }

    let mut rows: BTreeMap<(String, MetricKind, usize), (f64, f64)> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let perr = |msg: String| Error::Parse { line, msg };
        if record.len() != TRACE_HEADER.len() {
            return Err(perr(format!("expected 5 columns, found {}", record.len())));
        }
        let host = record[0].to_string();
        let metric: MetricKind = record[1].parse().map_err(|e: Error| perr(e.to_string()))?;
        let step: usize = record[2]
            .parse()
            .map_err(|_| perr(format!("step `{}` is not a non-negative integer", &record[2])))?;
        let frac = |col: usize, what: &str| -> Result<f64> {
            let v: f64 = record[col]
                .parse()
                .map_err(|_| perr(format!("{what} `{}` is not a number", &record[col])))?;
            if !in_unit(v) {
                return Err(perr(format!("{what} {v} outside [0,1]")));
            }
            Ok(v)
        };
        let usage = frac(3, "usage")?;
        let prediction = frac(4, "prediction")?;
        if !capacities.contains_key(&host) {
            return Err(Error::config(format!("line {line}: unknown host_id `{host}`")));
        }
        if rows.insert((host.clone(), metric, step), (usage, prediction)).is_some() {
            return Err(Error::schema(format!(
                "line {line}: duplicate row for ({host}, {metric}, {step})"
            )));
        }
    }

    let mut per_host: BTreeMap<String, [Vec<TraceSample>; 2]> = BTreeMap::new();
    for ((host, metric, step), (usage, prediction)) in rows {
        per_host.entry(host).or_default()[metric.index()].push(TraceSample {
            step,
            usage,
            prediction,
        });
    }

    let mut hosts = Vec::with_capacity(per_host.len());
    for (host, [cpu, ram]) in per_host {
        for (metric, s) in MetricKind::ALL.iter().zip([&cpu, &ram]) {
            if s.is_empty() {
                return Err(Error::schema(format!("host `{host}` has no {metric} series")));
            }
        }
        hosts.push(HostTrace::new(capacities[&host].clone(), cpu, ram)?);
    }
    Datacenter::new(name, step_minutes, hosts)
}

/// Writes the trace CSV with rows ordered by (host, metric, step).
pub fn write_traces(dc: &Datacenter, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for h in &dc.hosts {
        for metric in MetricKind::ALL {
            for s in h.series(metric) {
                w.write_record(&[
                    h.host_id().to_string(),
                    metric.to_string(),
                    s.step.to_string(),
                    format!("{:?}", s.usage),
                    format!("{:?}", s.prediction),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

const CAPACITY_HEADER: [&str; 3] = ["host_id", "cpu_cores", "ram_gb"];

/// Reads a capacity table (`host_id,cpu_cores,ram_gb`).
pub fn read_capacities(reader: impl Read) -> Result<HashMap<String, HostSpec>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if rdr.headers()?.iter().collect::<Vec<_>>() != CAPACITY_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`", CAPACITY_HEADER.join(",")),
        });
    }
    let mut out = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let perr = |msg: String| Error::Parse { line, msg };
        if record.len() != 3 {
            return Err(perr(format!("expected 3 columns, found {}", record.len())));
        }
        let cpu_cores = record[1]
            .parse()
            .map_err(|_| perr(format!("cpu_cores `{}` is not an integer", &record[1])))?;
        let ram_gb = record[2]
            .parse()
            .map_err(|_| perr(format!("ram_gb `{}` is not a number", &record[2])))?;
        let spec = HostSpec::new(&record[0], cpu_cores, ram_gb)?;
        if out.insert(spec.host_id.clone(), spec).is_some() {
            return Err(Error::schema(format!(
                "line {line}: duplicate host_id `{}`",
                &record[0]
            )));
        }
    }
    Ok(out)
}

pub fn load_capacities(path: impl AsRef<Path>) -> Result<HashMap<String, HostSpec>> {
    read_capacities(std::fs::File::open(path)?)
}

pub fn write_capacities(specs: &[HostSpec], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CAPACITY_HEADER)?;
    for s in specs {
        w.write_record(&[s.host_id.clone(), s.cpu_cores.to_string(), format!("{:?}", s.ram_gb)])?;
    }
    w.flush()?;
    Ok(())
}

/// Parameters of the synthetic workload generator.
///
/// Usage is a daily sinusoid plus AR(1) noise plus decaying spikes; the
/// prediction is a trailing moving average of past usage plus bias and
/// gaussian noise. Both series are generated independently per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub num_hosts: usize,
    pub num_days: usize,
    pub step_minutes: u32,
    pub daily_amplitude: f64,
    pub base_load: f64,
    pub noise_ar_coeff: f64,
    pub noise_sigma: f64,
    pub spike_prob_per_step: f64,
    pub spike_magnitude: f64,
    /// Fraction of the spike level kept from one step to the next.
    pub spike_decay: f64,
    pub prediction_bias: f64,
    pub prediction_noise_sigma: f64,
    /// Length of the moving-average forecast window, in steps.
    pub prediction_window: usize,
    /// Per-host noise multipliers are drawn uniformly from
    /// `[1 - spread, 1 + spread]`; 0 makes all hosts statistically identical.
    pub host_noise_spread: f64,
    pub host_cpu_cores: u32,
    pub host_ram_gb: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            num_hosts: 5,
            num_days: 30,
            step_minutes: DEFAULT_STEP_MINUTES,
            daily_amplitude: 0.15,
            base_load: 0.4,
            noise_ar_coeff: 0.8,
            noise_sigma: 0.02,
            spike_prob_per_step: 0.0,
            spike_magnitude: 0.0,
            spike_decay: 0.7,
            prediction_bias: 0.0,
            prediction_noise_sigma: 0.05,
            prediction_window: 10,
            host_noise_spread: 0.0,
            host_cpu_cores: 24,
            host_ram_gb: 128.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: &str| Err(Error::config(format!("synthetic.{field}: {why}")));
        steps_per_day(self.step_minutes)?;
        if self.num_hosts == 0 {
            return fail("num_hosts", "must be >= 1");
        }
        if self.num_days == 0 {
            return fail("num_days", "must be >= 1");
        }
        for (name, v) in [
            ("daily_amplitude", self.daily_amplitude),
            ("base_load", self.base_load),
            ("noise_sigma", self.noise_sigma),
            ("spike_prob_per_step", self.spike_prob_per_step),
            ("spike_magnitude", self.spike_magnitude),
            ("spike_decay", self.spike_decay),
            ("prediction_noise_sigma", self.prediction_noise_sigma),
            ("host_noise_spread", self.host_noise_spread),
        ] {
            if !in_unit(v) {
                return fail(name, "must lie in [0,1]");
            }
        }
        if !(0.0..1.0).contains(&self.noise_ar_coeff) {
            return fail("noise_ar_coeff", "must lie in [0,1)");
        }
        if !(-1.0..=1.0).contains(&self.prediction_bias) {
            return fail("prediction_bias", "must lie in [-1,1]");
        }
        if self.prediction_window == 0 {
            return fail("prediction_window", "must be >= 1");
        }
        HostSpec::new("synthetic", self.host_cpu_cores, self.host_ram_gb)
            .map_err(|_| Error::config("synthetic.host_cpu_cores/host_ram_gb: must be positive"))?;
        Ok(())
    }
}

pub fn synthetic_host_id(index: usize) -> String {
    format!("host-{index:02}")
}

/// Generates a datacenter from `config`. Output is a pure function of the
/// config: each (host, metric) draws from its own seeded stream.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Datacenter> {
    config.validate()?;
    let spd = steps_per_day(config.step_minutes)?;
    let n = spd * config.num_days;

    let mut hosts = Vec::with_capacity(config.num_hosts);
    for h in 0..config.num_hosts {
        let id = synthetic_host_id(h);
        let mut host_rng = seed::rng(config.seed, &format!("synthetic/{h}"));
        let phase = host_rng.random::<f64>() * 2.0 * PI;
        let spread = config.host_noise_spread;
        let noise_scale = 1.0 - spread + 2.0 * spread * host_rng.random::<f64>();

        let [cpu, ram] = MetricKind::ALL.map(|metric| {
            let mut rng = seed::rng(config.seed, &format!("synthetic/{h}/{metric}"));
            synth_series(config, n, spd, phase, noise_scale, &mut rng)
        });
        let spec = HostSpec::new(id, config.host_cpu_cores, config.host_ram_gb)?;
        hosts.push(HostTrace::new(spec, cpu, ram)?);
    }
    Datacenter::new("synthetic", config.step_minutes, hosts)
}

fn synth_series(
    c: &SyntheticConfig,
    n: usize,
    spd: usize,
    phase: f64,
    noise_scale: f64,
    rng: &mut impl Rng,
) -> Vec<TraceSample> {
    let mut usage = Vec::with_capacity(n);
    let mut ar = 0.0;
    let mut spike = 0.0;
    for t in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        ar = c.noise_ar_coeff * ar + c.noise_sigma * noise_scale * z;
        spike *= c.spike_decay;
        // Always draw, so the stream layout does not depend on spike_prob.
        let roll: f64 = rng.random();
        let size: f64 = rng.random();
        if roll < c.spike_prob_per_step {
            spike += c.spike_magnitude * (0.5 + 0.5 * size);
        }
        let diurnal = c.daily_amplitude * (2.0 * PI * t as f64 / spd as f64 + phase).sin();
        usage.push((c.base_load + diurnal + ar + spike).clamp(0.0, 1.0));
    }

    let w = c.prediction_window;
    let mut out = Vec::with_capacity(n);
    let mut window_sum = 0.0;
    for t in 0..n {
        // Trailing mean of the previous `w` samples; the first step has no
        // history and falls back to its own value.
        let smoothed = if t == 0 { usage[0] } else { window_sum / t.min(w) as f64 };
        let z: f64 = rng.sample(StandardNormal);
        let prediction = (smoothed + c.prediction_bias + c.prediction_noise_sigma * noise_scale * z).clamp(0.0, 1.0);
        out.push(TraceSample {
            step: t,
            usage: usage[t],
            prediction,
        });
        window_sum += usage[t];
        if t >= w {
            window_sum -= usage[t - w];
        }
    }
    out
}

/// Empirical CDF of the positive (underestimation) errors of one host.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostCdf {
    pub host_id: String,
    /// `(error, cumulative probability)` with distinct, ascending errors.
    pub points: Vec<(f64, f64)>,
}

/// Empirical CDF over a list of errors, restricted to `e > 0`.
pub fn underestimation_cdf(errors: impl IntoIterator<Item = f64>) -> Vec<(f64, f64)> {
    let mut pos: Vec<f64> = errors.into_iter().filter(|e| *e > 0.0).collect();
    pos.sort_by(f64::total_cmp);
    let n = pos.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, e) in pos.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == *e => last.1 = p,
            _ => points.push((*e, p)),
        }
    }
    points
}

pub fn error_cdf(dc: &Datacenter, metric: MetricKind) -> Result<Vec<HostCdf>> {
    if dc.hosts.is_empty() {
        return Err(Error::domain("datacenter has no hosts"));
    }
    Ok(dc
        .hosts
        .iter()
        .map(|h| HostCdf {
            host_id: h.host_id().to_string(),
            points: underestimation_cdf(h.series(metric).iter().map(TraceSample::error)),
        })
        .collect())
}
