//! Python bindings: cost model, traces, strategies, the DDPG agent and the
//! scenario pipeline. Reports cross the boundary as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use reclaim_core::cost::CostModel;
use reclaim_core::ddpg::{DdpgAgent, DdpgConfig};
use reclaim_core::nn::Loss;
use reclaim_core::scenario::{self, Scenario};
use reclaim_core::sim::{self, MetricPolicy, SimulationConfig};
use reclaim_core::strategy::StrategySpec;
use reclaim_core::trace::{self, HostSpec, MetricKind, SyntheticConfig};
use reclaim_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn metric(name: &str) -> PyResult<MetricKind> {
    name.parse().map_err(to_py)
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Container pricing and the violation-minute discount tiers.
#[pyclass(name = "CostModel")]
struct PyCostModel {
    inner: CostModel,
}

#[pymethods]
impl PyCostModel {
    #[new]
    #[pyo3(signature = (price_per_hour=0.0317, container_cpu=2.0, container_ram_gb=8.0))]
    fn new(price_per_hour: f64, container_cpu: f64, container_ram_gb: f64) -> PyResult<Self> {
        let inner = CostModel {
            price_per_hour,
            container_cpu,
            container_ram_gb,
            ..CostModel::default()
        };
        inner.validate().map_err(to_py)?;
        Ok(PyCostModel { inner })
    }

    #[getter]
    fn price_per_minute(&self) -> f64 {
        self.inner.price_per_minute()
    }

    fn discount_for(&self, violation_minutes: u32) -> PyResult<f64> {
        self.inner.discount_for(violation_minutes).map_err(to_py)
    }

    fn containers_fitting(&self, cpu_cores: u32, ram_gb: f64, headroom_cpu: f64, headroom_ram: f64) -> PyResult<u32> {
        let spec = HostSpec::new("host", cpu_cores, ram_gb).map_err(to_py)?;
        Ok(self.inner.containers_fitting(&spec, headroom_cpu, headroom_ram))
    }

    /// Returns `(potential, penalty, net)` for one host-day.
    #[pyo3(signature = (containers, violation_minutes, step_minutes=3))]
    fn settle_day(&self, containers: Vec<u32>, violation_minutes: u32, step_minutes: u32) -> PyResult<(f64, f64, f64)> {
        let s = self
            .inner
            .settle_day(&containers, violation_minutes, step_minutes)
            .map_err(to_py)?;
        Ok((s.potential_saving, s.penalty, s.net_saving))
    }
}

/// Usage and prediction series for a set of hosts.
#[pyclass(name = "Datacenter")]
struct PyDatacenter {
    inner: trace::Datacenter,
}

#[pymethods]
impl PyDatacenter {
    /// Synthetic datacenter. Keyword arguments are `SyntheticConfig` fields.
    #[staticmethod]
    #[pyo3(signature = (seed, **kwargs))]
    fn synthetic(seed: u64, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut config = SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        };
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                match key.as_str() {
                    "num_hosts" => config.num_hosts = v.extract()?,
                    "num_days" => config.num_days = v.extract()?,
                    "step_minutes" => config.step_minutes = v.extract()?,
                    "daily_amplitude" => config.daily_amplitude = v.extract()?,
                    "base_load" => config.base_load = v.extract()?,
                    "noise_ar_coeff" => config.noise_ar_coeff = v.extract()?,
                    "noise_sigma" => config.noise_sigma = v.extract()?,
                    "spike_prob_per_step" => config.spike_prob_per_step = v.extract()?,
                    "spike_magnitude" => config.spike_magnitude = v.extract()?,
                    "spike_decay" => config.spike_decay = v.extract()?,
                    "prediction_bias" => config.prediction_bias = v.extract()?,
                    "prediction_noise_sigma" => config.prediction_noise_sigma = v.extract()?,
                    "prediction_window" => config.prediction_window = v.extract()?,
                    "host_noise_spread" => config.host_noise_spread = v.extract()?,
                    "host_cpu_cores" => config.host_cpu_cores = v.extract()?,
                    "host_ram_gb" => config.host_ram_gb = v.extract()?,
                    other => return Err(PyValueError::new_err(format!("unknown synthetic field `{other}`"))),
                }
            }
        }
        let inner = trace::generate_synthetic(&config).map_err(to_py)?;
        Ok(PyDatacenter { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (traces, capacities, step_minutes=3))]
    fn load(traces: PathBuf, capacities: PathBuf, step_minutes: u32) -> PyResult<Self> {
        let caps = trace::load_capacities(capacities).map_err(to_py)?;
        let inner = trace::load_traces(traces, &caps, step_minutes).map_err(to_py)?;
        Ok(PyDatacenter { inner })
    }

    /// Writes `traces.csv` and `capacities.csv` into `directory`.
    fn save(&self, directory: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&directory).map_err(|e| to_py(e.into()))?;
        let mut buf = Vec::new();
        trace::write_traces(&self.inner, &mut buf).map_err(to_py)?;
        std::fs::write(directory.join(scenario::TRACES_FILE), &buf)?;
        buf.clear();
        trace::write_capacities(&self.inner.host_specs(), &mut buf).map_err(to_py)?;
        std::fs::write(directory.join(scenario::CAPACITIES_FILE), &buf)?;
        Ok(())
    }

    #[getter]
    fn host_ids(&self) -> Vec<String> {
        self.inner.hosts.iter().map(|h| h.host_id().to_string()).collect()
    }

    #[getter]
    fn num_days(&self) -> usize {
        self.inner.num_days()
    }

    #[getter]
    fn steps_per_day(&self) -> usize {
        self.inner.steps_per_day()
    }

    fn usage(&self, host: usize, metric_name: &str) -> PyResult<Vec<f64>> {
        Ok(self.series(host, metric_name)?.iter().map(|s| s.usage).collect())
    }

    fn prediction(&self, host: usize, metric_name: &str) -> PyResult<Vec<f64>> {
        Ok(self.series(host, metric_name)?.iter().map(|s| s.prediction).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.hosts.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Datacenter(name={:?}, hosts={}, days={})",
            self.inner.name,
            self.inner.hosts.len(),
            self.inner.num_days()
        )
    }
}

impl PyDatacenter {
    fn series(&self, host: usize, metric_name: &str) -> PyResult<&[trace::TraceSample]> {
        let h = self
            .inner
            .hosts
            .get(host)
            .ok_or_else(|| PyValueError::new_err(format!("no host at index {host}")))?;
        Ok(h.series(metric(metric_name)?))
    }
}

/// DDPG margin controller.
#[pyclass(name = "DdpgAgent")]
struct PyDdpgAgent {
    inner: DdpgAgent,
}

#[pymethods]
impl PyDdpgAgent {
    #[new]
    #[pyo3(signature = (seed, reward_scale=1.0, steps_per_day=480, w_state=10, warmup_steps=1000, batch_size=128, critic_loss="mae"))]
    fn new(
        seed: u64,
        reward_scale: f64,
        steps_per_day: usize,
        w_state: usize,
        warmup_steps: usize,
        batch_size: usize,
        critic_loss: &str,
    ) -> PyResult<Self> {
        let config = DdpgConfig {
            w_state,
            warmup_steps,
            batch_size,
            critic_loss: critic_loss.parse::<Loss>().map_err(to_py)?,
            ..DdpgConfig::default()
        };
        let inner = DdpgAgent::new(config, steps_per_day, reward_scale, seed).map_err(to_py)?;
        Ok(PyDdpgAgent { inner })
    }

    #[staticmethod]
    fn from_checkpoint(text: &str) -> PyResult<Self> {
        Ok(PyDdpgAgent {
            inner: DdpgAgent::from_checkpoint(text).map_err(to_py)?,
        })
    }

    fn to_checkpoint(&self) -> String {
        self.inner.to_checkpoint()
    }

    #[pyo3(signature = (state, explore=false))]
    fn act(&mut self, state: Vec<f64>, explore: bool) -> PyResult<f64> {
        Ok(self.inner.act(&state, explore).map_err(to_py)?.value())
    }

    fn q_value(&self, state: Vec<f64>, action: f64) -> PyResult<f64> {
        self.inner.q_value(&state, action).map_err(to_py)
    }

    /// Stores a transition and runs an update when the warmup gate is open.
    /// Returns the critic loss of that update, if any.
    fn store_and_learn(&mut self, state: Vec<f64>, action: f64, reward: f64, next_state: Vec<f64>) -> Option<f64> {
        self.inner
            .store_and_learn(reclaim_core::Transition {
                state,
                action,
                reward,
                next_state,
            })
            .critic_loss
    }

    #[getter]
    fn updates(&self) -> u64 {
        self.inner.updates()
    }

    #[getter]
    fn replay_len(&self) -> usize {
        self.inner.replay().len()
    }
}

fn heuristic(spec: &str, seed: u64) -> PyResult<MetricPolicy> {
    let spec: StrategySpec = spec.parse().map_err(to_py)?;
    match spec.build(seed, 10).map_err(to_py)? {
        Some(s) => Ok(MetricPolicy::Strategy(s)),
        None => Err(PyValueError::new_err(
            "`releaser` needs an agent; pass cpu_agent/ram_agent",
        )),
    }
}

fn policy(spec: &str, agent: Option<&PyDdpgAgent>, seed: u64) -> PyResult<MetricPolicy> {
    match agent {
        Some(a) => Ok(MetricPolicy::Agents(vec![a.inner.clone()])),
        None => heuristic(spec, seed),
    }
}

/// Evaluates one strategy pair over `[first_day, end_day)` and returns the
/// report as a dict. A metric given an agent uses it greedily.
#[pyfunction]
#[pyo3(signature = (dc, cpu="fixed:0.05", ram="fixed:0.05", first_day=0, end_day=None, cost=None, cpu_agent=None, ram_agent=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    dc: &PyDatacenter,
    cpu: &str,
    ram: &str,
    first_day: usize,
    end_day: Option<usize>,
    cost: Option<&PyCostModel>,
    cpu_agent: Option<&PyDdpgAgent>,
    ram_agent: Option<&PyDdpgAgent>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cost = cost.map(|c| c.inner.clone()).unwrap_or_default();
    let mut config = SimulationConfig::evaluate(first_day..end_day.unwrap_or(dc.inner.num_days()));
    config.step_minutes = dc.inner.step_minutes;
    if let Some(a) = cpu_agent.or(ram_agent) {
        config.w_state = a.inner.config().w_state;
    }
    let mut policies = [
        policy(cpu, cpu_agent, reclaim_core::seed::derive(seed, "random-strategy/cpu"))?,
        policy(ram, ram_agent, reclaim_core::seed::derive(seed, "random-strategy/ram"))?,
    ];
    let out = sim::run(&dc.inner, &cost, &config, &mut policies).map_err(to_py)?;
    json_to_py(py, &out.report.to_json().map_err(to_py)?)
}

#[pyfunction]
fn train_test_split(num_days: usize, train_fraction: f64) -> PyResult<((usize, usize), (usize, usize))> {
    let (a, b) = sim::train_test_split(num_days, train_fraction).map_err(to_py)?;
    Ok(((a.start, a.end), (b.start, b.end)))
}

/// A scenario file with its generate / train / evaluate commands.
#[pyclass(name = "Scenario")]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (path, output_dir=None))]
    fn new(path: PathBuf, output_dir: Option<PathBuf>) -> PyResult<Self> {
        let mut inner = Scenario::load(path).map_err(to_py)?;
        if let Some(dir) = output_dir {
            inner = inner.with_output_dir(dir);
        }
        Ok(PyScenario { inner })
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.output_dir.clone()
    }

    fn datacenter(&self) -> PyResult<PyDatacenter> {
        Ok(PyDatacenter {
            inner: self.inner.datacenter().map_err(to_py)?,
        })
    }

    /// Writes traces; returns `{metric: (mean_usage, underestimation_rate)}`.
    fn generate(&self, py: Python<'_>) -> PyResult<Vec<(String, f64, f64)>> {
        let s = py.detach(|| scenario::generate(&self.inner)).map_err(to_py)?;
        Ok(s.metrics
            .iter()
            .map(|m| (m.metric.to_string(), m.mean_usage, m.underestimation_rate))
            .collect())
    }

    /// Trains and writes checkpoints; returns their paths.
    fn train(&self, py: Python<'_>) -> PyResult<Vec<PathBuf>> {
        let out = py.detach(|| scenario::train(&self.inner)).map_err(to_py)?;
        Ok(out.checkpoints)
    }

    /// Evaluates all entries; returns one dict per comparison row.
    fn evaluate<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let cmp = py.detach(|| scenario::evaluate(&self.inner)).map_err(to_py)?;
        cmp.rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("strategy", &r.strategy)?;
                d.set_item("potential", r.potential_saving)?;
                d.set_item("penalty", r.penalty)?;
                d.set_item("net", r.net_saving)?;
                d.set_item("net_ratio", r.net_ratio)?;
                d.set_item("penalty_ratio", r.penalty_ratio)?;
                Ok(d)
            })
            .collect()
    }
}

#[pymodule]
fn reclaim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCostModel>()?;
    m.add_class::<PyDatacenter>()?;
    m.add_class::<PyDdpgAgent>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(train_test_split, m)?)?;
    Ok(())
}
