//! Small dense feed-forward networks with hand-written backpropagation and
//! an Adam optimizer. Everything is `f64` and single-sample; batches are
//! loops that accumulate into a [`Gradients`] buffer.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    // Subgradient of relu at 0 is taken as 0.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::domain(format!("unknown activation `{other}`"))),
        }
    }
}

/// One fully connected layer. `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Uniform `±1/sqrt(fan_in)` for weights and biases.
    pub fn random(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || rng.random_range(-bound..bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        DenseLayer {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        }
    }

    fn pre_activation(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
            out.push(row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
}

/// Intermediate values of one forward pass, needed by [`DenseNet::backward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    /// `inputs[k]` is the input to layer `k`; the final entry is the output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter-shaped buffer: gradients, or Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|g| *g *= factor);
    }

    pub fn fill_zero(&mut self) {
        self.values_mut().for_each(|g| *g = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|g| g.is_finite())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    fn same_shape(&self, net: &DenseNet) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CopyMode {
    Hard,
    /// `target <- tau * source + (1 - tau) * target`
    Soft(f64),
}

impl DenseNet {
    /// Random network with layer sizes `dims[0] -> dims[1] -> ...`.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::domain("need one activation per layer and at least one layer"));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &a)| DenseLayer::random(d[0], d[1], a, rng))
            .collect();
        DenseNet::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::domain("network needs at least one layer"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(Error::domain(format!("layer {k} has a zero dimension")));
            }
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::domain(format!("layer {k} parameter shape mismatch")));
            }
            if !l.weights.iter().chain(&l.bias).all(|v| v.is_finite()) {
                return Err(Error::domain(format!("layer {k} has non-finite parameters")));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::domain(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].outputs,
                    k + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(DenseNet { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// `(inputs, outputs, activation)` per layer.
    pub fn shape(&self) -> Vec<(usize, usize, Activation)> {
        self.layers
            .iter()
            .map(|l| (l.inputs, l.outputs, l.activation))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Mutable access to every parameter in flattened order (weights then
    /// bias, layer by layer). Used by finite-difference checks.
    pub fn param_mut(&mut self, index: usize) -> Option<&mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
            .nth(index)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::domain(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut pre = Vec::new();
        for l in &self.layers {
            l.pre_activation(&x, &mut pre);
            x.clear();
            x.extend(pre.iter().map(|&p| l.activation.apply(p)));
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut trace = ForwardTrace {
            inputs: Vec::with_capacity(self.layers.len() + 1),
            pre: Vec::with_capacity(self.layers.len()),
        };
        trace.inputs.push(input.to_vec());
        for l in &self.layers {
            let mut pre = Vec::with_capacity(l.outputs);
            l.pre_activation(trace.inputs.last().unwrap(), &mut pre);
            trace.inputs.push(pre.iter().map(|&p| l.activation.apply(p)).collect());
            trace.pre.push(pre);
        }
        Ok(trace)
    }

    /// Reverse-mode gradients of `output . upstream`. Parameter gradients
    /// are added into `grads`; the gradient w.r.t. the input is returned.
    pub fn backward_into(&self, trace: &ForwardTrace, upstream: &[f64], grads: &mut Gradients) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::domain(format!(
                "upstream gradient has {} values, network outputs {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if trace.pre.len() != self.layers.len() || !grads.same_shape(self) {
            return Err(Error::domain("trace or gradient buffer does not match network"));
        }
        let mut delta_out = upstream.to_vec();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let delta: Vec<f64> = delta_out
                .iter()
                .zip(&trace.pre[k])
                .map(|(d, &p)| d * l.activation.derivative(p))
                .collect();
            let input = &trace.inputs[k];
            let g = &mut grads.layers[k];
            let mut delta_in = vec![0.0; l.inputs];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = o * l.inputs;
                for i in 0..l.inputs {
                    g.weights[row + i] += d * input[i];
                    delta_in[i] += l.weights[row + i] * d;
                }
            }
            delta_out = delta_in;
        }
        Ok(delta_out)
    }

    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let trace = self.forward_trace(input)?;
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(&trace, upstream, &mut grads)?;
        Ok((grads, input_grad))
    }

    pub fn copy_from(&mut self, source: &DenseNet, mode: CopyMode) -> Result<()> {
        if self.shape() != source.shape() {
            return Err(Error::domain("cannot copy between networks of different shapes"));
        }
        match mode {
            CopyMode::Hard => self.layers.clone_from(&source.layers),
            CopyMode::Soft(tau) => {
                if !(0.0..=1.0).contains(&tau) {
                    return Err(Error::domain("soft update tau must lie in [0,1]"));
                }
                for (t, s) in self.layers.iter_mut().zip(&source.layers) {
                    for (tv, sv) in t
                        .weights
                        .iter_mut()
                        .chain(t.bias.iter_mut())
                        .zip(s.weights.iter().chain(&s.bias))
                    {
                        *tv = tau * sv + (1.0 - tau) * *tv;
                    }
                }
            }
        }
        Ok(())
    }

    /// Text checkpoint: a header line, then per layer a shape line, a
    /// weights line and a bias line. Values use the shortest round-trip
    /// decimal form, so reloading is exact.
    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        writeln!(s, "densenet layers {}", self.layers.len()).unwrap();
        for (k, l) in self.layers.iter().enumerate() {
            writeln!(s, "layer {k} {} {} {}", l.inputs, l.outputs, l.activation.as_str()).unwrap();
            write_values(&mut s, "weights", &l.weights);
            write_values(&mut s, "bias", &l.bias);
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = CheckpointLines::new(text);
        DenseNet::read_checkpoint(&mut lines, "densenet")
    }

    pub(crate) fn read_checkpoint(lines: &mut CheckpointLines<'_>, name: &str) -> Result<Self> {
        let header = lines.expect(name, "densenet")?;
        let count: usize = match header.as_slice() {
            ["layers", n] => n.parse().map_err(|_| Error::checkpoint(name, "bad layer count"))?,
            _ => return Err(Error::checkpoint(name, "malformed header")),
        };
        let mut layers = Vec::with_capacity(count);
        for k in 0..count {
            let section = format!("{name}.layer{k}");
            let shape = lines.expect(&section, "layer")?;
            let (inputs, outputs, activation) = match shape.as_slice() {
                [idx, i, o, a] if idx.parse::<usize>().ok() == Some(k) => {
                    let i = i.parse().map_err(|_| Error::checkpoint(&section, "bad input size"))?;
                    let o = o.parse().map_err(|_| Error::checkpoint(&section, "bad output size"))?;
                    let a = a
                        .parse()
                        .map_err(|e: Error| Error::checkpoint(&section, e.to_string()))?;
                    (i, o, a)
                }
                _ => return Err(Error::checkpoint(&section, "malformed layer line")),
            };
            let weights = lines.values(&format!("{section}.weights"), "weights", inputs * outputs)?;
            let bias = lines.values(&format!("{section}.bias"), "bias", outputs)?;
            layers.push(DenseLayer {
                inputs,
                outputs,
                weights,
                bias,
                activation,
            });
        }
        DenseNet::from_layers(layers).map_err(|e| Error::checkpoint(name, e.to_string()))
    }
}

pub(crate) fn write_values(s: &mut String, key: &str, values: &[f64]) {
    s.push_str(key);
    for v in values {
        write!(s, " {v:?}").unwrap();
    }
    s.push('\n');
}

/// Line cursor over a text checkpoint that reports the section it was
/// reading when something is missing or malformed.
pub(crate) struct CheckpointLines<'a> {
    lines: std::iter::Peekable<std::str::Lines<'a>>,
}

impl<'a> CheckpointLines<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        CheckpointLines {
            lines: text.lines().peekable(),
        }
    }

    /// Next line, which must start with `key`; returns the remaining tokens.
    pub(crate) fn expect(&mut self, section: &str, key: &str) -> Result<Vec<&'a str>> {
        let line = self
            .lines
            .next()
            .ok_or_else(|| Error::checkpoint(section, format!("file ends before `{key}`")))?;
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some(key) {
            return Err(Error::checkpoint(section, format!("expected `{key}` line")));
        }
        Ok(tokens.collect())
    }

    pub(crate) fn values(&mut self, section: &str, key: &str, count: usize) -> Result<Vec<f64>> {
        let tokens = self.expect(section, key)?;
        if tokens.len() != count {
            return Err(Error::checkpoint(
                section,
                format!("expected {count} values, found {}", tokens.len()),
            ));
        }
        tokens
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::checkpoint(section, format!("bad number `{t}`")))
            })
            .collect()
    }

    pub(crate) fn is_done(&mut self) -> bool {
        self.lines.peek().is_none()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Gradients,
    second: Gradients,
}

impl AdamState {
    pub fn new(net: &DenseNet, learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }

    /// Applies one descent step. Non-finite gradients are rejected before
    /// anything is modified.
    pub fn apply(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        if !grads.same_shape(net) || !self.first.same_shape(net) {
            return Err(Error::domain("gradient shape does not match network"));
        }
        if !grads.is_finite() {
            return Err(Error::domain("non-finite gradient rejected"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let params = net
            .layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()));
        for (((p, g), m), v) in params
            .zip(grads.values())
            .zip(self.first.values_mut())
            .zip(self.second.values_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Regression loss used to fit the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mae,
    Mse,
}

impl Loss {
    pub fn value(self, prediction: f64, target: f64) -> f64 {
        let d = prediction - target;
        match self {
            Loss::Mae => d.abs(),
            Loss::Mse => d * d,
        }
    }

    /// Derivative w.r.t. `prediction`; the MAE subgradient at 0 is 0.
    pub fn gradient(self, prediction: f64, target: f64) -> f64 {
        let d = prediction - target;
        match self {
            Loss::Mae => {
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Loss::Mse => 2.0 * d,
        }
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mae" => Ok(Loss::Mae),
            "mse" => Ok(Loss::Mse),
            other => Err(Error::config(format!("unknown loss `{other}`"))),
        }
    }
}
