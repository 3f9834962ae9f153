//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code it checks beyond reading public data.

#![allow(dead_code)]

use std::collections::BTreeMap;

use reclaim_core::nn::{Activation, DenseNet};

/// Central finite differences of `output . upstream` for every parameter,
/// compared with `backward`. Returns the worst relative error.
pub fn gradient_check(net: &DenseNet, input: &[f64], upstream: &[f64], h: f64) -> f64 {
    let (grads, _) = net.backward(input, upstream).unwrap();
    let analytic = grads.flatten();
    let objective = |n: &DenseNet| -> f64 { n.forward(input).unwrap().iter().zip(upstream).map(|(o, u)| o * u).sum() };
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for i in 0..net.param_count() {
        let orig = *probe.param_mut(i).unwrap();
        *probe.param_mut(i).unwrap() = orig + h;
        let plus = objective(&probe);
        *probe.param_mut(i).unwrap() = orig - h;
        let minus = objective(&probe);
        *probe.param_mut(i).unwrap() = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Forward pass written out long-hand from the layer tables.
pub fn straight_line_forward(net: &DenseNet, input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    for layer in net.layers() {
        let mut y = vec![0.0; layer.outputs];
        for o in 0..layer.outputs {
            let mut acc = layer.bias[o];
            for i in 0..layer.inputs {
                acc += layer.weights[o * layer.inputs + i] * x[i];
            }
            y[o] = match layer.activation {
                Activation::Relu => {
                    if acc > 0.0 {
                        acc
                    } else {
                        0.0
                    }
                }
                Activation::Linear => acc,
            };
        }
        x = y;
    }
    x
}

/// Default discount tiers, written as a chain of comparisons.
pub fn discount_oracle(minutes: u32) -> f64 {
    if minutes <= 15 {
        0.0
    } else if minutes <= 120 {
        0.10
    } else if minutes <= 720 {
        0.15
    } else {
        0.30
    }
}

pub const PPM: f64 = 0.0317 / 60.0;

/// Walks a day step by step: `(potential, penalty, net, violation_minutes)`.
pub fn walk_day(containers: &[u32], violated: &[bool], ts: u32) -> (f64, f64, f64, u32) {
    let mut potential = 0.0;
    let mut minutes = 0u32;
    for (c, v) in containers.iter().zip(violated) {
        potential += *c as f64 * PPM * ts as f64;
        if *v {
            minutes += ts;
        }
    }
    let penalty = potential * discount_oracle(minutes);
    (potential, penalty, potential - penalty, minutes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleDay {
    pub host: String,
    pub day: usize,
    pub violation_minutes: u32,
    pub potential: f64,
    pub penalty: f64,
    pub net: f64,
}

/// Recomputes a fixed-margin evaluation straight from trace and capacity
/// CSV text. Hosts are processed in id order, days in order.
pub fn fixed_margin_oracle(
    traces_csv: &str,
    capacities_csv: &str,
    margins: (f64, f64),
    days: std::ops::Range<usize>,
    ts: u32,
) -> Vec<OracleDay> {
    let mut caps: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for line in capacities_csv.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        caps.insert(f[0].to_string(), (f[1].parse().unwrap(), f[2].parse().unwrap()));
    }
    // (host, metric) -> step -> (usage, prediction)
    let mut rows: BTreeMap<(String, String), BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
    for line in traces_csv.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        rows.entry((f[0].to_string(), f[1].to_string()))
            .or_default()
            .insert(f[2].parse().unwrap(), (f[3].parse().unwrap(), f[4].parse().unwrap()));
    }
    let spd = (1440 / ts) as usize;
    let mut out = Vec::new();
    for (host, (cores, ram)) in &caps {
        let cpu = &rows[&(host.clone(), "cpu".to_string())];
        let mem = &rows[&(host.clone(), "ram".to_string())];
        for day in days.clone() {
            let mut containers = Vec::new();
            let mut violated = Vec::new();
            for step in day * spd..(day + 1) * spd {
                let (uc, pc) = cpu[&step];
                let (ur, pr) = mem[&step];
                let hc = f64::max(0.0, 1.0 - pc - margins.0);
                let hr = f64::max(0.0, 1.0 - pr - margins.1);
                let by_cpu = (hc * cores / 2.0).floor();
                let by_ram = (hr * ram / 8.0).floor();
                containers.push(by_cpu.min(by_ram) as u32);
                violated.push(uc > pc + margins.0 || ur > pr + margins.1);
            }
            let (potential, penalty, net, minutes) = walk_day(&containers, &violated, ts);
            out.push(OracleDay {
                host: host.clone(),
                day,
                violation_minutes: minutes,
                potential,
                penalty,
                net,
            });
        }
    }
    out
}

/// Nearest-rank percentile by explicit counting.
pub fn naive_percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let mut rank = 1;
    while (rank as f64) < p / 100.0 * n as f64 {
        rank += 1;
    }
    v[rank.min(n) - 1]
}
