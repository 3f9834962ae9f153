//! Evaluation reports: per host-day ledgers, totals, margin distribution
//! summaries and error CDFs, plus their JSON/CSV renderings.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::DayLedger;
use crate::error::Result;
use crate::trace::{HostCdf, MetricKind};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub potential_saving: f64,
    pub penalty: f64,
    pub net_saving: f64,
}

impl Totals {
    fn add(&mut self, potential: f64, penalty: f64, net: f64) {
        self.potential_saving += potential;
        self.penalty += penalty;
        self.net_saving += net;
    }

    fn rounded(self) -> Self {
        Totals {
            potential_saving: round4(self.potential_saving),
            penalty: round4(self.penalty),
            net_saving: round4(self.net_saving),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostTotals {
    pub host_id: String,
    pub violation_minutes: u64,
    pub totals: Totals,
}

/// Nearest-rank summary of the margins applied to one (host, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSummary {
    pub host_id: String,
    pub metric: MetricKind,
    pub count: usize,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
    /// Values beyond 1.5 IQR from the quartiles, ascending.
    pub outliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSeries {
    pub host_id: String,
    pub metric: MetricKind,
    pub first_step: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCdfs {
    pub metric: MetricKind,
    pub hosts: Vec<HostCdf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub strategy: String,
    pub datacenter: String,
    pub step_minutes: u32,
    pub first_day: usize,
    pub end_day: usize,
    pub totals: Totals,
    pub host_totals: Vec<HostTotals>,
    pub ledgers: Vec<DayLedger>,
    pub margin_summaries: Vec<MarginSummary>,
    pub error_cdfs: Vec<MetricCdfs>,
    #[serde(skip)]
    pub margins: Vec<MarginSeries>,
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p/100 * n)`, with rank clamped to `[1, n]`.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn summarize_margins(host_id: &str, metric: MetricKind, values: &[f64]) -> MarginSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return MarginSummary {
            host_id: host_id.to_string(),
            metric,
            count: 0,
            min: 0.0,
            p25: 0.0,
            median: 0.0,
            p75: 0.0,
            max: 0.0,
            outliers: Vec::new(),
        };
    }
    let p25 = nearest_rank(&sorted, 25.0);
    let p75 = nearest_rank(&sorted, 75.0);
    let iqr = p75 - p25;
    let (lo, hi) = (p25 - 1.5 * iqr, p75 + 1.5 * iqr);
    MarginSummary {
        host_id: host_id.to_string(),
        metric,
        count: sorted.len(),
        min: sorted[0],
        p25,
        median: nearest_rank(&sorted, 50.0),
        p75,
        max: sorted[sorted.len() - 1],
        outliers: sorted.iter().copied().filter(|v| *v < lo || *v > hi).collect(),
    }
}

pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

impl EvaluationReport {
    /// Builds totals from ledgers: host totals sum that host's days in
    /// order, datacenter totals sum host totals in order.
    pub(crate) fn totals_from_ledgers(host_ids: &[String], ledgers: &[DayLedger]) -> (Vec<HostTotals>, Totals) {
        let mut hosts: Vec<HostTotals> = host_ids
            .iter()
            .map(|id| HostTotals {
                host_id: id.clone(),
                violation_minutes: 0,
                totals: Totals::default(),
            })
            .collect();
        for l in ledgers {
            if let Some(h) = hosts.iter_mut().find(|h| h.host_id == l.host_id) {
                h.violation_minutes += l.violation_minutes as u64;
                h.totals.add(l.potential_saving, l.penalty, l.net_saving);
            }
        }
        let mut dc = Totals::default();
        for h in &hosts {
            dc.add(h.totals.potential_saving, h.totals.penalty, h.totals.net_saving);
        }
        (hosts, dc)
    }

    /// Copy with every dollar amount rounded to 4 decimals.
    pub fn rounded(&self) -> Self {
        let mut r = self.clone();
        r.totals = r.totals.rounded();
        for h in &mut r.host_totals {
            h.totals = h.totals.rounded();
        }
        for l in &mut r.ledgers {
            l.potential_saving = round4(l.potential_saving);
            l.penalty = round4(l.penalty);
            l.net_saving = round4(l.net_saving);
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rounded())?)
    }

    pub fn write_ledger_csv(&self, w: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["host", "day", "violation_min", "potential", "penalty", "net"])?;
        for l in &self.ledgers {
            w.write_record(&[
                l.host_id.clone(),
                l.day.to_string(),
                l.violation_minutes.to_string(),
                format!("{:.4}", l.potential_saving),
                format!("{:.4}", l.penalty),
                format!("{:.4}", l.net_saving),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_margins_csv(&self, w: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["host", "metric", "step", "margin"])?;
        for s in &self.margins {
            for (i, m) in s.values.iter().enumerate() {
                w.write_record(&[
                    s.host_id.clone(),
                    s.metric.to_string(),
                    (s.first_step + i).to_string(),
                    format!("{m:?}"),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_cdf_csv(&self, metric: MetricKind, w: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["host", "error", "cumulative_probability"])?;
        if let Some(c) = self.error_cdfs.iter().find(|c| c.metric == metric) {
            for h in &c.hosts {
                for (e, p) in &h.points {
                    w.write_record(&[h.host_id.clone(), format!("{e:?}"), format!("{p:?}")])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.json`, `ledger.csv`, `margins.csv` and one
    /// `cdf_<metric>.csv` per metric into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        crate::fsutil::write_atomic(&dir.join("report.json"), self.to_json()?.as_bytes())?;
        let mut buf = Vec::new();
        self.write_ledger_csv(&mut buf)?;
        crate::fsutil::write_atomic(&dir.join("ledger.csv"), &buf)?;
        buf.clear();
        self.write_margins_csv(&mut buf)?;
        crate::fsutil::write_atomic(&dir.join("margins.csv"), &buf)?;
        for metric in MetricKind::ALL {
            buf.clear();
            self.write_cdf_csv(metric, &mut buf)?;
            crate::fsutil::write_atomic(&dir.join(format!("cdf_{metric}.csv")), &buf)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_small_samples() {
        let xs = [0.01, 0.02, 0.03, 0.04, 0.05];
        assert_eq!(nearest_rank(&xs, 0.0), 0.01);
        assert_eq!(nearest_rank(&xs, 50.0), 0.03);
        assert_eq!(nearest_rank(&xs, 75.0), 0.04);
        assert_eq!(nearest_rank(&xs, 100.0), 0.05);
        assert_eq!(nearest_rank(&[0.2], 75.0), 0.2);
    }

    #[test]
    fn summary_flags_outliers() {
        let mut v = vec![0.05; 20];
        v.push(0.9);
        let s = summarize_margins("h", MetricKind::Cpu, &v);
        assert_eq!(s.median, 0.05);
        assert_eq!(s.outliers, vec![0.9]);
        assert_eq!(s.count, 21);
    }

    #[test]
    fn rounding() {
        assert_eq!(round4(7.60800000001), 7.608);
        assert_eq!(round4(2.71828), 2.7183);
    }
}
