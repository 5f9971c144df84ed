//! Tidy CSV rows.
//!
//! Columns: `channel, strategy, n_users, gamma, metric, value, ci_halfwidth,
//! seed, slots, reps`. Throughputs are in packets/slot, delays in slots and
//! queue sizes in packets. Undefined or low-confidence values are left empty.

use std::io::Write;

use relaynet_core::sim::{MetricsReport, ReportMeta};
use relaynet_core::{Estimate, StabilityVerdict};
use serde::Serialize;

pub const HEADER: [&str; 10] = [
    "channel",
    "strategy",
    "n_users",
    "gamma",
    "metric",
    "value",
    "ci_halfwidth",
    "seed",
    "slots",
    "reps",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub channel: String,
    pub strategy: String,
    pub n_users: usize,
    pub gamma: Option<f64>,
    pub metric: String,
    pub value: Option<String>,
    pub ci_halfwidth: Option<f64>,
    pub seed: Option<u64>,
    pub slots: Option<u64>,
    pub reps: Option<u32>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl Row {
    /// Row for an analytical value (no seed or horizon).
    pub fn exact(channel: &str, strategy: &str, n_users: usize, metric: impl Into<String>, value: f64) -> Self {
        Row {
            channel: channel.to_string(),
            strategy: strategy.to_string(),
            n_users,
            gamma: None,
            metric: metric.into(),
            value: finite(value).map(|v| v.to_string()),
            ci_halfwidth: None,
            seed: None,
            slots: None,
            reps: None,
        }
    }

    fn simulated(meta: &ReportMeta, metric: impl Into<String>, value: Option<String>, ci: Option<f64>) -> Self {
        Row {
            channel: meta.channel.to_string(),
            strategy: meta.strategy.name().to_string(),
            n_users: meta.n_users,
            gamma: meta.gamma,
            metric: metric.into(),
            value,
            ci_halfwidth: ci,
            seed: Some(meta.seed),
            slots: Some(meta.slots),
            reps: Some(meta.reps),
        }
    }

    fn estimate(meta: &ReportMeta, metric: impl Into<String>, est: &Estimate) -> Self {
        let value = finite(est.mean).map(|v| v.to_string());
        let ci = if value.is_some() { finite(est.ci_halfwidth) } else { None };
        Row::simulated(meta, metric, value, ci)
    }
}

fn verdict_name(v: StabilityVerdict) -> &'static str {
    match v {
        StabilityVerdict::Stable => "stable",
        StabilityVerdict::Unstable => "unstable",
        StabilityVerdict::Inconclusive => "inconclusive",
    }
}

/// Relay names in metric columns.
pub const RELAY_NAMES: [&str; 2] = ["r1", "r2"];

/// Every metric of a report, one row each.
pub fn report_rows(report: &MetricsReport) -> Vec<Row> {
    let m = &report.meta;
    let mut rows = Vec::new();
    for (i, est) in report.throughput_per_user.iter().enumerate() {
        rows.push(Row::estimate(m, format!("throughput_user_{}", i), est));
    }
    rows.push(Row::estimate(m, "throughput_per_user", &report.mean_user_throughput()));
    rows.push(Row::estimate(m, "aggregate_throughput", &report.aggregate_throughput));
    match &report.mean_delay {
        Some(est) => rows.push(Row::estimate(m, "mean_delay", est)),
        None => rows.push(Row::simulated(m, "mean_delay", None, None)),
    }
    rows.push(Row::simulated(m, "delay_samples", Some(report.delay_samples.to_string()), None));
    for (j, name) in RELAY_NAMES.iter().enumerate() {
        rows.push(Row::estimate(m, format!("mean_queue_{}", name), &report.mean_queue[j]));
        rows.push(Row::estimate(m, format!("lambda_{}", name), &report.empirical_lambda[j]));
        rows.push(Row::estimate(m, format!("mu_{}", name), &report.empirical_mu[j]));
        rows.push(Row::estimate(m, format!("p_empty_{}", name), &report.empirical_p_empty[j]));
        rows.push(Row::simulated(
            m,
            format!("stability_{}", name),
            Some(verdict_name(report.stability_verdict[j]).to_string()),
            None,
        ));
    }
    rows
}

/// Writes rows with the header, even when `rows` is empty.
pub fn write_rows<W: Write>(out: W, rows: &[Row]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
