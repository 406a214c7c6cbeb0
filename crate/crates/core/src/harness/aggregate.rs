use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::experiment::{load_manifest, RunStatus};
use super::HarnessError;
use crate::rl::{read_metrics_csv, MetricsRecord};

/// Metrics summarized per sweep value, in output order. `reward_sum` is
/// `reward_dl_sum + reward_ul_sum`; `depleted` averages to a rate.
pub const SUMMARY_METRICS: [&str; 13] = [
    "dl_delay_mean",
    "ul_delay_mean",
    "earning_min",
    "earning_mean",
    "battery_pct_max",
    "battery_pct_mean",
    "dl_utility",
    "ul_utility",
    "reward_dl_sum",
    "reward_ul_sum",
    "reward_sum",
    "steps",
    "depleted",
];

pub fn summary_metric(r: &MetricsRecord, name: &str) -> Option<f64> {
    Some(match name {
        "dl_delay_mean" => r.dl_delay_mean,
        "ul_delay_mean" => r.ul_delay_mean,
        "earning_min" => r.earning_min,
        "earning_mean" => r.earning_mean,
        "battery_pct_max" => r.battery_pct_max,
        "battery_pct_mean" => r.battery_pct_mean,
        "dl_utility" => r.dl_utility,
        "ul_utility" => r.ul_utility,
        "reward_dl_sum" => r.reward_dl_sum,
        "reward_ul_sum" => r.reward_ul_sum,
        "reward_sum" => r.reward_sum(),
        "steps" => r.steps as f64,
        "depleted" => f64::from(u8::from(r.depleted)),
        _ => return None,
    })
}

/// The last `ceil(fraction * n)` records, at least one when any exist.
pub fn tail(records: &[MetricsRecord], fraction: f64) -> &[MetricsRecord] {
    let n = records.len();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1.min(n), n);
    &records[n - k..]
}

pub fn tail_mean(records: &[MetricsRecord], fraction: f64, f: impl Fn(&MetricsRecord) -> f64) -> Option<f64> {
    let t = tail(records, fraction);
    (!t.is_empty()).then(|| t.iter().map(f).sum::<f64>() / t.len() as f64)
}

/// Episodes of one run; `records` is `None` when the run is missing or aborted.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub id: String,
    pub seed: u64,
    pub sweep_value: Option<f64>,
    pub records: Option<Vec<MetricsRecord>>,
}

/// Mean of per-seed tail means, with the min/max band across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub metric: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_value: Option<f64>,
    pub bands: Vec<Band>,
}

impl SweepRow {
    pub fn band(&self, metric: &str) -> Option<&Band> {
        self.bands.iter().find(|b| b.metric == metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub tail_fraction: f64,
    pub rows: Vec<SweepRow>,
    /// Ids of runs without usable metrics.
    pub missing: Vec<String>,
    pub partial: bool,
}

impl SweepSummary {
    /// `(sweep value, mean)` for every row with a sweep value.
    pub fn series(&self, metric: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| Some((r.sweep_value?, r.band(metric)?.mean)))
            .collect()
    }

    /// Long format: `sweep_value,metric,mean,min,max,seeds`.
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sweep_value", "metric", "mean", "min", "max", "seeds"])?;
        for row in &self.rows {
            let value = row.sweep_value.map(|v| v.to_string()).unwrap_or_default();
            for b in &row.bands {
                w.write_record([
                    value.clone(),
                    b.metric.clone(),
                    b.mean.to_string(),
                    b.min.to_string(),
                    b.max.to_string(),
                    b.seeds.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn same_value(a: Option<f64>, b: Option<f64>) -> bool {
    a.map(f64::to_bits) == b.map(f64::to_bits)
}

/// Groups runs by sweep value (first-seen order) and summarizes the tail of
/// every run in [`SUMMARY_METRICS`].
pub fn aggregate_sweep(runs: &[RunMetrics], tail_fraction: f64) -> Result<SweepSummary, HarnessError> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(HarnessError::Spec(format!("tail fraction {tail_fraction} outside (0,1]")));
    }
    let mut values: Vec<Option<f64>> = Vec::new();
    for r in runs {
        if !values.iter().any(|&v| same_value(v, r.sweep_value)) {
            values.push(r.sweep_value);
        }
    }
    let missing: Vec<String> = runs
        .iter()
        .filter(|r| r.records.as_ref().is_none_or(|x| x.is_empty()))
        .map(|r| r.id.clone())
        .collect();
    let mut rows = Vec::new();
    for value in values {
        let present: Vec<&[MetricsRecord]> = runs
            .iter()
            .filter(|r| same_value(r.sweep_value, value))
            .filter_map(|r| r.records.as_deref())
            .filter(|x| !x.is_empty())
            .collect();
        if present.is_empty() {
            continue;
        }
        let bands = SUMMARY_METRICS
            .iter()
            .map(|&metric| {
                let per_seed: Vec<f64> = present
                    .iter()
                    .map(|recs| tail_mean(recs, tail_fraction, |r| summary_metric(r, metric).unwrap()).unwrap())
                    .collect();
                Band {
                    metric: metric.to_string(),
                    mean: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
                    min: per_seed.iter().copied().fold(f64::INFINITY, f64::min),
                    max: per_seed.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    seeds: per_seed.len(),
                }
            })
            .collect();
        rows.push(SweepRow {
            sweep_value: value,
            bands,
        });
    }
    Ok(SweepSummary {
        tail_fraction,
        partial: !missing.is_empty(),
        rows,
        missing,
    })
}

/// Reads the manifest and metrics of an experiment directory and aggregates.
/// Aborted runs and unreadable CSVs count as missing.
pub fn aggregate_dir(dir: &Path, tail_fraction: Option<f64>) -> Result<SweepSummary, HarnessError> {
    let manifest = load_manifest(dir)?;
    let runs: Vec<RunMetrics> = manifest
        .runs
        .iter()
        .map(|entry| {
            let records = (entry.status == RunStatus::Completed)
                .then(|| std::fs::File::open(dir.join(&entry.files.metrics)).ok())
                .flatten()
                .and_then(|f| read_metrics_csv(std::io::BufReader::new(f)).ok());
            RunMetrics {
                id: entry.id.clone(),
                seed: entry.seed,
                sweep_value: entry.sweep_value,
                records,
            }
        })
        .collect();
    aggregate_sweep(&runs, tail_fraction.unwrap_or(manifest.tail_fraction))
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. `None` when fewer
/// than two points or either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}
