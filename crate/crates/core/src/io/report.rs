//! Flat metric tables: long-format per-run rows, seed aggregates with
//! bootstrap intervals, class-wise breakdowns and paired differences.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bootstrap_ci, mean_and_std, EpochReport};
use crate::rng::{Purpose, StreamKey};

pub const METRICS_FILE: &str = "metrics.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const CLASSWISE_FILE: &str = "classwise.csv";
pub const PAIRED_FILE: &str = "paired.csv";

/// Scope of whole-cohort metrics; otherwise the scope is a class id.
pub const ALL_SCOPE: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub setting: String,
    pub seed: u64,
    pub epoch: usize,
    pub scope: String,
    pub metric: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 2000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub setting: String,
    pub epoch: usize,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClasswiseRow {
    pub setting: String,
    pub epoch: usize,
    pub class_id: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub setting: String,
    pub reference: String,
    pub epoch: usize,
    pub metric: String,
    pub n_pairs: usize,
    pub mean_delta: f64,
    pub std_delta: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

/// Flattens one run's epoch reports into long-format rows.
pub fn metric_rows(setting: &str, seed: u64, reports: &[EpochReport]) -> Vec<MetricRow> {
    let mut out = Vec::new();
    let row = |epoch, scope: &str, metric: String, value| MetricRow {
        setting: setting.to_string(),
        seed,
        epoch,
        scope: scope.to_string(),
        metric,
        value,
    };
    for r in reports {
        for (metric, value) in r.scalars() {
            out.push(row(r.epoch, ALL_SCOPE, metric, value));
        }
        for (class, m) in &r.per_class {
            out.push(row(r.epoch, &class.0, "spearman".into(), m.spearman));
            out.push(row(r.epoch, &class.0, "dpae".into(), m.dpae));
            for (k, v) in &m.acc_at_k {
                out.push(row(r.epoch, &class.0, format!("acc_at_{k}"), Some(*v)));
            }
        }
    }
    out
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

fn interval(values: &[f64], boot: &BootstrapConfig, epoch: usize, slot: usize) -> (Option<f64>, Option<f64>) {
    if values.len() < 2 {
        return (None, None);
    }
    let mut rng = StreamKey::new(Purpose::Bootstrap)
        .epoch(epoch)
        .extra(slot as u64)
        .stream(boot.seed);
    match bootstrap_ci(values, boot.level, boot.resamples, &mut rng) {
        Ok(ci) => (Some(ci.lo), Some(ci.hi)),
        Err(_) => (None, None),
    }
}

/// Mean, std and bootstrap interval over seeds of every whole-cohort
/// metric, per (setting, epoch, metric).
pub fn aggregate(rows: &[MetricRow], boot: &BootstrapConfig) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(&str, usize, &str), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.scope == ALL_SCOPE) {
        let slot = groups.entry((&r.setting, r.epoch, &r.metric)).or_default();
        if let Some(v) = r.value {
            slot.push(v);
        }
    }
    groups
        .into_iter()
        .enumerate()
        .filter(|(_, (_, v))| !v.is_empty())
        .map(|(slot, ((setting, epoch, metric), values))| {
            let (mean, std) = mean_and_std(&values);
            let (ci_lo, ci_hi) = interval(&values, boot, epoch, slot);
            AggregateRow {
                setting: setting.to_string(),
                epoch,
                metric: metric.to_string(),
                n: values.len(),
                mean,
                std,
                ci_lo,
                ci_hi,
            }
        })
        .collect()
}

pub fn classwise(rows: &[MetricRow]) -> Vec<ClasswiseRow> {
    let mut groups: BTreeMap<(&str, usize, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.scope != ALL_SCOPE) {
        let slot = groups.entry((&r.setting, r.epoch, &r.scope, &r.metric)).or_default();
        if let Some(v) = r.value {
            slot.push(v);
        }
    }
    groups
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|((setting, epoch, class_id, metric), values)| {
            let (mean, std) = mean_and_std(&values);
            ClasswiseRow {
                setting: setting.to_string(),
                epoch,
                class_id: class_id.to_string(),
                metric: metric.to_string(),
                n: values.len(),
                mean,
                std,
            }
        })
        .collect()
}

/// Per-metric differences `rows - reference` over seeds present in both,
/// with a bootstrap interval of the mean difference.
pub fn paired(rows: &[MetricRow], reference: &[MetricRow], boot: &BootstrapConfig) -> Result<Vec<PairedRow>> {
    let setting = single_setting(rows)?;
    let reference_name = single_setting(reference)?;
    let index: BTreeMap<(u64, usize, &str), f64> = reference
        .iter()
        .filter(|r| r.scope == ALL_SCOPE)
        .filter_map(|r| r.value.map(|v| ((r.seed, r.epoch, r.metric.as_str()), v)))
        .collect();
    let mut groups: BTreeMap<(usize, &str), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.scope == ALL_SCOPE) {
        if let (Some(v), Some(base)) = (r.value, index.get(&(r.seed, r.epoch, r.metric.as_str()))) {
            groups.entry((r.epoch, &r.metric)).or_default().push(v - base);
        }
    }
    if groups.is_empty() {
        return Err(Error::validation(format!(
            "no shared seeds between {setting} and {reference_name}"
        )));
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(slot, ((epoch, metric), deltas))| {
            let (mean_delta, std_delta) = mean_and_std(&deltas);
            let (ci_lo, ci_hi) = interval(&deltas, boot, epoch, slot);
            PairedRow {
                setting: setting.clone(),
                reference: reference_name.clone(),
                epoch,
                metric: metric.to_string(),
                n_pairs: deltas.len(),
                mean_delta,
                std_delta,
                ci_lo,
                ci_hi,
            }
        })
        .collect())
}

fn single_setting(rows: &[MetricRow]) -> Result<String> {
    let mut names = rows.iter().map(|r| r.setting.as_str());
    let first = names.next().ok_or_else(|| Error::validation("metric table is empty"))?;
    if names.any(|n| n != first) {
        return Err(Error::validation("metric table mixes several settings"));
    }
    Ok(first.to_string())
}
