use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{spearman_rho, top_k_overlap};
use crate::domain::{ClassId, Cohort, LatentTruth};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// `None` when the class ranking is degenerate.
    pub spearman: Option<f64>,
    pub dpae: Option<f64>,
    pub acc_at_k: BTreeMap<usize, f64>,
}

/// Metrics for one epoch of one run.
///
/// `dpae`/`spearman` are per-class macro averages over classes with a
/// defined correlation; the `_pooled` variants rank the whole cohort at
/// once. `unc` and `diversity` are absent for methods without beliefs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub dpae: Option<f64>,
    pub spearman: Option<f64>,
    pub dpae_pooled: Option<f64>,
    pub spearman_pooled: Option<f64>,
    pub acc_at_k: BTreeMap<usize, f64>,
    pub unc: Option<f64>,
    pub diversity: Option<f64>,
    pub per_class: BTreeMap<ClassId, ClassMetrics>,
    pub degenerate_flags: Vec<ClassId>,
}

impl EpochReport {
    /// Named scalar metrics in a fixed order, used for flat exports and
    /// paired differencing.
    pub fn scalars(&self) -> Vec<(String, Option<f64>)> {
        let mut out = vec![
            ("dpae".to_string(), self.dpae),
            ("spearman".to_string(), self.spearman),
            ("dpae_pooled".to_string(), self.dpae_pooled),
            ("spearman_pooled".to_string(), self.spearman_pooled),
        ];
        for (k, v) in &self.acc_at_k {
            out.push((format!("acc_at_{k}"), Some(*v)));
        }
        out.push(("unc".to_string(), self.unc));
        out.push(("diversity".to_string(), self.diversity));
        out
    }
}

fn rho_or_none(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    match spearman_rho(x, y) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Shared evaluation path for the engine and every baseline: score a
/// perceived ability vector (roster order) against the epoch's truth.
pub fn evaluate(
    perceived: &[f64],
    truth: &LatentTruth,
    cohort: &Cohort,
    ks: &[usize],
    unc: Option<f64>,
    diversity: Option<f64>,
) -> Result<EpochReport> {
    if perceived.len() != cohort.len() || truth.values.len() != cohort.len() {
        return Err(Error::validation("evaluate: vector length does not match cohort"));
    }
    let mut per_class = BTreeMap::new();
    let mut rho_sum = 0.0;
    let mut rho_count = 0usize;
    let mut acc_sum: BTreeMap<usize, (f64, usize)> = BTreeMap::new();

    for (class, members) in cohort.classes() {
        let degenerate = truth.degenerate_classes.contains(class);
        let p: Vec<f64> = members.iter().map(|&i| perceived[i]).collect();
        let t: Vec<f64> = members.iter().map(|&i| truth.values[i]).collect();
        let spearman = if degenerate { None } else { rho_or_none(&p, &t)? };
        if let Some(r) = spearman {
            rho_sum += r;
            rho_count += 1;
        }
        let mut acc = BTreeMap::new();
        if !degenerate {
            // classes smaller than k have no top-k and are skipped for that k
            for &k in ks.iter().filter(|&&k| k <= members.len()) {
                let v = top_k_overlap(perceived, &truth.values, members, k)?;
                acc.insert(k, v);
                let slot = acc_sum.entry(k).or_insert((0.0, 0));
                slot.0 += v;
                slot.1 += 1;
            }
        }
        per_class.insert(
            class.clone(),
            ClassMetrics {
                spearman,
                dpae: spearman.map(|r| 1.0 - r),
                acc_at_k: acc,
            },
        );
    }

    let spearman = (rho_count > 0).then(|| rho_sum / rho_count as f64);
    let spearman_pooled = rho_or_none(perceived, &truth.values)?;
    let acc_at_k = acc_sum
        .into_iter()
        .map(|(k, (sum, count))| (k, sum / count as f64))
        .collect();

    Ok(EpochReport {
        epoch: truth.epoch,
        dpae: spearman.map(|r| 1.0 - r),
        spearman,
        dpae_pooled: spearman_pooled.map(|r| 1.0 - r),
        spearman_pooled,
        acc_at_k,
        unc,
        diversity,
        per_class,
        degenerate_flags: truth.degenerate_classes.clone(),
    })
}
