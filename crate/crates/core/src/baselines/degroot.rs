use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Cohort, LatentTruth};
use crate::error::{Error, Result};
use crate::graph::EdgeMap;
use crate::metrics::{class_diversity, evaluate, opinion_diversity};

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    /// Ties weigh 1, the self-loop weighs `self_weight`, then rows are
    /// normalised.
    #[default]
    RowNormalizedAdjacencyWithSelfLoop,
    /// The diagonal is exactly `self_weight` and the remainder is split
    /// evenly over ties (a lazy walk). Isolated students keep weight 1.
    LazySelfLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    #[default]
    UnionOfReportedTies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeGrootConfig {
    pub steps: usize,
    pub weight_policy: WeightPolicy,
    pub graph_source: GraphSource,
    /// Self-loop weight, unnormalised or final depending on the policy.
    pub self_weight: f64,
}

impl Default for DeGrootConfig {
    fn default() -> Self {
        Self {
            steps: 30,
            weight_policy: WeightPolicy::default(),
            graph_source: GraphSource::default(),
            self_weight: 0.5,
        }
    }
}

/// Sparse row-stochastic matrix; every row has a positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl WeightMatrix {
    /// Validates an arbitrary sparse matrix.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            let mut diag = 0.0;
            for &(j, w) in row {
                if j >= n || !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::validation(format!("weight row {i}: bad entry ({j}, {w})")));
                }
                if j == i {
                    diag += w;
                }
                sum += w;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::validation(format!("weight row {i} sums to {sum}")));
            }
            if diag <= 0.0 {
                return Err(Error::validation(format!("weight row {i} has no self-loop")));
            }
        }
        Ok(Self { rows })
    }

    /// Adjacency of `edges` over the cohort roster plus a self-loop,
    /// row-stochastic under `policy`. Edges touching unrostered students
    /// are ignored.
    pub fn from_ties(cohort: &Cohort, edges: &EdgeMap, policy: WeightPolicy, self_weight: f64) -> Result<Self> {
        let lazy = policy == WeightPolicy::LazySelfLoop;
        if !(self_weight > 0.0 && self_weight.is_finite()) || (lazy && self_weight > 1.0) {
            return Err(Error::Config(format!(
                "self_weight out of range for {policy:?}: {self_weight}"
            )));
        }
        let n = cohort.len();
        let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges.keys() {
            if u == v {
                continue;
            }
            if let (Some(i), Some(j)) = (cohort.index_of(u), cohort.index_of(v)) {
                neighbours[i].push(j);
            }
        }
        let rows = neighbours
            .into_iter()
            .enumerate()
            .map(|(i, nb)| {
                if nb.is_empty() {
                    return vec![(i, 1.0)];
                }
                let (own, each) = if lazy {
                    (self_weight, (1.0 - self_weight) / nb.len() as f64)
                } else {
                    let total = self_weight + nb.len() as f64;
                    (self_weight / total, 1.0 / total)
                };
                let mut row = vec![(i, own)];
                row.extend(nb.into_iter().map(|j| (j, each)));
                row
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// One DeGroot step: `out[j] = sum_l W[j][l] * x[l]` for every target.
    pub fn step(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let targets = x.first().map_or(0, Vec::len);
        self.rows
            .par_iter()
            .map(|row| {
                let mut out = vec![0.0; targets];
                for &(l, w) in row {
                    for (o, v) in out.iter_mut().zip(&x[l]) {
                        *o += w * v;
                    }
                }
                out
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeGrootOutcome {
    pub opinions: Vec<Vec<f64>>,
    /// Diversity before the first step and after each step.
    pub diversity_trace: Vec<f64>,
}

/// Each observer starts knowing only its own ability.
pub fn degroot_initial_opinions(abilities: &[f64]) -> Vec<Vec<f64>> {
    let n = abilities.len();
    (0..n)
        .map(|j| {
            let mut row = vec![0.0; n];
            row[j] = abilities[j];
            row
        })
        .collect()
}

/// Applies `steps` DeGroot updates to `initial` (observers x targets).
pub fn degroot_run(w: &WeightMatrix, initial: Vec<Vec<f64>>, steps: usize) -> Result<DeGrootOutcome> {
    if initial.len() != w.n() {
        return Err(Error::validation(format!(
            "degroot: {} observers but W is {}x{}",
            initial.len(),
            w.n(),
            w.n()
        )));
    }
    let mut x = initial;
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(opinion_diversity(&x));
    for _ in 0..steps {
        x = w.step(&x);
        trace.push(opinion_diversity(&x));
    }
    Ok(DeGrootOutcome {
        opinions: x,
        diversity_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub steps: usize,
    pub dpae: Option<f64>,
    pub spearman: Option<f64>,
    pub acc_at_3: Option<f64>,
    pub diversity: f64,
}

/// Column mean over observers.
pub fn aggregate_opinions(opinions: &[Vec<f64>]) -> Vec<f64> {
    let n = opinions.len() as f64;
    let targets = opinions.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; targets];
    for row in opinions {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Runs DeGroot once from the self-only start and scores the opinions at
/// every step count in `steps_list` against `truth`.
pub fn degroot_sweep(
    cohort: &Cohort,
    w: &WeightMatrix,
    truth: &LatentTruth,
    steps_list: &[usize],
) -> Result<Vec<SweepRow>> {
    let mut wanted = steps_list.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    let mut x = degroot_initial_opinions(&truth.values);
    if x.len() != w.n() {
        return Err(Error::validation("degroot_sweep: W does not match cohort"));
    }
    let mut done = 0;
    let mut rows = Vec::with_capacity(wanted.len());
    for steps in wanted {
        while done < steps {
            x = w.step(&x);
            done += 1;
        }
        let report = evaluate(&aggregate_opinions(&x), truth, cohort, &[3], None, None)?;
        rows.push(SweepRow {
            steps,
            dpae: report.dpae,
            spearman: report.spearman,
            acc_at_3: report.acc_at_k.get(&3).copied(),
            diversity: class_diversity(&x, cohort),
        });
    }
    Ok(rows)
}
