//! Non-interactive comparison methods. All of them are scored through the
//! same [`evaluate`] path and truth vectors as the engine.

mod degroot;
mod regression;

pub use degroot::{
    aggregate_opinions, degroot_initial_opinions, degroot_run, degroot_sweep, DeGrootConfig, DeGrootOutcome,
    GraphSource, SweepRow, WeightMatrix, WeightPolicy,
};
pub use regression::{linear_regression, questionnaire_features, SplitPolicy, RIDGE};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ability_map, latent_truth, AbilityScale, Cohort, ExamSeries};
use crate::error::{Error, Result};
use crate::graph::{union_of_reported_ties, EdgeMap};
use crate::metrics::{class_diversity, evaluate, EpochReport};
use crate::rng::{Purpose, StreamKey};

pub const DEGROOT_SWEEP_STEPS: [usize; 4] = [1, 5, 30, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Random,
    SelfOnly,
    LinearRegression,
    OneHop,
    Degroot,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 5] = [
        BaselineMethod::Random,
        BaselineMethod::SelfOnly,
        BaselineMethod::LinearRegression,
        BaselineMethod::OneHop,
        BaselineMethod::Degroot,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineMethod::Random => "random",
            BaselineMethod::SelfOnly => "self_only",
            BaselineMethod::LinearRegression => "linear_regression",
            BaselineMethod::OneHop => "one_hop",
            BaselineMethod::Degroot => "degroot",
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub alpha_mix: f64,
    pub split: SplitPolicy,
    pub degroot: DeGrootConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            alpha_mix: 0.5,
            split: SplitPolicy::LeaveOneClassOut,
            degroot: DeGrootConfig::default(),
        }
    }
}

/// I.i.d. uniform scores on [0, 1).
pub fn baseline_random(cohort: &Cohort, epoch: usize, seed: u64) -> Vec<f64> {
    let mut rng = StreamKey::new(Purpose::Baseline).epoch(epoch).stream(seed);
    (0..cohort.len()).map(|_| rng.random::<f64>()).collect()
}

/// Aggregate of a belief matrix where each observer knows only itself and
/// holds the uninformed prior about everyone else.
pub fn baseline_self_only(
    cohort: &Cohort,
    scores: &ExamSeries,
    scale: AbilityScale,
    epoch: usize,
    prior_mu: f64,
) -> Result<Vec<f64>> {
    let n = cohort.len() as f64;
    Ok(ability_map(scale, scores, cohort, epoch)?
        .into_iter()
        .map(|h| (h + (n - 1.0) * prior_mu) / n)
        .collect())
}

/// `alpha_mix * own + (1 - alpha_mix) * mean over neighbours`. Isolated
/// students keep their own value.
pub fn baseline_one_hop(cohort: &Cohort, edges: &EdgeMap, abilities: &[f64], alpha_mix: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha_mix) {
        return Err(Error::Config(format!("alpha_mix must be in [0, 1], got {alpha_mix}")));
    }
    if abilities.len() != cohort.len() {
        return Err(Error::validation("one_hop: ability vector does not match cohort"));
    }
    let mut sum = vec![0.0; cohort.len()];
    let mut count = vec![0usize; cohort.len()];
    for &(u, v) in edges.keys() {
        if u == v {
            continue;
        }
        if let (Some(i), Some(j)) = (cohort.index_of(u), cohort.index_of(v)) {
            sum[i] += abilities[j];
            count[i] += 1;
        }
    }
    Ok((0..cohort.len())
        .map(|i| {
            if count[i] == 0 {
                abilities[i]
            } else {
                alpha_mix * abilities[i] + (1.0 - alpha_mix) * sum[i] / count[i] as f64
            }
        })
        .collect())
}

/// Scores `method` at every epoch in `1..=epochs`.
#[allow(clippy::too_many_arguments)]
pub fn run_baseline(
    method: BaselineMethod,
    cohort: &Cohort,
    scores: &ExamSeries,
    scale: AbilityScale,
    epochs: usize,
    ks: &[usize],
    config: &BaselineConfig,
    seed: u64,
) -> Result<Vec<EpochReport>> {
    let ties = union_of_reported_ties(cohort);
    let features = match method {
        BaselineMethod::LinearRegression => Some(questionnaire_features(cohort)?),
        _ => None,
    };
    let weights = match method {
        BaselineMethod::Degroot => Some(WeightMatrix::from_ties(
            cohort,
            &ties,
            config.degroot.weight_policy,
            config.degroot.self_weight,
        )?),
        _ => None,
    };
    let groups: Vec<_> = cohort.students().iter().map(|s| s.class_id.clone()).collect();
    (1..=epochs)
        .map(|epoch| {
            let truth = latent_truth(scores, scale, cohort, epoch)?;
            let (perceived, diversity) = match method {
                BaselineMethod::Random => (baseline_random(cohort, epoch, seed), None),
                BaselineMethod::SelfOnly => (
                    baseline_self_only(cohort, scores, scale, epoch, scale.class_mean())?,
                    None,
                ),
                BaselineMethod::LinearRegression => (
                    linear_regression(features.as_ref().unwrap(), &truth.values, &groups, config.split)?,
                    None,
                ),
                BaselineMethod::OneHop => (baseline_one_hop(cohort, &ties, &truth.values, config.alpha_mix)?, None),
                BaselineMethod::Degroot => {
                    let out = degroot_run(
                        weights.as_ref().unwrap(),
                        degroot_initial_opinions(&truth.values),
                        config.degroot.steps,
                    )?;
                    (
                        aggregate_opinions(&out.opinions),
                        Some(class_diversity(&out.opinions, cohort)),
                    )
                }
            };
            evaluate(&perceived, &truth, cohort, ks, None, diversity)
        })
        .collect()
}
