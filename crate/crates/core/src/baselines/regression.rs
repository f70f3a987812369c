use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{Cohort, StudentId};
use crate::error::{Error, Result};
use crate::graph::alpha_from_anxiety;

pub const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPolicy {
    /// Each class is predicted by a model fit on all other classes.
    #[default]
    LeaveOneClassOut,
    /// One fit on everyone, predictions in-sample.
    InSample,
}

/// Per-student questionnaire attributes, roster order: anxiety alpha,
/// reported degree, times named as a friend, then a class one-hot.
pub fn questionnaire_features(cohort: &Cohort) -> Result<Vec<Vec<f64>>> {
    let mut in_degree: BTreeMap<StudentId, f64> = BTreeMap::new();
    for s in cohort.students() {
        for &f in &s.friends {
            *in_degree.entry(f).or_default() += 1.0;
        }
    }
    let classes: Vec<_> = cohort.classes().keys().collect();
    let range = cohort.anxiety_range();
    cohort
        .students()
        .iter()
        .map(|s| {
            let mut row = vec![
                alpha_from_anxiety(s.anxiety_raw, range)?,
                s.friends.len() as f64,
                in_degree.get(&s.id).copied().unwrap_or(0.0),
            ];
            row.extend(classes.iter().map(|c| f64::from(u8::from(**c == s.class_id))));
            Ok(row)
        })
        .collect()
}

fn design(features: &[Vec<f64>], rows: &[usize]) -> DMatrix<f64> {
    let p = features[0].len();
    DMatrix::from_fn(
        rows.len(),
        p + 1,
        |r, c| if c == 0 { 1.0 } else { features[rows[r]][c - 1] },
    )
}

/// Ridge-damped normal equations with an intercept.
fn fit(features: &[Vec<f64>], targets: &[f64], rows: &[usize]) -> Result<DVector<f64>> {
    let x = design(features, rows);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| targets[i]));
    let xt = x.transpose();
    let gram = &xt * &x + DMatrix::identity(x.ncols(), x.ncols()) * RIDGE;
    let rhs = &xt * y;
    gram.clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or_else(|| Error::Degenerate("regression normal equations are singular".into()))
}

/// Predictions for every row of `features`. `groups[i]` is the split key
/// used by [`SplitPolicy::LeaveOneClassOut`].
pub fn linear_regression<G: Ord + Clone>(
    features: &[Vec<f64>],
    targets: &[f64],
    groups: &[G],
    split: SplitPolicy,
) -> Result<Vec<f64>> {
    let n = features.len();
    if n == 0 || targets.len() != n || groups.len() != n {
        return Err(Error::validation("regression: features, targets and groups must align"));
    }
    let p = features[0].len();
    if p < 2 || features.iter().any(|r| r.len() != p) {
        return Err(Error::validation("regression: need >= 2 features in every row"));
    }
    let mut out = vec![0.0; n];
    let predict = |beta: &DVector<f64>, rows: &[usize], out: &mut [f64]| {
        let pred = design(features, rows) * beta;
        for (&i, v) in rows.iter().zip(pred.iter()) {
            out[i] = *v;
        }
    };
    match split {
        SplitPolicy::InSample => {
            let all: Vec<usize> = (0..n).collect();
            let beta = fit(features, targets, &all)?;
            predict(&beta, &all, &mut out);
        }
        SplitPolicy::LeaveOneClassOut => {
            let mut by_group: BTreeMap<&G, Vec<usize>> = BTreeMap::new();
            for (i, g) in groups.iter().enumerate() {
                by_group.entry(g).or_default().push(i);
            }
            if by_group.len() < 2 {
                return Err(Error::Config("leave-one-class-out needs >= 2 classes".into()));
            }
            for (g, held_out) in &by_group {
                let train: Vec<usize> = (0..n).filter(|&i| &groups[i] != *g).collect();
                let beta = fit(features, targets, &train)?;
                predict(&beta, held_out, &mut out);
            }
        }
    }
    Ok(out)
}
