//! Group-level observables over belief matrices and predicted ability vectors.

mod bootstrap;
mod report;

pub use bootstrap::{bootstrap_ci, mean_and_std, BootstrapCi};
pub use report::{evaluate, ClassMetrics, EpochReport};

use std::cmp::Ordering;

use crate::domain::{BeliefMatrix, Cohort};
use crate::error::{Error, Result};

/// 1-based ranks, ties get the average of the positions they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean((i+1)..=j)
        let r = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
///
/// Fewer than two points, or a constant input, has no defined correlation
/// and yields [`Error::Degenerate`].
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::validation(format!(
            "spearman: length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate(format!(
            "spearman needs >= 2 points, got {}",
            x.len()
        )));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("spearman: zero rank variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Column means over observers: the group-perceived ability of each target.
pub fn aggregate_mean_belief(m: &BeliefMatrix) -> Vec<f64> {
    let n = m.n();
    let mut acc = vec![0.0; n];
    for j in 0..n {
        for (k, b) in m.row(j).iter().enumerate() {
            acc[k] += b.mu;
        }
    }
    acc.iter_mut().for_each(|v| *v /= n as f64);
    acc
}

/// 1 - Spearman between the aggregated perception and the truth vector.
pub fn dpae(m: &BeliefMatrix, truth: &[f64]) -> Result<f64> {
    if m.n() != truth.len() {
        return Err(Error::validation("dpae: dimension mismatch"));
    }
    Ok(1.0 - spearman_rho(&aggregate_mean_belief(m), truth)?)
}

/// Indices of the top-k entries of `values` restricted to `members`,
/// ties broken toward the smaller roster index (ascending student id).
fn top_k(values: &[f64], members: &[usize], k: usize) -> Vec<usize> {
    let mut sorted = members.to_vec();
    // partial_cmp so that -0.0 and 0.0 tie
    sorted.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    sorted.truncate(k);
    sorted
}

/// |perceived top-k ∩ true top-k| / k within one group.
pub fn top_k_overlap(perceived: &[f64], truth: &[f64], members: &[usize], k: usize) -> Result<f64> {
    if k == 0 || k > members.len() {
        return Err(Error::validation(format!(
            "top-k: k = {k} outside 1..={}",
            members.len()
        )));
    }
    let p = top_k(perceived, members, k);
    let t = top_k(truth, members, k);
    let hits = p.iter().filter(|i| t.contains(i)).count();
    Ok(hits as f64 / k as f64)
}

/// Top-k identification rate, evaluated per class and macro-averaged.
/// `perceived` and `truth` are indexed by roster position.
pub fn acc_at_k_vector(perceived: &[f64], truth: &[f64], cohort: &Cohort, k: usize) -> Result<f64> {
    let classes = cohort.classes();
    if classes.is_empty() {
        return Err(Error::validation("top-k: empty cohort"));
    }
    let mut total = 0.0;
    for members in classes.values() {
        total += top_k_overlap(perceived, truth, members, k)?;
    }
    Ok(total / classes.len() as f64)
}

pub fn acc_at_k(m: &BeliefMatrix, truth: &[f64], cohort: &Cohort, k: usize) -> Result<f64> {
    acc_at_k_vector(&aggregate_mean_belief(m), truth, cohort, k)
}

/// Mean belief variance over all N^2 entries.
pub fn group_uncertainty(m: &BeliefMatrix) -> f64 {
    let n = m.n();
    if n == 0 {
        return 0.0;
    }
    m.iter().map(|b| b.sigma).sum::<f64>() / (n * n) as f64
}

/// Mean over targets of the population variance across observers.
/// `opinions[j][k]` is observer j's opinion about target k.
pub fn opinion_diversity(opinions: &[Vec<f64>]) -> f64 {
    let observers = opinions.len();
    if observers == 0 {
        return 0.0;
    }
    let targets = opinions[0].len();
    if targets == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..targets {
        let mean = opinions.iter().map(|row| row[k]).sum::<f64>() / observers as f64;
        total += opinions.iter().map(|row| (row[k] - mean).powi(2)).sum::<f64>() / observers as f64;
    }
    total / targets as f64
}

/// Diversity within each class (class members as both observers and
/// targets), macro-averaged over classes.
pub fn class_diversity(opinions: &[Vec<f64>], cohort: &Cohort) -> f64 {
    let classes = cohort.classes();
    if classes.is_empty() {
        return 0.0;
    }
    let total: f64 = classes
        .values()
        .map(|members| {
            let sub: Vec<Vec<f64>> = members
                .iter()
                .map(|&j| members.iter().map(|&k| opinions[j][k]).collect())
                .collect();
            opinion_diversity(&sub)
        })
        .sum();
    total / classes.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Belief;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_identity_reversal_and_swap() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman_rho(&x, &x).unwrap(), 1.0);
        assert_eq!(spearman_rho(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        // 1 - 6*2/(4*15) = 0.8
        assert!((spearman_rho(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn spearman_degenerate_is_flagged() {
        assert!(matches!(spearman_rho(&[1.0], &[2.0]), Err(Error::Degenerate(_))));
        assert!(matches!(
            spearman_rho(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn spearman_monotone_invariance() {
        let x = [0.3, -1.2, 2.5, 0.0, 7.1, 0.3];
        let y = [1.0, 5.0, -2.0, 3.0, 0.5, 4.0];
        let base = spearman_rho(&x, &y).unwrap();
        let tx: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
        let ty: Vec<f64> = y.iter().map(|v| 3.0 * v - 1.0).collect();
        assert!((spearman_rho(&tx, &ty).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn aggregate_constant_column_and_mean() {
        let m = BeliefMatrix::from_fn(2, |j, k| Belief {
            mu: if k == 0 { 3.5 } else { 2.0 * j as f64 },
            sigma: 1.0,
        });
        assert_eq!(aggregate_mean_belief(&m), vec![3.5, 1.0]);
    }

    #[test]
    fn dpae_bounds() {
        let truth = [0.1, 0.5, -0.3, 2.0];
        let perfect = BeliefMatrix::from_fn(4, |_, k| Belief {
            mu: truth[k],
            sigma: 1.0,
        });
        assert_eq!(dpae(&perfect, &truth).unwrap(), 0.0);
        let reversed = BeliefMatrix::from_fn(4, |_, k| Belief {
            mu: -truth[k],
            sigma: 1.0,
        });
        assert_eq!(dpae(&reversed, &truth).unwrap(), 2.0);
    }

    #[test]
    fn top_k_enumerated_case() {
        // truth order: 5,4,3,... perceived top-3 = {5,4,2}
        let truth = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let perceived = [0.0, 1.0, 4.5, 2.0, 5.0, 6.0];
        let members: Vec<usize> = (0..6).collect();
        let v = top_k_overlap(&perceived, &truth, &members, 3).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(top_k_overlap(&perceived, &truth, &members, 6).unwrap(), 1.0);
        assert!(top_k_overlap(&perceived, &truth, &members, 7).is_err());
    }

    #[test]
    fn top_k_ties_break_by_id() {
        let members = [0, 1, 2];
        let flat = [1.0, 1.0, 1.0];
        let truth = [0.0, 5.0, 9.0];
        // perceived top-1 is index 0 under the tie rule
        assert_eq!(top_k_overlap(&flat, &truth, &members, 1).unwrap(), 0.0);
    }

    #[test]
    fn uncertainty_constant_and_after_fuse() {
        let mut m = BeliefMatrix::filled(3, Belief { mu: 0.0, sigma: 1.0 });
        assert_eq!(group_uncertainty(&m), 1.0);
        let fused = crate::engine::fuse(m.get(0, 1), 2.0, 0.5).unwrap();
        m.set(0, 1, fused);
        assert!(group_uncertainty(&m) < 1.0);
    }

    #[test]
    fn diversity_consensus_and_pair() {
        assert_eq!(opinion_diversity(&[vec![1.0, 2.0], vec![1.0, 2.0]]), 0.0);
        assert_eq!(opinion_diversity(&[vec![0.0], vec![2.0]]), 1.0);
    }
}
