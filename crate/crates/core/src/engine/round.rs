use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{BeliefMatrix, Cohort, StudentId};
use crate::graph::{reachable_set, SubjectiveGraph};
use crate::knowledge::{RETRIEVAL_MAX_HOPS, RETRIEVAL_PI_THRESHOLD};

/// Std of the claim noise is `CLAIM_NOISE_SCALE * alpha`.
pub const CLAIM_NOISE_SCALE: f64 = 0.5;

/// One sender-to-receiver assessment of a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: StudentId,
    pub receiver: StudentId,
    pub target: StudentId,
    pub s_hat: f64,
    pub u_hat: f64,
    pub epoch: usize,
    pub round: usize,
}

/// One applied message, in the newline-delimited round log format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundLogEntry {
    pub epoch: usize,
    pub round: usize,
    pub sender: StudentId,
    pub receiver: StudentId,
    pub target: StudentId,
    pub s_hat: f64,
    pub u_hat: f64,
    pub omega: f64,
    pub tau: f64,
    pub mu_before: f64,
    pub sigma_before: f64,
    pub mu_after: f64,
    pub sigma_after: f64,
}

/// Maps a variance to a claimed uncertainty in [0, 1).
pub fn squash_uncertainty(sigma: f64) -> f64 {
    (sigma / (sigma + 1.0)).clamp(0.0, 1.0)
}

/// Index drawn with probability proportional to `weights`.
fn weighted_pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // rounding left u at the top edge
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Up to `k` distinct out-neighbours of `agent` among `eligible`, drawn
/// without replacement with probability proportional to edge weight.
pub fn sample_partners<R: Rng + ?Sized>(
    agent: StudentId,
    g: &SubjectiveGraph,
    k: usize,
    eligible: &BTreeSet<StudentId>,
    rng: &mut R,
) -> Vec<StudentId> {
    let mut pool: Vec<(StudentId, f64)> = g
        .out_edges(agent)
        .filter(|&(v, pi)| v != agent && pi > 0.0 && eligible.contains(&v))
        .collect();
    let mut picked = Vec::with_capacity(k.min(pool.len()));
    while picked.len() < k && !pool.is_empty() {
        let weights: Vec<f64> = pool.iter().map(|&(_, w)| w).collect();
        let i = weighted_pick(&weights, rng);
        picked.push(pool.remove(i).0);
    }
    picked
}

/// Builds the sender's claim about one reachable target other than the
/// receiver, preferring targets the sender is confident about (weight
/// 1/sigma). Returns `None` when no such target exists.
#[allow(clippy::too_many_arguments)]
pub fn compose_message<R: Rng + ?Sized>(
    sender: StudentId,
    receiver: StudentId,
    beliefs: &BeliefMatrix,
    cohort: &Cohort,
    g_sender: &SubjectiveGraph,
    alpha_sender: f64,
    epoch: usize,
    round: usize,
    rng: &mut R,
) -> Option<Message> {
    let s = cohort.index_of(sender)?;
    let candidates: Vec<(StudentId, usize)> =
        reachable_set(g_sender, sender, RETRIEVAL_MAX_HOPS, RETRIEVAL_PI_THRESHOLD)
            .into_iter()
            .filter(|&t| t != receiver)
            .filter_map(|t| cohort.index_of(t).map(|i| (t, i)))
            .collect();
    if candidates.is_empty() {
        return None;
    }
    let weights: Vec<f64> = candidates.iter().map(|&(_, k)| 1.0 / beliefs.get(s, k).sigma).collect();
    let (target, k) = candidates[weighted_pick(&weights, rng)];
    let belief = beliefs.get(s, k);
    let z: f64 = rng.sample(StandardNormal);
    Some(Message {
        sender,
        receiver,
        target,
        s_hat: belief.mu + CLAIM_NOISE_SCALE * alpha_sender * z,
        u_hat: squash_uncertainty(belief.sigma),
        epoch,
        round,
    })
}
