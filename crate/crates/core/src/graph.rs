//! Per-agent subjective social graphs and their anxiety-driven perturbation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand::Rng;

use crate::domain::{AnxietyRange, Cohort, StudentId, StudentRecord};
use crate::error::{Error, Result};

pub const SELF_REPORTED_PI: f64 = 1.0;
pub const SECOND_HAND_PI: f64 = 0.7;
pub const SPURIOUS_PI: f64 = 0.4;
/// Multiplier applied to an edge's weight per negative judgment the owner
/// holds about either endpoint.
pub const NEGATIVE_JUDGMENT_DAMPING: f64 = 0.8;
pub const PI_FLOOR: f64 = 0.1;
pub const MISS_SCALE: f64 = 0.3;
pub const FALSE_SCALE: f64 = 0.3;

pub type EdgeMap = BTreeMap<(StudentId, StudentId), f64>;

/// The ties one agent believes exist, each with a reachability weight.
///
/// The edge map sits behind an `Arc` so that the shared-visibility ablation
/// can hand the same edge set to every agent without copying it.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectiveGraph {
    owner: StudentId,
    alpha: f64,
    edges: Arc<EdgeMap>,
}

impl SubjectiveGraph {
    pub fn new(owner: StudentId, alpha: f64, edges: EdgeMap) -> Result<Self> {
        Self::shared(owner, alpha, Arc::new(edges))
    }

    pub fn shared(owner: StudentId, alpha: f64, edges: Arc<EdgeMap>) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::validation(format!("alpha {alpha} outside [0, 1]")));
        }
        if let Some(((u, v), pi)) = edges.iter().find(|(_, pi)| !(0.0..=1.0).contains(*pi)) {
            return Err(Error::validation(format!("edge ({u}, {v}) weight {pi} outside [0, 1]")));
        }
        Ok(Self { owner, alpha, edges })
    }

    pub fn owner(&self) -> StudentId {
        self.owner
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn edges(&self) -> &EdgeMap {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn pi(&self, from: StudentId, to: StudentId) -> Option<f64> {
        self.edges.get(&(from, to)).copied()
    }

    pub fn out_edges(&self, from: StudentId) -> impl Iterator<Item = (StudentId, f64)> + '_ {
        self.edges
            .range((from, StudentId(0))..=(from, StudentId(u32::MAX)))
            .map(|(&(_, v), &pi)| (v, pi))
    }

    pub fn out_degree(&self, from: StudentId) -> usize {
        self.out_edges(from).count()
    }
}

/// Probabilities of dropping a perceived tie and of imagining one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfile {
    pub alpha: f64,
    pub p_miss: f64,
    pub p_false: f64,
}

impl NoiseProfile {
    /// `mean_degree` and `class_size` describe the owner's class; the
    /// false-edge rate scales with the class's real tie density.
    pub fn new(alpha: f64, mean_degree: f64, class_size: usize) -> Self {
        let density = if class_size == 0 {
            0.0
        } else {
            mean_degree / class_size as f64
        };
        Self {
            alpha,
            p_miss: (MISS_SCALE * alpha).clamp(0.0, 1.0),
            p_false: (FALSE_SCALE * alpha * density).clamp(0.0, 1.0),
        }
    }

    pub fn for_owner(g: &SubjectiveGraph, cohort: &Cohort) -> Self {
        let class = &cohort.record(g.owner()).expect("graph owner must be rostered").class_id;
        Self::new(
            g.alpha(),
            cohort.mean_reported_degree(class),
            cohort.class_members(class).len(),
        )
    }
}

/// Min-max normalisation of a questionnaire anxiety score into [0, 1].
pub fn alpha_from_anxiety(anxiety_raw: f64, range: AnxietyRange) -> Result<f64> {
    if !(range.lo < range.hi) {
        return Err(Error::validation("anxiety range requires lo < hi"));
    }
    if !range.contains(anxiety_raw) {
        return Err(Error::validation(format!(
            "anxiety {anxiety_raw} outside [{}, {}]",
            range.lo, range.hi
        )));
    }
    Ok((anxiety_raw - range.lo) / (range.hi - range.lo))
}

/// Unperturbed view: the owner's reported ties, plus the ties each of those
/// friends reported, with weights damped by the owner's negative judgments.
pub fn build_base_graph(owner: &StudentRecord, cohort: &Cohort) -> Result<SubjectiveGraph> {
    if !cohort.contains(owner.id) {
        return Err(Error::UnknownStudents(vec![owner.id]));
    }
    let alpha = alpha_from_anxiety(owner.anxiety_raw, cohort.anxiety_range())?;
    let mut edges = EdgeMap::new();
    for &f in &owner.friends {
        edges.insert((owner.id, f), SELF_REPORTED_PI);
    }
    for &f in &owner.friends {
        let friend = cohort.record(f).ok_or(Error::UnknownStudents(vec![f]))?;
        for &g in &friend.friends {
            edges.entry((f, g)).or_insert(SECOND_HAND_PI);
        }
    }

    let mut negatives: BTreeMap<StudentId, i32> = BTreeMap::new();
    for j in owner.peer_judgments.iter().filter(|j| j.valence < 0.0) {
        *negatives.entry(j.target).or_default() += 1;
    }
    if !negatives.is_empty() {
        for ((u, v), pi) in edges.iter_mut() {
            let count = negatives.get(u).unwrap_or(&0) + negatives.get(v).unwrap_or(&0);
            if count > 0 {
                *pi = (*pi * NEGATIVE_JUDGMENT_DAMPING.powi(count)).max(PI_FLOOR);
            }
        }
    }
    SubjectiveGraph::new(owner.id, alpha, edges)
}

/// Drop each perceived edge with `p_miss`; add each absent directed pair
/// within `class_pool` with `p_false` at weight [`SPURIOUS_PI`].
///
/// With alpha = 0 the input is returned unchanged and no draws are made.
pub fn perturb_graph<R: Rng + ?Sized>(
    g: &SubjectiveGraph,
    profile: &NoiseProfile,
    class_pool: &[StudentId],
    rng: &mut R,
) -> SubjectiveGraph {
    if profile.alpha == 0.0 {
        return g.clone();
    }
    let mut kept = EdgeMap::new();
    for (&e, &pi) in g.edges() {
        if rng.random::<f64>() >= profile.p_miss {
            kept.insert(e, pi);
        }
    }
    if profile.p_false > 0.0 {
        for &u in class_pool {
            for &v in class_pool {
                if u == v || g.edges().contains_key(&(u, v)) {
                    continue;
                }
                if rng.random::<f64>() < profile.p_false {
                    kept.insert((u, v), SPURIOUS_PI);
                }
            }
        }
    }
    SubjectiveGraph {
        owner: g.owner,
        alpha: g.alpha,
        edges: Arc::new(kept),
    }
}

/// Everyone reachable from `from` in at most `max_hops` steps along edges
/// with weight >= `pi_threshold`. Always contains `from`.
pub fn reachable_set(g: &SubjectiveGraph, from: StudentId, max_hops: usize, pi_threshold: f64) -> BTreeSet<StudentId> {
    debug_assert_eq!(from, g.owner(), "reachability is queried from the owner");
    let mut seen = BTreeSet::from([from]);
    let mut frontier = VecDeque::from([(from, 0usize)]);
    while let Some((u, hops)) = frontier.pop_front() {
        if hops == max_hops {
            continue;
        }
        for (v, pi) in g.out_edges(u) {
            if pi >= pi_threshold && seen.insert(v) {
                frontier.push_back((v, hops + 1));
            }
        }
    }
    seen
}

/// Symmetrised union of every reported tie, all at weight 1.
pub fn union_of_reported_ties(cohort: &Cohort) -> EdgeMap {
    let mut edges = EdgeMap::new();
    for s in cohort.students() {
        for &f in &s.friends {
            edges.insert((s.id, f), 1.0);
            edges.insert((f, s.id), 1.0);
        }
    }
    edges
}
