//! Cohort, exam series, ability scale and Gaussian beliefs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::average_ranks;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudentId(pub u32);

impl fmt::Display for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub String);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClassId {
    fn from(s: &str) -> Self {
        ClassId(s.to_owned())
    }
}

/// Declared bounds of the anxiety questionnaire scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnxietyRange {
    pub lo: f64,
    pub hi: f64,
}

impl AnxietyRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::validation(format!(
                "anxiety range requires lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

impl Default for AnxietyRange {
    fn default() -> Self {
        Self { lo: 1.0, hi: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerJudgment {
    pub target: StudentId,
    /// Signed, in [-1, 1].
    pub valence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub id: StudentId,
    pub class_id: ClassId,
    pub friends: Vec<StudentId>,
    pub anxiety_raw: f64,
    #[serde(default)]
    pub peer_judgments: Vec<PeerJudgment>,
}

/// A validated roster. Students are stored in ascending id order, which is
/// also the dense 0..N-1 index order used by belief matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    students: Vec<StudentRecord>,
    index: BTreeMap<StudentId, usize>,
    classes: BTreeMap<ClassId, Vec<usize>>,
    social_observed: BTreeSet<StudentId>,
    anxiety_range: AnxietyRange,
}

impl Cohort {
    pub fn new(mut students: Vec<StudentRecord>, anxiety_range: AnxietyRange) -> Result<Self> {
        students.sort_by_key(|s| s.id);
        let mut index = BTreeMap::new();
        for (i, s) in students.iter().enumerate() {
            if index.insert(s.id, i).is_some() {
                return Err(Error::validation(format!("duplicate student id {}", s.id)));
            }
        }

        let mut unknown = BTreeSet::new();
        for s in &mut students {
            if s.friends.contains(&s.id) {
                return Err(Error::validation(format!("student {} lists itself as a friend", s.id)));
            }
            if !anxiety_range.contains(s.anxiety_raw) {
                return Err(Error::validation(format!(
                    "student {}: anxiety {} outside [{}, {}]",
                    s.id, s.anxiety_raw, anxiety_range.lo, anxiety_range.hi
                )));
            }
            for f in &s.friends {
                if !index.contains_key(f) {
                    unknown.insert(*f);
                }
            }
            for j in &s.peer_judgments {
                if !index.contains_key(&j.target) {
                    unknown.insert(j.target);
                }
                if !(-1.0..=1.0).contains(&j.valence) {
                    return Err(Error::validation(format!(
                        "student {}: judgment valence {} outside [-1, 1]",
                        s.id, j.valence
                    )));
                }
            }
            s.friends.sort();
            s.friends.dedup();
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownStudents(unknown.into_iter().collect()));
        }

        let mut classes: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, s) in students.iter().enumerate() {
            classes.entry(s.class_id.clone()).or_default().push(i);
        }
        let social_observed = students
            .iter()
            .filter(|s| !s.friends.is_empty())
            .map(|s| s.id)
            .collect();

        Ok(Self {
            students,
            index,
            classes,
            social_observed,
            anxiety_range,
        })
    }

    /// Sub-cohort over `keep`. Ties and judgments pointing outside it are
    /// dropped, so a student may become friendless (a boundary node).
    pub fn restrict(&self, keep: &BTreeSet<StudentId>) -> Result<Self> {
        let students = self
            .students
            .iter()
            .filter(|s| keep.contains(&s.id))
            .map(|s| {
                let mut s = s.clone();
                s.friends.retain(|f| keep.contains(f));
                s.peer_judgments.retain(|j| keep.contains(&j.target));
                s
            })
            .collect();
        Self::new(students, self.anxiety_range)
    }

    pub fn len(&self) -> usize {
        self.students.len()
    }

    pub fn is_empty(&self) -> bool {
        self.students.is_empty()
    }

    pub fn students(&self) -> &[StudentRecord] {
        &self.students
    }

    pub fn ids(&self) -> impl Iterator<Item = StudentId> + '_ {
        self.students.iter().map(|s| s.id)
    }

    pub fn index_of(&self, id: StudentId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn record(&self, id: StudentId) -> Option<&StudentRecord> {
        self.index_of(id).map(|i| &self.students[i])
    }

    pub fn contains(&self, id: StudentId) -> bool {
        self.index.contains_key(&id)
    }

    /// Roster indices per class, each list ascending.
    pub fn classes(&self) -> &BTreeMap<ClassId, Vec<usize>> {
        &self.classes
    }

    pub fn class_members(&self, class: &ClassId) -> &[usize] {
        self.classes.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn social_observed(&self) -> &BTreeSet<StudentId> {
        &self.social_observed
    }

    pub fn is_social_observed(&self, id: StudentId) -> bool {
        self.social_observed.contains(&id)
    }

    pub fn anxiety_range(&self) -> AnxietyRange {
        self.anxiety_range
    }

    /// Mean number of reported friends among members of `class`.
    pub fn mean_reported_degree(&self, class: &ClassId) -> f64 {
        let members = self.class_members(class);
        if members.is_empty() {
            return 0.0;
        }
        let total: usize = members.iter().map(|&i| self.students[i].friends.len()).sum();
        total as f64 / members.len() as f64
    }
}

/// Raw exam scores, complete for every listed student over epochs 1..=T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamSeries {
    epochs: usize,
    scores: BTreeMap<StudentId, Vec<f64>>,
}

impl ExamSeries {
    pub fn new(epochs: usize, scores: BTreeMap<StudentId, Vec<f64>>) -> Result<Self> {
        if epochs == 0 {
            return Err(Error::validation("exam series needs at least one epoch"));
        }
        for (id, row) in &scores {
            if row.len() != epochs {
                return Err(Error::validation(format!(
                    "student {id}: expected {epochs} scores, got {}",
                    row.len()
                )));
            }
            if let Some(x) = row.iter().find(|x| !x.is_finite()) {
                return Err(Error::validation(format!("student {id}: non-finite score {x}")));
            }
        }
        Ok(Self { epochs, scores })
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    /// Score at 1-based `epoch`.
    pub fn score(&self, id: StudentId, epoch: usize) -> Option<f64> {
        if epoch == 0 {
            return None;
        }
        self.scores.get(&id).and_then(|row| row.get(epoch - 1)).copied()
    }

    pub fn students(&self) -> impl Iterator<Item = StudentId> + '_ {
        self.scores.keys().copied()
    }

    pub fn rows(&self) -> &BTreeMap<StudentId, Vec<f64>> {
        &self.scores
    }

    pub fn covers(&self, cohort: &Cohort) -> Result<()> {
        for id in cohort.ids() {
            if !self.scores.contains_key(&id) {
                return Err(Error::MissingScore { student: id, epoch: 1 });
            }
        }
        Ok(())
    }
}

/// The map h(.) from raw exam scores to the common ability scale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbilityScale {
    #[default]
    ZscoreWithinClass,
    PercentileWithinClass,
}

impl AbilityScale {
    /// Expected within-class mean of mapped abilities.
    pub fn class_mean(&self) -> f64 {
        match self {
            AbilityScale::ZscoreWithinClass => 0.0,
            AbilityScale::PercentileWithinClass => 0.5,
        }
    }

    fn map_group(&self, raw: &[f64]) -> Vec<f64> {
        let n = raw.len() as f64;
        match self {
            AbilityScale::ZscoreWithinClass => {
                let mean = raw.iter().sum::<f64>() / n;
                let var = raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                if var <= 0.0 {
                    return vec![0.0; raw.len()];
                }
                let sd = var.sqrt();
                raw.iter().map(|x| (x - mean) / sd).collect()
            }
            AbilityScale::PercentileWithinClass => average_ranks(raw).into_iter().map(|r| (r - 0.5) / n).collect(),
        }
    }
}

/// Abilities at `epoch` for every rostered student, in roster order.
pub fn ability_map(scale: AbilityScale, scores: &ExamSeries, cohort: &Cohort, epoch: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; cohort.len()];
    for members in cohort.classes().values() {
        let raw = members
            .iter()
            .map(|&i| {
                let id = cohort.students()[i].id;
                scores
                    .score(id, epoch)
                    .ok_or(Error::MissingScore { student: id, epoch })
            })
            .collect::<Result<Vec<_>>>()?;
        for (&i, h) in members.iter().zip(scale.map_group(&raw)) {
            out[i] = h;
        }
    }
    Ok(out)
}

/// Ground-truth ability vector for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTruth {
    pub epoch: usize,
    pub values: Vec<f64>,
    /// Classes whose raw scores all tie at this epoch.
    pub degenerate_classes: Vec<ClassId>,
}

pub fn latent_truth(scores: &ExamSeries, scale: AbilityScale, cohort: &Cohort, epoch: usize) -> Result<LatentTruth> {
    if epoch == 0 || epoch > scores.epochs() {
        return Err(Error::validation(format!(
            "epoch {epoch} outside 1..={}",
            scores.epochs()
        )));
    }
    let values = ability_map(scale, scores, cohort, epoch)?;
    let degenerate_classes = cohort
        .classes()
        .iter()
        .filter(|(_, members)| {
            let first = scores.score(cohort.students()[members[0]].id, epoch);
            members
                .iter()
                .all(|&i| scores.score(cohort.students()[i].id, epoch) == first)
        })
        .map(|(c, _)| c.clone())
        .collect();
    Ok(LatentTruth {
        epoch,
        values,
        degenerate_classes,
    })
}

/// Gaussian belief N(mu, sigma); sigma is the variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub mu: f64,
    pub sigma: f64,
}

impl Belief {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::validation(format!("belief mean must be finite, got {mu}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::validation(format!("belief variance must be > 0, got {sigma}")));
        }
        Ok(Self { mu, sigma })
    }

    pub fn precision(&self) -> f64 {
        1.0 / self.sigma
    }
}

/// N x N beliefs, row = observer j, column = target k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefMatrix {
    n: usize,
    pub epoch: usize,
    beliefs: Vec<Belief>,
}

const MATRIX_MAGIC: &[u8; 4] = b"BLFM";

impl BeliefMatrix {
    pub fn filled(n: usize, belief: Belief) -> Self {
        Self {
            n,
            epoch: 0,
            beliefs: vec![belief; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Belief) -> Self {
        let mut beliefs = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                beliefs.push(f(j, k));
            }
        }
        Self { n, epoch: 0, beliefs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, observer: usize, target: usize) -> Belief {
        self.beliefs[observer * self.n + target]
    }

    #[inline]
    pub fn set(&mut self, observer: usize, target: usize, belief: Belief) {
        self.beliefs[observer * self.n + target] = belief;
    }

    pub fn row(&self, observer: usize) -> &[Belief] {
        &self.beliefs[observer * self.n..(observer + 1) * self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Belief> {
        self.beliefs.iter()
    }

    /// Observer rows of means.
    pub fn mean_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|j| self.row(j).iter().map(|b| b.mu).collect())
            .collect()
    }

    /// Little-endian binary encoding; decoding reproduces every bit.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.beliefs.len() * 16);
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        for b in &self.beliefs {
            out.extend_from_slice(&b.mu.to_bits().to_le_bytes());
            out.extend_from_slice(&b.sigma.to_bits().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::validation(format!("belief matrix decode: {m}"));
        if bytes.len() < 20 || &bytes[..4] != MATRIX_MAGIC {
            return Err(bad("bad header"));
        }
        let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let n = word(4) as usize;
        let epoch = word(12) as usize;
        let cells = n.checked_mul(n).ok_or_else(|| bad("size overflow"))?;
        if bytes.len() != 20 + cells * 16 {
            return Err(bad("length mismatch"));
        }
        let mut beliefs = Vec::with_capacity(cells);
        for c in 0..cells {
            let at = 20 + c * 16;
            let mu = f64::from_bits(word(at));
            let sigma = f64::from_bits(word(at + 8));
            beliefs.push(Belief::new(mu, sigma)?);
        }
        Ok(Self { n, epoch, beliefs })
    }
}
