//! Structured evidence base and retrieval limited to what an agent's
//! subjective graph lets it reach.
//!
//! Retrieval is deterministic structured lookup, not text search. Only two
//! kinds of noise exist: each matching record can be omitted, and one
//! off-target record about some other reachable student can be slipped in
//! as a distractor. Both scale linearly with the retriever's alpha.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ClassId, Cohort, StudentId};
use crate::error::{Error, Result};
use crate::graph::{reachable_set, SubjectiveGraph};

pub const RETRIEVAL_MAX_HOPS: usize = 2;
pub const RETRIEVAL_PI_THRESHOLD: f64 = 0.5;
pub const OMISSION_SCALE: f64 = 0.5;
pub const DISTRACTOR_SCALE: f64 = 0.2;

/// Epoch stamp for questionnaire data collected before the first exam.
pub const QUESTIONNAIRE_EPOCH: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    OwnScoreHistory,
    FriendshipClaim,
    PeerJudgment,
    ClassMembership,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvidencePayload {
    /// The subject's own exam result. Only ever returned to the subject.
    OwnScoreHistory {
        raw_score: f64,
        ability: f64,
    },
    FriendshipClaim {
        friend: StudentId,
    },
    PeerJudgment {
        target: StudentId,
        valence: f64,
    },
    ClassMembership {
        class_id: ClassId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub subject: StudentId,
    pub epoch_stamp: usize,
    #[serde(flatten)]
    pub payload: EvidencePayload,
}

impl EvidenceRecord {
    pub fn kind(&self) -> EvidenceKind {
        match self.payload {
            EvidencePayload::OwnScoreHistory { .. } => EvidenceKind::OwnScoreHistory,
            EvidencePayload::FriendshipClaim { .. } => EvidenceKind::FriendshipClaim,
            EvidencePayload::PeerJudgment { .. } => EvidenceKind::PeerJudgment,
            EvidencePayload::ClassMembership { .. } => EvidenceKind::ClassMembership,
        }
    }

    /// Whether the record says something about `target`: it is the subject,
    /// or it is named by the subject's claim or judgment.
    pub fn concerns(&self, target: StudentId) -> bool {
        self.subject == target
            || match self.payload {
                EvidencePayload::FriendshipClaim { friend } => friend == target,
                EvidencePayload::PeerJudgment { target: t, .. } => t == target,
                _ => false,
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryPurpose {
    AssessAcademic,
    AssessSocial,
    JudgeTrust,
}

impl QueryPurpose {
    pub fn admits(&self, kind: EvidenceKind) -> bool {
        use EvidenceKind::*;
        match self {
            QueryPurpose::AssessAcademic => matches!(kind, OwnScoreHistory | PeerJudgment | ClassMembership),
            QueryPurpose::AssessSocial => matches!(kind, FriendshipClaim | ClassMembership),
            QueryPurpose::JudgeTrust => matches!(kind, FriendshipClaim | PeerJudgment | ClassMembership),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalQuery {
    pub retriever: StudentId,
    pub target: StudentId,
    pub purpose: QueryPurpose,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRecord {
    pub record: EvidenceRecord,
    /// Injected off-target record. Known to the mechanism, never to agents.
    pub distractor: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub records: Vec<RetrievedRecord>,
    pub omissions_applied: usize,
    pub false_positives_applied: usize,
}

impl EvidenceBundle {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Append-only store of evidence records, indexed by subject.
#[derive(Debug, Clone, Default)]
pub struct EvidenceBase {
    records: Vec<EvidenceRecord>,
    by_subject: BTreeMap<StudentId, Vec<usize>>,
    last_epoch: usize,
}

impl EvidenceBase {
    /// Questionnaire-derived records: friendship claims, judgments, classes.
    pub fn from_cohort(cohort: &Cohort) -> Self {
        let mut base = Self::default();
        for s in cohort.students() {
            base.push(EvidenceRecord {
                subject: s.id,
                epoch_stamp: QUESTIONNAIRE_EPOCH,
                payload: EvidencePayload::ClassMembership {
                    class_id: s.class_id.clone(),
                },
            });
            for &friend in &s.friends {
                base.push(EvidenceRecord {
                    subject: s.id,
                    epoch_stamp: QUESTIONNAIRE_EPOCH,
                    payload: EvidencePayload::FriendshipClaim { friend },
                });
            }
            for j in &s.peer_judgments {
                base.push(EvidenceRecord {
                    subject: s.id,
                    epoch_stamp: QUESTIONNAIRE_EPOCH,
                    payload: EvidencePayload::PeerJudgment {
                        target: j.target,
                        valence: j.valence,
                    },
                });
            }
        }
        base
    }

    /// Adds each student's own result for `epoch`. Epochs must arrive in
    /// increasing order.
    pub fn append_epoch(&mut self, epoch: usize, cohort: &Cohort, raw_scores: &[f64], abilities: &[f64]) -> Result<()> {
        if epoch <= self.last_epoch {
            return Err(Error::validation(format!(
                "evidence epoch {epoch} appended after epoch {}",
                self.last_epoch
            )));
        }
        for ((s, &raw_score), &ability) in cohort.students().iter().zip(raw_scores).zip(abilities) {
            self.push(EvidenceRecord {
                subject: s.id,
                epoch_stamp: epoch,
                payload: EvidencePayload::OwnScoreHistory { raw_score, ability },
            });
        }
        self.last_epoch = epoch;
        Ok(())
    }

    fn push(&mut self, record: EvidenceRecord) {
        self.by_subject
            .entry(record.subject)
            .or_default()
            .push(self.records.len());
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EvidenceRecord] {
        &self.records
    }

    pub fn about(&self, subject: StudentId) -> impl Iterator<Item = &EvidenceRecord> {
        self.by_subject
            .get(&subject)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    /// One JSON object per line, in insertion order.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn visible_to(record: &EvidenceRecord, retriever: StudentId, epoch: usize) -> bool {
    record.epoch_stamp <= epoch && (record.kind() != EvidenceKind::OwnScoreHistory || record.subject == retriever)
}

/// Evidence about `q.target` that `g`'s owner can reach, after omissions and
/// at most one distractor.
///
/// A target outside the owner's reachable set yields an empty bundle.
pub fn retrieve<R: Rng + ?Sized>(
    q: &RetrievalQuery,
    base: &EvidenceBase,
    g: &SubjectiveGraph,
    alpha: f64,
    rng: &mut R,
) -> Result<EvidenceBundle> {
    if q.retriever != g.owner() {
        return Err(Error::Config(format!(
            "retrieval by {} against the subjective graph of {}",
            q.retriever,
            g.owner()
        )));
    }
    let reach = reachable_set(g, q.retriever, RETRIEVAL_MAX_HOPS, RETRIEVAL_PI_THRESHOLD);
    if !reach.contains(&q.target) {
        return Ok(EvidenceBundle::empty());
    }

    let mut bundle = EvidenceBundle::empty();
    let p_omit = (OMISSION_SCALE * alpha).clamp(0.0, 1.0);
    for &subject in &reach {
        for r in base.about(subject) {
            if !(visible_to(r, q.retriever, q.epoch) && q.purpose.admits(r.kind()) && r.concerns(q.target)) {
                continue;
            }
            if alpha > 0.0 && rng.random::<f64>() < p_omit {
                bundle.omissions_applied += 1;
                continue;
            }
            bundle.records.push(RetrievedRecord {
                record: r.clone(),
                distractor: false,
            });
        }
    }

    let p_distract = (DISTRACTOR_SCALE * alpha).clamp(0.0, 1.0);
    if alpha > 0.0 && rng.random::<f64>() < p_distract {
        let pool: Vec<&EvidenceRecord> = reach
            .iter()
            .filter(|&&s| s != q.target && s != q.retriever)
            .flat_map(|&s| base.about(s))
            .filter(|r| {
                r.kind() != EvidenceKind::OwnScoreHistory && r.epoch_stamp <= q.epoch && q.purpose.admits(r.kind())
            })
            .collect();
        if !pool.is_empty() {
            let pick = pool[rng.random_range(0..pool.len())];
            bundle.records.push(RetrievedRecord {
                record: pick.clone(),
                distractor: true,
            });
            bundle.false_positives_applied += 1;
        }
    }
    Ok(bundle)
}

/// True iff every record respects locality under `g`: non-distractor
/// subjects lie in the owner's retrieval reach, and score histories belong
/// to the owner alone. Distractors are exempt from the reach test.
pub fn mechanism_leak_check(bundle: &EvidenceBundle, g: &SubjectiveGraph) -> bool {
    let reach: BTreeSet<StudentId> = reachable_set(g, g.owner(), RETRIEVAL_MAX_HOPS, RETRIEVAL_PI_THRESHOLD);
    bundle.records.iter().all(|r| {
        let own_only = r.record.kind() != EvidenceKind::OwnScoreHistory || r.record.subject == g.owner();
        own_only && (r.distractor || reach.contains(&r.record.subject))
    })
}
