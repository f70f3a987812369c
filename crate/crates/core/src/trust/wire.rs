//! JSON body sent to a remote trust provider.
//!
//! Built only from [`TrustRequest`] fields. Score-history records are
//! dropped and the distractor marker is never sent.

use serde::Serialize;
use serde_json::Value;

use super::{AlphaBand, TrustRequest};
use crate::domain::{ClassId, StudentId};
use crate::knowledge::{EvidenceKind, EvidenceRecord};

#[derive(Debug, Serialize)]
pub struct WireRequest<'a> {
    pub sender_summary: SenderSummary<'a>,
    pub target_claim: TargetClaim,
    pub receiver_prior: ReceiverPrior,
    pub evidence: Vec<&'a EvidenceRecord>,
}

#[derive(Debug, Serialize)]
pub struct SenderSummary<'a> {
    pub sender_id: StudentId,
    pub class_id: &'a ClassId,
    pub degree: usize,
    pub alpha_band: AlphaBand,
    pub edge_pi: f64,
}

#[derive(Debug, Serialize)]
pub struct TargetClaim {
    pub target_id: StudentId,
    pub s_hat: f64,
    pub u_hat: f64,
}

#[derive(Debug, Serialize)]
pub struct ReceiverPrior {
    pub receiver_id: StudentId,
    pub mu: f64,
    pub sigma: f64,
}

impl<'a> WireRequest<'a> {
    pub fn from_request(req: &'a TrustRequest) -> Self {
        let p = &req.sender_profile;
        Self {
            sender_summary: SenderSummary {
                sender_id: req.sender,
                class_id: &p.class_id,
                degree: p.degree_in_receiver_graph,
                alpha_band: p.alpha_band,
                edge_pi: p.edge_pi,
            },
            target_claim: TargetClaim {
                target_id: req.target,
                s_hat: req.claim,
                u_hat: req.claimed_uncertainty,
            },
            receiver_prior: ReceiverPrior {
                receiver_id: req.receiver,
                mu: req.receiver_prior.mu,
                sigma: req.receiver_prior.sigma,
            },
            evidence: req
                .evidence
                .records
                .iter()
                .map(|r| &r.record)
                .filter(|r| r.kind() != EvidenceKind::OwnScoreHistory)
                .collect(),
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("wire request is always serialisable")
    }
}

const FORBIDDEN_KEYS: &[&str] = &["raw_score", "ability", "score", "scores", "truth", "distractor"];

/// Checks a serialised request for anything that could carry a score or a
/// mechanism-internal marker. Returns the offending path on failure.
pub fn audit_wire(body: &Value) -> Result<(), String> {
    fn walk(v: &Value, path: &str) -> Result<(), String> {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let here = format!("{path}.{k}");
                    if FORBIDDEN_KEYS.contains(&k.as_str()) {
                        return Err(here);
                    }
                    if k == "kind" && child.as_str() == Some("own_score_history") {
                        return Err(here);
                    }
                    walk(child, &here)?;
                }
                Ok(())
            }
            Value::Array(items) => items
                .iter()
                .enumerate()
                .try_for_each(|(i, c)| walk(c, &format!("{path}[{i}]"))),
            _ => Ok(()),
        }
    }
    walk(body, "$")
}
