//! Receiver-side credibility weights and the precision they induce.

mod remote;
mod stub;
mod wire;

pub use remote::{RemoteConfig, RemoteTrust, ENDPOINT_ENV, TOKEN_ENV};
pub use stub::{trust_stub, StubTrust};
pub use wire::{audit_wire, WireRequest};

use serde::{Deserialize, Serialize};

use crate::domain::{Belief, ClassId, StudentId};
use crate::error::{Error, Result};
use crate::knowledge::EvidenceBundle;

pub const DEFAULT_KAPPA: f64 = 4.0;

/// Coarse anxiety band; the exact alpha is not shared with the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaBand {
    Low,
    Mid,
    High,
}

impl AlphaBand {
    pub fn of(alpha: f64) -> Self {
        if alpha < 1.0 / 3.0 {
            AlphaBand::Low
        } else if alpha < 2.0 / 3.0 {
            AlphaBand::Mid
        } else {
            AlphaBand::High
        }
    }
}

/// What the receiver knows about the sender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenderProfile {
    pub class_id: ClassId,
    /// Sender's out-degree in the receiver's subjective graph.
    pub degree_in_receiver_graph: usize,
    pub alpha_band: AlphaBand,
    /// Receiver's weight on its edge to the sender; 0 if it perceives none.
    pub edge_pi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRequest {
    pub sender: StudentId,
    pub receiver: StudentId,
    pub target: StudentId,
    pub claim: f64,
    pub claimed_uncertainty: f64,
    pub receiver_prior: Belief,
    pub evidence: EvidenceBundle,
    pub sender_profile: SenderProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderTag {
    Remote,
    Stub,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustResponse {
    pub omega: f64,
    pub provider: ProviderTag,
    pub latency_ms: Option<u64>,
}

pub trait TrustProvider: Send + Sync {
    fn assess(&self, req: &TrustRequest) -> TrustResponse;

    fn name(&self) -> &'static str;
}

/// Observation precision tau = kappa * omega * (1 - u_hat).
pub fn precision_from(omega: f64, u_hat: f64, kappa: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::validation(format!("omega {omega} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&u_hat) {
        return Err(Error::validation(format!("u_hat {u_hat} outside [0, 1]")));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::validation(format!("kappa must be > 0, got {kappa}")));
    }
    Ok(kappa * omega * (1.0 - u_hat))
}
