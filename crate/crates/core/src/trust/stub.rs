use super::{ProviderTag, TrustProvider, TrustRequest, TrustResponse};

/// Consistency-based trust: agreement with the receiver's prior, relative
/// to the prior's spread, times a factor for how close the sender is.
///
/// omega = exp(-|s_hat - mu| / (sqrt(sigma) + 0.5)) * (0.5 + 0.5 * edge_pi)
pub fn trust_stub(req: &TrustRequest) -> TrustResponse {
    let prior = req.receiver_prior;
    let distance = (req.claim - prior.mu).abs();
    let consistency = (-distance / (prior.sigma.sqrt() + 0.5)).exp();
    let closeness = 0.5 + 0.5 * req.sender_profile.edge_pi.clamp(0.0, 1.0);
    let omega = consistency * closeness;
    TrustResponse {
        omega: if omega.is_nan() { 0.0 } else { omega.clamp(0.0, 1.0) },
        provider: ProviderTag::Stub,
        latency_ms: None,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StubTrust;

impl TrustProvider for StubTrust {
    fn assess(&self, req: &TrustRequest) -> TrustResponse {
        trust_stub(req)
    }

    fn name(&self) -> &'static str {
        "stub"
    }
}
