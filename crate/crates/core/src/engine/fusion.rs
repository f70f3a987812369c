use crate::domain::Belief;
use crate::error::{Error, Result};

/// Precision-weighted Gaussian update of `prior` by a claim `s_hat` carrying
/// observation precision `tau`.
///
/// The posterior variance never exceeds the prior's, even when `tau` is too
/// small to move it in floating point.
pub fn fuse(prior: Belief, s_hat: f64, tau: f64) -> Result<Belief> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::validation(format!(
            "precision must be finite and >= 0, got {tau}"
        )));
    }
    if !s_hat.is_finite() {
        return Err(Error::validation(format!("claim must be finite, got {s_hat}")));
    }
    if tau == 0.0 {
        return Ok(prior);
    }
    let prior_precision = 1.0 / prior.sigma;
    let precision = prior_precision + tau;
    let mu = (prior_precision * prior.mu + tau * s_hat) / precision;
    let sigma = (1.0 / precision).min(prior.sigma);
    Belief::new(mu, sigma)
}
