use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BootstrapCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Percentile bootstrap interval for the mean of `values`.
///
/// Endpoints are order statistics of the resampled means (lower endpoint
/// rounds down, upper rounds up), so they always lie on the grid of
/// attainable resample means.
pub fn bootstrap_ci<R: Rng + ?Sized>(values: &[f64], level: f64, resamples: usize, rng: &mut R) -> Result<BootstrapCi> {
    if values.len() < 2 {
        return Err(Error::validation(format!(
            "bootstrap needs >= 2 values, got {}",
            values.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) || resamples == 0 {
        return Err(Error::validation(
            "bootstrap: level must be in (0, 1) and resamples > 0",
        ));
    }
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);

    let tail = (1.0 - level) / 2.0;
    let last = (resamples - 1) as f64;
    let lo = means[(tail * last).floor() as usize];
    let hi = means[((1.0 - tail) * last).ceil() as usize];
    Ok(BootstrapCi {
        mean: values.iter().sum::<f64>() / n as f64,
        lo,
        hi,
    })
}

/// Mean and sample standard deviation (n - 1); std is 0 for one value.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
