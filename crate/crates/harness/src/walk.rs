//! Mean squared terminal displacement of a biased Gaussian random walk.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use vattention::{derive_stream_id, RngStream};

use crate::error::{invalid, Result};

const CHUNK: usize = 4096;

/// `n^2 mu^2 + n sigma^2`.
pub fn analytic_mse(mu: f64, sigma: f64, steps: usize) -> f64 {
    let n = steps as f64;
    n * n * mu * mu + n * sigma * sigma
}

/// Simulates `trials` walks of `steps` increments `N(mu, sigma^2)` and
/// returns `(empirical, analytic)` mean squared terminal displacement.
///
/// The terminal point is accumulated as `steps * mu + sigma * sum(g)` so a
/// noiseless walk lands exactly on `steps * mu`.
pub fn random_walk_mse(
    mu: f64,
    sigma: f64,
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if steps == 0 || trials == 0 {
        return Err(invalid("steps and trials must be >= 1"));
    }
    if !mu.is_finite() || !(sigma.is_finite() && sigma >= 0.0) {
        return Err(invalid(format!(
            "mu = {mu}, sigma = {sigma} must be finite with sigma >= 0"
        )));
    }
    let drift = steps as f64 * mu;
    let chunks = trials.div_ceil(CHUNK);
    let sums: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(trials - c * CHUNK);
            let mut rng = RngStream::new(seed, derive_stream_id(seed, &[c as u64]));
            (0..len)
                .map(|_| {
                    let noise: f64 = if sigma == 0.0 {
                        0.0
                    } else {
                        (0..steps)
                            .map(|_| rng.rng().sample::<f64, _>(StandardNormal))
                            .sum()
                    };
                    let x = drift + sigma * noise;
                    x * x
                })
                .sum()
        })
        .collect();
    Ok((
        sums.iter().sum::<f64>() / trials as f64,
        analytic_mse(mu, sigma, steps),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_values() {
        assert_eq!(analytic_mse(0.0, 1.0, 100), 100.0);
        assert!((analytic_mse(0.1, 1.0, 100) - 200.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_walk_is_exact() {
        let (emp, ana) = random_walk_mse(0.1, 0.0, 10, 50, 1).unwrap();
        assert_eq!(emp, 1.0);
        assert!((ana - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unbiased_walk_within_five_percent() {
        let (emp, ana) = random_walk_mse(0.0, 1.0, 100, 20_000, 3).unwrap();
        assert!((emp / ana - 1.0).abs() < 0.05, "{emp}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(random_walk_mse(0.0, 1.0, 0, 10, 0).is_err());
        assert!(random_walk_mse(0.0, 1.0, 10, 0, 0).is_err());
        assert!(random_walk_mse(0.0, -1.0, 10, 10, 0).is_err());
        assert!(random_walk_mse(f64::NAN, 1.0, 10, 10, 0).is_err());
    }
}
