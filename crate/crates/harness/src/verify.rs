//! Empirical check of the (eps, delta) guarantee.

use rayon::prelude::*;
use vattention::{
    derive_stream_id, validate_cache, GuaranteeParams, KvCache, QueryBatch, Relaxation, RngStream,
    StatsSource,
};

use crate::error::{invalid, Result};
use crate::methods::{run_method, LshConfig, Method};
use crate::report::TrialRecord;
use crate::sweep::{record, reference_outputs};

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Template; `eps` is overwritten per grid point.
    pub params: GuaranteeParams,
    pub eps_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Also rerun every trial with exact residual statistics.
    pub oracle_stats: bool,
}

/// Aggregates for one grid point. Errors are those of the guaranteed
/// quantity: the denominator under `DenominatorOnly`, the output otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsSummary {
    pub eps: f64,
    pub mean_err: f64,
    pub p95_err: f64,
    pub mean_err_out: f64,
    pub fail_rate: f64,
    /// Failure rate with exact statistics, when requested.
    pub oracle_fail_rate: Option<f64>,
    pub mean_density: f64,
    pub mean_budget: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub relaxation: Relaxation,
    pub per_eps: Vec<EpsSummary>,
    /// Pearson correlation of `eps` against mean error; `None` for fewer than
    /// two grid points or a constant series.
    pub pearson_corr: Option<f64>,
}

impl VerificationReport {
    pub fn eps_grid(&self) -> Vec<f64> {
        self.per_eps.iter().map(|s| s.eps).collect()
    }
}

/// Runs vAttention for every `(eps, query, trial)` and summarizes.
///
/// Each task draws from its own stream derived from `(seed, eps index, query,
/// trial)`; results are collected in task order, so the records and report do
/// not depend on the number of worker threads.
pub fn verify_guarantee(
    cache: &KvCache,
    queries: &QueryBatch,
    cfg: &VerifyConfig,
) -> Result<(Vec<TrialRecord>, VerificationReport)> {
    validate_cache(cache, queries)?;
    if cfg.eps_grid.is_empty() {
        return Err(invalid("eps grid is empty"));
    }
    if cfg.trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    let mut grid = cfg.eps_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for &eps in &grid {
        GuaranteeParams {
            eps,
            ..cfg.params.clone()
        }
        .validate()?;
    }
    let exact = reference_outputs(cache, queries, cfg.params.scale_logits)?;
    let m = queries.m();
    let tasks: Vec<(usize, usize, usize)> = (0..grid.len())
        .flat_map(|e| (0..m).flat_map(move |j| (0..cfg.trials).map(move |t| (e, j, t))))
        .collect();

    let outcomes: Vec<(TrialRecord, Option<f64>)> = tasks
        .into_par_iter()
        .map(|(e, j, t)| {
            let params = GuaranteeParams {
                eps: grid[e],
                ..cfg.params.clone()
            };
            let stream = derive_stream_id(cfg.seed, &[e as u64, j as u64, t as u64]);
            let q = queries.query(j);
            let run = run_method(
                Method::VAttention,
                cache,
                q,
                &params,
                LshConfig::default(),
                &mut RngStream::new(cfg.seed, stream),
            )?;
            let rec = record(Method::VAttention, &params, j, cfg.seed, &run, &exact[j])?;
            let oracle = if cfg.oracle_stats {
                let p = GuaranteeParams {
                    stats_source: StatsSource::Oracle,
                    ..params.clone()
                };
                let run = run_method(
                    Method::VAttention,
                    cache,
                    q,
                    &p,
                    LshConfig::default(),
                    &mut RngStream::new(cfg.seed, stream),
                )?;
                let r = record(Method::VAttention, &p, j, cfg.seed, &run, &exact[j])?;
                Some(guaranteed_error(cfg.params.relaxation, &r))
            } else {
                None
            };
            Ok((rec, oracle))
        })
        .collect::<Result<_>>()?;

    let per_trial = m * cfg.trials;
    let per_eps: Vec<EpsSummary> = grid
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let chunk = &outcomes[e * per_trial..(e + 1) * per_trial];
            let errs: Vec<f64> = chunk
                .iter()
                .map(|(r, _)| guaranteed_error(cfg.params.relaxation, r))
                .collect();
            let count = chunk.len() as f64;
            let fails =
                |xs: &mut dyn Iterator<Item = f64>| xs.filter(|&x| x > eps).count() as f64 / count;
            EpsSummary {
                eps,
                mean_err: mean(&errs),
                p95_err: percentile(&errs, 0.95),
                mean_err_out: chunk.iter().map(|(r, _)| r.rel_err_out).sum::<f64>() / count,
                fail_rate: fails(&mut errs.iter().copied()),
                oracle_fail_rate: cfg
                    .oracle_stats
                    .then(|| fails(&mut chunk.iter().filter_map(|(_, o)| *o))),
                mean_density: chunk.iter().map(|(r, _)| r.density).sum::<f64>() / count,
                mean_budget: chunk.iter().map(|(r, _)| r.budget as f64).sum::<f64>() / count,
                trials: chunk.len(),
            }
        })
        .collect();
    let xs: Vec<f64> = per_eps.iter().map(|s| s.eps).collect();
    let ys: Vec<f64> = per_eps.iter().map(|s| s.mean_err).collect();
    let report = VerificationReport {
        relaxation: cfg.params.relaxation,
        pearson_corr: pearson(&xs, &ys),
        per_eps,
    };
    Ok((outcomes.into_iter().map(|(r, _)| r).collect(), report))
}

fn guaranteed_error(relaxation: Relaxation, r: &TrialRecord) -> f64 {
    match relaxation {
        Relaxation::DenominatorOnly => r.rel_err_den,
        Relaxation::Full => r.rel_err_out,
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Nearest-rank percentile.
pub fn percentile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Sample Pearson correlation; `None` when undefined.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use vattention::Matrix;

    #[test]
    fn pearson_matches_hand_values() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // x = 1..4, y = [1, 3, 2, 4]: sxy = 4, sxx = syy = 5
        assert!(
            (pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15
        );
        assert_eq!(pearson(&[1.0, 2.0], &[5.0, 5.0]), None);
        assert_eq!(pearson(&[1.0], &[5.0]), None);
    }

    #[test]
    fn percentile_nearest_rank() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&xs, 0.95), 19.0);
        assert_eq!(percentile(&xs, 1.0), 20.0);
        assert_eq!(percentile(&[4.0], 0.5), 4.0);
    }

    #[test]
    fn zero_variance_residual_never_fails() {
        // Identical keys and values: every residual term is the same.
        let n = 400;
        let keys = Matrix::from_vec(n, 2, vec![0.5; 2 * n]).unwrap();
        let vals = Matrix::from_vec(n, 2, vec![1.5; 2 * n]).unwrap();
        let cache = KvCache::new(keys, vals).unwrap();
        let queries =
            QueryBatch::new(Matrix::from_rows(&[[1.0, -1.0], [0.2, 0.4]]).unwrap()).unwrap();
        let cfg = VerifyConfig {
            params: GuaranteeParams::default(),
            eps_grid: vec![0.3, 0.01, 0.1],
            trials: 5,
            seed: 4,
            oracle_stats: true,
        };
        let (rows, report) = verify_guarantee(&cache, &queries, &cfg).unwrap();
        assert_eq!(rows.len(), 30);
        assert_eq!(report.eps_grid(), vec![0.01, 0.1, 0.3]);
        for s in &report.per_eps {
            assert_eq!(s.fail_rate, 0.0);
            assert_eq!(s.oracle_fail_rate, Some(0.0));
            assert!(s.mean_err < 1e-12 && s.mean_err_out < 1e-12);
        }
    }

    #[test]
    fn empty_grid_is_invalid() {
        let cache = KvCache::new(Matrix::zeros(4, 1), Matrix::zeros(4, 1)).unwrap();
        let queries = QueryBatch::new(Matrix::zeros(1, 1)).unwrap();
        let cfg = VerifyConfig {
            params: GuaranteeParams::default(),
            eps_grid: vec![],
            trials: 1,
            seed: 0,
            oracle_stats: false,
        };
        assert!(verify_guarantee(&cache, &queries, &cfg).is_err());
    }
}
