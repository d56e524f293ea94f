//! Oracle-top versus random sampling versus a half-and-half hybrid, at a
//! fixed token budget, across score regimes.

use rayon::prelude::*;
use serde::Serialize;
use vattention::{
    compose, derive_stream_id, full_sdpa, oracle_topk, rel_error, sdpa_selected, uniform_residual,
    Fragment, KvCache, RngStream,
};

use crate::error::{invalid, Result};
use crate::workload::{gen_workload, Dist, WorkloadSpec};

pub const ABLATION_COLUMNS: [&str; 5] =
    ["dist", "budget_frac", "method", "mean_rel_err", "queries"];
pub const ABLATION_METHODS: [&str; 3] = ["oracle-top", "random-sample", "hybrid"];

#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub n: usize,
    pub d: usize,
    pub queries: usize,
    pub budget_fracs: Vec<f64>,
    pub dists: Vec<Dist>,
    pub seed: u64,
}

impl AblationConfig {
    /// Head dimension 64 and 64 queries per distribution.
    pub fn new(n: usize, budget_fracs: Vec<f64>, dists: Vec<Dist>, seed: u64) -> Self {
        Self {
            n,
            d: 64,
            queries: 64,
            budget_fracs,
            dists,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRecord {
    pub dist: String,
    pub budget_frac: f64,
    pub method: String,
    pub mean_rel_err: f64,
    pub queries: usize,
}

/// Mean relative output error of each method per `(dist, budget)`.
///
/// Random-sample and hybrid for the same query start from the same stream.
/// Records are ordered by distribution, then budget, then method.
pub fn budget_ablation(cfg: &AblationConfig) -> Result<Vec<AblationRecord>> {
    if cfg.budget_fracs.is_empty() || cfg.dists.is_empty() {
        return Err(invalid(
            "ablation needs at least one budget and one distribution",
        ));
    }
    for &f in &cfg.budget_fracs {
        let k = (f * cfg.n as f64).floor();
        if !(f > 0.0 && f <= 1.0) || k < 1.0 {
            return Err(invalid(format!(
                "budget fraction {f} must select between 1 and n tokens"
            )));
        }
    }
    let mut out = vec![];
    for (di, &dist) in cfg.dists.iter().enumerate() {
        let spec = WorkloadSpec {
            dist,
            n: cfg.n,
            d: cfg.d,
            m: cfg.queries,
            seed: derive_stream_id(cfg.seed, &[di as u64]),
        };
        let (cache, queries) = gen_workload(&spec)?;
        for (fi, &frac) in cfg.budget_fracs.iter().enumerate() {
            let per_query: Vec<[f64; 3]> = (0..cfg.queries)
                .into_par_iter()
                .map(|j| {
                    let stream = derive_stream_id(cfg.seed, &[di as u64, fi as u64, j as u64]);
                    errors_for_query(&cache, queries.query(j), frac, cfg.seed, stream)
                })
                .collect::<Result<_>>()?;
            for (mi, name) in ABLATION_METHODS.iter().enumerate() {
                let mean = per_query.iter().map(|e| e[mi]).sum::<f64>() / per_query.len() as f64;
                out.push(AblationRecord {
                    dist: dist.to_string(),
                    budget_frac: frac,
                    method: (*name).into(),
                    mean_rel_err: mean,
                    queries: cfg.queries,
                });
            }
        }
    }
    Ok(out)
}

fn errors_for_query(
    cache: &KvCache,
    q: &[f64],
    frac: f64,
    seed: u64,
    stream: u64,
) -> Result<[f64; 3]> {
    let n = cache.n();
    let k = ((frac * n as f64).floor() as usize).clamp(1, n);
    let exact = full_sdpa(cache, q, true)?;
    let err = |frags: &[Fragment]| -> Result<f64> {
        let sel = compose(frags, n)?;
        Ok(rel_error(
            &sdpa_selected(cache, q, &sel, true)?.out,
            &exact.out,
        )?)
    };

    let top = err(&[Fragment::Deterministic(oracle_topk(cache, q, k, &[])?)])?;
    let random = err(&[uniform_residual(
        n,
        &[],
        k,
        &mut RngStream::new(seed, stream),
    )?])?;
    let half = oracle_topk(cache, q, k / 2, &[])?;
    let sample = uniform_residual(n, &half, k - half.len(), &mut RngStream::new(seed, stream))?;
    let hybrid = err(&[Fragment::Deterministic(half), sample])?;
    Ok([top, random, hybrid])
}
