//! Error-versus-density sweeps over methods and tolerance grids.

use rayon::prelude::*;
use vattention::{
    denom_rel_error, derive_stream_id, full_sdpa, rel_error, validate_cache, AttentionOutput,
    BoundKind, GuaranteeParams, KvCache, QueryBatch, Relaxation, RngStream,
};

use crate::error::{invalid, Result};
use crate::methods::{run_method, LshConfig, Method};
use crate::report::TrialRecord;

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub eps: Vec<f64>,
    /// Template for every grid point; `eps` is overwritten per point.
    pub params: GuaranteeParams,
    pub lsh: LshConfig,
    pub seed: u64,
}

pub fn bound_name(b: BoundKind) -> &'static str {
    match b {
        BoundKind::Clt => "clt",
        BoundKind::Hoeffding => "hoeffding",
    }
}

pub fn relaxation_name(r: Relaxation) -> &'static str {
    match r {
        Relaxation::DenominatorOnly => "den",
        Relaxation::Full => "full",
    }
}

/// Exact attention for every query, computed in parallel.
pub fn reference_outputs(
    cache: &KvCache,
    queries: &QueryBatch,
    scale: bool,
) -> Result<Vec<AttentionOutput>> {
    (0..queries.m())
        .into_par_iter()
        .map(|j| Ok(full_sdpa(cache, queries.query(j), scale)?))
        .collect()
}

/// Builds a record for one method run against its reference.
pub(crate) fn record(
    method: Method,
    params: &GuaranteeParams,
    query: usize,
    seed: u64,
    run: &crate::methods::MethodRun,
    exact: &AttentionOutput,
) -> Result<TrialRecord> {
    let (bound, relaxation) = if method == Method::VAttention {
        (bound_name(params.bound), relaxation_name(params.relaxation))
    } else {
        ("none", "none")
    };
    Ok(TrialRecord {
        method: method.name().into(),
        eps: params.eps,
        delta: params.delta,
        fs: params.f_sink,
        fl: params.f_local,
        ft: params.f_top,
        fb: params.f_base,
        bound: bound.into(),
        relaxation: relaxation.into(),
        query,
        density: run.density,
        budget: run.budget,
        rel_err_out: rel_error(&run.output.out, &exact.out)?,
        rel_err_den: denom_rel_error(&run.output, exact),
        seed,
    })
}

/// One record per `(method, eps, query)`, in that nesting order.
///
/// Every method evaluated at the same `(eps, query)` starts from the same
/// random stream, so randomized methods are compared on paired draws.
pub fn run_sweep(
    cache: &KvCache,
    queries: &QueryBatch,
    cfg: &SweepConfig,
) -> Result<Vec<TrialRecord>> {
    validate_cache(cache, queries)?;
    if cfg.methods.is_empty() || cfg.eps.is_empty() {
        return Err(invalid("sweep needs at least one method and one eps"));
    }
    for &eps in &cfg.eps {
        let p = GuaranteeParams {
            eps,
            ..cfg.params.clone()
        };
        for &m in &cfg.methods {
            if m == Method::VAttention {
                p.validate()?;
            } else {
                crate::methods::validate_baseline(&p)?;
            }
        }
    }
    let exact = reference_outputs(cache, queries, cfg.params.scale_logits)?;
    let m = queries.m();
    let tasks: Vec<(usize, usize, usize)> = (0..cfg.methods.len())
        .flat_map(|a| (0..cfg.eps.len()).flat_map(move |e| (0..m).map(move |j| (a, e, j))))
        .collect();
    tasks
        .into_par_iter()
        .map(|(a, e, j)| {
            let method = cfg.methods[a];
            let params = GuaranteeParams {
                eps: cfg.eps[e],
                ..cfg.params.clone()
            };
            let mut rng =
                RngStream::new(cfg.seed, derive_stream_id(cfg.seed, &[e as u64, j as u64]));
            let run = run_method(method, cache, queries.query(j), &params, cfg.lsh, &mut rng)?;
            record(method, &params, j, cfg.seed, &run, &exact[j])
        })
        .collect()
}
