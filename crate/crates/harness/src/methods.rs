//! Selection methods compared by the sweeps.
//!
//! Baselines share the static part of vAttention (sink and local window taken
//! from `f_sink` and `f_local`) and spend the remaining `f_top + f_base`
//! fraction of the cache in their own way. Counts are clamped to the tokens
//! still available, so a fraction of 1 means "everything that is left".

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use vattention::params::fraction_count;
use vattention::selectors::lsh_fragment;
use vattention::{
    compose, local_indices, oracle_topk, oracle_topp, sdpa_selected, sink_indices,
    uniform_residual, vattention, AttentionOutput, Fragment, GuaranteeParams, KvCache, LshSpec,
    RngStream,
};

use crate::error::{invalid, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    VAttention,
    /// Top `(f_top + f_base) * n` tokens by exact logit.
    OracleTopK,
    /// Shortest descending-score prefix with mass `1 - eps`.
    OracleTopP,
    /// Uniform sample of `(f_top + f_base) * n` residual tokens.
    RandomSample,
    /// Top `f_top * n` tokens plus a uniform sample of `f_base * n`.
    Hybrid,
    /// Sign-random-projection collisions, importance weighted.
    Lsh,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::VAttention,
        Method::OracleTopK,
        Method::OracleTopP,
        Method::RandomSample,
        Method::Hybrid,
        Method::Lsh,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::VAttention => "vattention",
            Method::OracleTopK => "oracle-topk",
            Method::OracleTopP => "oracle-topp",
            Method::RandomSample => "random",
            Method::Hybrid => "hybrid",
            Method::Lsh => "lsh",
        }
    }

    /// Whether the method draws random numbers.
    pub fn is_randomized(&self) -> bool {
        matches!(
            self,
            Method::VAttention | Method::RandomSample | Method::Hybrid | Method::Lsh
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "vattention" | "vattn" => Method::VAttention,
            "oracle-topk" | "topk" | "oracle-top" => Method::OracleTopK,
            "oracle-topp" | "topp" => Method::OracleTopP,
            "random" | "random-sample" | "uniform" => Method::RandomSample,
            "hybrid" => Method::Hybrid,
            "lsh" => Method::Lsh,
            other => return Err(invalid(format!("unknown method {other:?}"))),
        })
    }
}

/// Hash family size for the LSH baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LshConfig {
    pub k_bits: usize,
    pub l_tables: usize,
}

impl Default for LshConfig {
    fn default() -> Self {
        Self {
            k_bits: 8,
            l_tables: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub output: AttentionOutput,
    /// Fraction of the cache read, base sample included.
    pub density: f64,
    /// Tokens chosen by the method's dynamic stage.
    pub budget: usize,
}

/// Checks the fractions used by the baselines: each in `[0, 1]`.
pub fn validate_baseline(params: &GuaranteeParams) -> Result<()> {
    for (name, f) in [
        ("fs", params.f_sink),
        ("fl", params.f_local),
        ("ft", params.f_top),
        ("fb", params.f_base),
    ] {
        if !(0.0..=1.0).contains(&f) {
            return Err(invalid(format!("{name} = {f} not in [0, 1]")));
        }
    }
    if !(params.eps > 0.0 && params.eps < 1.0) {
        return Err(invalid(format!("eps = {} not in (0, 1)", params.eps)));
    }
    Ok(())
}

/// Runs one method on one query.
pub fn run_method(
    method: Method,
    cache: &KvCache,
    q: &[f64],
    params: &GuaranteeParams,
    lsh: LshConfig,
    rng: &mut RngStream,
) -> Result<MethodRun> {
    if method == Method::VAttention {
        let run = vattention(cache, q, params, rng)?;
        return Ok(MethodRun {
            density: run.density(),
            budget: run.budget.b,
            output: run.output,
        });
    }
    validate_baseline(params)?;
    let n = cache.n();
    let scale = params.scale_logits;
    let mut fixed = sink_indices(n, params.sink_count(n))?;
    fixed.extend(local_indices(n, params.local_count(n))?);
    fixed.sort_unstable();
    fixed.dedup();
    let remaining = n - fixed.len();

    let mut fragments = vec![];
    let budget;
    match method {
        Method::OracleTopK => {
            let k = fraction_count(params.f_top + params.f_base, n).min(remaining);
            let top = oracle_topk(cache, q, k, &fixed)?;
            budget = top.len();
            fragments.push(Fragment::Deterministic(top));
        }
        Method::OracleTopP => {
            let mut prefix = oracle_topp(cache, q, 1.0 - params.eps, scale)?;
            prefix.retain(|i| fixed.binary_search(i).is_err());
            budget = prefix.len();
            fragments.push(Fragment::Deterministic(prefix));
        }
        Method::RandomSample => {
            let b = fraction_count(params.f_top + params.f_base, n).min(remaining);
            budget = b;
            fragments.push(uniform_residual(n, &fixed, b, rng)?);
        }
        Method::Hybrid => {
            let k = fraction_count(params.f_top, n).min(remaining);
            let top = oracle_topk(cache, q, k, &fixed)?;
            let mut excluded = fixed.clone();
            excluded.extend_from_slice(&top);
            let b = fraction_count(params.f_base, n).min(remaining - k);
            budget = k + b;
            fragments.push(Fragment::Deterministic(top));
            fragments.push(uniform_residual(n, &excluded, b, rng)?);
        }
        Method::Lsh => {
            let spec = LshSpec {
                k_bits: lsh.k_bits,
                l_tables: lsh.l_tables,
                seed: rng.rng().next_u64(),
            };
            let frag = lsh_fragment(cache, q, &spec)?;
            budget = frag.indices().len();
            fragments.push(frag);
        }
        Method::VAttention => unreachable!(),
    }
    fragments.push(Fragment::Deterministic(fixed));
    let selection = compose(&fragments, n)?;
    let output = sdpa_selected(cache, q, &selection, scale)?;
    Ok(MethodRun {
        density: selection.density(),
        budget,
        output,
    })
}
