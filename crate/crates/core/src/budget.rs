//! Adaptive sample sizing and the end-to-end verified attention call.
//!
//! The residual (non-deterministic) tokens contribute the populations
//! `w_i = exp(l_i - shift)` to the denominator and `w_i * V[i]` to the
//! numerator. A uniform base sample yields plug-in estimates of their spread
//! and of `D` and `||N||`; a concentration bound then turns a relative
//! tolerance into the number of residual tokens to sample.
//!
//! All statistics live in the shifted scale. Budgets depend only on ratios
//! such as `sigma / D`, so the shift cancels.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::attention::{logit, norm, sdpa_selected, AttentionOutput};
use crate::error::{Error, Result};
use crate::kv::{check_query, KvCache};
use crate::params::{BoundKind, FloorRule, GuaranteeParams, Relaxation, StatsSource};
use crate::rng::RngStream;
use crate::selection::Selection;
use crate::selectors::{
    compose, local_indices, sink_indices, uniform_residual, Fragment, OracleTopK, TopPredictor,
};

/// Plug-in statistics of the residual populations, estimated from a base sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    /// Trace of the covariance of `{w_i V[i]}`.
    pub trace_cov_hat: f64,
    /// Standard deviation of `{w_i}`.
    pub sigma_hat: f64,
    /// Estimate of `||N||_2`.
    pub num_norm_hat: f64,
    /// Estimate of `D`.
    pub den_hat: f64,
    /// Range of `{w_i}` used by the Hoeffding bound.
    pub range_hat: f64,
    /// Euclidean norm of the per-coordinate ranges of `{w_i V[i]}`.
    pub num_range_hat: f64,
    pub base_indices: Vec<usize>,
    /// Logit shift under which every exponential was computed.
    pub shift: f64,
    /// Static (deterministic) part of the denominator, in the shifted scale.
    pub den_static: f64,
}

impl SampleStats {
    /// Scales the range statistics by `factor`; a sample range underestimates
    /// the population range.
    pub fn with_range_inflation(mut self, factor: f64) -> Self {
        self.range_hat *= factor;
        self.num_range_hat *= factor;
        self
    }
}

/// Plug-in statistics from `base_sample`, a uniform sample of the tokens
/// outside `static_set`.
///
/// Spreads use the divisor `|base_sample|`, so a base sample covering the
/// whole residual yields exact population statistics.
pub fn compute_stats(
    cache: &KvCache,
    q: &[f64],
    static_set: &[usize],
    base_sample: &[usize],
    scale: bool,
) -> Result<SampleStats> {
    check_query(cache, q)?;
    if base_sample.is_empty() {
        return Err(Error::EmptyBaseSample);
    }
    let n = cache.n();
    let d = cache.d();
    let mut is_static = vec![false; n];
    for &i in static_set {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        is_static[i] = true;
    }
    let n_static = is_static.iter().filter(|&&s| s).count();
    let n_s = n - n_static;
    let mut in_base = vec![false; n];
    for &i in base_sample {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if is_static[i] {
            return Err(Error::InvalidParameter(format!(
                "base sample index {i} is in the static set"
            )));
        }
        if std::mem::replace(&mut in_base[i], true) {
            return Err(Error::DuplicateIndex(i));
        }
    }

    let static_ix: Vec<usize> = (0..n).filter(|&i| is_static[i]).collect();
    let static_logits: Vec<f64> = static_ix
        .iter()
        .map(|&i| logit(cache, q, i, scale))
        .collect();
    let base_logits: Vec<f64> = base_sample
        .iter()
        .map(|&i| logit(cache, q, i, scale))
        .collect();
    let shift = static_logits
        .iter()
        .chain(&base_logits)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);

    let mut den_static = 0.0;
    let mut num_static = vec![0.0; d];
    for (&i, &l) in static_ix.iter().zip(&static_logits) {
        let w = (l - shift).exp();
        den_static += w;
        for (acc, v) in num_static.iter_mut().zip(cache.value(i)) {
            *acc += w * v;
        }
    }

    let b = base_sample.len() as f64;
    let weights: Vec<f64> = base_logits.iter().map(|l| (l - shift).exp()).collect();
    let mean_w = weights.iter().sum::<f64>() / b;
    let var_w = weights.iter().map(|w| (w - mean_w).powi(2)).sum::<f64>() / b;
    let (min_w, max_w) = weights
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| {
            (lo.min(w), hi.max(w))
        });

    let mut mean_x = vec![0.0; d];
    let mut lo_x = vec![f64::INFINITY; d];
    let mut hi_x = vec![f64::NEG_INFINITY; d];
    for (&i, &w) in base_sample.iter().zip(&weights) {
        for (c, v) in cache.value(i).iter().enumerate() {
            let x = w * v;
            mean_x[c] += x;
            lo_x[c] = lo_x[c].min(x);
            hi_x[c] = hi_x[c].max(x);
        }
    }
    for m in &mut mean_x {
        *m /= b;
    }
    let mut trace = 0.0;
    for (&i, &w) in base_sample.iter().zip(&weights) {
        for (c, v) in cache.value(i).iter().enumerate() {
            trace += (w * v - mean_x[c]).powi(2);
        }
    }
    trace /= b;
    let num_range = lo_x
        .iter()
        .zip(&hi_x)
        .map(|(lo, hi)| (hi - lo).powi(2))
        .sum::<f64>()
        .sqrt();

    let scale_up = n_s as f64;
    let num_hat: Vec<f64> = num_static
        .iter()
        .zip(&mean_x)
        .map(|(s, m)| s + scale_up * m)
        .collect();

    Ok(SampleStats {
        trace_cov_hat: trace,
        sigma_hat: var_w.sqrt(),
        num_norm_hat: norm(&num_hat),
        den_hat: den_static + scale_up * mean_w,
        range_hat: max_w - min_w,
        num_range_hat: num_range,
        base_indices: base_sample.to_vec(),
        shift,
        den_static,
    })
}

/// `Phi^-1(1 - delta / 2)`.
pub fn z_quantile(delta: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - delta / 2.0)
}

fn check_tolerance(tau: f64, delta: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidTolerance(format!(
            "tau = {tau} must be positive and finite"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidTolerance(format!(
            "delta = {delta} not in (0, 1)"
        )));
    }
    Ok(())
}

fn ceil_to_usize(x: f64) -> usize {
    if x >= usize::MAX as f64 {
        usize::MAX
    } else {
        x.ceil() as usize
    }
}

/// Unrounded normal-approximation sample size `(z * n_s * spread / tau)^2`.
pub fn clt_raw(tau: f64, delta: f64, n_s: usize, spread: f64) -> Result<f64> {
    check_tolerance(tau, delta)?;
    Ok((z_quantile(delta) * n_s as f64 * spread / tau).powi(2))
}

/// Normal-approximation sample size for estimating a sum of `n_s` terms to
/// absolute error `tau` with failure probability `delta`. `spread` is
/// `sqrt(Tr Sigma)` for vector populations or the standard deviation for
/// scalar ones. Not clamped.
pub fn clt_budget(tau: f64, delta: f64, n_s: usize, spread: f64) -> Result<usize> {
    clt_raw(tau, delta, n_s, spread).map(ceil_to_usize)
}

/// Unrounded Hoeffding sample size `n_s^2 * range^2 * ln(2/delta) / (2 tau^2)`.
pub fn hoeffding_raw(tau: f64, delta: f64, n_s: usize, range: f64) -> Result<f64> {
    check_tolerance(tau, delta)?;
    let ns = n_s as f64;
    Ok(ns * ns * range * range * (2.0 / delta).ln() / (2.0 * tau * tau))
}

/// Distribution-free sample size for the scaled sample-sum estimator of a
/// population with values in an interval of width `range`. Not clamped.
pub fn hoeffding_budget(tau: f64, delta: f64, n_s: usize, range: f64) -> Result<usize> {
    hoeffding_raw(tau, delta, n_s, range).map(ceil_to_usize)
}

/// Knobs shared by all budget computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetConfig {
    pub bound: BoundKind,
    pub b_min: usize,
    pub floor_rule: FloorRule,
    pub grid_points: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            bound: BoundKind::Clt,
            b_min: 32,
            floor_rule: FloorRule::Clamp,
            grid_points: 15,
        }
    }
}

impl From<&GuaranteeParams> for BudgetConfig {
    fn from(p: &GuaranteeParams) -> Self {
        Self {
            bound: p.bound,
            b_min: p.b_min,
            floor_rule: p.floor_rule,
            grid_points: p.grid_points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetResult {
    /// Residual tokens to sample.
    pub b: usize,
    /// `(eps', delta')` given to the denominator by the split search;
    /// `None` when the budget was not split.
    pub eps_split: Option<(f64, f64)>,
    pub kind: BoundKind,
    /// The budget hit `b_min` or `n_s`.
    pub clamped: bool,
    /// Unrounded, unclamped sample size.
    pub raw: f64,
}

/// Applies the floor and cap: `b_min <= b <= n_s`, or `b = n_s` when the
/// residual is smaller than `b_min`.
pub fn clamp_budget(raw: f64, n_s: usize, cfg: &BudgetConfig) -> (usize, bool) {
    let b = ceil_to_usize(raw);
    if b > n_s {
        return (n_s, true);
    }
    match cfg.floor_rule {
        FloorRule::Clamp if b < cfg.b_min => (cfg.b_min.min(n_s), true),
        _ => (b, false),
    }
}

fn den_raw(eps: f64, delta: f64, stats: &SampleStats, n_s: usize, bound: BoundKind) -> Result<f64> {
    let tau = eps * stats.den_hat;
    match bound {
        BoundKind::Clt => clt_raw(tau, delta, n_s, stats.sigma_hat),
        BoundKind::Hoeffding => hoeffding_raw(tau, delta, n_s, stats.range_hat),
    }
}

fn num_raw(eps: f64, delta: f64, stats: &SampleStats, n_s: usize, bound: BoundKind) -> Result<f64> {
    let spread = match bound {
        BoundKind::Clt => stats.trace_cov_hat.sqrt(),
        BoundKind::Hoeffding => stats.num_range_hat,
    };
    let tau = eps * stats.num_norm_hat;
    if tau == 0.0 {
        // A zero numerator leaves no relative tolerance: either nothing varies
        // or everything must be read.
        return Ok(if spread == 0.0 { 0.0 } else { f64::INFINITY });
    }
    match bound {
        BoundKind::Clt => clt_raw(tau, delta, n_s, spread),
        BoundKind::Hoeffding => hoeffding_raw(tau, delta, n_s, spread),
    }
}

fn single(raw: f64, n_s: usize, cfg: &BudgetConfig) -> BudgetResult {
    let (b, clamped) = clamp_budget(raw, n_s, cfg);
    BudgetResult {
        b,
        eps_split: None,
        kind: cfg.bound,
        clamped,
        raw,
    }
}

/// Budget for an `(eps, delta)` relative approximation of `D`:
/// tolerance `eps * D_hat`, spread `sigma_hat` (or `range_hat` for Hoeffding).
pub fn budget_denominator(
    eps: f64,
    delta: f64,
    stats: &SampleStats,
    n_s: usize,
    cfg: &BudgetConfig,
) -> Result<BudgetResult> {
    Ok(single(
        den_raw(eps, delta, stats, n_s, cfg.bound)?,
        n_s,
        cfg,
    ))
}

/// Budget for an `(eps, delta)` relative approximation of `N`:
/// tolerance `eps * ||N_hat||`, spread `sqrt(trace_cov_hat)`.
pub fn budget_numerator(
    eps: f64,
    delta: f64,
    stats: &SampleStats,
    n_s: usize,
    cfg: &BudgetConfig,
) -> Result<BudgetResult> {
    Ok(single(
        num_raw(eps, delta, stats, n_s, cfg.bound)?,
        n_s,
        cfg,
    ))
}

/// The `(eps', delta')` lattice searched by [`budget_combined`].
///
/// `eps'` is spaced geometrically in the ratio `eps' / (eps - eps')`, which
/// covers `[eps/50, 49 eps/50]` with dense points near both steep ends.
/// `delta'` is linear on `[delta/g, delta - delta/g]`. The midpoint
/// `(eps/2, delta/2)` is always included.
pub fn split_grid(eps: f64, delta: f64, grid_points: usize) -> (Vec<f64>, Vec<f64>) {
    let g = grid_points.max(2);
    const SPAN: f64 = 49.0;
    let mut eps_grid: Vec<f64> = (0..g)
        .map(|j| {
            let e = 2.0 * j as f64 / (g - 1) as f64 - 1.0;
            let r = SPAN.powf(e);
            eps * r / (1.0 + r)
        })
        .collect();
    let lo = delta / g as f64;
    let mut delta_grid: Vec<f64> = (0..g)
        .map(|j| lo + j as f64 * (delta - 2.0 * lo) / (g - 1) as f64)
        .collect();
    if g % 2 == 1 {
        eps_grid[g / 2] = eps / 2.0;
        delta_grid[g / 2] = delta / 2.0;
    } else {
        eps_grid.insert(g / 2, eps / 2.0);
        delta_grid.insert(g / 2, delta / 2.0);
    }
    (eps_grid, delta_grid)
}

/// Budget for an `(eps, delta)` relative approximation of the attention
/// output: minimizes `max(b_D(eps'/2, delta'), b_N((eps - eps')/2, delta - delta'))`
/// over the split lattice.
pub fn budget_combined(
    eps: f64,
    delta: f64,
    stats: &SampleStats,
    n_s: usize,
    cfg: &BudgetConfig,
) -> Result<BudgetResult> {
    if cfg.grid_points < 2 {
        return Err(Error::InvalidParameter("grid_points must be >= 2".into()));
    }
    check_tolerance(eps, delta)?;
    let (eps_grid, delta_grid) = split_grid(eps, delta, cfg.grid_points);
    let mut best: Option<(f64, f64, f64)> = None;
    for &e in &eps_grid {
        for &dl in &delta_grid {
            let bd = den_raw(e / 2.0, dl, stats, n_s, cfg.bound)?;
            let bn = num_raw((eps - e) / 2.0, delta - dl, stats, n_s, cfg.bound)?;
            let cost = bd.max(bn);
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, e, dl));
            }
        }
    }
    let (raw, e, dl) = best.expect("grid is non-empty");
    let (b, clamped) = clamp_budget(raw, n_s, cfg);
    Ok(BudgetResult {
        b,
        eps_split: Some((e, dl)),
        kind: cfg.bound,
        clamped,
        raw,
    })
}

/// Everything produced by one verified attention call.
#[derive(Debug, Clone)]
pub struct VAttention {
    pub output: AttentionOutput,
    pub selection: Selection,
    pub budget: BudgetResult,
    /// `None` when there was no residual to sample.
    pub stats: Option<SampleStats>,
    /// Tokens read for the base sample (empty under oracle statistics).
    pub base_sample: Vec<usize>,
}

impl VAttention {
    /// Fraction of tokens whose KV rows were read, counting the base sample.
    pub fn density(&self) -> f64 {
        let n = self.selection.n_total();
        let mut read = vec![false; n];
        for &i in self.selection.indices().iter().chain(&self.base_sample) {
            read[i] = true;
        }
        read.iter().filter(|&&r| r).count() as f64 / n as f64
    }
}

/// Verified sparse attention with the exact top-k predictor.
pub fn vattention(
    cache: &KvCache,
    q: &[f64],
    params: &GuaranteeParams,
    rng: &mut RngStream,
) -> Result<VAttention> {
    vattention_with(cache, q, params, &OracleTopK, rng)
}

/// Verified sparse attention with a caller-supplied heavy-hitter predictor.
///
/// Sink, local window and predicted top-k tokens are kept deterministically.
/// A base sample of the remaining tokens sizes the dynamic sample, which is
/// then drawn uniformly from the residual and combined with the static set
/// under importance weights `n_s / b`.
pub fn vattention_with(
    cache: &KvCache,
    q: &[f64],
    params: &GuaranteeParams,
    predictor: &dyn TopPredictor,
    rng: &mut RngStream,
) -> Result<VAttention> {
    params.validate()?;
    check_query(cache, q)?;
    let n = cache.n();
    let cfg = BudgetConfig::from(params);

    let mut is_static = vec![false; n];
    for i in sink_indices(n, params.sink_count(n))?
        .into_iter()
        .chain(local_indices(n, params.local_count(n))?)
    {
        is_static[i] = true;
    }
    let fixed: Vec<usize> = (0..n).filter(|&i| is_static[i]).collect();
    let top_count = params.top_count(n).min(n - fixed.len());
    for i in predictor.predict(cache, q, top_count, &fixed)? {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        is_static[i] = true;
    }
    let static_set: Vec<usize> = (0..n).filter(|&i| is_static[i]).collect();
    let n_s = n - static_set.len();

    if n_s == 0 {
        let selection = compose(&[Fragment::Deterministic(static_set)], n)?;
        let output = sdpa_selected(cache, q, &selection, params.scale_logits)?;
        return Ok(VAttention {
            output,
            selection,
            budget: BudgetResult {
                b: 0,
                eps_split: None,
                kind: params.bound,
                clamped: false,
                raw: 0.0,
            },
            stats: None,
            base_sample: Vec::new(),
        });
    }

    let base_sample = match params.stats_source {
        StatsSource::BaseSample => uniform_residual(n, &static_set, params.base_count(n_s), rng)?
            .indices()
            .to_vec(),
        StatsSource::Oracle => Vec::new(),
    };
    let stats = match params.stats_source {
        StatsSource::BaseSample => {
            compute_stats(cache, q, &static_set, &base_sample, params.scale_logits)?
        }
        StatsSource::Oracle => {
            let residual: Vec<usize> = (0..n).filter(|&i| !is_static[i]).collect();
            compute_stats(cache, q, &static_set, &residual, params.scale_logits)?
        }
    }
    .with_range_inflation(params.range_inflation);

    let mut budget = match params.relaxation {
        Relaxation::DenominatorOnly => {
            budget_denominator(params.eps, params.delta, &stats, n_s, &cfg)?
        }
        Relaxation::Full => budget_combined(params.eps, params.delta, &stats, n_s, &cfg)?,
    };
    if static_set.is_empty() && budget.b == 0 {
        budget.b = 1;
    }

    let dynamic = if params.reuse_base && !base_sample.is_empty() {
        let mut drawn = base_sample.clone();
        if budget.b > drawn.len() {
            let mut taken = static_set.clone();
            taken.extend_from_slice(&base_sample);
            let extra = uniform_residual(n, &taken, budget.b - drawn.len(), rng)?;
            drawn.extend_from_slice(extra.indices());
        }
        drawn.sort_unstable();
        budget.b = drawn.len();
        let prob = drawn.len() as f64 / n_s as f64;
        Fragment::uniform(drawn, prob)
    } else {
        uniform_residual(n, &static_set, budget.b, rng)?
    };

    let selection = compose(&[Fragment::Deterministic(static_set), dynamic], n)?;
    let output = sdpa_selected(cache, q, &selection, params.scale_logits)?;
    Ok(VAttention {
        output,
        selection,
        budget,
        stats: Some(stats),
        base_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::full_sdpa;
    use crate::kv::Matrix;
    use crate::params::GuaranteeParams;

    fn stats(den: f64, sigma: f64, num_norm: f64, trace: f64) -> SampleStats {
        SampleStats {
            trace_cov_hat: trace,
            sigma_hat: sigma,
            num_norm_hat: num_norm,
            den_hat: den,
            range_hat: 2.0 * sigma,
            num_range_hat: 2.0 * trace.sqrt(),
            base_indices: vec![],
            shift: 0.0,
            den_static: 0.0,
        }
    }

    fn cfg(bound: BoundKind) -> BudgetConfig {
        BudgetConfig {
            bound,
            ..BudgetConfig::default()
        }
    }

    #[test]
    fn clt_examples() {
        assert_eq!(clt_budget(5.0, 0.05, 1000, 0.0).unwrap(), 0);
        // (1.959964 * 10)^2 = 384.146
        assert_eq!(clt_budget(5.0, 0.05, 1000, 0.05).unwrap(), 385);
        // (2.241403 * 10)^2 = 502.389
        assert_eq!(clt_budget(5.0, 0.025, 1000, 0.05).unwrap(), 503);
        let a = clt_raw(5.0, 0.05, 1000, 0.05).unwrap();
        let b = clt_raw(10.0, 0.05, 1000, 0.05).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
        assert!(matches!(
            clt_budget(0.0, 0.05, 10, 1.0),
            Err(Error::InvalidTolerance(_))
        ));
        assert!(matches!(
            clt_budget(1.0, 1.0, 10, 1.0),
            Err(Error::InvalidTolerance(_))
        ));
    }

    #[test]
    fn hoeffding_examples() {
        // 1000^2 * 0.01 * ln 10 / 50 = 460.517
        assert_eq!(hoeffding_budget(5.0, 0.2, 1000, 0.1).unwrap(), 461);
        assert_eq!(clt_budget(5.0, 0.2, 1000, 0.05).unwrap(), 165);
        let ratio: f64 = 461.0 / 165.0;
        assert!((ratio - 2.80).abs() < 0.01);
        assert_eq!(hoeffding_budget(5.0, 0.2, 1000, 0.0).unwrap(), 0);
        let s = stats(100.0, 0.0, 100.0, 0.0);
        let r = budget_denominator(0.1, 0.2, &s, 1000, &cfg(BoundKind::Hoeffding)).unwrap();
        assert_eq!((r.b, r.clamped), (32, true));
    }

    #[test]
    fn denominator_examples() {
        let s = stats(100.0, 0.05, 100.0, 0.01);
        let c = cfg(BoundKind::Clt);
        // 25 z^2: 96.04 at delta 0.05, 125.60 at delta 0.025
        assert_eq!(budget_denominator(0.1, 0.05, &s, 1000, &c).unwrap().b, 97);
        let r = budget_denominator(0.1, 0.025, &s, 1000, &c).unwrap();
        assert_eq!((r.b, r.clamped, r.eps_split), (126, false, None));

        let r = budget_denominator(0.99, 0.05, &stats(100.0, 1e-4, 1.0, 0.0), 1000, &c).unwrap();
        assert_eq!((r.b, r.clamped), (32, true));

        let r = budget_denominator(0.1, 0.05, &stats(100.0, 1e3, 1.0, 0.0), 1000, &c).unwrap();
        assert_eq!((r.b, r.clamped), (1000, true));

        // residual smaller than b_min
        let r = budget_denominator(0.5, 0.5, &stats(100.0, 1e-6, 1.0, 0.0), 20, &c).unwrap();
        assert_eq!((r.b, r.clamped), (20, true));

        let off = BudgetConfig {
            floor_rule: FloorRule::Off,
            ..c
        };
        let r = budget_denominator(0.99, 0.05, &stats(100.0, 1e-4, 1.0, 0.0), 1000, &off).unwrap();
        assert_eq!((r.b, r.clamped), (1, false));
    }

    #[test]
    fn numerator_examples() {
        let c = cfg(BoundKind::Clt);
        let r = budget_numerator(0.1, 0.05, &stats(100.0, 0.05, 100.0, 0.0), 1000, &c).unwrap();
        assert_eq!(r.b, 32);
        // sqrt(trace) = 2 sigma = 0.1 and ||N|| = D = 100: four times the denominator budget
        let s = stats(100.0, 0.05, 100.0, 0.01);
        assert_eq!(budget_numerator(0.1, 0.025, &s, 1000, &c).unwrap().b, 503);
        assert_eq!(budget_numerator(0.1, 0.05, &s, 1000, &c).unwrap().b, 385);
        let loose = budget_numerator(0.1, 0.05, &s, 1000, &c).unwrap().raw;
        let tight = budget_numerator(0.1, 0.01, &s, 1000, &c).unwrap().raw;
        assert!(tight > loose);

        let zero_n = stats(100.0, 0.05, 0.0, 0.01);
        assert_eq!(
            budget_numerator(0.1, 0.05, &zero_n, 1000, &c).unwrap().b,
            1000
        );
        let zero_both = stats(100.0, 0.05, 0.0, 0.0);
        assert_eq!(
            budget_numerator(0.1, 0.05, &zero_both, 1000, &c).unwrap().b,
            32
        );
    }

    #[test]
    fn split_grid_contains_midpoint() {
        for g in [2, 3, 4, 15, 16] {
            let (e, d) = split_grid(0.1, 0.2, g);
            assert!(e.contains(&0.05));
            assert!(d.contains(&0.1));
            assert!(e.iter().all(|&x| x > 0.0 && x < 0.1));
            assert!(d.iter().all(|&x| x >= 0.2 / g as f64 - 1e-15 && x < 0.2));
            assert!(e.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn combined_symmetric_split() {
        // sigma / D == sqrt(trace) / ||N|| makes both curves identical
        let s = stats(100.0, 0.05, 200.0, 0.01);
        let c = cfg(BoundKind::Clt);
        let r = budget_combined(0.1, 0.1, &s, 100_000, &c).unwrap();
        let (e, d) = r.eps_split.unwrap();
        assert_eq!(e, 0.05);
        assert_eq!(d, 0.05);
        let expect = clt_raw(0.025 * 100.0, 0.05, 100_000, 0.05).unwrap();
        assert!((r.raw - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn combined_zero_numerator_variance_favours_denominator() {
        let s = stats(100.0, 0.05, 200.0, 0.0);
        let c = cfg(BoundKind::Clt);
        let r = budget_combined(0.1, 0.1, &s, 100_000, &c).unwrap();
        let (eg, dg) = split_grid(0.1, 0.1, 15);
        let (e, d) = r.eps_split.unwrap();
        assert_eq!(e, *eg.last().unwrap());
        assert_eq!(d, *dg.last().unwrap());
        let expect = clt_raw(e / 2.0 * 100.0, d, 100_000, 0.05).unwrap();
        assert!((r.raw - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn combined_never_exceeds_midpoint() {
        let c = cfg(BoundKind::Clt);
        for (sigma, trace) in [(0.05, 0.01), (0.5, 0.0001), (0.001, 4.0), (1.0, 1.0)] {
            let s = stats(100.0, sigma, 150.0, trace);
            let r = budget_combined(0.2, 0.1, &s, 1 << 20, &c).unwrap();
            let mid_d = budget_denominator(0.05, 0.05, &s, 1 << 20, &c).unwrap().raw;
            let mid_n = budget_numerator(0.05, 0.05, &s, 1 << 20, &c).unwrap().raw;
            assert!(r.raw <= mid_d.max(mid_n));
        }
        assert!(budget_combined(
            0.1,
            0.1,
            &stats(1.0, 1.0, 1.0, 1.0),
            10,
            &BudgetConfig {
                grid_points: 1,
                ..c
            }
        )
        .is_err());
    }

    fn ln_cache(values: &[f64]) -> KvCache {
        // d = 1, key = ln v so that exp(<k, 1>) = v
        let keys =
            Matrix::from_vec(values.len(), 1, values.iter().map(|v| v.ln()).collect()).unwrap();
        let vals = Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap();
        KvCache::new(keys, vals).unwrap()
    }

    #[test]
    fn stats_on_one_to_six() {
        let c = ln_cache(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let all: Vec<usize> = (0..6).collect();
        let s = compute_stats(&c, &[1.0], &[], &all, false).unwrap();
        // population std of {1..6}, in the shifted scale exp(-ln 6)
        let sigma = s.sigma_hat * s.shift.exp();
        assert!((sigma - 1.707825127659933).abs() < 1e-12);
        assert!((s.den_hat * s.shift.exp() - 21.0).abs() < 1e-12);
        assert!((s.range_hat * s.shift.exp() - 5.0).abs() < 1e-12);
        assert!(s.sigma_hat <= s.range_hat);
    }

    #[test]
    fn stats_constant_population() {
        let keys =
            Matrix::from_vec(5, 2, vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let vals =
            Matrix::from_vec(5, 2, vec![9.0, 9.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = KvCache::new(keys, vals).unwrap();
        let s = compute_stats(&c, &[1.0, 0.0], &[0], &[1, 2, 3, 4], false).unwrap();
        assert_eq!(s.sigma_hat, 0.0);
        assert_eq!(s.range_hat, 0.0);
        // coordinates {1,3,5,7} and {2,4,6,8}: variance 5 each
        assert!((s.trace_cov_hat - 10.0).abs() < 1e-12);
    }

    #[test]
    fn stats_exhaustive_base_gives_exact_denominator() {
        let vals: Vec<f64> = (1..=20)
            .map(|i| 0.3 * i as f64 + (i as f64).sin())
            .map(|v| v.abs() + 0.1)
            .collect();
        let c = ln_cache(&vals);
        let static_set = [0, 5, 19];
        let residual: Vec<usize> = (0..20).filter(|i| !static_set.contains(i)).collect();
        let s = compute_stats(&c, &[1.0], &static_set, &residual, false).unwrap();
        let exact = full_sdpa(&c, &[1.0], false).unwrap();
        let den = s.den_hat.ln() + s.shift;
        assert!((den - exact.log_denom()).abs() < 1e-12);
        assert!(s.den_hat >= s.den_static);
    }

    #[test]
    fn stats_errors() {
        let c = ln_cache(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            compute_stats(&c, &[1.0], &[0], &[], false),
            Err(Error::EmptyBaseSample)
        ));
        assert!(compute_stats(&c, &[1.0], &[0], &[0], false).is_err());
        assert!(matches!(
            compute_stats(&c, &[1.0], &[], &[1, 1], false),
            Err(Error::DuplicateIndex(1))
        ));
    }

    fn gaussianish_cache(n: usize, d: usize, seed: u64) -> KvCache {
        let mut rng = RngStream::new(seed, 99);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| rng.below(2001) as f64 / 1000.0 - 1.0)
                .collect()
        };
        let keys = Matrix::from_vec(n, d, draw(n * d)).unwrap();
        let vals = Matrix::from_vec(n, d, draw(n * d)).unwrap();
        KvCache::new(keys, vals).unwrap()
    }

    #[test]
    fn vattention_all_deterministic_is_exact() {
        let c = gaussianish_cache(40, 4, 1);
        let q = [0.5, 1.0, -0.3, 0.2];
        let mut p = GuaranteeParams::new(0.1, 0.1).with_fractions(0.0, 0.0, 0.0, 0.0);
        p.sink_abs = Some(25);
        p.local_abs = Some(15);
        let r = vattention(&c, &q, &p, &mut RngStream::new(0, 0)).unwrap();
        let exact = full_sdpa(&c, &q, true).unwrap();
        assert_eq!(r.budget.b, 0);
        assert!(r.stats.is_none());
        assert_eq!(r.selection.len(), 40);
        assert!(crate::attention::rel_error(&r.output.out, &exact.out).unwrap() < 1e-12);
        assert_eq!(r.density(), 1.0);
    }

    #[test]
    fn vattention_tiny_eps_reads_everything() {
        let c = gaussianish_cache(300, 8, 2);
        let q = [3.0, -2.0, 1.0, 0.5, 2.0, -1.0, 0.0, 1.5];
        let p = GuaranteeParams::new(1e-4, 0.1);
        let r = vattention(&c, &q, &p, &mut RngStream::new(3, 0)).unwrap();
        let exact = full_sdpa(&c, &q, true).unwrap();
        assert!(r.budget.clamped);
        assert_eq!(r.selection.len(), 300);
        assert!(crate::attention::rel_error(&r.output.out, &exact.out).unwrap() < 1e-10);
    }

    #[test]
    fn vattention_is_reproducible_and_well_formed() {
        let c = gaussianish_cache(1000, 8, 3);
        let q = [1.0, 0.0, -1.0, 0.5, 0.5, 2.0, 0.0, 1.0];
        for relaxation in [Relaxation::DenominatorOnly, Relaxation::Full] {
            for reuse_base in [false, true] {
                let mut p = GuaranteeParams::new(0.2, 0.2);
                p.relaxation = relaxation;
                p.reuse_base = reuse_base;
                let a = vattention(&c, &q, &p, &mut RngStream::new(11, 5)).unwrap();
                let b = vattention(&c, &q, &p, &mut RngStream::new(11, 5)).unwrap();
                assert_eq!(a.selection, b.selection);
                assert_eq!(a.output.out, b.output.out);
                let n_static = a.selection.n_static();
                let n_s = 1000 - n_static;
                assert!(a.selection.is_uniform_sampled());
                assert_eq!(a.selection.sampled_indices().len(), a.budget.b);
                let p_dyn = a.selection.probs()[n_static];
                assert_eq!(p_dyn, a.budget.b as f64 / n_s as f64);
                assert_eq!(a.budget.eps_split.is_some(), relaxation == Relaxation::Full);
                if reuse_base {
                    for i in &a.base_sample {
                        assert!(a.selection.sampled_indices().contains(i));
                    }
                }
            }
        }
    }

    #[test]
    fn vattention_rejects_bad_params() {
        let c = gaussianish_cache(10, 2, 4);
        let p = GuaranteeParams::new(0.1, 0.1).with_fractions(0.5, 0.5, 0.0, 0.0);
        assert!(vattention(&c, &[1.0, 1.0], &p, &mut RngStream::new(0, 0)).is_err());
    }
}
