//! Exact and sparse scaled dot-product attention for a single query.
//!
//! All kernels exponentiate logits after subtracting one shared shift (the
//! largest logit among the tokens being summed), so `exp` never overflows.
//! Importance weights `1/p` are applied after the shift.

use crate::error::{Error, Result};
use crate::kv::{check_query, KvCache};
use crate::selection::Selection;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
fn logit_scale(cache: &KvCache, scale: bool) -> f64 {
    if scale {
        1.0 / (cache.d() as f64).sqrt()
    } else {
        1.0
    }
}

/// Logit of a single token, `<K[i], q>` optionally divided by `sqrt(d)`.
#[inline]
pub fn logit(cache: &KvCache, q: &[f64], i: usize, scale: bool) -> f64 {
    dot(cache.key(i), q) * logit_scale(cache, scale)
}

/// Logits of every token.
pub fn logits(cache: &KvCache, q: &[f64], scale: bool) -> Result<Vec<f64>> {
    check_query(cache, q)?;
    let s = logit_scale(cache, scale);
    Ok((0..cache.n()).map(|i| dot(cache.key(i), q) * s).collect())
}

/// Result of one attention evaluation.
///
/// The normalizer is kept in shifted form: the true denominator is
/// `shifted_denom * exp(logit_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub out: Vec<f64>,
    shifted_denom: f64,
    logit_max: f64,
}

impl AttentionOutput {
    /// Normalizer in the shifted scale (`sum of w_i exp(l_i - logit_max)`).
    pub fn shifted_denom(&self) -> f64 {
        self.shifted_denom
    }

    /// The shift applied before exponentiation.
    pub fn logit_max(&self) -> f64 {
        self.logit_max
    }

    /// `ln D`.
    pub fn log_denom(&self) -> f64 {
        self.shifted_denom.ln() + self.logit_max
    }

    /// `D` on the true scale; may overflow to infinity for large logits.
    pub fn denom(&self) -> f64 {
        self.log_denom().exp()
    }

    /// Unnormalized numerator `N = out * D`, expressed in the scale `exp(-shift)`.
    pub fn numerator_at_shift(&self, shift: f64) -> Vec<f64> {
        let f = (self.log_denom() - shift).exp();
        self.out.iter().map(|x| x * f).collect()
    }
}

/// Softmax attention scores of every token and their descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreProfile {
    pub scores: Vec<f64>,
    /// Token indices by descending score, ties broken by lower index.
    pub sorted_order: Vec<usize>,
}

/// Indices sorted by descending logit, ties to the lower index.
pub(crate) fn descending_order(logits: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order
}

pub fn attention_scores(cache: &KvCache, q: &[f64], scale: bool) -> Result<ScoreProfile> {
    let ls = logits(cache, q, scale)?;
    Ok(scores_from_logits(&ls))
}

pub(crate) fn scores_from_logits(ls: &[f64]) -> ScoreProfile {
    let m = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = ls.iter().map(|l| (l - m).exp()).collect();
    let sum: f64 = ex.iter().sum();
    ScoreProfile {
        scores: ex.iter().map(|e| e / sum).collect(),
        sorted_order: descending_order(ls),
    }
}

/// Dense attention over every token.
pub fn full_sdpa(cache: &KvCache, q: &[f64], scale: bool) -> Result<AttentionOutput> {
    let ls = logits(cache, q, scale)?;
    let entries = (0..cache.n()).map(|i| (i, ls[i], 1.0));
    Ok(weighted_attention(cache, entries))
}

/// Importance-weighted sparse attention over a selection. With every
/// probability equal to 1 this is plain sparse attention over the selected
/// set; with the full index set it reproduces [`full_sdpa`].
pub fn sdpa_selected(
    cache: &KvCache,
    q: &[f64],
    sel: &Selection,
    scale: bool,
) -> Result<AttentionOutput> {
    check_query(cache, q)?;
    if sel.is_empty() {
        return Err(Error::EmptySelection);
    }
    if sel.n_total() != cache.n() {
        return Err(Error::ShapeMismatch {
            expected: format!("selection over n = {}", cache.n()),
            got: format!("selection over n = {}", sel.n_total()),
        });
    }
    for (i, p) in sel.iter() {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidProbability { index: i, prob: p });
        }
    }
    let entries: Vec<(usize, f64, f64)> = sel
        .iter()
        .map(|(i, p)| (i, logit(cache, q, i, scale), p))
        .collect();
    Ok(weighted_attention(cache, entries.into_iter()))
}

fn weighted_attention(
    cache: &KvCache,
    entries: impl Iterator<Item = (usize, f64, f64)> + Clone,
) -> AttentionOutput {
    let shift = entries
        .clone()
        .map(|(_, l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut num = vec![0.0; cache.d()];
    let mut den = 0.0;
    for (i, l, p) in entries {
        let w = (l - shift).exp() / p;
        den += w;
        for (acc, v) in num.iter_mut().zip(cache.value(i)) {
            *acc += w * v;
        }
    }
    for x in &mut num {
        *x /= den;
    }
    AttentionOutput {
        out: num,
        shifted_denom: den,
        logit_max: shift,
    }
}

/// `||est - reference||_2 / ||reference||_2`.
pub fn rel_error(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("length {}", reference.len()),
            got: format!("length {}", est.len()),
        });
    }
    let r = norm(reference);
    if r == 0.0 {
        return Err(Error::ZeroReference);
    }
    let diff: f64 = est
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / r)
}

/// `|D_est - D| / D`, computed in log space.
pub fn denom_rel_error(est: &AttentionOutput, exact: &AttentionOutput) -> f64 {
    (est.log_denom() - exact.log_denom()).exp_m1().abs()
}
