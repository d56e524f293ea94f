//! Index selection strategies and their composition into a [`Selection`].
//!
//! Deterministic selectors (sink, local window, oracle top-k/top-p) return
//! plain index lists. Randomized selectors return fragments carrying their
//! inclusion probabilities, and [`compose`] merges everything into one
//! selection with correct probability bookkeeping.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use crate::attention::{dot, logits, norm, scores_from_logits};
use crate::error::{Error, Result};
use crate::kv::{check_query, KvCache};
use crate::rng::RngStream;
use crate::selection::Selection;

/// The first `count` indices of an `n`-token cache.
pub fn sink_indices(n: usize, count: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::EmptyCache);
    }
    if count > n {
        return Err(Error::CountOutOfRange {
            count,
            available: n,
        });
    }
    Ok((0..count).collect())
}

/// The last `count` indices of an `n`-token cache.
pub fn local_indices(n: usize, count: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::EmptyCache);
    }
    if count > n {
        return Err(Error::CountOutOfRange {
            count,
            available: n,
        });
    }
    Ok((n - count..n).collect())
}

fn exclusion_mask(n: usize, excluded: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &i in excluded {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        mask[i] = true;
    }
    Ok(mask)
}

/// The `count` non-excluded tokens with the largest inner product with `q`,
/// in descending order, ties to the lower index.
pub fn oracle_topk(
    cache: &KvCache,
    q: &[f64],
    count: usize,
    excluded: &[usize],
) -> Result<Vec<usize>> {
    check_query(cache, q)?;
    let mask = exclusion_mask(cache.n(), excluded)?;
    let mut cand: Vec<(usize, f64)> = (0..cache.n())
        .filter(|&i| !mask[i])
        .map(|i| (i, dot(cache.key(i), q)))
        .collect();
    if count > cand.len() {
        return Err(Error::CountOutOfRange {
            count,
            available: cand.len(),
        });
    }
    let cmp = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if count == 0 {
        return Ok(Vec::new());
    }
    if count < cand.len() {
        cand.select_nth_unstable_by(count - 1, cmp);
        cand.truncate(count);
    }
    cand.sort_by(cmp);
    Ok(cand.into_iter().map(|(i, _)| i).collect())
}

/// Shortest prefix of the descending score order whose scores sum to at
/// least `p`. Always contains the top-1 token.
pub fn oracle_topp(cache: &KvCache, q: &[f64], p: f64, scale: bool) -> Result<Vec<usize>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "top-p threshold {p} not in (0, 1)"
        )));
    }
    let profile = scores_from_logits(&logits(cache, q, scale)?);
    let mut acc = 0.0;
    let mut out = Vec::new();
    for &i in &profile.sorted_order {
        out.push(i);
        acc += profile.scores[i];
        if acc >= p {
            break;
        }
    }
    Ok(out)
}

/// Pluggable heavy-hitter predictor used to fill the top-k slot.
pub trait TopPredictor {
    fn predict(
        &self,
        cache: &KvCache,
        q: &[f64],
        count: usize,
        excluded: &[usize],
    ) -> Result<Vec<usize>>;
}

/// Exact top-k by inner product.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleTopK;

impl TopPredictor for OracleTopK {
    fn predict(
        &self,
        cache: &KvCache,
        q: &[f64],
        count: usize,
        excluded: &[usize],
    ) -> Result<Vec<usize>> {
        oracle_topk(cache, q, count, excluded)
    }
}

/// A piece of a selection prior to composition.
#[derive(Debug, Clone, PartialEq)]
pub enum Fragment {
    Deterministic(Vec<usize>),
    Sampled {
        indices: Vec<usize>,
        probs: Vec<f64>,
    },
}

impl Fragment {
    /// Sampled fragment in which every index shares probability `prob`.
    pub fn uniform(indices: Vec<usize>, prob: f64) -> Self {
        let probs = vec![prob; indices.len()];
        Fragment::Sampled { indices, probs }
    }

    pub fn indices(&self) -> &[usize] {
        match self {
            Fragment::Deterministic(ix) => ix,
            Fragment::Sampled { indices, .. } => indices,
        }
    }
}

/// Draws `b` distinct indices uniformly without replacement from the tokens
/// of `0..n` not in `excluded`; each carries inclusion probability `b / n_s`.
///
/// Partial Fisher-Yates over the residual index array. The returned indices
/// are sorted ascending.
pub fn uniform_residual(
    n: usize,
    excluded: &[usize],
    b: usize,
    rng: &mut RngStream,
) -> Result<Fragment> {
    let mask = exclusion_mask(n, excluded)?;
    let mut residual: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
    let n_s = residual.len();
    if b > n_s {
        return Err(Error::BudgetExceedsResidual {
            budget: b,
            residual: n_s,
        });
    }
    partial_shuffle(&mut residual, b, rng);
    residual.truncate(b);
    residual.sort_unstable();
    let prob = if n_s == 0 { 1.0 } else { b as f64 / n_s as f64 };
    Ok(Fragment::uniform(residual, prob))
}

/// Moves a uniform random `k`-subset of `items` into `items[..k]`.
pub(crate) fn partial_shuffle<T>(items: &mut [T], k: usize, rng: &mut RngStream) {
    let len = items.len();
    for i in 0..k.min(len) {
        let j = i + rng.below(len - i);
        items.swap(i, j);
    }
}

/// Sign-random-projection LSH sampler configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LshSpec {
    pub k_bits: usize,
    pub l_tables: usize,
    pub seed: u64,
}

/// Probability that a token at angle `theta` from the query collides with it
/// in at least one of `l` tables of `k` sign bits: `1 - (1 - p_c^k)^l` with
/// `p_c = 1 - theta / pi`.
pub fn collision_probability(theta: f64, k_bits: usize, l_tables: usize) -> f64 {
    let pc = (1.0 - theta / PI).clamp(0.0, 1.0);
    let per_table = pc.powi(k_bits as i32);
    1.0 - (1.0 - per_table).powi(l_tables as i32)
}

/// Angle between a key and the query; zero-norm keys sit at `pi / 2`.
fn angle(key: &[f64], q: &[f64], q_norm: f64) -> f64 {
    let kn = norm(key);
    if kn == 0.0 {
        return PI / 2.0;
    }
    (dot(key, q) / (kn * q_norm)).clamp(-1.0, 1.0).acos()
}

/// Per-token collision flags for one randomized construction of the tables.
pub fn lsh_collisions(cache: &KvCache, q: &[f64], spec: &LshSpec) -> Result<Vec<bool>> {
    check_query(cache, q)?;
    if spec.k_bits == 0 || spec.l_tables == 0 || spec.k_bits > 64 {
        return Err(Error::InvalidParameter(format!(
            "LSH needs 1 <= k_bits <= 64 and l_tables >= 1, got k={} l={}",
            spec.k_bits, spec.l_tables
        )));
    }
    if norm(q) == 0.0 {
        return Err(Error::DegenerateVector);
    }
    let d = cache.d();
    let mut rng = RngStream::new(spec.seed, 0);
    let mut collided = vec![false; cache.n()];
    let mut planes = vec![0.0; spec.k_bits * d];
    let signature = |planes: &[f64], x: &[f64]| -> u64 {
        planes
            .chunks_exact(d)
            .enumerate()
            .fold(0u64, |acc, (b, r)| acc | (((dot(r, x) >= 0.0) as u64) << b))
    };
    for _ in 0..spec.l_tables {
        for x in planes.iter_mut() {
            *x = StandardNormal.sample(rng.rng());
        }
        let qs = signature(&planes, q);
        for (i, hit) in collided.iter_mut().enumerate() {
            if !*hit && signature(&planes, cache.key(i)) == qs {
                *hit = true;
            }
        }
    }
    Ok(collided)
}

/// LSH retrieval viewed as a sampler: tokens colliding with the query in at
/// least one table, each weighted by its collision probability.
pub fn lsh_selection(cache: &KvCache, q: &[f64], spec: &LshSpec) -> Result<Selection> {
    let frag = lsh_fragment(cache, q, spec)?;
    compose(&[frag], cache.n())
}

pub fn lsh_fragment(cache: &KvCache, q: &[f64], spec: &LshSpec) -> Result<Fragment> {
    let collided = lsh_collisions(cache, q, spec)?;
    let q_norm = norm(q);
    let mut indices = Vec::new();
    let mut probs = Vec::new();
    for (i, hit) in collided.into_iter().enumerate() {
        if !hit {
            continue;
        }
        let p = collision_probability(angle(cache.key(i), q, q_norm), spec.k_bits, spec.l_tables);
        // A collision at computed probability 0 can only come from an exact
        // tie on a hyperplane; such a token carries no estimator weight.
        if p > 0.0 {
            indices.push(i);
            probs.push(p);
        }
    }
    Ok(Fragment::Sampled { indices, probs })
}

/// Merges fragments into a selection over `n` tokens.
///
/// Deterministic indices are unioned (probability 1) and come first, sorted
/// ascending. Sampled indices follow, sorted ascending; a sampled index that
/// is also deterministic keeps probability 1.
pub fn compose(fragments: &[Fragment], n: usize) -> Result<Selection> {
    let mut deterministic = vec![false; n];
    for frag in fragments {
        if let Fragment::Deterministic(ix) = frag {
            for &i in ix {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, n });
                }
                deterministic[i] = true;
            }
        }
    }
    let mut sampled: Vec<Option<f64>> = vec![None; n];
    for frag in fragments {
        if let Fragment::Sampled { indices, probs } = frag {
            if indices.len() != probs.len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} probabilities", indices.len()),
                    got: format!("{} probabilities", probs.len()),
                });
            }
            for (&i, &p) in indices.iter().zip(probs) {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, n });
                }
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidProbability { index: i, prob: p });
                }
                if deterministic[i] {
                    continue;
                }
                match sampled[i] {
                    None => sampled[i] = Some(p),
                    Some(prev) if prev == p => {}
                    Some(_) => return Err(Error::DuplicateIndex(i)),
                }
            }
        }
    }
    let mut indices: Vec<usize> = (0..n).filter(|&i| deterministic[i]).collect();
    let n_static = indices.len();
    let mut probs = vec![1.0; n_static];
    for (i, p) in sampled.iter().enumerate() {
        if let Some(p) = p {
            indices.push(i);
            probs.push(*p);
        }
    }
    Selection::new(indices, probs, n, n_static)
}
