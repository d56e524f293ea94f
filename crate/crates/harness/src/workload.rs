//! Synthetic KV caches covering sharp and long-tailed score regimes.
//!
//! Generators assume scaled logits (`<k, q> / sqrt(d)`). Every entry is
//! rounded to `f32` so a generated cache survives a file round trip exactly.
//!
//! Values are correlated with keys: `v = 1 + rho * z(k) + sqrt(1 - rho^2) * g`
//! where `z` standardizes each key column and `g` is white noise. Without that
//! coupling a top-k subset would be statistically indistinguishable from a
//! random subset of the same size.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use vattention::{KvCache, Matrix, QueryBatch, RngStream};

use crate::error::{invalid, HarnessError, Result};

pub const VALUE_KEY_CORR: f64 = 0.5;
const ZIPF_QUERY_NOISE: f64 = 0.5;
const CLUSTER_SCALE: f64 = 0.5;
const CLUSTER_QUERY_NOISE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    /// Scores of the first query follow `rank^-s` exactly.
    ZipfScores { s: f64 },
    /// Logits i.i.d. `N(0, jitter^2)`.
    FlatScores { jitter: f64 },
    /// Keys drawn around `cluster_count` centers; queries aim at one center.
    GaussianKeys { cluster_count: usize },
    /// Standard normal keys with a fraction scaled by `outlier_gain`.
    OutlierMix {
        outlier_frac: f64,
        outlier_gain: f64,
    },
}

impl Dist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Dist::ZipfScores { s } if !(s.is_finite() && s > 0.0) => {
                Err(invalid(format!("zipf exponent {s} must be > 0")))
            }
            Dist::FlatScores { jitter } if !(jitter.is_finite() && jitter >= 0.0) => {
                Err(invalid(format!("jitter {jitter} must be >= 0")))
            }
            Dist::GaussianKeys { cluster_count: 0 } => Err(invalid("cluster count must be >= 1")),
            Dist::OutlierMix {
                outlier_frac,
                outlier_gain,
            } if !((0.0..=1.0).contains(&outlier_frac)
                && outlier_gain.is_finite()
                && outlier_gain > 0.0) =>
            {
                Err(invalid(format!(
                    "outlier fraction {outlier_frac} must be in [0, 1] and gain {outlier_gain} > 0"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Dist::ZipfScores { .. } => "zipf",
            Dist::FlatScores { .. } => "flat",
            Dist::GaussianKeys { .. } => "gauss",
            Dist::OutlierMix { .. } => "outlier",
        }
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Dist::ZipfScores { s } => write!(f, "zipf:{s}"),
            Dist::FlatScores { jitter } => write!(f, "flat:{jitter}"),
            Dist::GaussianKeys { cluster_count } => write!(f, "gauss:{cluster_count}"),
            Dist::OutlierMix {
                outlier_frac,
                outlier_gain,
            } => {
                write!(f, "outlier:{outlier_frac}:{outlier_gain}")
            }
        }
    }
}

/// Parses `zipf[:s]`, `flat[:jitter]`, `gauss[:clusters]` or
/// `outlier[:frac[:gain]]`. Omitted parameters take the defaults
/// `s = 2`, `jitter = 0.1`, `clusters = 8`, `frac = 0.01`, `gain = 4`.
impl FromStr for Dist {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default().trim();
        let args: Vec<&str> = parts.collect();
        let num = |i: usize, default: f64| -> Result<f64> {
            match args.get(i) {
                None => Ok(default),
                Some(a) => a
                    .trim()
                    .parse()
                    .map_err(|_| invalid(format!("bad parameter {a:?} in {s:?}"))),
            }
        };
        let max_args = match name {
            "zipf" | "flat" | "gauss" => 1,
            "outlier" => 2,
            _ => return Err(invalid(format!("unknown distribution {name:?}"))),
        };
        if args.len() > max_args {
            return Err(invalid(format!("too many parameters in {s:?}")));
        }
        let dist = match name {
            "zipf" => Dist::ZipfScores { s: num(0, 2.0)? },
            "flat" => Dist::FlatScores {
                jitter: num(0, 0.1)?,
            },
            "gauss" => {
                let c = num(0, 8.0)?;
                if c.fract() != 0.0 || c < 0.0 {
                    return Err(invalid(format!("cluster count {c} must be an integer")));
                }
                Dist::GaussianKeys {
                    cluster_count: c as usize,
                }
            }
            _ => Dist::OutlierMix {
                outlier_frac: num(0, 0.01)?,
                outlier_gain: num(1, 4.0)?,
            },
        };
        dist.validate()?;
        Ok(dist)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadSpec {
    pub dist: Dist,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.m == 0 {
            return Err(invalid(format!(
                "sizes must be >= 1 (n = {}, d = {}, m = {})",
                self.n, self.d, self.m
            )));
        }
        self.dist.validate()
    }
}

/// Builds the cache and query batch described by `spec`.
pub fn gen_workload(spec: &WorkloadSpec) -> Result<(KvCache, QueryBatch)> {
    spec.validate()?;
    let WorkloadSpec {
        dist,
        n,
        d,
        m,
        seed,
    } = *spec;
    let mut keys_rng = RngStream::new(seed, 0);
    let mut query_rng = RngStream::new(seed, 1);
    let mut value_rng = RngStream::new(seed, 2);
    let sqrt_d = (d as f64).sqrt();

    let mut keys = Matrix::zeros(n, d);
    let mut queries = Matrix::zeros(m, d);
    match dist {
        Dist::ZipfScores { s } => {
            let mut ranks: Vec<usize> = (1..=n).collect();
            ranks.shuffle(keys_rng.rng());
            for (i, &rank) in ranks.iter().enumerate() {
                let row = keys.row_mut(i);
                row[0] = -(rank as f64).ln();
                fill_normal(&mut row[1..], 1.0, &mut keys_rng);
            }
            for j in 0..m {
                let row = queries.row_mut(j);
                row[0] = s * sqrt_d;
                if j > 0 {
                    fill_normal(&mut row[1..], ZIPF_QUERY_NOISE, &mut query_rng);
                }
            }
        }
        Dist::FlatScores { jitter } => {
            fill_normal(keys.as_mut_slice(), 1.0, &mut keys_rng);
            for j in 0..m {
                let row = queries.row_mut(j);
                random_unit(row, &mut query_rng);
                scale(row, jitter * sqrt_d);
            }
        }
        Dist::GaussianKeys { cluster_count } => {
            let mut centers = Matrix::zeros(cluster_count, d);
            fill_normal(centers.as_mut_slice(), CLUSTER_SCALE, &mut keys_rng);
            for i in 0..n {
                let c = keys_rng.below(cluster_count);
                let row = keys.row_mut(i);
                fill_normal(row, 1.0, &mut keys_rng);
                add(row, centers.row(c));
            }
            for j in 0..m {
                let c = query_rng.below(cluster_count);
                let row = queries.row_mut(j);
                fill_normal(row, CLUSTER_QUERY_NOISE, &mut query_rng);
                add(row, centers.row(c));
                normalize(row);
                scale(row, sqrt_d);
            }
        }
        Dist::OutlierMix {
            outlier_frac,
            outlier_gain,
        } => {
            fill_normal(keys.as_mut_slice(), 1.0, &mut keys_rng);
            let count = ((outlier_frac * n as f64).round() as usize).min(n);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(keys_rng.rng());
            for &i in &order[..count] {
                scale(keys.row_mut(i), outlier_gain);
            }
            for j in 0..m {
                let row = queries.row_mut(j);
                random_unit(row, &mut query_rng);
                scale(row, sqrt_d);
            }
        }
    }

    let values = correlated_values(&keys, &mut value_rng);
    round_f32(keys.as_mut_slice());
    round_f32(queries.as_mut_slice());
    let cache = KvCache::new(keys, values)?;
    Ok((cache, QueryBatch::new(queries)?))
}

fn correlated_values(keys: &Matrix, rng: &mut RngStream) -> Matrix {
    let (n, d) = (keys.rows(), keys.cols());
    let mut mean = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for i in 0..n {
        for (c, &x) in keys.row(i).iter().enumerate() {
            mean[c] += x;
            sq[c] += x * x;
        }
    }
    let inv_sd: Vec<f64> = (0..d)
        .map(|c| {
            mean[c] /= n as f64;
            let var = (sq[c] / n as f64 - mean[c] * mean[c]).max(0.0);
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let noise = (1.0 - VALUE_KEY_CORR * VALUE_KEY_CORR).sqrt();
    let mut values = Matrix::zeros(n, d);
    for i in 0..n {
        let key = keys.row(i);
        for (c, v) in values.row_mut(i).iter_mut().enumerate() {
            let g: f64 = rng.rng().sample(StandardNormal);
            let z = (key[c] - mean[c]) * inv_sd[c];
            *v = 1.0 + VALUE_KEY_CORR * z + noise * g;
        }
    }
    round_f32(values.as_mut_slice());
    values
}

fn fill_normal(out: &mut [f64], sd: f64, rng: &mut RngStream) {
    for x in out {
        let g: f64 = rng.rng().sample(StandardNormal);
        *x = sd * g;
    }
}

fn random_unit(out: &mut [f64], rng: &mut RngStream) {
    loop {
        fill_normal(out, 1.0, rng);
        if normalize(out) {
            return;
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    scale(v, 1.0 / norm);
    true
}

fn scale(v: &mut [f64], k: f64) {
    v.iter_mut().for_each(|x| *x *= k);
}

fn add(v: &mut [f64], w: &[f64]) {
    v.iter_mut().zip(w).for_each(|(x, y)| *x += y);
}

fn round_f32(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = *x as f32 as f64);
}

#[cfg(test)]
mod tests {
    use super::*;
    use vattention::attention_scores;

    fn spec(dist: Dist, n: usize) -> WorkloadSpec {
        WorkloadSpec {
            dist,
            n,
            d: 8,
            m: 3,
            seed: 11,
        }
    }

    #[test]
    fn flat_zero_jitter_gives_uniform_scores() {
        let (cache, queries) = gen_workload(&spec(Dist::FlatScores { jitter: 0.0 }, 8)).unwrap();
        let scores = attention_scores(&cache, queries.query(0), true)
            .unwrap()
            .scores;
        for s in scores {
            assert!((s - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn zipf_first_query_follows_harmonic_profile() {
        let (cache, queries) = gen_workload(&spec(Dist::ZipfScores { s: 1.0 }, 4)).unwrap();
        let profile = attention_scores(&cache, queries.query(0), true).unwrap();
        let sorted: Vec<f64> = profile
            .sorted_order
            .iter()
            .map(|&i| profile.scores[i])
            .collect();
        // 1 / (1 + 1/2 + 1/3 + 1/4) = 12/25
        for (got, want) in sorted.iter().zip([0.48, 0.24, 0.16, 0.12]) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn same_seed_same_cache() {
        for dist in [
            Dist::ZipfScores { s: 2.0 },
            Dist::FlatScores { jitter: 0.3 },
            Dist::GaussianKeys { cluster_count: 3 },
            Dist::OutlierMix {
                outlier_frac: 0.1,
                outlier_gain: 5.0,
            },
        ] {
            let a = gen_workload(&spec(dist, 50)).unwrap();
            let b = gen_workload(&spec(dist, 50)).unwrap();
            assert_eq!(a, b);
            let c = gen_workload(&WorkloadSpec {
                seed: 12,
                ..spec(dist, 50)
            })
            .unwrap();
            assert_ne!(a.0, c.0);
        }
    }

    #[test]
    fn generated_entries_are_f32_exact() {
        let (cache, queries) =
            gen_workload(&spec(Dist::GaussianKeys { cluster_count: 2 }, 20)).unwrap();
        for x in cache
            .keys()
            .as_slice()
            .iter()
            .chain(cache.values().as_slice())
            .chain(queries.matrix().as_slice())
        {
            assert_eq!(*x, *x as f32 as f64);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            WorkloadSpec {
                n: 0,
                ..spec(Dist::FlatScores { jitter: 0.1 }, 1)
            },
            spec(Dist::ZipfScores { s: 0.0 }, 4),
            spec(Dist::FlatScores { jitter: -1.0 }, 4),
            spec(Dist::GaussianKeys { cluster_count: 0 }, 4),
            spec(
                Dist::OutlierMix {
                    outlier_frac: 1.5,
                    outlier_gain: 2.0,
                },
                4,
            ),
            spec(
                Dist::OutlierMix {
                    outlier_frac: 0.5,
                    outlier_gain: 0.0,
                },
                4,
            ),
        ];
        for s in bad {
            assert!(
                matches!(gen_workload(&s), Err(HarnessError::InvalidSpec(_))),
                "{s:?}"
            );
        }
    }

    #[test]
    fn parses_distribution_names() {
        assert_eq!("zipf".parse::<Dist>().unwrap(), Dist::ZipfScores { s: 2.0 });
        assert_eq!(
            "flat:0.5".parse::<Dist>().unwrap(),
            Dist::FlatScores { jitter: 0.5 }
        );
        assert_eq!(
            "gauss:3".parse::<Dist>().unwrap(),
            Dist::GaussianKeys { cluster_count: 3 }
        );
        assert_eq!(
            "outlier:0.05:8".parse::<Dist>().unwrap(),
            Dist::OutlierMix {
                outlier_frac: 0.05,
                outlier_gain: 8.0
            }
        );
        for bad in ["", "cauchy", "zipf:x", "gauss:2.5", "flat:1:2", "zipf:-1"] {
            assert!(bad.parse::<Dist>().is_err(), "{bad}");
        }
        let d = Dist::OutlierMix {
            outlier_frac: 0.05,
            outlier_gain: 8.0,
        };
        assert_eq!(d.to_string().parse::<Dist>().unwrap(), d);
    }
}
