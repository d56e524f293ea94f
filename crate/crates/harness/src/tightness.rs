//! CLT versus Hoeffding sample sizes on synthetic residual populations.
//!
//! Each trial draws a fresh population of positive terms, computes both
//! budgets from its exact statistics, samples that many terms uniformly
//! without replacement and records the relative error of the scaled sample
//! sum. No floor is applied to the budgets.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use vattention::budget::{clamp_budget, clt_raw, hoeffding_raw};
use vattention::{
    derive_stream_id, uniform_residual, BoundKind, BudgetConfig, FloorRule, RngStream,
};

use crate::error::{invalid, HarnessError, Result};
use crate::sweep::bound_name;

pub const TIGHTNESS_COLUMNS: [&str; 6] = [
    "population",
    "bound",
    "trial",
    "budget",
    "rel_err",
    "failed",
];
pub const SUMMARY_COLUMNS: [&str; 8] = [
    "population",
    "clt_mean_budget",
    "hoeffding_mean_budget",
    "budget_ratio",
    "clt_fail_rate",
    "hoeffding_fail_rate",
    "clt_mean_err",
    "hoeffding_mean_err",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Population {
    /// Half the terms 0.1, half 1.9: standard deviation is exactly range / 2.
    TwoPoint,
    /// `U(0, 2)`.
    Uniform,
    /// `exp(N(0, 1))`.
    LogNormal,
    /// 1 with probability 0.98, else 10.
    Spiky,
}

impl Population {
    pub const ALL: [Population; 4] = [
        Population::TwoPoint,
        Population::Uniform,
        Population::LogNormal,
        Population::Spiky,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Population::TwoPoint => "two-point",
            Population::Uniform => "uniform",
            Population::LogNormal => "lognormal",
            Population::Spiky => "spiky",
        }
    }

    pub fn draw(&self, n: usize, rng: &mut RngStream) -> Vec<f64> {
        match self {
            Population::TwoPoint => (0..n).map(|i| if i % 2 == 0 { 0.1 } else { 1.9 }).collect(),
            Population::Uniform => (0..n).map(|_| rng.rng().random_range(0.0..2.0)).collect(),
            Population::LogNormal => (0..n)
                .map(|_| {
                    let g: f64 = rng.rng().sample(StandardNormal);
                    g.exp()
                })
                .collect(),
            Population::Spiky => (0..n)
                .map(|_| {
                    if rng.rng().random_bool(0.02) {
                        10.0
                    } else {
                        1.0
                    }
                })
                .collect(),
        }
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Population {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Population::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| invalid(format!("unknown population {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct TightnessConfig {
    pub populations: Vec<Population>,
    pub n_s: usize,
    pub eps: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
}

impl TightnessConfig {
    /// All populations at 4096 terms.
    pub fn new(eps: f64, delta: f64, trials: usize, seed: u64) -> Self {
        Self {
            populations: Population::ALL.to_vec(),
            n_s: 4096,
            eps,
            delta,
            trials,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessRow {
    pub population: String,
    pub bound: String,
    pub trial: usize,
    pub budget: usize,
    pub rel_err: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessSummary {
    pub population: String,
    pub clt_mean_budget: f64,
    pub hoeffding_mean_budget: f64,
    pub budget_ratio: f64,
    pub clt_fail_rate: f64,
    pub hoeffding_fail_rate: f64,
    pub clt_mean_err: f64,
    pub hoeffding_mean_err: f64,
}

/// Exact mean, population standard deviation and range.
pub fn population_stats(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), hi - lo)
}

pub fn tightness_study(
    cfg: &TightnessConfig,
) -> Result<(Vec<TightnessRow>, Vec<TightnessSummary>)> {
    if cfg.populations.is_empty() || cfg.trials == 0 || cfg.n_s == 0 {
        return Err(invalid(
            "tightness study needs populations, trials >= 1 and n_s >= 1",
        ));
    }
    if !(cfg.eps > 0.0 && cfg.eps < 1.0 && cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(invalid(format!(
            "eps = {}, delta = {} must lie in (0, 1)",
            cfg.eps, cfg.delta
        )));
    }
    let clamp = BudgetConfig {
        floor_rule: FloorRule::Off,
        ..BudgetConfig::default()
    };
    let mut rows = vec![];
    let mut summaries = vec![];
    for (pi, &pop) in cfg.populations.iter().enumerate() {
        let mut acc = [(0.0, 0usize, 0.0); 2];
        for t in 0..cfg.trials {
            let mut rng =
                RngStream::new(cfg.seed, derive_stream_id(cfg.seed, &[pi as u64, t as u64]));
            let xs = pop.draw(cfg.n_s, &mut rng);
            let (mean, sigma, range) = population_stats(&xs);
            let total = mean * cfg.n_s as f64;
            let tau = cfg.eps * total;
            for (bi, bound) in [BoundKind::Clt, BoundKind::Hoeffding]
                .into_iter()
                .enumerate()
            {
                let raw = match bound {
                    BoundKind::Clt => clt_raw(tau, cfg.delta, cfg.n_s, sigma)?,
                    BoundKind::Hoeffding => hoeffding_raw(tau, cfg.delta, cfg.n_s, range)?,
                };
                let b = clamp_budget(raw, cfg.n_s, &clamp).0.max(1);
                let mut draw = RngStream::new(
                    cfg.seed,
                    derive_stream_id(cfg.seed, &[pi as u64, t as u64, 1 + bi as u64]),
                );
                let sample = uniform_residual(cfg.n_s, &[], b, &mut draw)?;
                let est = sample.indices().iter().map(|&i| xs[i]).sum::<f64>() * cfg.n_s as f64
                    / b as f64;
                let rel_err = (est - total).abs() / total;
                let failed = rel_err > cfg.eps;
                acc[bi].0 += b as f64;
                acc[bi].1 += failed as usize;
                acc[bi].2 += rel_err;
                rows.push(TightnessRow {
                    population: pop.name().into(),
                    bound: bound_name(bound).into(),
                    trial: t,
                    budget: b,
                    rel_err,
                    failed,
                });
            }
        }
        let k = cfg.trials as f64;
        summaries.push(TightnessSummary {
            population: pop.name().into(),
            clt_mean_budget: acc[0].0 / k,
            hoeffding_mean_budget: acc[1].0 / k,
            budget_ratio: acc[1].0 / acc[0].0,
            clt_fail_rate: acc[0].1 as f64 / k,
            hoeffding_fail_rate: acc[1].1 as f64 / k,
            clt_mean_err: acc[0].2 / k,
            hoeffding_mean_err: acc[1].2 / k,
        });
    }
    Ok((rows, summaries))
}
