//! Verified sparse attention.
//!
//! Attention for one query over a KV cache is approximated by keeping the
//! heavy hitters (sink tokens, a local window and predicted top-k tokens)
//! exactly and estimating the contribution of the remaining long tail from a
//! uniform sample. The sample size is chosen adaptively so that the relative
//! error of the estimate stays below `eps` with probability at least
//! `1 - delta`.
//!
//! ```
//! use vattention::{full_sdpa, rel_error, vattention, GuaranteeParams, KvCache, Matrix, RngStream};
//!
//! let n = 512;
//! let keys = Matrix::from_vec(n, 2, (0..2 * n).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect()).unwrap();
//! let values = Matrix::from_vec(n, 2, (0..2 * n).map(|i| ((i * 104729) % 97) as f64 / 97.0).collect()).unwrap();
//! let cache = KvCache::new(keys, values).unwrap();
//! let q = [0.5, -0.25];
//!
//! let params = GuaranteeParams::new(0.05, 0.1);
//! let mut rng = RngStream::new(42, 0);
//! let approx = vattention(&cache, &q, &params, &mut rng).unwrap();
//! let exact = full_sdpa(&cache, &q, params.scale_logits).unwrap();
//! assert!(rel_error(&approx.output.out, &exact.out).unwrap() < 0.5);
//! assert!(approx.density() <= 1.0);
//! ```

pub mod attention;
pub mod budget;
pub mod error;
pub mod format;
pub mod kv;
pub mod params;
pub mod rng;
pub mod selection;
pub mod selectors;

pub use attention::{
    attention_scores, denom_rel_error, full_sdpa, logits, rel_error, sdpa_selected,
    AttentionOutput, ScoreProfile,
};
pub use budget::{
    budget_combined, budget_denominator, budget_numerator, clt_budget, compute_stats,
    hoeffding_budget, vattention, vattention_with, BudgetConfig, BudgetResult, SampleStats,
    VAttention,
};
pub use error::{Error, MatrixKind, Result};
pub use format::{read_cache, write_cache};
pub use kv::{validate_cache, KvCache, Matrix, QueryBatch};
pub use params::{BoundKind, FloorRule, GuaranteeParams, Relaxation, StatsSource};
pub use rng::{derive_stream_id, RngStream};
pub use selection::Selection;
pub use selectors::{
    compose, local_indices, lsh_selection, oracle_topk, oracle_topp, sink_indices,
    uniform_residual, Fragment, LshSpec, OracleTopK, TopPredictor,
};
