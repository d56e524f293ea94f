use std::collections::HashSet;

use crate::error::{Error, Result};

/// Ordered token indices with per-index inclusion probabilities.
///
/// The first `n_static` entries are deterministic (probability exactly 1).
/// The remaining entries were drawn at random; an exhaustive draw may also
/// carry probability 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    indices: Vec<usize>,
    probs: Vec<f64>,
    n_total: usize,
    n_static: usize,
}

impl Selection {
    pub fn new(
        indices: Vec<usize>,
        probs: Vec<f64>,
        n_total: usize,
        n_static: usize,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptySelection);
        }
        if indices.len() != probs.len() || n_static > indices.len() {
            return Err(Error::ShapeMismatch {
                expected: format!(
                    "{} probabilities, n_static <= {}",
                    indices.len(),
                    indices.len()
                ),
                got: format!("{} probabilities, n_static = {n_static}", probs.len()),
            });
        }
        let mut seen = HashSet::with_capacity(indices.len());
        for (k, (&i, &p)) in indices.iter().zip(&probs).enumerate() {
            if i >= n_total {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    n: n_total,
                });
            }
            if !seen.insert(i) {
                return Err(Error::DuplicateIndex(i));
            }
            let ok = if k < n_static {
                p == 1.0
            } else {
                p > 0.0 && p <= 1.0
            };
            if !ok {
                return Err(Error::InvalidProbability { index: i, prob: p });
            }
        }
        Ok(Self {
            indices,
            probs,
            n_total,
            n_static,
        })
    }

    /// All-deterministic selection.
    pub fn deterministic(indices: Vec<usize>, n_total: usize) -> Result<Self> {
        let k = indices.len();
        Self::new(indices, vec![1.0; k], n_total, k)
    }

    /// Every index of an `n`-token cache at probability 1.
    pub fn full(n: usize) -> Result<Self> {
        Self::deterministic((0..n).collect(), n)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_static(&self) -> usize {
        self.n_static
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `|indices| / n_total`.
    pub fn density(&self) -> f64 {
        self.indices.len() as f64 / self.n_total as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn static_indices(&self) -> &[usize] {
        &self.indices[..self.n_static]
    }

    pub fn sampled_indices(&self) -> &[usize] {
        &self.indices[self.n_static..]
    }

    /// True when all sampled entries share one probability, as produced by a
    /// uniform draw over the residual.
    pub fn is_uniform_sampled(&self) -> bool {
        let s = &self.probs[self.n_static..];
        s.windows(2).all(|w| w[0] == w[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_entries() {
        assert!(matches!(
            Selection::new(vec![], vec![], 4, 0),
            Err(Error::EmptySelection)
        ));
        assert!(matches!(
            Selection::new(vec![1, 1], vec![1.0, 1.0], 4, 2),
            Err(Error::DuplicateIndex(1))
        ));
        assert!(matches!(
            Selection::new(vec![0, 4], vec![1.0, 0.5], 4, 1),
            Err(Error::IndexOutOfRange { index: 4, n: 4 })
        ));
        assert!(matches!(
            Selection::new(vec![0, 2], vec![1.0, 0.0], 4, 1),
            Err(Error::InvalidProbability { index: 2, .. })
        ));
        assert!(matches!(
            Selection::new(vec![0, 2], vec![0.5, 0.5], 4, 1),
            Err(Error::InvalidProbability { index: 0, .. })
        ));
        assert!(Selection::new(vec![0, 2], vec![1.0, 1.5], 4, 1).is_err());
        assert!(Selection::new(vec![0, 2], vec![1.0, f64::NAN], 4, 1).is_err());
    }

    #[test]
    fn accessors() {
        let s = Selection::new(vec![3, 0, 2], vec![1.0, 0.5, 0.5], 8, 1).unwrap();
        assert_eq!(s.static_indices(), &[3]);
        assert_eq!(s.sampled_indices(), &[0, 2]);
        assert_eq!(s.density(), 3.0 / 8.0);
        assert!(s.is_uniform_sampled());
        let s = Selection::new(vec![3, 0, 2], vec![1.0, 0.5, 0.25], 8, 1).unwrap();
        assert!(!s.is_uniform_sampled());
    }
}
