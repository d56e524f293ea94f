use crate::error::{Error, Result};

/// Concentration bound used to turn plug-in statistics into a sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundKind {
    /// Normal approximation: optimistic, tight for large samples.
    #[default]
    Clt,
    /// Distribution-free bounded-range bound: conservative.
    Hoeffding,
}

/// Which quantity the (eps, delta) contract is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Relaxation {
    /// Size the sample for the softmax normalizer alone, at (eps, delta).
    #[default]
    DenominatorOnly,
    /// Size the sample for the attention output by splitting (eps, delta)
    /// between numerator and denominator.
    Full,
}

/// What happens to a raw budget below `b_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FloorRule {
    /// Raise the budget to `b_min` (or to the whole residual when it is smaller).
    #[default]
    Clamp,
    /// Keep the raw budget; only the residual-size cap applies.
    Off,
}

/// Where the budget statistics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StatsSource {
    /// Plug-in estimates from a uniform base sample of the residual.
    #[default]
    BaseSample,
    /// Exact statistics of the whole residual population. Used by the verifier
    /// to separate failures caused by estimation noise from failures of the
    /// bound itself; the extra reads are not counted toward density.
    Oracle,
}

/// User contract for one verified sparse attention call.
#[derive(Debug, Clone, PartialEq)]
pub struct GuaranteeParams {
    pub eps: f64,
    pub delta: f64,
    /// Fraction of n kept as attention sinks (leading tokens).
    pub f_sink: f64,
    /// Fraction of n kept as the local window (trailing tokens).
    pub f_local: f64,
    /// Fraction of n selected by the top-k predictor.
    pub f_top: f64,
    /// Base sampling rate, as a fraction of the residual size.
    pub f_base: f64,
    /// Absolute sink size overriding `f_sink`.
    pub sink_abs: Option<usize>,
    /// Absolute local window overriding `f_local`.
    pub local_abs: Option<usize>,
    pub bound: BoundKind,
    pub relaxation: Relaxation,
    pub b_min: usize,
    pub floor_rule: FloorRule,
    /// Smallest base sample drawn regardless of `f_base`.
    pub base_min: usize,
    /// Factor applied to the base-sample range before it enters the Hoeffding bound.
    pub range_inflation: f64,
    /// Lattice resolution per axis for the numerator/denominator split.
    pub grid_points: usize,
    /// Merge the base sample into the dynamic sample instead of drawing fresh.
    pub reuse_base: bool,
    /// Divide logits by sqrt(d).
    pub scale_logits: bool,
    pub stats_source: StatsSource,
}

impl GuaranteeParams {
    pub fn new(eps: f64, delta: f64) -> Self {
        Self {
            eps,
            delta,
            ..Self::default()
        }
    }

    pub fn with_fractions(mut self, f_sink: f64, f_local: f64, f_top: f64, f_base: f64) -> Self {
        self.f_sink = f_sink;
        self.f_local = f_local;
        self.f_top = f_top;
        self.f_base = f_base;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.eps) {
            return Err(Error::InvalidParameter(format!(
                "eps = {} not in (0, 1)",
                self.eps
            )));
        }
        if !open_unit(self.delta) {
            return Err(Error::InvalidParameter(format!(
                "delta = {} not in (0, 1)",
                self.delta
            )));
        }
        for (name, f) in [
            ("f_sink", self.f_sink),
            ("f_local", self.f_local),
            ("f_top", self.f_top),
            ("f_base", self.f_base),
        ] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {f} not in [0, 1)"
                )));
            }
        }
        let total = self.f_sink + self.f_local + self.f_top + self.f_base;
        if total >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "fractions sum to {total}, must be < 1"
            )));
        }
        if !(self.range_inflation.is_finite() && self.range_inflation >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "range_inflation = {} must be >= 1",
                self.range_inflation
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidParameter("grid_points must be >= 2".into()));
        }
        if self.base_min == 0 {
            return Err(Error::InvalidParameter("base_min must be >= 1".into()));
        }
        Ok(())
    }

    /// Sink size for a cache of `n` tokens, capped at `n`.
    pub fn sink_count(&self, n: usize) -> usize {
        self.sink_abs
            .unwrap_or_else(|| fraction_count(self.f_sink, n))
            .min(n)
    }

    pub fn local_count(&self, n: usize) -> usize {
        self.local_abs
            .unwrap_or_else(|| fraction_count(self.f_local, n))
            .min(n)
    }

    pub fn top_count(&self, n: usize) -> usize {
        fraction_count(self.f_top, n)
    }

    /// Base sample size for a residual of `n_s` tokens: `ceil(f_base * n_s)`,
    /// at least `base_min`, at most `n_s`.
    pub fn base_count(&self, n_s: usize) -> usize {
        let raw = (self.f_base * n_s as f64).ceil() as usize;
        raw.max(self.base_min).min(n_s)
    }
}

impl Default for GuaranteeParams {
    fn default() -> Self {
        Self {
            eps: 0.1,
            delta: 0.1,
            f_sink: 0.02,
            f_local: 0.02,
            f_top: 0.05,
            f_base: 0.025,
            sink_abs: None,
            local_abs: None,
            bound: BoundKind::Clt,
            relaxation: Relaxation::DenominatorOnly,
            b_min: 32,
            floor_rule: FloorRule::Clamp,
            base_min: 16,
            range_inflation: 1.5,
            grid_points: 15,
            reuse_base: false,
            scale_logits: true,
            stats_source: StatsSource::BaseSample,
        }
    }
}

/// `floor(f * n)`.
pub fn fraction_count(f: f64, n: usize) -> usize {
    (f * n as f64).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        GuaranteeParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GuaranteeParams::new(0.0, 0.1).validate().is_err());
        assert!(GuaranteeParams::new(0.1, 1.0).validate().is_err());
        let p = GuaranteeParams::new(0.1, 0.1).with_fractions(0.5, 0.3, 0.2, 0.1);
        assert!(p.validate().is_err());
        let p = GuaranteeParams::new(0.1, 0.1).with_fractions(-0.1, 0.0, 0.0, 0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn counts() {
        let mut p = GuaranteeParams::new(0.1, 0.1).with_fractions(0.05, 0.1, 0.2, 0.01);
        assert_eq!(p.sink_count(99), 4);
        assert_eq!(p.local_count(99), 9);
        assert_eq!(p.top_count(99), 19);
        assert_eq!(p.base_count(1000), 16);
        assert_eq!(p.base_count(5000), 50);
        assert_eq!(p.base_count(7), 7);
        p.sink_abs = Some(128);
        assert_eq!(p.sink_count(99), 99);
        assert_eq!(p.sink_count(1000), 128);
    }
}
