//! HDDM_A: drift detection with Hoeffding bounds on moving averages.
//!
//! The detector tracks the running mean of everything seen since the last
//! drift and two cut points: where the running mean (plus its bound) was
//! lowest and where it (minus its bound) was highest. A drift fires when the
//! current mean departs from either cut-point mean by more than
//!
//! ```text
//! sqrt(((n - n_cut) / (n_cut · n)) / 2 · ln(2 / confidence))
//! ```
//!
//! Values are min-max normalised with the running extrema before any bound
//! is applied: means are kept in raw units and rescaled at test time, which is
//! the same as normalising every stored value with the current extrema.
//! After a drift the mean and cut-point statistics restart; extrema persist.

use super::stats::{check_confidence, hoeffding_bound};
use super::{check_finite, ChangeDetector, DetectorError, DetectorKind};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Prefix {
    n: u64,
    sum: f64,
}

impl Prefix {
    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HddmA {
    confidence: f64,
    total: Prefix,
    cut_min: Prefix,
    cut_max: Prefix,
    min: f64,
    max: f64,
    observed: u64,
    pending: Option<(f64, f64)>,
}

impl HddmA {
    pub fn new(confidence: f64) -> Result<Self, DetectorError> {
        check_confidence(confidence)?;
        Ok(Self {
            confidence,
            total: Prefix::default(),
            cut_min: Prefix::default(),
            cut_max: Prefix::default(),
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            observed: 0,
            pending: None,
        })
    }

    fn normalise(&self, value: f64) -> f64 {
        let range = self.max - self.min;
        if range > 0.0 {
            (value - self.min) / range
        } else {
            0.0
        }
    }

    fn bound(&self, n: u64) -> f64 {
        hoeffding_bound(n, self.confidence).expect("n >= 1 and confidence validated")
    }

    fn mean_shift_bound(&self, cut: Prefix) -> f64 {
        let (n, n_cut) = (self.total.n as f64, cut.n as f64);
        let m = (n - n_cut) / (n_cut * n);
        (m / 2.0 * (2.0 / self.confidence).ln()).sqrt()
    }

    fn post_cut_mean(&self, cut: Prefix) -> f64 {
        (self.total.sum - cut.sum) / (self.total.n - cut.n) as f64
    }

    fn restart(&mut self) {
        self.total = Prefix::default();
        self.cut_min = Prefix::default();
        self.cut_max = Prefix::default();
    }
}

impl ChangeDetector for HddmA {
    fn add_value(&mut self, value: f64) -> Result<bool, DetectorError> {
        check_finite(value)?;
        self.pending = None;
        self.observed += 1;
        self.min = self.min.min(value);
        self.max = self.max.max(value);

        self.total.n += 1;
        self.total.sum += value;
        if self.cut_min.n == 0 {
            self.cut_min = self.total;
        }
        if self.cut_max.n == 0 {
            self.cut_max = self.total;
        }

        let mean = self.normalise(self.total.mean());
        let eps_total = self.bound(self.total.n);
        if self.normalise(self.cut_min.mean()) + self.bound(self.cut_min.n) >= mean + eps_total {
            self.cut_min = self.total;
        }
        if self.normalise(self.cut_max.mean()) - self.bound(self.cut_max.n) <= mean - eps_total {
            self.cut_max = self.total;
        }

        let cut = if self.cut_min.n < self.total.n
            && mean - self.normalise(self.cut_min.mean()) >= self.mean_shift_bound(self.cut_min)
        {
            Some(self.cut_min)
        } else if self.cut_max.n < self.total.n
            && self.normalise(self.cut_max.mean()) - mean >= self.mean_shift_bound(self.cut_max)
        {
            Some(self.cut_max)
        } else {
            None
        };

        match cut {
            Some(cut) => {
                self.pending = Some((cut.mean(), self.post_cut_mean(cut)));
                self.restart();
                Ok(true)
            }
            None => Ok(false),
        }
    }

    fn pre_post_means(&self) -> Result<(f64, f64), DetectorError> {
        self.pending.ok_or(DetectorError::NoDetectionPending)
    }

    fn observed_count(&self) -> u64 {
        self.observed
    }

    fn window_len(&self) -> u64 {
        self.total.n
    }

    fn kind(&self) -> DetectorKind {
        DetectorKind::Hddm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn detects_upward_step() {
        let mut h = HddmA::new(0.002).unwrap();
        let mut hit = None;
        for i in 0..1000 {
            let v = if i < 500 {
                (i % 5) as f64
            } else {
                20.0 + (i % 5) as f64
            };
            if h.add_value(v).unwrap() {
                hit = Some(i);
                let (pre, post) = h.pre_post_means().unwrap();
                assert!(post > pre);
                break;
            }
        }
        let hit = hit.unwrap();
        assert!((500..600).contains(&hit), "{hit}");
        assert_eq!(h.window_len(), 0);
    }

    #[test]
    fn detects_downward_step() {
        let mut h = HddmA::new(0.002).unwrap();
        let fired = (0..1000).any(|i| {
            let v = if i < 500 {
                10.0 + (i % 3) as f64
            } else {
                (i % 3) as f64
            };
            h.add_value(v).unwrap()
        });
        assert!(fired);
        let (pre, post) = h.pre_post_means().unwrap();
        assert!(post < pre);
    }

    proptest! {
        #[test]
        fn constant_stream_never_fires(value in -1e6f64..1e6, len in 1usize..3000) {
            let mut h = HddmA::new(0.002).unwrap();
            for _ in 0..len {
                prop_assert!(!h.add_value(value).unwrap());
            }
        }
    }
}
