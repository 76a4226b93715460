//! ADWIN: adaptive windowing over an exponential histogram.
//!
//! The window is stored as rows of buckets; row `i` holds buckets that
//! summarise `2^i` values each, at most `max_buckets` per row. Every bucket
//! boundary is a candidate cut `W = W0 · W1`; a cut fires when
//!
//! ```text
//! |μ0 - μ1| > sqrt((2/m) σ² ln(2/δ')) + (2 / 3m) ln(2/δ')
//! m  = 1 / (1/n0 + 1/n1)
//! δ' = δ / n
//! ```
//!
//! with `σ²` the variance of the whole window. On detection the older
//! sub-window of the strongest cut is discarded.

use std::collections::VecDeque;

use super::{
    check_finite, stats::check_confidence, ChangeDetector, DetectorError, DetectorKind, WindowStats,
};

/// Sub-windows shorter than this are never compared.
pub const MIN_SUBWINDOW: u64 = 5;
/// Above this width, cuts are only checked every [`CHECK_STRIDE`] values.
pub const STRIDE_WIDTH: u64 = 1024;
pub const CHECK_STRIDE: u64 = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Adwin {
    delta: f64,
    max_buckets: usize,
    // rows[i] holds buckets of 2^i values, oldest at the front
    rows: Vec<VecDeque<WindowStats>>,
    total: WindowStats,
    observed: u64,
    pending: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct Cut {
    older: WindowStats,
    newer_mean: f64,
    margin: f64,
}

impl Adwin {
    pub fn new(delta: f64) -> Result<Self, DetectorError> {
        Self::with_max_buckets(delta, super::DEFAULT_ADWIN_MAX_BUCKETS)
    }

    pub fn with_max_buckets(delta: f64, max_buckets: usize) -> Result<Self, DetectorError> {
        check_confidence(delta)?;
        if max_buckets < 2 {
            return Err(DetectorError::InvalidConfig(
                "max_buckets must be at least 2".into(),
            ));
        }
        Ok(Self {
            delta,
            max_buckets,
            rows: Vec::new(),
            total: WindowStats::default(),
            observed: 0,
            pending: None,
        })
    }

    pub fn width(&self) -> u64 {
        self.total.count()
    }

    pub fn mean(&self) -> f64 {
        self.total.mean()
    }

    pub fn variance(&self) -> f64 {
        self.total.variance()
    }

    pub fn window_stats(&self) -> WindowStats {
        self.total
    }

    pub fn bucket_count(&self) -> usize {
        self.rows.iter().map(VecDeque::len).sum()
    }

    /// Buckets from oldest to newest.
    pub fn buckets(&self) -> impl Iterator<Item = &WindowStats> {
        self.rows.iter().rev().flat_map(|row| row.iter())
    }

    fn insert(&mut self, value: f64) {
        let bucket = WindowStats::single(value);
        if self.rows.is_empty() {
            self.rows.push(VecDeque::new());
        }
        self.rows[0].push_back(bucket);
        self.total = self.total.merge(&bucket);
        self.compress();
    }

    fn compress(&mut self) {
        let mut level = 0;
        while level < self.rows.len() {
            if self.rows[level].len() <= self.max_buckets {
                break;
            }
            let first = self.rows[level].pop_front().expect("row over capacity");
            let second = self.rows[level].pop_front().expect("row over capacity");
            if level + 1 == self.rows.len() {
                self.rows.push(VecDeque::new());
            }
            // the merged pair is newer than everything already in the next row
            self.rows[level + 1].push_back(first.merge(&second));
            level += 1;
        }
    }

    fn should_check(&self) -> bool {
        self.width() <= STRIDE_WIDTH || self.observed.is_multiple_of(CHECK_STRIDE)
    }

    fn strongest_cut(&self) -> Option<Cut> {
        let n = self.width();
        if n < 2 * MIN_SUBWINDOW {
            return None;
        }
        let variance = self.total.variance();
        let log_term = (2.0 * n as f64 / self.delta).ln();
        let total_sum = self.total.sum();

        let mut older = WindowStats::default();
        let mut best: Option<Cut> = None;
        for bucket in self.buckets() {
            older = older.merge(bucket);
            let n0 = older.count();
            let n1 = n - n0;
            if n1 < MIN_SUBWINDOW {
                break;
            }
            if n0 < MIN_SUBWINDOW {
                continue;
            }
            let newer_mean = (total_sum - older.sum()) / n1 as f64;
            let gap = (older.mean() - newer_mean).abs();
            let margin = gap - cut_bound(n0, n1, variance, log_term);
            if margin > 0.0 && best.is_none_or(|b| margin > b.margin) {
                best = Some(Cut {
                    older,
                    newer_mean,
                    margin,
                });
            }
        }
        best
    }

    fn drop_oldest(&mut self, count: u64) {
        let mut remaining = count;
        while remaining > 0 {
            let row = self
                .rows
                .iter_mut()
                .rev()
                .find(|r| !r.is_empty())
                .expect("cut lies inside the window");
            let bucket = row.pop_front().expect("non-empty row");
            remaining -= bucket.count();
            while self.rows.last().is_some_and(VecDeque::is_empty) {
                self.rows.pop();
            }
        }
        self.total = self
            .buckets()
            .fold(WindowStats::default(), |acc, b| acc.merge(b));
    }
}

/// `ε_cut` for sub-windows of `n0` and `n1` values; `log_term` is `ln(2/δ')`.
fn cut_bound(n0: u64, n1: u64, variance: f64, log_term: f64) -> f64 {
    let m = 1.0 / (1.0 / n0 as f64 + 1.0 / n1 as f64);
    (2.0 / m * variance * log_term).sqrt() + 2.0 / (3.0 * m) * log_term
}

impl ChangeDetector for Adwin {
    fn add_value(&mut self, value: f64) -> Result<bool, DetectorError> {
        check_finite(value)?;
        self.pending = None;
        self.observed += 1;
        self.insert(value);
        if !self.should_check() {
            return Ok(false);
        }
        match self.strongest_cut() {
            Some(cut) => {
                self.drop_oldest(cut.older.count());
                self.pending = Some((cut.older.mean(), cut.newer_mean));
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
        self.width()
    }

    fn kind(&self) -> DetectorKind {
        DetectorKind::Adwin
    }
}
