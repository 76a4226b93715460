//! KSWIN: Kolmogorov-Smirnov test over a sliding window.
//!
//! Once the window is full, the newest `stat_size` values are compared with
//! the older remainder. A change fires when the KS statistic exceeds
//! `c(α) · sqrt((n + m) / (n m))` with `c(α) = sqrt(-ln(α/2) / 2)`.
//! The window keeps sliding after a detection.

use std::collections::VecDeque;

use super::stats::{check_confidence, ks_sorted, ks_threshold};
use super::{check_finite, ChangeDetector, DetectorError, DetectorKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Kswin {
    alpha: f64,
    window_size: usize,
    stat_size: usize,
    threshold: f64,
    window: VecDeque<f64>,
    observed: u64,
    last_statistic: Option<f64>,
    pending: Option<(f64, f64)>,
}

impl Kswin {
    pub fn new(alpha: f64, window_size: usize, stat_size: usize) -> Result<Self, DetectorError> {
        check_confidence(alpha)?;
        if stat_size == 0 || stat_size >= window_size {
            return Err(DetectorError::InvalidConfig(format!(
                "stat_size {stat_size} must be in 1..{window_size}"
            )));
        }
        Ok(Self {
            alpha,
            window_size,
            stat_size,
            threshold: ks_threshold(alpha, window_size - stat_size, stat_size),
            window: VecDeque::with_capacity(window_size + 1),
            observed: 0,
            last_statistic: None,
            pending: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// KS statistic of the most recent full-window comparison.
    pub fn last_statistic(&self) -> Option<f64> {
        self.last_statistic
    }

    /// `(older, recent)` split of the current window.
    pub fn split(&self) -> (Vec<f64>, Vec<f64>) {
        let older_len = self.window.len().saturating_sub(self.stat_size);
        let (older, recent): (Vec<_>, Vec<_>) = self
            .window
            .iter()
            .enumerate()
            .partition(|(i, _)| *i < older_len);
        (
            older.into_iter().map(|(_, v)| *v).collect(),
            recent.into_iter().map(|(_, v)| *v).collect(),
        )
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

impl ChangeDetector for Kswin {
    fn add_value(&mut self, value: f64) -> Result<bool, DetectorError> {
        check_finite(value)?;
        self.pending = None;
        self.observed += 1;
        self.window.push_back(value);
        if self.window.len() > self.window_size {
            self.window.pop_front();
        }
        if self.window.len() < self.window_size {
            return Ok(false);
        }

        let (older, recent) = self.split();
        let (pre, post) = (mean(&older), mean(&recent));
        let mut a = older;
        let mut b = recent;
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let statistic = ks_sorted(&a, &b);
        self.last_statistic = Some(statistic);
        if statistic > self.threshold {
            self.pending = Some((pre, post));
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn pre_post_means(&self) -> Result<(f64, f64), DetectorError> {
        self.pending.ok_or(DetectorError::NoDetectionPending)
    }

    fn observed_count(&self) -> u64 {
        self.observed
    }

    fn window_len(&self) -> u64 {
        self.window.len() as u64
    }

    fn kind(&self) -> DetectorKind {
        DetectorKind::Kswin
    }
}
