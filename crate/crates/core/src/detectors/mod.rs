//! Incremental change detectors.
//!
//! All detectors share one contract: feed one finite value at a time with
//! [`ChangeDetector::add_value`], which reports whether that value completed
//! a statistically significant change. Right after a detection,
//! [`ChangeDetector::pre_post_means`] returns the means of the two
//! sub-windows whose difference triggered it.

mod adwin;
mod hddm;
mod kswin;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adwin::Adwin;
pub use hddm::HddmA;
pub use kswin::Kswin;
pub use stats::{hoeffding_bound, ks_statistic, ks_threshold, WindowStats};

pub const DEFAULT_CONFIDENCE: f64 = 0.002;
pub const DEFAULT_KSWIN_WINDOW: usize = 100;
pub const DEFAULT_KSWIN_STAT: usize = 30;
pub const DEFAULT_ADWIN_MAX_BUCKETS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("no detection pending")]
    NoDetectionPending,
    #[error("sample must be non-empty")]
    EmptySample,
    #[error("sample size must be at least 1")]
    InvalidSampleSize,
    #[error("confidence {0} outside (0, 1)")]
    InvalidConfidence(f64),
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Adwin,
    Kswin,
    #[serde(alias = "hddm_a")]
    Hddm,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] =
        [DetectorKind::Adwin, DetectorKind::Kswin, DetectorKind::Hddm];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Adwin => "adwin",
            DetectorKind::Kswin => "kswin",
            DetectorKind::Hddm => "hddm",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adwin" => Ok(DetectorKind::Adwin),
            "kswin" => Ok(DetectorKind::Kswin),
            "hddm" | "hddm_a" => Ok(DetectorKind::Hddm),
            other => Err(DetectorError::InvalidConfig(format!(
                "unknown detector {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    /// δ for ADWIN, α for KSWIN, drift confidence for HDDM_A.
    pub confidence: f64,
    pub kswin_window: usize,
    pub kswin_stat: usize,
    pub adwin_bucket_rows_max: usize,
}

impl DetectorConfig {
    pub fn new(kind: DetectorKind) -> Self {
        Self {
            kind,
            confidence: DEFAULT_CONFIDENCE,
            kswin_window: DEFAULT_KSWIN_WINDOW,
            kswin_stat: DEFAULT_KSWIN_STAT,
            adwin_bucket_rows_max: DEFAULT_ADWIN_MAX_BUCKETS,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        stats::check_confidence(self.confidence)?;
        if self.kswin_stat == 0 || self.kswin_stat >= self.kswin_window {
            return Err(DetectorError::InvalidConfig(format!(
                "kswin_stat {} must be in 1..{}",
                self.kswin_stat, self.kswin_window
            )));
        }
        if self.adwin_bucket_rows_max < 2 {
            return Err(DetectorError::InvalidConfig(
                "adwin_bucket_rows_max must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Detector, DetectorError> {
        self.validate()?;
        Ok(match self.kind {
            DetectorKind::Adwin => Detector::Adwin(Adwin::with_max_buckets(
                self.confidence,
                self.adwin_bucket_rows_max,
            )?),
            DetectorKind::Kswin => Detector::Kswin(Kswin::new(
                self.confidence,
                self.kswin_window,
                self.kswin_stat,
            )?),
            DetectorKind::Hddm => Detector::Hddm(HddmA::new(self.confidence)?),
        })
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::new(DetectorKind::Adwin)
    }
}

pub trait ChangeDetector {
    /// Adds one value; `Ok(true)` iff it completed a significant change.
    /// Non-finite values are rejected and leave the state untouched.
    fn add_value(&mut self, value: f64) -> Result<bool, DetectorError>;

    /// Means of the older and newer sub-windows behind the last detection.
    fn pre_post_means(&self) -> Result<(f64, f64), DetectorError>;

    /// Values added since construction.
    fn observed_count(&self) -> u64;

    /// Values currently reflected in the detector's window or statistics.
    fn window_len(&self) -> u64;

    fn kind(&self) -> DetectorKind;
}

/// Closed set of detectors used by the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Adwin(Adwin),
    Kswin(Kswin),
    Hddm(HddmA),
}

macro_rules! delegate {
    ($self:ident, $d:ident => $e:expr) => {
        match $self {
            Detector::Adwin($d) => $e,
            Detector::Kswin($d) => $e,
            Detector::Hddm($d) => $e,
        }
    };
}

impl ChangeDetector for Detector {
    fn add_value(&mut self, value: f64) -> Result<bool, DetectorError> {
        delegate!(self, d => d.add_value(value))
    }

    fn pre_post_means(&self) -> Result<(f64, f64), DetectorError> {
        delegate!(self, d => d.pre_post_means())
    }

    fn observed_count(&self) -> u64 {
        delegate!(self, d => d.observed_count())
    }

    fn window_len(&self) -> u64 {
        delegate!(self, d => d.window_len())
    }

    fn kind(&self) -> DetectorKind {
        delegate!(self, d => d.kind())
    }
}

pub(crate) fn check_finite(value: f64) -> Result<(), DetectorError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(DetectorError::NonFinite(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_never_fires() {
        for kind in DetectorKind::ALL {
            let mut d = DetectorConfig::new(kind).build().unwrap();
            assert!(!d.add_value(42.0).unwrap(), "{kind}");
            assert_eq!(d.pre_post_means(), Err(DetectorError::NoDetectionPending));
        }
    }

    #[test]
    fn non_finite_rejected_without_state_change() {
        for kind in DetectorKind::ALL {
            let mut d = DetectorConfig::new(kind).build().unwrap();
            for v in [1.0, 2.0, 3.0] {
                d.add_value(v).unwrap();
            }
            let before = d.clone();
            assert!(d.add_value(f64::NAN).is_err());
            assert!(d.add_value(f64::INFINITY).is_err());
            assert_eq!(d, before);
        }
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::default()
            .with_confidence(0.0)
            .build()
            .is_err());
        assert!(DetectorConfig::default()
            .with_confidence(1.5)
            .build()
            .is_err());
        let mut c = DetectorConfig::new(DetectorKind::Kswin);
        c.kswin_stat = c.kswin_window;
        assert!(c.build().is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("ADWIN".parse::<DetectorKind>(), Ok(DetectorKind::Adwin));
        assert_eq!("hddm_a".parse::<DetectorKind>(), Ok(DetectorKind::Hddm));
        assert!("page-hinkley".parse::<DetectorKind>().is_err());
    }
}
