use std::fmt;
use std::str::FromStr;

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::model::{StopId, VehicleSnapshot};

/// How observations are shuffled to detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyingMode {
    /// One detector per directed edge.
    #[serde(alias = "edge")]
    Edge,
    /// One detector per (edge, hour of day).
    #[serde(alias = "bin")]
    EdgeHour,
}

impl FromStr for KeyingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "edge" => Ok(KeyingMode::Edge),
            "bin" | "edge_hour" | "edge-hour" => Ok(KeyingMode::EdgeHour),
            other => Err(format!(
                "unknown keying mode {other:?} (expected edge or bin)"
            )),
        }
    }
}

impl fmt::Display for KeyingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyingMode::Edge => "edge",
            KeyingMode::EdgeHour => "bin",
        })
    }
}

/// Which delay signal is fed to the detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SignalKind {
    #[serde(rename = "delay")]
    Delay,
    #[serde(rename = "delta")]
    DeltaDelay,
}

impl SignalKind {
    pub const ALL: [SignalKind; 2] = [SignalKind::Delay, SignalKind::DeltaDelay];

    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::Delay => "delay",
            SignalKind::DeltaDelay => "delta",
        }
    }

    /// Signal value of a snapshot in whole seconds.
    pub fn value_of(self, snapshot: &VehicleSnapshot) -> Result<i64, crate::model::ModelError> {
        match self {
            SignalKind::Delay => snapshot.delay(),
            SignalKind::DeltaDelay => snapshot.delta_delay(),
        }
    }
}

impl FromStr for SignalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "delay" | "d" => Ok(SignalKind::Delay),
            "delta" | "delta_delay" | "dd" => Ok(SignalKind::DeltaDelay),
            other => Err(format!(
                "unknown signal {other:?} (expected delay or delta)"
            )),
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of one detector instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DetectorKey {
    pub curr: StopId,
    pub prev: StopId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hour: Option<u8>,
}

impl DetectorKey {
    pub fn edge(curr: StopId, prev: StopId) -> Self {
        Self {
            curr,
            prev,
            hour: None,
        }
    }

    /// The same edge without the hour component.
    pub fn edge_key(&self) -> DetectorKey {
        DetectorKey::edge(self.curr.clone(), self.prev.clone())
    }
}

/// `curr|prev` or `curr|prev|HH`.
impl fmt::Display for DetectorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.curr, self.prev)?;
        if let Some(hour) = self.hour {
            write!(f, "|{hour:02}")?;
        }
        Ok(())
    }
}

/// Detector key of a snapshot; the hour comes from its event time in `tz`.
pub fn detector_id(snapshot: &VehicleSnapshot, mode: KeyingMode, tz: Tz) -> DetectorKey {
    let hour = match mode {
        KeyingMode::Edge => None,
        KeyingMode::EdgeHour => Some(snapshot.hour(tz)),
    };
    DetectorKey {
        curr: snapshot.curr_stop.clone(),
        prev: snapshot.prev_stop.clone(),
        hour,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{at, snapshot};

    #[test]
    fn key_encoding() {
        let s = snapshot("2001", "2002", at(8, 15, 0));
        assert_eq!(
            detector_id(&s, KeyingMode::Edge, Tz::UTC).to_string(),
            "2002|2001"
        );
        assert_eq!(
            detector_id(&s, KeyingMode::EdgeHour, Tz::UTC).to_string(),
            "2002|2001|08"
        );
    }

    #[test]
    fn hour_boundary_splits_bins() {
        let a = snapshot("2001", "2002", at(8, 59, 59));
        let b = snapshot("2001", "2002", at(9, 0, 0));
        let ka = detector_id(&a, KeyingMode::EdgeHour, Tz::UTC);
        let kb = detector_id(&b, KeyingMode::EdgeHour, Tz::UTC);
        assert_ne!(ka, kb);
        assert_eq!(ka.edge_key(), kb.edge_key());
        assert_eq!(
            detector_id(&a, KeyingMode::Edge, Tz::UTC),
            detector_id(&b, KeyingMode::Edge, Tz::UTC)
        );
    }

    #[test]
    fn separator_prevents_collisions() {
        let a = snapshot("1", "12", at(8, 0, 0));
        let b = snapshot("11", "2", at(8, 0, 0));
        assert_ne!(
            detector_id(&a, KeyingMode::Edge, Tz::UTC).to_string(),
            detector_id(&b, KeyingMode::Edge, Tz::UTC).to_string()
        );
    }

    #[test]
    fn parse_mode_and_signal() {
        assert_eq!("bin".parse::<KeyingMode>(), Ok(KeyingMode::EdgeHour));
        assert_eq!("edge".parse::<KeyingMode>(), Ok(KeyingMode::Edge));
        assert_eq!("delta".parse::<SignalKind>(), Ok(SignalKind::DeltaDelay));
        assert!("weekly".parse::<KeyingMode>().is_err());
    }
}
