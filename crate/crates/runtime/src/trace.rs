//! Step-function bandwidth traces and transfer times over them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use edgecut_core::perf::BANDWIDTH_FLOOR_MBPS;

/// Direction on a hop: `Up` moves toward the higher-ranked tier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum TraceError {
    #[error("trace times must be strictly increasing (point {0})")]
    NotIncreasing(usize),
    #[error("trace value at point {0} is negative or not finite")]
    BadValue(usize),
}

/// Breakpoints `(time_s, value)`; each value holds until the next
/// breakpoint, the last one forever.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct StepTrace {
    points: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for StepTrace {
    type Error = TraceError;

    fn try_from(points: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Self::new(points)
    }
}

impl From<StepTrace> for Vec<(f64, f64)> {
    fn from(t: StepTrace) -> Self {
        t.points
    }
}

impl StepTrace {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, TraceError> {
        for (i, &(t, v)) in points.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() || !t.is_finite() {
                return Err(TraceError::BadValue(i));
            }
            if i > 0 && t <= points[i - 1].0 {
                return Err(TraceError::NotIncreasing(i));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `None` before the first breakpoint.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let idx = self.points.partition_point(|&(pt, _)| pt <= t);
        if idx == 0 {
            None
        } else {
            Some(self.points[idx - 1].1)
        }
    }

    /// First breakpoint strictly after `t`.
    pub fn next_change(&self, t: f64) -> Option<f64> {
        let idx = self.points.partition_point(|&(pt, _)| pt <= t);
        self.points.get(idx).map(|&(pt, _)| pt)
    }
}

/// Bandwidth of one link direction: a baseline overridden by an optional
/// trace from its first breakpoint on.
#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthProfile {
    pub baseline: f64,
    pub trace: Option<StepTrace>,
}

impl BandwidthProfile {
    pub fn constant(mbps: f64) -> Self {
        Self {
            baseline: mbps,
            trace: None,
        }
    }

    pub fn with_trace(baseline: f64, trace: StepTrace) -> Self {
        Self {
            baseline,
            trace: Some(trace),
        }
    }

    /// Raw value at `t`, before the floor.
    pub fn raw_at(&self, t: f64) -> f64 {
        self.trace
            .as_ref()
            .and_then(|tr| tr.value_at(t))
            .unwrap_or(self.baseline)
    }

    /// Mbit/s at `t`, never below the bandwidth floor.
    pub fn at(&self, t: f64) -> f64 {
        self.raw_at(t).max(BANDWIDTH_FLOOR_MBPS)
    }

    pub fn next_change(&self, t: f64) -> Option<f64> {
        self.trace.as_ref().and_then(|tr| tr.next_change(t))
    }
}

/// Seconds to push `size_mbit` through `profile` starting at `start_s`,
/// alone on the link.
pub fn transfer_time(size_mbit: f64, profile: &BandwidthProfile, start_s: f64) -> f64 {
    let mut remaining = size_mbit.max(0.0);
    let mut t = start_s;
    while remaining > 0.0 {
        let bw = profile.at(t);
        match profile.next_change(t) {
            Some(next) if bw * (next - t) < remaining => {
                remaining -= bw * (next - t);
                t = next;
            }
            _ => return t + remaining / bw - start_s,
        }
    }
    t - start_s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_then_faster() {
        let p = BandwidthProfile::with_trace(
            10.0,
            StepTrace::new(vec![(0.0, 10.0), (5.0, 50.0)]).unwrap(),
        );
        assert!((transfer_time(100.0, &p, 0.0) - 6.0).abs() < 1e-12);
        assert_eq!(transfer_time(0.0, &p, 3.0), 0.0);
        // starting mid-step
        assert!((transfer_time(100.0, &p, 4.0) - (1.0 + 90.0 / 50.0)).abs() < 1e-12);
    }

    #[test]
    fn upload_table_values() {
        let wl = transfer_time(15722.0, &BandwidthProfile::constant(28.43), 0.0);
        assert!((wl - 553.0).abs() / 553.0 < 0.01, "{wl}");
        let az = transfer_time(15722.0, &BandwidthProfile::constant(4.006), 0.0);
        assert!((az - 3925.0).abs() / 3925.0 < 0.01, "{az}");
    }

    #[test]
    fn trace_semantics() {
        let tr = StepTrace::new(vec![(1.0, 5.0), (2.0, 0.0)]).unwrap();
        assert_eq!(tr.value_at(0.5), None);
        assert_eq!(tr.value_at(1.0), Some(5.0));
        assert_eq!(tr.value_at(1.5), Some(5.0));
        assert_eq!(tr.value_at(100.0), Some(0.0));
        assert_eq!(tr.next_change(1.0), Some(2.0));
        assert_eq!(tr.next_change(2.0), None);
        let p = BandwidthProfile::with_trace(8.0, tr);
        assert_eq!(p.at(0.0), 8.0);
        assert_eq!(p.at(3.0), BANDWIDTH_FLOOR_MBPS);
        assert!(transfer_time(1.0, &p, 3.0).is_finite());
    }

    #[test]
    fn rejects_bad_traces() {
        assert_eq!(
            StepTrace::new(vec![(1.0, 1.0), (1.0, 2.0)]),
            Err(TraceError::NotIncreasing(1))
        );
        assert_eq!(StepTrace::new(vec![(0.0, -1.0)]), Err(TraceError::BadValue(0)));
        let parsed: Result<StepTrace, _> = serde_json::from_str("[[0, 1], [0, 2]]");
        assert!(parsed.is_err());
    }
}
