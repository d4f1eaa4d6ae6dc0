//! Hysteresis detection of switches between the two photocurrent levels.

use serde::{Deserialize, Serialize};

use crate::analysis::filter::lowpass;
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::record::TrajectoryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn reversed(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    /// Time of the last midpoint crossing before the far threshold was
    /// reached (us).
    pub t: f64,
    pub direction: Direction,
    /// Mean of the filtered signal over the dwell before the event.
    pub filtered_level_before: f64,
    /// Mean of the filtered signal over the dwell after the event.
    pub filtered_level_after: f64,
}

/// Hysteresis band of the trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Thresholds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::InvalidParams(format!(
                "thresholds must satisfy low < high (got {low}, {high})"
            )));
        }
        Ok(Thresholds { low, high })
    }

    /// `±g`, half of the two photocurrent levels `±2g`.
    pub fn for_params(params: &SystemParams) -> Self {
        Thresholds {
            low: -params.g,
            high: params.g,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }
}

/// Sample indices at which a Schmitt trigger changes state.
///
/// An `Up` transition is reported when the signal reaches `high` having last
/// been at or below `low`, and symmetrically for `Down`. The reported index is
/// the last crossing of the band midpoint before the threshold was reached.
pub fn schmitt_trigger(series: &[f64], thresholds: &Thresholds) -> Vec<(usize, Direction)> {
    #[derive(PartialEq)]
    enum State {
        Unknown,
        Low,
        High,
    }
    let mid = thresholds.midpoint();
    let mut state = State::Unknown;
    let mut last_mid_cross = 0usize;
    let mut out = Vec::new();
    for (i, &x) in series.iter().enumerate() {
        if i > 0 && (series[i - 1] < mid) != (x < mid) {
            last_mid_cross = i;
        }
        if x >= thresholds.high {
            if state == State::Low {
                out.push((last_mid_cross, Direction::Up));
            }
            state = State::High;
        } else if x <= thresholds.low {
            if state == State::High {
                out.push((last_mid_cross, Direction::Down));
            }
            state = State::Low;
        }
    }
    out
}

/// Filters `series` and detects level switches. `t0` is the time of the first
/// sample.
pub fn detect_switches_in(
    series: &[f64],
    dt: f64,
    t0: f64,
    fc: f64,
    thresholds: &Thresholds,
) -> Result<Vec<SwitchEvent>> {
    if series.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let filtered = lowpass(series, dt, fc)?;
    let marks = schmitt_trigger(&filtered, thresholds);
    let mean = |lo: usize, hi: usize| {
        if hi > lo {
            filtered[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        } else {
            filtered[lo.min(filtered.len() - 1)]
        }
    };
    let mut bounds: Vec<usize> = Vec::with_capacity(marks.len() + 2);
    bounds.push(0);
    bounds.extend(marks.iter().map(|&(i, _)| i));
    bounds.push(filtered.len());
    Ok(marks
        .iter()
        .enumerate()
        .map(|(k, &(i, direction))| SwitchEvent {
            t: t0 + i as f64 * dt,
            direction,
            filtered_level_before: mean(bounds[k], bounds[k + 1]),
            filtered_level_after: mean(bounds[k + 1], bounds[k + 2]),
        })
        .collect())
}

/// Switches of the low-passed photocurrent of `record`.
pub fn detect_switches(
    record: &TrajectoryRecord,
    fc: f64,
    thresholds: &Thresholds,
) -> Result<Vec<SwitchEvent>> {
    let t0 = record.times.first().copied().ok_or(Error::EmptyRecord)?;
    detect_switches_in(&record.photocurrent, record.dt, t0, fc, thresholds)
}

/// Switches per unit time over a window of length `duration`.
pub fn event_rate(events: &[SwitchEvent], duration: f64) -> f64 {
    events.len() as f64 / duration
}

/// Time after a level change at which the noiseless filtered response of a
/// signal relaxing as `1 - exp(-kappa t)` between the two levels crosses the
/// far threshold.
pub fn resolution_time(
    level: f64,
    relaxation_rate: f64,
    dt: f64,
    fc: f64,
    thresholds: &Thresholds,
) -> Result<f64> {
    let a = crate::analysis::filter::lowpass_coefficient(dt, fc)?;
    let mut state = -level;
    let limit = 1e6 as usize;
    for n in 1..limit {
        let t = n as f64 * dt;
        let x = level - 2.0 * level * (-relaxation_rate * t).exp();
        state += a * (x - state);
        if state >= thresholds.high {
            return Ok(t);
        }
    }
    Err(Error::InvalidParams(
        "filtered step response never reaches the threshold".into(),
    ))
}

/// Flip rate of a symmetric telegraph process whose transitions are only seen
/// when the new level lasts at least `resolution`.
///
/// A missed short dwell hides its own transition and the next one, so the
/// observed rate is `r = λ u / (2 - u)` with `u = exp(-λ τ)`; this inverts
/// that relation by bisection.
pub fn dead_time_corrected_rate(observed: f64, resolution: f64) -> f64 {
    if observed <= 0.0 || resolution <= 0.0 {
        return observed.max(0.0);
    }
    let seen = |lambda: f64| {
        let u = (-lambda * resolution).exp();
        lambda * u / (2.0 - u)
    };
    // seen() rises up to its maximum, which lies beyond 1/(2 tau).
    let mut hi = 0.5 / resolution;
    if seen(hi) < observed {
        return hi;
    }
    let mut lo = observed;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if seen(mid) < observed {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
