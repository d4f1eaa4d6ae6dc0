//! Noise statistics in the moments leading up to a switch of the atomic
//! population.
//!
//! A switch of `p₊` is produced by the record itself: while both branches are
//! present, a positive noise excursion lowers `p₊` and a negative one raises
//! it. Averaging the low-passed noise just before each detected switch exposes
//! that excursion.

use serde::{Deserialize, Serialize};

use crate::analysis::filter::lowpass;
use crate::analysis::stats::{mean, variance};
use crate::analysis::switches::{schmitt_trigger, Direction, SwitchEvent, Thresholds};
use crate::error::{Error, Result};
use crate::record::TrajectoryRecord;

/// Hysteresis band used on `p₊`.
pub const POPULATION_THRESHOLDS: Thresholds = Thresholds {
    low: 0.1,
    high: 0.9,
};

/// Switches of the recorded `p₊`, detected without filtering. Levels are in
/// units of population rather than MHz.
pub fn population_switches(
    record: &TrajectoryRecord,
    thresholds: &Thresholds,
) -> Result<Vec<SwitchEvent>> {
    let t0 = record.times.first().copied().ok_or(Error::EmptyRecord)?;
    let marks = schmitt_trigger(&record.p_plus, thresholds);
    let mut bounds = vec![0];
    bounds.extend(marks.iter().map(|&(i, _)| i));
    bounds.push(record.len());
    let level = |lo: usize, hi: usize| {
        if hi > lo {
            mean(&record.p_plus[lo..hi])
        } else {
            record.p_plus[lo.min(record.len() - 1)]
        }
    };
    Ok(marks
        .iter()
        .enumerate()
        .map(|(k, &(i, direction))| SwitchEvent {
            t: t0 + i as f64 * record.dt,
            direction,
            filtered_level_before: level(bounds[k], bounds[k + 1]),
            filtered_level_after: level(bounds[k + 1], bounds[k + 2]),
        })
        .collect())
}

/// Window averages of the low-passed noise preceding switches of one
/// direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecursorStats {
    pub direction: Direction,
    pub n_events: usize,
    /// Mean over events of the window-averaged filtered `ξ` (us^-1/2).
    pub mean: f64,
    pub std_err: f64,
}

impl PrecursorStats {
    /// `mean / std_err`.
    pub fn z_score(&self) -> f64 {
        self.mean / self.std_err
    }
}

/// Averages the low-passed `ξ` of `record` over the `window` microseconds
/// ending at each event, separately for each direction. Events whose window
/// starts before the record are skipped.
pub fn precursor_noise(
    record: &TrajectoryRecord,
    events: &[SwitchEvent],
    window: f64,
    fc: f64,
) -> Result<[PrecursorStats; 2]> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    if !(window >= record.dt) {
        return Err(Error::InvalidParams(format!(
            "window {window} us is shorter than the sample interval {} us",
            record.dt
        )));
    }
    let filtered = lowpass(&record.xi, record.dt, fc)?;
    let width = (window / record.dt).round() as usize;
    let mut by_direction: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for e in events {
        let end = record.index_at(e.t).min(filtered.len());
        if end < width {
            continue;
        }
        let slot = usize::from(e.direction == Direction::Down);
        by_direction[slot].push(mean(&filtered[end - width..end]));
    }
    let stats = |direction: Direction, xs: &[f64]| {
        let n = xs.len();
        PrecursorStats {
            direction,
            n_events: n,
            mean: if n > 0 { mean(xs) } else { f64::NAN },
            std_err: if n > 1 { (variance(xs) / n as f64).sqrt() } else { f64::NAN },
        }
    };
    Ok([
        stats(Direction::Up, &by_direction[0]),
        stats(Direction::Down, &by_direction[1]),
    ])
}
