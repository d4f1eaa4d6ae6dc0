//! Statistics of `S = p₊ - p₊²` along conditional records.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseSource;
use crate::params::SystemParams;
use crate::record::TrajectoryRecord;

/// Values of `S` are floored here before inversion.
pub const S_FLOOR: f64 = 1e-12;

/// Post-burn-in samples required by [`stationarity_check`].
pub const MIN_STATIONARY_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// `1 / mean(1 / S)` over all post-burn-in samples.
    pub inv_mean_inv_s: f64,
    /// Bootstrap standard error over blocks.
    pub std_err: f64,
    pub n_samples: usize,
    pub n_blocks: usize,
}

/// Settings of the block bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    /// Block length (us).
    pub block: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec {
            block: 5.0,
            resamples: 400,
            seed: 0,
        }
    }
}

/// `(sum of 1/S, count)` per block, in a canonical order.
fn block_sums(records: &[TrajectoryRecord], burn_in: f64, block: f64) -> Vec<(f64, usize)> {
    let mut blocks = Vec::new();
    for rec in records {
        let start = rec.index_at(burn_in);
        let per_block = ((block / rec.dt).round() as usize).max(1);
        for chunk in rec.entropy_s[start..].chunks(per_block) {
            let sum = chunk.iter().map(|s| 1.0 / s.max(S_FLOOR)).sum::<f64>();
            blocks.push((sum, chunk.len()));
        }
    }
    // Sorting makes the bootstrap independent of record and block order.
    blocks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    blocks
}

/// Harmonic-type estimate `1 / E[1/S]` with a block-bootstrap error.
pub fn entropy_statistic(
    records: &[TrajectoryRecord],
    burn_in: f64,
    bootstrap: &BootstrapSpec,
) -> Result<EntropyEstimate> {
    let mut any_positive = false;
    let mut n_samples = 0;
    for rec in records {
        let tail = &rec.entropy_s[rec.index_at(burn_in)..];
        n_samples += tail.len();
        any_positive |= tail.iter().any(|&s| s > S_FLOOR);
    }
    if n_samples == 0 {
        return Err(Error::InsufficientData("no samples after burn-in".into()));
    }
    if !any_positive {
        return Err(Error::Undefined(
            "S vanishes on every sample (the conditional atom stays pure)".into(),
        ));
    }
    let blocks = block_sums(records, burn_in, bootstrap.block);
    let total: f64 = blocks.iter().map(|b| b.0).sum();
    let estimate = n_samples as f64 / total;
    let std_err = if blocks.len() > 1 && bootstrap.resamples > 1 {
        let mut rng = NoiseSource::new(bootstrap.seed, 0).rng();
        let draws: Vec<f64> = (0..bootstrap.resamples)
            .map(|_| {
                let (mut s, mut n) = (0.0, 0usize);
                for _ in 0..blocks.len() {
                    let b = blocks[rng.random_range(0..blocks.len())];
                    s += b.0;
                    n += b.1;
                }
                n as f64 / s
            })
            .collect();
        crate::analysis::stats::variance(&draws).sqrt()
    } else {
        0.0
    };
    Ok(EntropyEstimate {
        inv_mean_inv_s: estimate,
        std_err,
        n_samples,
        n_blocks: blocks.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    /// `γ⊥ E[1/(2S)]`
    pub lhs: f64,
    /// `κη E[Δy²]`
    pub rhs: f64,
    pub ratio: f64,
    pub n_samples: usize,
}

/// Long-run averages of both sides of the stationarity relation
/// `γ⊥ E[1/(2S)] = κη E[Δy²]`.
pub fn stationarity_check(
    records: &[TrajectoryRecord],
    params: &SystemParams,
    burn_in: f64,
) -> Result<Stationarity> {
    let (mut inv, mut sq, mut n) = (0.0, 0.0, 0usize);
    for rec in records {
        let start = rec.index_at(burn_in);
        for (s, d) in rec.entropy_s[start..].iter().zip(&rec.delta_y[start..]) {
            inv += 0.5 / s.max(S_FLOOR);
            sq += d * d;
            n += 1;
        }
    }
    if n < MIN_STATIONARY_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{n} samples after burn-in, need {MIN_STATIONARY_SAMPLES}"
        )));
    }
    if params.gamma_perp == 0.0 {
        return Err(Error::Undefined(
            "gamma_perp = 0: both sides degenerate".into(),
        ));
    }
    let lhs = params.gamma_perp * inv / n as f64;
    let rhs = params.kappa * params.eta * sq / n as f64;
    if rhs == 0.0 {
        return Err(Error::Undefined("the branch separation never develops".into()));
    }
    Ok(Stationarity {
        lhs,
        rhs,
        ratio: lhs / rhs,
        n_samples: n,
    })
}
