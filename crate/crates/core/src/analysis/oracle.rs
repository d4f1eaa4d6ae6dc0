//! Piecewise-deterministic reference process for the switching dynamics.
//!
//! The atom carries a dressed-state label that flips at rate `γ⊥/2`; between
//! flips the field amplitude relaxes at rate `kappa` towards the strong-driving
//! amplitude of the current label. Since the switching statistics are known
//! exactly here, the process calibrates the switch detector.

use rand::Rng;
use rand_distr::{Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::noise::NoiseSource;
use crate::operators::C64;
use crate::params::{Branch, SystemParams};

#[derive(Debug, Clone)]
pub struct OracleRun {
    /// Uniform sample interval (us).
    pub dt: f64,
    pub times: Vec<f64>,
    /// Field amplitude in the lab frame.
    pub alpha: Vec<C64>,
    /// Label at each sample.
    pub labels: Vec<Branch>,
    /// Flip times (us).
    pub flip_times: Vec<f64>,
    pub initial_label: Branch,
    pub t_final: f64,
}

impl OracleRun {
    /// Completed dwell durations between consecutive flips.
    pub fn dwell_times(&self) -> Vec<f64> {
        self.flip_times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `y = 2 Im α` at each sample.
    pub fn y_mean(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| 2.0 * a.im).collect()
    }

    /// Fraction of samples carrying the `Plus` label.
    pub fn plus_occupancy(&self) -> f64 {
        let n = self.labels.iter().filter(|&&b| b == Branch::Plus).count();
        n as f64 / self.labels.len() as f64
    }
}

fn target(params: &SystemParams, label: Branch) -> C64 {
    C64::new(params.alpha_bar(), -label.sign() * params.g / (2.0 * params.kappa))
}

/// Simulates the label/field process, sampled every `dt`, starting in the
/// `Plus` state at its fixed point.
pub fn semiclassical_jump_oracle(
    params: &SystemParams,
    t_final: f64,
    dt: f64,
    noise: &NoiseSource,
) -> Result<OracleRun> {
    params.validate()?;
    if !(dt > 0.0 && t_final > 0.0) {
        return Err(Error::InvalidParams("dt and t_final must be positive".into()));
    }
    let mut rng = noise.rng();
    let mut flip_times = Vec::new();
    if params.gamma_perp > 0.0 {
        let waits = Exp::new(0.5 * params.gamma_perp)
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        let mut t = 0.0;
        loop {
            t += rng.sample(waits);
            if t >= t_final {
                break;
            }
            flip_times.push(t);
        }
    }
    let n = (t_final / dt).round() as usize;
    let mut times = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut label = Branch::Plus;
    let mut a = target(params, label);
    let mut last_t = 0.0;
    let mut next_flip = 0;
    for k in 0..n {
        let t = k as f64 * dt;
        // Exact relaxation through every flip up to t.
        while next_flip < flip_times.len() && flip_times[next_flip] <= t {
            let tf = flip_times[next_flip];
            let goal = target(params, label);
            a = goal + (a - goal) * (-params.kappa * (tf - last_t)).exp();
            last_t = tf;
            label = label.flipped();
            next_flip += 1;
        }
        let goal = target(params, label);
        a = goal + (a - goal) * (-params.kappa * (t - last_t)).exp();
        last_t = t;
        times.push(t);
        alpha.push(a);
        labels.push(label);
    }
    Ok(OracleRun {
        dt,
        times,
        alpha,
        labels,
        flip_times,
        initial_label: Branch::Plus,
        t_final,
    })
}

/// Homodyne photocurrent `2κη y + sqrt(2κη) ξ` for the oracle's field, with
/// white noise averaged over each sample interval.
pub fn synthetic_photocurrent(run: &OracleRun, params: &SystemParams, noise: &NoiseSource) -> Vec<f64> {
    let mut rng = noise.rng();
    let k = params.measurement_rate();
    let noise_scale = k / run.dt.sqrt();
    run.alpha
        .iter()
        .map(|a| {
            let z: f64 = rng.sample(StandardNormal);
            k * k * 2.0 * a.im + noise_scale * z
        })
        .collect()
}
