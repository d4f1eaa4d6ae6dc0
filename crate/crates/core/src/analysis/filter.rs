use crate::error::{Error, Result};

/// Default cutoff of the photocurrent low-pass filter (MHz).
pub const DEFAULT_CUTOFF: f64 = 10.0;

/// Smoothing coefficient `1 - exp(-2π f_c dt)` of the single-pole filter.
pub fn lowpass_coefficient(dt: f64, fc: f64) -> Result<f64> {
    let nyquist = 0.5 / dt;
    if !(fc > 0.0) || fc >= nyquist {
        return Err(Error::AboveNyquist { fc, nyquist });
    }
    Ok(1.0 - (-2.0 * std::f64::consts::PI * fc * dt).exp())
}

/// Single-pole recursive low-pass filter started from zero:
/// `out[n] = out[n-1] + a (x[n] - out[n-1])`.
///
/// For white input of variance `v` the output variance is `v a / (2 - a)`,
/// close to `π f_c dt v` when `f_c dt` is small.
pub fn lowpass(series: &[f64], dt: f64, fc: f64) -> Result<Vec<f64>> {
    let a = lowpass_coefficient(dt, fc)?;
    let mut state = 0.0;
    Ok(series
        .iter()
        .map(|x| {
            state += a * (x - state);
            state
        })
        .collect())
}
