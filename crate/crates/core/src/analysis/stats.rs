//! Small statistical helpers: goodness of fit, regression, histograms and
//! spectra.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov-Smirnov test against an exponential law with the
/// given rate, using the asymptotic distribution with the usual finite-size
/// correction.
pub fn ks_exponential(samples: &[f64], rate: f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples for the KS test".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let cdf = 1.0 - (-rate * x).exp();
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
        n: xs.len(),
    })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Ordinary least-squares line with a 95% interval on the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_err: f64,
    pub slope_ci95: [f64; 2],
    pub n_points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::InsufficientData(format!(
            "linear fit needs at least 2 paired points (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (se, half) = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        let se = (rss / (n as f64 - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, n as f64 - 2.0)
            .map_err(|e| Error::InvalidParams(e.to_string()))?
            .inverse_cdf(0.975);
        (se, t * se)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_std_err: se,
        slope_ci95: [slope - half, slope + half],
        n_points: n,
    })
}

/// Equal-width histogram over `[lo, hi)`; values outside are dropped.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    let w = (hi - lo) / bins as f64;
    for v in values {
        if *v >= lo && *v < hi {
            counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
        }
    }
    counts
}

/// Centres of the most populated bin below and above `split`.
pub fn modes_either_side(values: &[f64], lo: f64, hi: f64, bins: usize, split: f64) -> (f64, f64) {
    let counts = histogram(values, lo, hi, bins);
    let w = (hi - lo) / bins as f64;
    let centre = |i: usize| lo + (i as f64 + 0.5) * w;
    let mut best = [(0usize, f64::NAN), (0usize, f64::NAN)];
    for (i, &c) in counts.iter().enumerate() {
        let side = usize::from(centre(i) >= split);
        if c > best[side].0 {
            best[side] = (c, centre(i));
        }
    }
    (best[0].1, best[1].1)
}

/// One-sided power spectral density by Welch's method with a Hann window and
/// half-overlapping segments. Returns `(frequencies, psd)` in the units of
/// `1/dt` and `x^2 dt`.
pub fn welch_psd(x: &[f64], dt: f64, segment: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if segment < 8 || x.len() < segment {
        return Err(Error::InsufficientData(format!(
            "need at least one segment of {segment} samples (have {})",
            x.len()
        )));
    }
    let window: Vec<f64> = (0..segment)
        .map(|i| {
            let s = (std::f64::consts::PI * i as f64 / segment as f64).sin();
            s * s
        })
        .collect();
    let power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment);
    let half = segment / 2 + 1;
    let mut acc = vec![0.0; half];
    let mut buf = vec![Complex::new(0.0, 0.0); segment];
    let mut count = 0usize;
    let mut start = 0;
    while start + segment <= x.len() {
        let seg = &x[start..start + segment];
        let m = mean(seg);
        for ((b, v), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((v - m) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += segment / 2;
    }
    let scale = dt / (power * count as f64);
    let psd = acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let edge = i == 0 || (segment % 2 == 0 && i == half - 1);
            a * scale * if edge { 1.0 } else { 2.0 }
        })
        .collect();
    let freqs = (0..half).map(|i| i as f64 / (segment as f64 * dt)).collect();
    Ok((freqs, psd))
}

/// Mean of `psd` over frequencies in `[lo, hi)`.
pub fn band_average(freqs: &[f64], psd: &[f64], lo: f64, hi: f64) -> f64 {
    let sel: Vec<f64> = freqs
        .iter()
        .zip(psd)
        .filter(|(f, _)| **f >= lo && **f < hi)
        .map(|(_, p)| *p)
        .collect();
    mean(&sel)
}
