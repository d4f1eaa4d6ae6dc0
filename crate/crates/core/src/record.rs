//! Sampled output of a conditional trajectory.

use std::io::Write;
use std::path::Path;

use crate::analysis::switches::SwitchEvent;
use crate::error::Result;

/// Time series produced by a stochastic simulation.
///
/// Samples are taken every `dt` microseconds. Each sample holds the state
/// quantities at the start of its interval together with the noise averaged
/// over the interval, `xi = (sum of dW) / dt`, so that
/// `photocurrent = 2 kappa eta y_mean + sqrt(2 kappa eta) xi` holds sample by
/// sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    /// Sample interval (us).
    pub dt: f64,
    pub times: Vec<f64>,
    /// Homodyne photocurrent (MHz).
    pub photocurrent: Vec<f64>,
    /// Conditional mean of the phase quadrature.
    pub y_mean: Vec<f64>,
    /// Population of the dressed state `|+⟩`.
    pub p_plus: Vec<f64>,
    /// `p_plus - p_plus^2`.
    pub entropy_s: Vec<f64>,
    /// Difference of the branch-conditional quadrature means.
    pub delta_y: Vec<f64>,
    /// White noise averaged over the sample interval, `ΣdW / dt` (us^-1/2).
    pub xi: Vec<f64>,
    pub switch_events: Vec<SwitchEvent>,
    /// Set when integration stopped early; the record holds the samples
    /// produced before the failure.
    pub failure: Option<String>,
}

impl TrajectoryRecord {
    pub fn with_capacity(dt: f64, n: usize) -> Self {
        TrajectoryRecord {
            dt,
            times: Vec::with_capacity(n),
            photocurrent: Vec::with_capacity(n),
            y_mean: Vec::with_capacity(n),
            p_plus: Vec::with_capacity(n),
            entropy_s: Vec::with_capacity(n),
            delta_y: Vec::with_capacity(n),
            xi: Vec::with_capacity(n),
            switch_events: Vec::new(),
            failure: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t - 0.5 * self.dt)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "t_us,i_hom_mhz,y_mean,p_plus,entropy_s,xi")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
                self.times[k],
                self.photocurrent[k],
                self.y_mean[k],
                self.p_plus[k],
                self.entropy_s[k],
                self.xi[k]
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Accumulates per-step values into stride-averaged samples.
#[derive(Debug, Clone)]
pub(crate) struct Sampler {
    step_dt: f64,
    stride: usize,
    measurement_rate: f64,
    count: usize,
    sum_dw: f64,
    start: Option<(f64, f64, f64, f64)>,
}

impl Sampler {
    pub fn new(step_dt: f64, stride: usize, measurement_rate: f64) -> Self {
        Sampler {
            step_dt,
            stride,
            measurement_rate,
            count: 0,
            sum_dw: 0.0,
            start: None,
        }
    }

    /// Feeds one step: the state values at the start of the step and the
    /// increment used for it. Emits a sample once `stride` steps are in.
    pub fn push(
        &mut self,
        record: &mut TrajectoryRecord,
        t: f64,
        y_mean: f64,
        p_plus: f64,
        delta_y: f64,
        dw: f64,
    ) {
        if self.start.is_none() {
            self.start = Some((t, y_mean, p_plus, delta_y));
        }
        self.sum_dw += dw;
        self.count += 1;
        if self.count == self.stride {
            let (t0, y, p, dy) = self.start.take().unwrap_or_default();
            let xi = self.sum_dw / (self.stride as f64 * self.step_dt);
            let k = self.measurement_rate;
            record.times.push(t0);
            record.y_mean.push(y);
            record.p_plus.push(p);
            record.entropy_s.push(p - p * p);
            record.delta_y.push(dy);
            record.xi.push(xi);
            record.photocurrent.push(k * k * y + k * xi);
            self.count = 0;
            self.sum_dw = 0.0;
        }
    }
}
