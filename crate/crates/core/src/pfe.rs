//! Reduced model: a pair of densities `P₊(y)`, `P₋(y)` on a line of the
//! phase quadrature, one per dressed atomic state.
//!
//! The densities obey
//!
//! ```text
//! dP± = ∂y[(±g + κy) P±] dt + sqrt(2κη) (y - ⟨y⟩) P± dW + (γ⊥/2)(P∓ - P±) dt
//! ```
//!
//! with `⟨y⟩` the mean over both densities. A step applies, in order, the
//! multiplicative measurement update, the exact two-state exchange, donor-cell
//! advection and clipping of negative values followed by renormalization.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::Increments;
use crate::params::{Branch, SystemParams};
use crate::record::{Sampler, TrajectoryRecord};
use crate::sme::EMPTY_BRANCH;

/// Largest Courant number accepted by the advection step.
pub const CFL_LIMIT: f64 = 0.8;

/// Uniform cell-centred grid layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfeGridSpec {
    pub n_y: usize,
    /// Half-width of the grid in units of `g / kappa`.
    pub span: f64,
}

impl Default for PfeGridSpec {
    fn default() -> Self {
        PfeGridSpec { n_y: 512, span: 4.0 }
    }
}

impl PfeGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_y < 4 {
            return Err(Error::InvalidParams("n_y must be >= 4".into()));
        }
        if !(self.span > 1.0 && self.span.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "grid span {} must exceed 1 (the fixed points sit at ±1)",
                self.span
            )));
        }
        Ok(())
    }

    pub fn half_width(&self, params: &SystemParams) -> f64 {
        self.span * params.y_fix()
    }

    pub fn spacing(&self, params: &SystemParams) -> f64 {
        2.0 * self.half_width(params) / self.n_y as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfeState {
    y_axis: Vec<f64>,
    dy: f64,
    p_plus: Vec<f64>,
    p_minus: Vec<f64>,
}

impl PfeState {
    /// Empty densities on `n_y` cells covering `[y_min, y_max]`.
    pub fn zeros(y_min: f64, y_max: f64, n_y: usize) -> Self {
        let dy = (y_max - y_min) / n_y as f64;
        PfeState {
            y_axis: (0..n_y).map(|i| y_min + (i as f64 + 0.5) * dy).collect(),
            dy,
            p_plus: vec![0.0; n_y],
            p_minus: vec![0.0; n_y],
        }
    }

    pub fn for_params(params: &SystemParams, grid: &PfeGridSpec) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        if params.g <= 0.0 {
            return Err(Error::InvalidParams("the reduced model needs g > 0".into()));
        }
        let h = grid.half_width(params);
        Ok(Self::zeros(-h, h, grid.n_y))
    }

    /// All probability in `branch`, concentrated at its fixed point.
    pub fn on_branch(params: &SystemParams, grid: &PfeGridSpec, branch: Branch) -> Result<Self> {
        let mut s = Self::for_params(params, grid)?;
        s.add_point_mass(branch, -branch.sign() * params.y_fix(), 1.0);
        Ok(s)
    }

    pub fn y_axis(&self) -> &[f64] {
        &self.y_axis
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn density(&self, branch: Branch) -> &[f64] {
        match branch {
            Branch::Plus => &self.p_plus,
            Branch::Minus => &self.p_minus,
        }
    }

    pub fn density_mut(&mut self, branch: Branch) -> &mut [f64] {
        match branch {
            Branch::Plus => &mut self.p_plus,
            Branch::Minus => &mut self.p_minus,
        }
    }

    /// Adds probability `weight` at `y`, split linearly between the two
    /// nearest cells so that the mean is exact.
    pub fn add_point_mass(&mut self, branch: Branch, y: f64, weight: f64) {
        let n = self.y_axis.len();
        let x = ((y - self.y_axis[0]) / self.dy).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        let frac = x - i as f64;
        let dy = self.dy;
        let d = self.density_mut(branch);
        d[i] += weight * (1.0 - frac) / dy;
        d[i + 1] += weight * frac / dy;
    }

    /// Adds a Gaussian of the given total weight.
    pub fn add_gaussian(&mut self, branch: Branch, mean: f64, width: f64, weight: f64) {
        let shape: Vec<f64> = self
            .y_axis
            .iter()
            .map(|y| (-0.5 * ((y - mean) / width).powi(2)).exp())
            .collect();
        let norm: f64 = shape.iter().sum::<f64>() * self.dy;
        let d = self.density_mut(branch);
        for (p, s) in d.iter_mut().zip(shape) {
            *p += weight * s / norm;
        }
    }

    pub fn mass(&self, branch: Branch) -> f64 {
        self.density(branch).iter().sum::<f64>() * self.dy
    }

    pub fn total_mass(&self) -> f64 {
        self.mass(Branch::Plus) + self.mass(Branch::Minus)
    }

    /// Scales to unit total probability and returns the prior mass.
    pub fn normalize(&mut self) -> f64 {
        let m = self.total_mass();
        let s = 1.0 / m;
        self.p_plus.iter_mut().chain(self.p_minus.iter_mut()).for_each(|p| *p *= s);
        m
    }

    /// CSV with header `y,p_plus,p_minus`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "y,p_plus,p_minus")?;
        for i in 0..self.y_axis.len() {
            writeln!(
                w,
                "{:.8e},{:.8e},{:.8e}",
                self.y_axis[i], self.p_plus[i], self.p_minus[i]
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

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfeMoments {
    pub p_plus: f64,
    pub p_minus: f64,
    pub y_mean_plus: f64,
    pub y_mean_minus: f64,
    pub y_mean: f64,
    /// `y_mean_plus - y_mean_minus`, zero when either branch is empty.
    pub delta_y: f64,
    pub entropy_s: f64,
}

/// Branch weights and conditional means by the midpoint rule.
pub fn pfe_moments(state: &PfeState) -> PfeMoments {
    let dy = state.dy;
    let (mut m0p, mut m1p, mut m0m, mut m1m) = (0.0, 0.0, 0.0, 0.0);
    for ((y, a), b) in state.y_axis.iter().zip(&state.p_plus).zip(&state.p_minus) {
        m0p += a;
        m1p += a * y;
        m0m += b;
        m1m += b * y;
    }
    let total = (m0p + m0m) * dy;
    let p_plus = m0p * dy / total;
    let p_minus = m0m * dy / total;
    let mean_of = |m1: f64, m0: f64| if m0 > 0.0 { m1 / m0 } else { 0.0 };
    let y_mean_plus = mean_of(m1p, m0p);
    let y_mean_minus = mean_of(m1m, m0m);
    let delta_y = if p_plus < EMPTY_BRANCH || p_minus < EMPTY_BRANCH {
        0.0
    } else {
        y_mean_plus - y_mean_minus
    };
    PfeMoments {
        p_plus,
        p_minus,
        y_mean_plus,
        y_mean_minus,
        y_mean: (m1p + m1m) * dy / total,
        delta_y,
        entropy_s: (p_plus - p_plus * p_plus).max(0.0),
    }
}

/// Reusable stepping data for one grid and parameter set.
#[derive(Debug, Clone)]
pub struct PfeStepper {
    dt: f64,
    measurement_rate: f64,
    exchange_factor: f64,
    /// Face velocities `-(±g + κ y)` at the `n + 1` cell faces.
    faces_plus: Vec<f64>,
    faces_minus: Vec<f64>,
    flux: Vec<f64>,
    /// Total negative mass removed so far.
    clipped_mass: f64,
    steps: usize,
}

impl PfeStepper {
    pub fn new(state: &PfeState, params: &SystemParams, dt: f64) -> Result<Self> {
        params.validate()?;
        let n = state.y_axis.len();
        let y0 = state.y_axis[0] - 0.5 * state.dy;
        let faces: Vec<f64> = (0..=n).map(|i| y0 + i as f64 * state.dy).collect();
        let faces_plus: Vec<f64> = faces.iter().map(|y| -(params.g + params.kappa * y)).collect();
        let faces_minus: Vec<f64> = faces.iter().map(|y| -(-params.g + params.kappa * y)).collect();
        let vmax = faces_plus
            .iter()
            .chain(&faces_minus)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if !(dt > 0.0) || vmax * dt > CFL_LIMIT * state.dy {
            return Err(Error::Cfl {
                velocity: vmax,
                dt,
                dy: state.dy,
                limit: CFL_LIMIT,
            });
        }
        Ok(PfeStepper {
            dt,
            measurement_rate: params.measurement_rate(),
            exchange_factor: (-params.gamma_perp * dt).exp(),
            faces_plus,
            faces_minus,
            flux: vec![0.0; n + 1],
            clipped_mass: 0.0,
            steps: 0,
        })
    }

    /// Step that puts the Courant number at 0.64 on the default grid.
    pub fn default_dt(params: &SystemParams, grid: &PfeGridSpec) -> f64 {
        let vmax = params.g + params.kappa * grid.half_width(params);
        0.8 * CFL_LIMIT * grid.spacing(params) / vmax
    }

    pub fn clipped_mass(&self) -> f64 {
        self.clipped_mass
    }

    /// Advances `state` by one step with increment `dw`.
    pub fn step(&mut self, state: &mut PfeState, dw: f64) -> Result<()> {
        self.steps += 1;
        if !dw.is_finite() {
            return Err(Error::NonFinite { step: self.steps });
        }
        let dt = self.dt;
        let m = pfe_moments(state).y_mean;
        if self.measurement_rate > 0.0 && dw != 0.0 {
            let kdw = self.measurement_rate * dw;
            for ((y, a), b) in state.y_axis.iter().zip(&mut state.p_plus).zip(&mut state.p_minus) {
                let f = 1.0 + kdw * (y - m);
                *a *= f;
                *b *= f;
            }
        }
        let decay = self.exchange_factor;
        for (a, b) in state.p_plus.iter_mut().zip(&mut state.p_minus) {
            let mean = 0.5 * (*a + *b);
            let half_diff = 0.5 * (*a - *b) * decay;
            *a = mean + half_diff;
            *b = mean - half_diff;
        }
        let c = dt / state.dy;
        advect(&mut state.p_plus, &self.faces_plus, &mut self.flux, c);
        advect(&mut state.p_minus, &self.faces_minus, &mut self.flux, c);
        let mut clipped = 0.0;
        for p in state.p_plus.iter_mut().chain(state.p_minus.iter_mut()) {
            if *p < 0.0 {
                clipped -= *p;
                *p = 0.0;
            }
        }
        self.clipped_mass += clipped * state.dy;
        let mass = state.normalize();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::NonFinite { step: self.steps });
        }
        Ok(())
    }
}

/// Donor-cell update of `∂t P + ∂y (v P) = 0`; boundary faces pass only
/// outgoing flux.
fn advect(p: &mut [f64], faces: &[f64], flux: &mut [f64], courant: f64) {
    let n = p.len();
    flux[0] = faces[0].min(0.0) * p[0];
    flux[n] = faces[n].max(0.0) * p[n - 1];
    for i in 1..n {
        let v = faces[i];
        flux[i] = if v > 0.0 { v * p[i - 1] } else { v * p[i] };
    }
    for i in 0..n {
        p[i] -= courant * (flux[i + 1] - flux[i]);
    }
}

/// One step from `state`.
pub fn pfe_step(state: &PfeState, params: &SystemParams, dt: f64, dw: f64) -> Result<PfeState> {
    let mut stepper = PfeStepper::new(state, params, dt)?;
    let mut out = state.clone();
    stepper.step(&mut out, dw)?;
    Ok(out)
}

/// Run settings for the reduced model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfeConfig {
    pub dt: f64,
    pub t_final: f64,
    pub stride: usize,
    pub grid: PfeGridSpec,
    /// Branch holding all probability at `t = 0`, placed at its fixed point.
    pub initial_branch: Branch,
    /// Steps between stored grid snapshots; 0 stores none.
    pub snapshot_every: usize,
}

impl PfeConfig {
    pub fn new(params: &SystemParams) -> Self {
        let grid = PfeGridSpec::default();
        PfeConfig {
            dt: PfeStepper::default_dt(params, &grid),
            t_final: 40.0,
            stride: 10,
            grid,
            initial_branch: Branch::Plus,
            snapshot_every: 0,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        self.grid.validate()?;
        if self.stride == 0 {
            return Err(Error::InvalidParams("stride must be >= 1".into()));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "t_final = {} must be positive",
                self.t_final
            )));
        }
        let probe = PfeState::for_params(params, &self.grid)?;
        PfeStepper::new(&probe, params, self.dt).map(|_| ())
    }
}

/// Output of [`simulate_pfe`].
#[derive(Debug, Clone)]
pub struct PfeRun {
    pub record: TrajectoryRecord,
    /// Negative probability removed by clipping over the run.
    pub clipped_mass: f64,
    pub final_state: PfeState,
    /// `(t, state)` every `snapshot_every` steps.
    pub snapshots: Vec<(f64, PfeState)>,
}

/// Integrates the reduced model; a numerical failure returns the partial
/// record with `failure` set.
pub fn simulate_pfe(
    params: &SystemParams,
    config: &PfeConfig,
    noise: &mut impl Increments,
) -> Result<PfeRun> {
    config.validate(params)?;
    let state = PfeState::on_branch(params, &config.grid, config.initial_branch)?;
    simulate_pfe_from(state, params, config, noise)
}

/// As [`simulate_pfe`] from an explicit initial state.
pub fn simulate_pfe_from(
    mut state: PfeState,
    params: &SystemParams,
    config: &PfeConfig,
    noise: &mut impl Increments,
) -> Result<PfeRun> {
    let mut stepper = PfeStepper::new(&state, params, config.dt)?;
    let n_steps = config.n_steps();
    let mut record =
        TrajectoryRecord::with_capacity(config.dt * config.stride as f64, n_steps / config.stride);
    let mut sampler = Sampler::new(config.dt, config.stride, params.measurement_rate());
    let mut snapshots = Vec::new();
    for step in 0..n_steps {
        let t = step as f64 * config.dt;
        if config.snapshot_every > 0 && step % config.snapshot_every == 0 {
            snapshots.push((t, state.clone()));
        }
        let m = pfe_moments(&state);
        let dw = noise.next_increment(config.dt);
        sampler.push(&mut record, t, m.y_mean, m.p_plus, m.delta_y, dw);
        if let Err(e) = stepper.step(&mut state, dw) {
            log::warn!("reduced model stopped at t = {t} us: {e}");
            record.failure = Some(e.to_string());
            break;
        }
    }
    let duration = n_steps as f64 * config.dt;
    let rate = stepper.clipped_mass() / duration;
    if rate > 1e-4 {
        log::warn!(
            "clipped probability {rate:.3e} per us exceeds 1e-4 (g = {}, kappa = {}, gamma_perp = {}, eta = {})",
            params.g, params.kappa, params.gamma_perp, params.eta
        );
    }
    Ok(PfeRun {
        record,
        clipped_mass: stepper.clipped_mass(),
        final_state: state,
        snapshots,
    })
}

/// Agreement between the recorded `p₊` and its moment equation
/// `dp₊ = sqrt(2κη) S Δy dW - γ⊥ (p₊ - ½) dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeCheck {
    /// RMS of the residual divided by the RMS of the predicted increment;
    /// zero when both vanish.
    pub normalized_rms: f64,
    pub rms_residual: f64,
    pub rms_predicted: f64,
    /// Fraction of steps with `Δy < 0` and `ξ > 0` in which
    /// `dp₊ <= γ⊥ dt / 2`.
    pub sign_test_fraction: f64,
    pub sign_test_steps: usize,
}

/// Compares finite differences of `p₊` with the moment equation. Needs a
/// record with one sample per integration step.
pub fn check_p_plus_ode(
    record: &TrajectoryRecord,
    params: &SystemParams,
    step_dt: f64,
) -> Result<OdeCheck> {
    if record.len() < 2 {
        return Err(Error::EmptyRecord);
    }
    if (record.dt - step_dt).abs() > 1e-9 * step_dt {
        return Err(Error::InsufficientData(format!(
            "record sampled every {} us; the check needs every step ({} us)",
            record.dt, step_dt
        )));
    }
    let dt = record.dt;
    let k = params.measurement_rate();
    let (mut sum_r2, mut sum_p2) = (0.0, 0.0);
    let (mut sign_steps, mut sign_ok) = (0usize, 0usize);
    let n = record.len() - 1;
    for i in 0..n {
        let p = record.p_plus[i];
        let dp = record.p_plus[i + 1] - p;
        let dw = record.xi[i] * dt;
        let predicted =
            k * record.entropy_s[i] * record.delta_y[i] * dw - params.gamma_perp * (p - 0.5) * dt;
        sum_r2 += (dp - predicted).powi(2);
        sum_p2 += predicted.powi(2);
        if record.delta_y[i] < 0.0 && record.xi[i] > 0.0 {
            sign_steps += 1;
            if dp <= 0.5 * params.gamma_perp * dt {
                sign_ok += 1;
            }
        }
    }
    let rms_residual = (sum_r2 / n as f64).sqrt();
    let rms_predicted = (sum_p2 / n as f64).sqrt();
    let normalized_rms = if rms_predicted > 0.0 {
        rms_residual / rms_predicted
    } else if rms_residual == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(OdeCheck {
        normalized_rms,
        rms_residual,
        rms_predicted,
        sign_test_fraction: if sign_steps > 0 {
            sign_ok as f64 / sign_steps as f64
        } else {
            1.0
        },
        sign_test_steps: sign_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{NoiseSource, ZeroIncrements};

    fn quiet() -> SystemParams {
        SystemParams {
            gamma_perp: 0.0,
            eta: 0.0,
            ..SystemParams::reference()
        }
    }

    #[test]
    fn default_step_is_within_cfl() {
        let p = SystemParams::reference();
        let cfg = PfeConfig::new(&p);
        assert!((cfg.dt - 5e-5).abs() < 1e-12);
        assert!(cfg.validate(&p).is_ok());
        let bad = PfeConfig { dt: 1e-4, ..cfg };
        assert!(matches!(bad.validate(&p), Err(Error::Cfl { .. })));
    }

    #[test]
    fn moments_of_symmetric_and_pure_states() {
        let p = SystemParams::reference();
        let grid = PfeGridSpec::default();
        let mut s = PfeState::for_params(&p, &grid).unwrap();
        s.add_gaussian(Branch::Plus, 0.0, 1.0, 0.5);
        s.add_gaussian(Branch::Minus, 0.0, 1.0, 0.5);
        let m = pfe_moments(&s);
        assert!((m.p_plus - 0.5).abs() < 1e-12 && (m.entropy_s - 0.25).abs() < 1e-12);

        let pure = PfeState::on_branch(&p, &grid, Branch::Plus).unwrap();
        let m = pfe_moments(&pure);
        assert_eq!(m.p_plus, 1.0);
        assert_eq!(m.entropy_s, 0.0);
        assert_eq!(m.delta_y, 0.0);
        assert!((m.y_mean + 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_masses_give_full_separation() {
        let p = SystemParams::reference();
        let mut s = PfeState::for_params(&p, &PfeGridSpec::default()).unwrap();
        s.add_point_mass(Branch::Plus, -3.0, 0.9);
        s.add_point_mass(Branch::Minus, 3.0, 0.1);
        let m = pfe_moments(&s);
        assert!((m.delta_y + 6.0).abs() < 1e-12);
        assert!((m.y_mean - (-0.9 * 3.0 + 0.1 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn advection_conserves_each_branch() {
        let p = quiet();
        let grid = PfeGridSpec::default();
        let mut s = PfeState::for_params(&p, &grid).unwrap();
        s.add_gaussian(Branch::Plus, 5.0, 1.0, 0.3);
        s.add_gaussian(Branch::Minus, -8.0, 0.5, 0.7);
        let dt = PfeStepper::default_dt(&p, &grid);
        let mut st = PfeStepper::new(&s, &p, dt).unwrap();
        for _ in 0..2000 {
            let before = (s.mass(Branch::Plus), s.mass(Branch::Minus));
            st.step(&mut s, 0.0).unwrap();
            assert!((s.mass(Branch::Plus) - before.0).abs() < 1e-8);
            assert!((s.mass(Branch::Minus) - before.1).abs() < 1e-8);
        }
        assert_eq!(st.clipped_mass(), 0.0);
    }

    #[test]
    fn mean_relaxes_to_fixed_point() {
        let p = quiet();
        let grid = PfeGridSpec::default();
        let mut s = PfeState::for_params(&p, &grid).unwrap();
        s.add_gaussian(Branch::Plus, 0.0, 0.2, 1.0);
        let dt = PfeStepper::default_dt(&p, &grid);
        let mut st = PfeStepper::new(&s, &p, dt).unwrap();
        let mut t = 0.0;
        for _ in 0..1000 {
            st.step(&mut s, 0.0).unwrap();
            t += dt;
            let expect = -3.0 * (1.0 - (-p.kappa * t).exp());
            let got = pfe_moments(&s).y_mean;
            assert!((got - expect).abs() <= 0.02 * expect.abs() + 1e-9, "t={t}: {got} vs {expect}");
        }
    }

    #[test]
    fn population_difference_decays_at_gamma() {
        let p = SystemParams { eta: 0.0, ..SystemParams::reference() };
        let cfg = PfeConfig {
            t_final: 1.0,
            stride: 100,
            ..PfeConfig::new(&p)
        };
        let run = simulate_pfe(&p, &cfg, &mut ZeroIncrements).unwrap();
        for (t, pp) in run.record.times.iter().zip(&run.record.p_plus) {
            let expect = 0.5 + 0.5 * (-p.gamma_perp * t).exp();
            assert!((pp - expect).abs() < 0.02 * (expect - 0.5) + 1e-12);
        }
        assert!(run.record.photocurrent.iter().all(|&i| i == 0.0));
    }

    #[test]
    fn ode_check_vanishes_without_noise_or_decay() {
        let p = SystemParams { gamma_perp: 0.0, ..SystemParams::reference() };
        let cfg = PfeConfig {
            t_final: 0.05,
            stride: 1,
            ..PfeConfig::new(&p)
        };
        let run = simulate_pfe(&p, &cfg, &mut ZeroIncrements).unwrap();
        let check = check_p_plus_ode(&run.record, &p, cfg.dt).unwrap();
        assert_eq!(check.normalized_rms, 0.0);
    }

    #[test]
    fn ode_check_rejects_strided_records() {
        let p = SystemParams::reference();
        let cfg = PfeConfig {
            t_final: 0.01,
            ..PfeConfig::new(&p)
        };
        let run = simulate_pfe(&p, &cfg, &mut ZeroIncrements).unwrap();
        assert!(matches!(
            check_p_plus_ode(&run.record, &p, cfg.dt),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn noisy_step_keeps_normalization() {
        let p = SystemParams::reference();
        let cfg = PfeConfig {
            t_final: 0.5,
            ..PfeConfig::new(&p)
        };
        let mut noise = NoiseSource::new(4, 0).increments();
        let run = simulate_pfe(&p, &cfg, &mut noise).unwrap();
        assert!((run.final_state.total_mass() - 1.0).abs() < 1e-12);
        assert!(run.record.entropy_s.iter().all(|s| (0.0..=0.25).contains(s)));
    }

    #[test]
    fn snapshot_csv_header() {
        let p = SystemParams::reference();
        let s = PfeState::on_branch(&p, &PfeGridSpec { n_y: 8, span: 4.0 }, Branch::Minus).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("y,p_plus,p_minus\n"));
        assert_eq!(text.lines().count(), 9);
    }
}
