//! Physical parameters of the driven, damped Jaynes-Cummings system.
//!
//! Rates are in MHz (10^6 s^-1, used directly as inverse microseconds) and
//! times in microseconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which representation the field operators act in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Frame {
    /// Field operators act on the full coherent amplitude.
    Lab,
    /// Field operators act on fluctuations about `alpha_bar = E / kappa`.
    Displaced,
}

impl Frame {
    /// Fock truncation giving a tail probability below 1e-8 at the fixed
    /// points for the reference parameters.
    pub fn default_n_max(self) -> usize {
        match self {
            Frame::Lab => 60,
            Frame::Displaced => 15,
        }
    }
}

/// Which generator is used for the deterministic part of the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// Full Jaynes-Cummings master equation with the bare atomic decay.
    Full,
    /// Rotating-wave reduced equation with the three Mollow decay channels.
    Rwa,
}

/// The two semiclassical branches, labelled by the dressed atomic state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    /// `+1` for `Plus`, `-1` for `Minus`.
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Branch {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Atom-field coupling g (MHz).
    pub g: f64,
    /// Field decay rate kappa (MHz).
    pub kappa: f64,
    /// Transverse atomic decay rate (MHz).
    pub gamma_perp: f64,
    /// Driving amplitude E (MHz).
    pub drive: f64,
    /// Homodyne efficiency.
    pub eta: f64,
    /// Highest retained Fock state.
    pub n_max: usize,
    pub frame: Frame,
}

impl SystemParams {
    /// (g, kappa, gamma_perp) = (120, 40, 2.6) MHz, (E/kappa)^2 = 20, eta = 1,
    /// displaced frame.
    pub fn reference() -> Self {
        let kappa = 40.0;
        SystemParams {
            g: 120.0,
            kappa,
            gamma_perp: 2.6,
            drive: kappa * 20f64.sqrt(),
            eta: 1.0,
            n_max: Frame::Displaced.default_n_max(),
            frame: Frame::Displaced,
        }
    }

    /// Switch frame and reset the truncation to that frame's default.
    pub fn in_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self.n_max = frame.default_n_max();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.g, self.kappa, self.gamma_perp, self.drive, self.eta]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("all rates must be finite".into()));
        }
        if self.g < 0.0 {
            return Err(Error::InvalidParams(format!("g = {} must be >= 0", self.g)));
        }
        if self.kappa <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "kappa = {} must be > 0",
                self.kappa
            )));
        }
        if self.drive < 0.0 {
            return Err(Error::InvalidParams(format!(
                "E = {} must be >= 0",
                self.drive
            )));
        }
        if self.gamma_perp < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma_perp = {} must be >= 0",
                self.gamma_perp
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParams(format!(
                "eta = {} must lie in [0, 1]",
                self.eta
            )));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParams("n_max must be >= 1".into()));
        }
        Ok(())
    }

    /// Rejects parameters outside the domain where the two fixed points exist
    /// (requires 2E > g).
    pub fn validate_bistable(&self) -> Result<()> {
        self.validate()?;
        if 2.0 * self.drive <= self.g {
            return Err(Error::InvalidParams(format!(
                "fixed points require 2E > g (2E = {}, g = {})",
                2.0 * self.drive,
                self.g
            )));
        }
        Ok(())
    }

    /// Mean coherent amplitude `E / kappa`.
    pub fn alpha_bar(&self) -> f64 {
        self.drive / self.kappa
    }

    /// Dressed-state splitting `Omega = 2 g alpha_bar`.
    pub fn omega(&self) -> f64 {
        2.0 * self.g * self.alpha_bar()
    }

    /// Phase-quadrature fixed point magnitude `g / kappa`.
    pub fn y_fix(&self) -> f64 {
        self.g / self.kappa
    }

    /// Measurement strength `sqrt(2 kappa eta)`.
    pub fn measurement_rate(&self) -> f64 {
        (2.0 * self.kappa * self.eta).sqrt()
    }

    pub fn field_dim(&self) -> usize {
        self.n_max + 1
    }

    /// Dimension of the joint atom-field space.
    pub fn dim(&self) -> usize {
        2 * self.field_dim()
    }

    /// Fastest frequency of the chosen generator, used to bound the time step.
    ///
    /// For the rotating-wave generator the dressed splitting only enters
    /// through `(g/2) mu_z x`, i.e. at `Omega / 2`.
    pub fn fastest_rate(&self, variant: Variant) -> f64 {
        let omega = match variant {
            Variant::Full => self.omega(),
            Variant::Rwa => 0.5 * self.omega(),
        };
        omega.max(2.0 * self.kappa).max(self.g)
    }

    /// Rejects `dt` unless `dt * fastest_rate < 0.1`.
    pub fn check_time_step(&self, dt: f64, variant: Variant) -> Result<()> {
        const LIMIT: f64 = 0.1;
        let rate = self.fastest_rate(variant);
        if !(dt > 0.0 && dt.is_finite()) || dt * rate >= LIMIT {
            return Err(Error::StepTooLarge {
                dt,
                rate,
                limit: LIMIT,
            });
        }
        Ok(())
    }

    /// Default burn-in: 1 us or 5/kappa, whichever is larger.
    pub fn default_burn_in(&self) -> f64 {
        (5.0 / self.kappa).max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parameters() {
        let p = SystemParams::reference();
        assert!((p.alpha_bar() - 4.472_136).abs() < 1e-6);
        assert!((p.omega() - 1073.31).abs() < 0.01);
        assert_eq!(p.dim(), 32);
        assert_eq!(p.in_frame(Frame::Lab).dim(), 122);
    }

    #[test]
    fn rejects_bad_eta() {
        let mut p = SystemParams::reference();
        p.eta = 1.5;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("[0, 1]"), "{err}");
    }

    #[test]
    fn rejects_weak_drive_for_fixed_points() {
        let mut p = SystemParams::reference();
        p.drive = 50.0;
        assert!(p.validate().is_ok());
        assert!(p.validate_bistable().is_err());
    }

    #[test]
    fn time_step_bound() {
        let p = SystemParams::reference();
        assert!(p.check_time_step(1e-4, Variant::Rwa).is_ok());
        assert!(p.check_time_step(1e-4, Variant::Full).is_err());
        assert!(p.check_time_step(5e-5, Variant::Full).is_ok());
    }
}
