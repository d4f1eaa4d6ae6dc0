//! Dependence of `1/E[1/S]` on the coupling, decay and detection efficiency,
//! computed from long runs of the reduced model.
//!
//! The expected law is `1/E[1/S] ~ γ⊥ / (g^{2/3} (κη)^{1/3})`, so at fixed
//! `g/κ` the log-log slope in `g` is `-1`, the dependence on `γ⊥` is linear and
//! the slope in `η` is `-1/3`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::entropy::{entropy_statistic, BootstrapSpec};
use crate::analysis::stats::{linear_fit, LinearFit};
use crate::error::{Error, Result};
use crate::noise::NoiseSource;
use crate::params::SystemParams;
use crate::pfe::{simulate_pfe, PfeConfig, PfeGridSpec, PfeStepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    /// `g` varied at fixed `g/κ` and `η = 1`.
    Coupling,
    /// `η` varied at fixed `g`, `κ`, `γ⊥`.
    Efficiency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub series: Series,
    pub g: f64,
    pub kappa: f64,
    pub gamma_perp: f64,
    pub eta: f64,
    pub inv_mean_inv_s: f64,
    pub std_err: f64,
    /// Whether the point lies where the scaling law is expected to hold;
    /// points outside are reported but left out of the fits.
    pub in_regime: bool,
}

/// `g sqrt(η) >= κ` and `γ⊥ <= 0.1 g^{2/3} (κη)^{1/3}`.
pub fn in_validity_regime(g: f64, kappa: f64, gamma_perp: f64, eta: f64) -> bool {
    let strong = g * eta.sqrt() >= kappa;
    let slow = gamma_perp <= 0.1 * g.powf(2.0 / 3.0) * (kappa * eta).powf(1.0 / 3.0);
    strong && slow
}

/// Order-of-magnitude prediction `γ⊥ / (2 g^{2/3} (κη)^{1/3})`.
pub fn predicted_magnitude(g: f64, kappa: f64, gamma_perp: f64, eta: f64) -> f64 {
    gamma_perp / (2.0 * g.powf(2.0 / 3.0) * (kappa * eta).powf(1.0 / 3.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    /// Couplings of the coupling series (MHz).
    pub g_values: Vec<f64>,
    pub g_over_kappa: f64,
    /// One coupling series is run per value (MHz).
    pub gamma_perp_values: Vec<f64>,
    /// Efficiencies of the efficiency series.
    pub eta_values: Vec<f64>,
    /// Fixed `(g, κ, γ⊥)` of the efficiency series (MHz).
    pub eta_series_rates: [f64; 3],
    /// Run length per point (us).
    pub t_final: f64,
    pub burn_in: f64,
    pub stride: usize,
    pub grid: PfeGridSpec,
    pub base_seed: u64,
    pub bootstrap: BootstrapSpec,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        ScalingSpec {
            g_values: vec![60.0, 120.0, 240.0, 480.0],
            g_over_kappa: 3.0,
            gamma_perp_values: vec![1.3, 0.65],
            eta_values: vec![0.2, 0.35, 0.5, 0.7, 1.0],
            eta_series_rates: [120.0, 40.0, 1.3],
            t_final: 100.0,
            burn_in: 1.0,
            stride: 10,
            grid: PfeGridSpec::default(),
            base_seed: 0,
            bootstrap: BootstrapSpec::default(),
        }
    }
}

/// Parameters and noise stream of one point.
#[derive(Debug, Clone, Copy)]
struct PointPlan {
    series: Series,
    params: SystemParams,
    stream: u64,
}

impl ScalingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.g_values.iter().any(|g| !(*g > 0.0)) || !(self.g_over_kappa > 0.0) {
            return Err(Error::InvalidParams("couplings and g/kappa must be positive".into()));
        }
        if !(self.t_final > self.burn_in && self.burn_in >= 0.0) {
            return Err(Error::InvalidParams("t_final must exceed the burn-in".into()));
        }
        self.grid.validate()?;
        for p in self.plans() {
            p.params.validate()?;
        }
        Ok(())
    }

    /// Coupling points share noise streams across `γ⊥` values so that their
    /// ratios are compared under common random numbers.
    fn plans(&self) -> Vec<PointPlan> {
        let base = SystemParams::reference();
        let mut out = Vec::new();
        for &gamma in &self.gamma_perp_values {
            for (i, &g) in self.g_values.iter().enumerate() {
                out.push(PointPlan {
                    series: Series::Coupling,
                    params: SystemParams {
                        g,
                        kappa: g / self.g_over_kappa,
                        gamma_perp: gamma,
                        eta: 1.0,
                        drive: g / self.g_over_kappa * base.alpha_bar(),
                        ..base
                    },
                    stream: i as u64,
                });
            }
        }
        let [g, kappa, gamma] = self.eta_series_rates;
        for (i, &eta) in self.eta_values.iter().enumerate() {
            out.push(PointPlan {
                series: Series::Efficiency,
                params: SystemParams {
                    g,
                    kappa,
                    gamma_perp: gamma,
                    eta,
                    drive: kappa * base.alpha_bar(),
                    ..base
                },
                stream: 1000 + i as u64,
            });
        }
        out
    }
}

/// Ratio of `1/E[1/S]` between two decay rates at the same coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRatio {
    pub g: f64,
    pub gamma_high: f64,
    pub gamma_low: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingFit {
    pub gamma_perp: f64,
    pub fit: LinearFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingExponents {
    /// Slope of `ln(1/E[1/S])` against `ln g`, per decay rate.
    pub coupling: Vec<CouplingFit>,
    /// Slope of `ln(1/E[1/S])` against `ln η`.
    pub efficiency: Option<LinearFit>,
    pub decay_ratios: Vec<DecayRatio>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub points: Vec<ScalingPoint>,
    pub exponents: ScalingExponents,
}

fn run_point(spec: &ScalingSpec, plan: &PointPlan) -> Result<ScalingPoint> {
    let p = plan.params;
    let config = PfeConfig {
        dt: PfeStepper::default_dt(&p, &spec.grid),
        t_final: spec.t_final,
        stride: spec.stride,
        grid: spec.grid,
        ..PfeConfig::new(&p)
    };
    let mut noise = NoiseSource::new(spec.base_seed, plan.stream).increments();
    let run = simulate_pfe(&p, &config, &mut noise)?;
    if let Some(msg) = &run.record.failure {
        return Err(Error::InvalidParams(format!(
            "run at g = {}, eta = {} failed: {msg}",
            p.g, p.eta
        )));
    }
    let est = entropy_statistic(std::slice::from_ref(&run.record), spec.burn_in, &spec.bootstrap)?;
    Ok(ScalingPoint {
        series: plan.series,
        g: p.g,
        kappa: p.kappa,
        gamma_perp: p.gamma_perp,
        eta: p.eta,
        inv_mean_inv_s: est.inv_mean_inv_s,
        std_err: est.std_err,
        in_regime: in_validity_regime(p.g, p.kappa, p.gamma_perp, p.eta),
    })
}

/// Runs every point of the study and fits the exponents.
pub fn scaling_study(spec: &ScalingSpec) -> Result<ScalingResult> {
    spec.validate()?;
    let plans = spec.plans();
    for plan in &plans {
        let p = plan.params;
        if !in_validity_regime(p.g, p.kappa, p.gamma_perp, p.eta) {
            log::warn!(
                "point g = {}, kappa = {}, gamma_perp = {}, eta = {} lies outside the scaling regime; excluded from fits",
                p.g, p.kappa, p.gamma_perp, p.eta
            );
        }
    }
    let points: Result<Vec<ScalingPoint>> = plans.par_iter().map(|p| run_point(spec, p)).collect();
    let points = points?;
    let exponents = fit_exponents(&points)?;
    Ok(ScalingResult { points, exponents })
}

/// Least-squares exponents over the in-regime points.
pub fn fit_exponents(points: &[ScalingPoint]) -> Result<ScalingExponents> {
    let mut gammas: Vec<f64> = points
        .iter()
        .filter(|p| p.series == Series::Coupling)
        .map(|p| p.gamma_perp)
        .collect();
    gammas.sort_by(|a, b| b.total_cmp(a));
    gammas.dedup();
    let mut coupling = Vec::new();
    for &gamma in &gammas {
        let sel: Vec<&ScalingPoint> = points
            .iter()
            .filter(|p| p.series == Series::Coupling && p.gamma_perp == gamma && p.in_regime)
            .collect();
        if sel.len() >= 2 {
            let x: Vec<f64> = sel.iter().map(|p| p.g.ln()).collect();
            let y: Vec<f64> = sel.iter().map(|p| p.inv_mean_inv_s.ln()).collect();
            coupling.push(CouplingFit {
                gamma_perp: gamma,
                fit: linear_fit(&x, &y)?,
            });
        }
    }
    let eff: Vec<&ScalingPoint> = points
        .iter()
        .filter(|p| p.series == Series::Efficiency && p.in_regime)
        .collect();
    let efficiency = if eff.len() >= 2 {
        let x: Vec<f64> = eff.iter().map(|p| p.eta.ln()).collect();
        let y: Vec<f64> = eff.iter().map(|p| p.inv_mean_inv_s.ln()).collect();
        Some(linear_fit(&x, &y)?)
    } else {
        None
    };
    let mut decay_ratios = Vec::new();
    if gammas.len() >= 2 {
        let (hi, lo) = (gammas[0], gammas[gammas.len() - 1]);
        for a in points
            .iter()
            .filter(|p| p.series == Series::Coupling && p.gamma_perp == hi)
        {
            if let Some(b) = points
                .iter()
                .find(|p| p.series == Series::Coupling && p.gamma_perp == lo && p.g == a.g)
            {
                decay_ratios.push(DecayRatio {
                    g: a.g,
                    gamma_high: hi,
                    gamma_low: lo,
                    ratio: a.inv_mean_inv_s / b.inv_mean_inv_s,
                });
            }
        }
    }
    Ok(ScalingExponents {
        coupling,
        efficiency,
        decay_ratios,
    })
}

impl ScalingResult {
    /// CSV with header `g_mhz,kappa_mhz,gamma_perp_mhz,eta,inv_mean_inv_s,std_err`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "g_mhz,kappa_mhz,gamma_perp_mhz,eta,inv_mean_inv_s,std_err")?;
        for p in &self.points {
            writeln!(
                w,
                "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
                p.g, p.kappa, p.gamma_perp, p.eta, p.inv_mean_inv_s, p.std_err
            )?;
        }
        Ok(())
    }

    pub fn save(&self, csv: &Path, json: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(csv)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        let summary = serde_json::json!({
            "exponents": self.exponents,
            "points": self.points,
        });
        std::fs::write(json, serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_bounds() {
        assert!(in_validity_regime(120.0, 40.0, 2.6, 1.0));
        assert!(in_validity_regime(120.0, 40.0, 1.3, 0.2));
        assert!(!in_validity_regime(120.0, 40.0, 1.3, 0.1));
        assert!(!in_validity_regime(120.0, 40.0, 9.0, 1.0));
    }

    #[test]
    fn reference_magnitude() {
        let m = predicted_magnitude(120.0, 40.0, 2.6, 1.0);
        assert!((m - 0.0156).abs() < 5e-4, "{m}");
    }

    #[test]
    fn plans_share_streams_across_decay_rates() {
        let spec = ScalingSpec::default();
        let plans = spec.plans();
        assert_eq!(plans.len(), 2 * 4 + 5);
        assert_eq!(plans[0].stream, plans[4].stream);
        assert_eq!(plans[0].params.g, plans[4].params.g);
        assert!((plans[3].params.kappa - 160.0).abs() < 1e-12);
    }

    #[test]
    fn exponent_fit_on_synthetic_law() {
        let mut pts = Vec::new();
        for &gamma in &[1.3, 0.65] {
            for &g in &[60.0, 120.0, 240.0, 480.0] {
                let kappa = g / 3.0;
                pts.push(ScalingPoint {
                    series: Series::Coupling,
                    g,
                    kappa,
                    gamma_perp: gamma,
                    eta: 1.0,
                    inv_mean_inv_s: predicted_magnitude(g, kappa, gamma, 1.0),
                    std_err: 0.0,
                    in_regime: true,
                });
            }
        }
        for &eta in &[0.2, 0.5, 1.0] {
            pts.push(ScalingPoint {
                series: Series::Efficiency,
                g: 120.0,
                kappa: 40.0,
                gamma_perp: 1.3,
                eta,
                inv_mean_inv_s: predicted_magnitude(120.0, 40.0, 1.3, eta),
                std_err: 0.0,
                in_regime: true,
            });
        }
        let e = fit_exponents(&pts).unwrap();
        assert_eq!(e.coupling.len(), 2);
        for c in &e.coupling {
            assert!((c.fit.slope + 1.0).abs() < 1e-12);
        }
        assert!((e.efficiency.unwrap().slope + 1.0 / 3.0).abs() < 1e-12);
        assert!(e.decay_ratios.iter().all(|r| (r.ratio - 2.0).abs() < 1e-12));
    }
}
