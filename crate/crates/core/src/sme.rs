//! Conditional evolution under continuous phase-quadrature homodyne detection.
//!
//! Each step of length `dt` with Wiener increment `dW` is split in two:
//!
//! 1. a measurement update `rho -> M rho M† / Tr[..]` with
//!    `M = 1 + c' dW - ½ c'†c' dt`, where `c = -i sqrt(2 kappa eta) a` is the
//!    monitored channel and `c' = c - ⟨c⟩`;
//! 2. an RK4 step of the remaining drift: the master equation with the cavity
//!    channel reduced to `2 kappa (1 - eta)` plus the commutator
//!    `½[⟨c⟩* c - ⟨c⟩ c†, rho]` that the centring of `c'` removed.
//!
//! To first order the sum is the Itô equation
//! `d rho = L[rho] dt + (c rho + rho c† - ⟨c + c†⟩ rho) dW`, whose innovation
//! term is `-i sqrt(2 kappa eta)(a rho - rho a†) - sqrt(2 kappa eta) ⟨y⟩ rho`.
//! The update keeps the state positive, which a plain Euler step does not.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::lindblad::{integrate_me, Generator, Rk4};
use crate::noise::{Increments, NoiseSource};
use crate::operators::{build_joint_operators, CMatrix, C64, I, ONE};
use crate::params::{Frame, SystemParams, Variant};
use crate::record::{Sampler, TrajectoryRecord};
use crate::sparse::{adjoint_into, SparseCombo, SparseOp};

/// Step size, duration and sampling of a conditional run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmeConfig {
    pub variant: Variant,
    /// Integration step (us).
    pub dt: f64,
    /// Duration (us).
    pub t_final: f64,
    /// Steps per recorded sample.
    pub stride: usize,
}

impl SmeConfig {
    /// Default step for the frame and variant, 10 us duration, stride 10.
    pub fn new(params: &SystemParams, variant: Variant) -> Self {
        SmeConfig {
            variant,
            dt: Self::default_dt(params, variant),
            t_final: 10.0,
            stride: 10,
        }
    }

    /// `1e-5` us in the lab frame; in the displaced frame `1e-4` us for the
    /// rotating-wave generator and `5e-5` us for the full one, which carries
    /// the dressed splitting at full frequency.
    pub fn default_dt(params: &SystemParams, variant: Variant) -> f64 {
        match (params.frame, variant) {
            (Frame::Lab, _) => 1e-5,
            (Frame::Displaced, Variant::Rwa) => 1e-4,
            (Frame::Displaced, Variant::Full) => 5e-5,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Sample interval of the produced record.
    pub fn sample_dt(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        params.validate()?;
        params.check_time_step(self.dt, self.variant)?;
        if self.stride == 0 {
            return Err(Error::InvalidParams("stride must be >= 1".into()));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "t_final = {} must be positive",
                self.t_final
            )));
        }
        Ok(())
    }
}

/// Conditional quantities read off a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    /// `⟨y⟩`
    pub y_mean: f64,
    /// Population of `|+⟩`.
    pub p_plus: f64,
    /// `⟨y⟩₊ - ⟨y⟩₋`, the branch-conditional means; zero when a branch is
    /// empty.
    pub delta_y: f64,
    /// `⟨b⟩`, the mean of the truncated ladder operator.
    pub ladder_mean: C64,
}

/// Branch populations below this are treated as empty.
pub(crate) const EMPTY_BRANCH: f64 = 1e-12;

/// Reusable state of the split-step integrator.
pub struct SmeIntegrator {
    dim: usize,
    dt: f64,
    /// `kappa * eta`
    half_rate_sq: f64,
    jumps: Vec<SparseOp>,
    drift: SparseCombo,
    kraus: Option<SparseCombo>,
    ladder: SparseOp,
    proj_plus: SparseOp,
    proj_plus_y: SparseOp,
    rk: Rk4,
    tmp: Vec<C64>,
    tmp_adj: Vec<C64>,
    steps: usize,
}

impl SmeIntegrator {
    pub fn new(params: &SystemParams, variant: Variant, dt: f64) -> Result<Self> {
        params.validate()?;
        params.check_time_step(dt, variant)?;
        let ops = build_joint_operators(params)?;
        let base = Generator::with_cavity_fraction(params, variant, 1.0 - params.eta)?;
        let ladder = SparseOp::from_operator(&ops.b);
        let ladder_dag = SparseOp::from_operator(&ops.b.adjoint());
        let number = SparseOp::from_operator(&(&ops.b.adjoint() * &ops.b));
        let identity = SparseOp::from_operator(&ops.identity);
        let drift = SparseCombo::new(&[base.sparse_effective(), &ladder, &ladder_dag]);
        let kraus = (params.eta > 0.0)
            .then(|| SparseCombo::new(&[&identity, &ladder, &ladder_dag, &number]));
        let dim = params.dim();
        Ok(SmeIntegrator {
            dim,
            dt,
            half_rate_sq: params.kappa * params.eta,
            jumps: base.sparse_jumps().to_vec(),
            drift,
            kraus,
            proj_plus: SparseOp::from_operator(&ops.proj_plus),
            proj_plus_y: SparseOp::from_operator(&(&ops.proj_plus * &ops.y)),
            ladder,
            rk: Rk4::new(dim),
            tmp: vec![C64::new(0.0, 0.0); dim * dim],
            tmp_adj: vec![C64::new(0.0, 0.0); dim * dim],
            steps: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn observe(&self, rho: &DensityMatrix) -> Observables {
        let r = rho.as_slice();
        let ladder_mean = self.ladder.trace_product(r);
        // y = -i b + i b† up to the frame shift, which is real.
        let y_mean = 2.0 * ladder_mean.im;
        let p_plus = self.proj_plus.trace_product(r).re;
        let y_plus_weighted = self.proj_plus_y.trace_product(r).re;
        let p_minus = 1.0 - p_plus;
        let delta_y = if p_plus < EMPTY_BRANCH || p_minus < EMPTY_BRANCH {
            0.0
        } else {
            y_plus_weighted / p_plus - (y_mean - y_plus_weighted) / p_minus
        };
        Observables {
            y_mean,
            p_plus,
            delta_y,
            ladder_mean,
        }
    }

    /// Advances `rho` by one step with increment `dw`.
    pub fn step(&mut self, rho: &mut DensityMatrix, dw: f64) -> Result<()> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho.dim(),
            });
        }
        self.steps += 1;
        if !dw.is_finite() {
            return Err(Error::NonFinite { step: self.steps });
        }
        let dt = self.dt;
        let beta = self.ladder.trace_product(rho.as_slice());
        let kh = self.half_rate_sq;
        if let Some(kraus) = self.kraus.as_mut() {
            let k = (2.0 * kh).sqrt();
            let k2 = 2.0 * kh;
            // c' = -i k (b - beta)
            kraus.set_coeffs(&[
                ONE + I * (k * dw) * beta - C64::new(0.5 * k2 * beta.norm_sqr() * dt, 0.0),
                -I * (k * dw) + beta.conj() * (0.5 * k2 * dt),
                beta * (0.5 * k2 * dt),
                C64::new(-0.5 * k2 * dt, 0.0),
            ]);
            let m = kraus.op();
            m.mul_into(rho.as_slice(), &mut self.tmp);
            adjoint_into(&self.tmp, &mut self.tmp_adj, self.dim);
            m.mul_into(&self.tmp_adj, rho.as_mut_slice());
            rho.hermitize();
            rho.normalize();
        }
        // Restore ½[<c>* c - <c> c†, .] = kappa eta [<b>* b - <b> b†, .].
        self.drift
            .set_coeffs(&[ONE, beta.conj() * kh, -beta * kh]);
        self.rk
            .step(self.drift.op(), &self.jumps, rho.as_mut_slice(), dt);
        rho.hermitize();
        let tr = rho.normalize();
        if !tr.is_finite() || tr <= 0.0 || !rho.is_finite() {
            return Err(Error::NonFinite { step: self.steps });
        }
        Ok(())
    }
}

/// One conditional step from `rho`.
pub fn sme_step(
    rho: &DensityMatrix,
    params: &SystemParams,
    variant: Variant,
    dt: f64,
    dw: f64,
) -> Result<DensityMatrix> {
    let mut integrator = SmeIntegrator::new(params, variant, dt)?;
    let mut out = rho.clone();
    integrator.step(&mut out, dw)?;
    Ok(out)
}

/// Integrates one conditional trajectory and records it.
///
/// Invalid inputs are errors; a numerical failure mid-run returns the
/// samples gathered so far with `failure` set.
pub fn simulate_trajectory(
    rho0: &DensityMatrix,
    params: &SystemParams,
    config: &SmeConfig,
    noise: &mut impl Increments,
) -> Result<TrajectoryRecord> {
    run_trajectory(rho0, params, config, noise, 0).map(|(rec, _)| rec)
}

/// As [`simulate_trajectory`], also returning the state every
/// `snapshot_every` steps (including `t = 0`) when that is non-zero.
pub(crate) fn run_trajectory(
    rho0: &DensityMatrix,
    params: &SystemParams,
    config: &SmeConfig,
    noise: &mut impl Increments,
    snapshot_every: usize,
) -> Result<(TrajectoryRecord, Vec<DensityMatrix>)> {
    config.validate(params)?;
    if rho0.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: rho0.dim(),
        });
    }
    let mut integrator = SmeIntegrator::new(params, config.variant, config.dt)?;
    let n_steps = config.n_steps();
    let mut record = TrajectoryRecord::with_capacity(config.sample_dt(), n_steps / config.stride);
    let mut sampler = Sampler::new(config.dt, config.stride, params.measurement_rate());
    let mut snapshots = Vec::new();
    let mut rho = rho0.clone();
    for step in 0..n_steps {
        if snapshot_every > 0 && step % snapshot_every == 0 {
            snapshots.push(rho.clone());
        }
        let obs = integrator.observe(&rho);
        let dw = noise.next_increment(config.dt);
        sampler.push(
            &mut record,
            step as f64 * config.dt,
            obs.y_mean,
            obs.p_plus,
            obs.delta_y,
            dw,
        );
        if let Err(e) = integrator.step(&mut rho, dw) {
            log::warn!("trajectory stopped at t = {} us: {e}", step as f64 * config.dt);
            record.failure = Some(e.to_string());
            return Ok((record, snapshots));
        }
    }
    if snapshot_every > 0 && n_steps % snapshot_every == 0 {
        snapshots.push(rho);
    }
    Ok((record, snapshots))
}

/// Trajectory count, seeding and sampling of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub base_seed: u64,
    /// Steps between stored mean states.
    pub snapshot_every: usize,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// Keep every trajectory record in the result.
    pub keep_records: bool,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub snapshot_times: Vec<f64>,
    /// Mean conditional state over successful trajectories.
    pub mean_states: Vec<DensityMatrix>,
    /// Records in trajectory order (empty unless requested).
    pub records: Vec<TrajectoryRecord>,
    pub n_success: usize,
    /// `(stream_index, message)` of failed trajectories.
    pub failures: Vec<(u64, String)>,
}

/// Trajectories handled per reduction leaf; fixes the summation tree
/// independently of the number of workers.
const CHUNK: usize = 64;

struct Partial {
    sums: Option<Vec<CMatrix>>,
    count: usize,
}

fn combine(a: Partial, b: Partial) -> Partial {
    let sums = match (a.sums, b.sums) {
        (Some(mut x), Some(y)) => {
            for (u, v) in x.iter_mut().zip(y) {
                *u += v;
            }
            Some(x)
        }
        (x, None) => x,
        (None, y) => y,
    };
    Partial {
        sums,
        count: a.count + b.count,
    }
}

/// Sums in a balanced binary tree determined only by the input length.
fn pairwise(mut items: Vec<Partial>) -> Partial {
    match items.len() {
        0 => Partial { sums: None, count: 0 },
        1 => items.pop().unwrap_or(Partial { sums: None, count: 0 }),
        n => {
            let right = items.split_off(n / 2);
            combine(pairwise(items), pairwise(right))
        }
    }
}

/// Runs `n_traj` trajectories on streams `0..n_traj` of `base_seed`.
pub fn ensemble_run(
    rho0: &DensityMatrix,
    params: &SystemParams,
    config: &SmeConfig,
    ensemble: &EnsembleConfig,
) -> Result<EnsembleResult> {
    config.validate(params)?;
    if ensemble.n_traj == 0 {
        return Err(Error::InvalidParams("n_traj must be >= 1".into()));
    }
    if ensemble.snapshot_every == 0 {
        return Err(Error::InvalidParams("snapshot_every must be >= 1".into()));
    }
    let n_chunks = ensemble.n_traj.div_ceil(CHUNK);
    let run_chunk = |c: usize| -> Result<(Partial, Vec<TrajectoryRecord>, Vec<(u64, String)>)> {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(ensemble.n_traj);
        let mut leaves = Vec::with_capacity(hi - lo);
        let mut records = Vec::new();
        let mut failures = Vec::new();
        for idx in lo..hi {
            let mut noise = NoiseSource::new(ensemble.base_seed, idx as u64).increments();
            let (rec, snaps) =
                run_trajectory(rho0, params, config, &mut noise, ensemble.snapshot_every)?;
            if let Some(msg) = &rec.failure {
                failures.push((idx as u64, msg.clone()));
                leaves.push(Partial { sums: None, count: 0 });
            } else {
                leaves.push(Partial {
                    sums: Some(snaps.into_iter().map(DensityMatrix::into_matrix).collect()),
                    count: 1,
                });
            }
            if ensemble.keep_records {
                records.push(rec);
            }
        }
        Ok((pairwise(leaves), records, failures))
    };
    let chunks: Result<Vec<_>> = if ensemble.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(ensemble.workers)
            .build()
            .map_err(|e| Error::InvalidParams(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..n_chunks).into_par_iter().map(run_chunk).collect())
    } else {
        (0..n_chunks).into_par_iter().map(run_chunk).collect()
    };
    let mut partials = Vec::with_capacity(n_chunks);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (p, r, f) in chunks? {
        partials.push(p);
        records.extend(r);
        failures.extend(f);
    }
    let total = pairwise(partials);
    let sums = total
        .sums
        .ok_or_else(|| Error::InsufficientData("every trajectory failed".into()))?;
    let scale = C64::new(1.0 / total.count as f64, 0.0);
    let mean_states = sums
        .into_iter()
        .map(|m| DensityMatrix::new(m * scale))
        .collect::<Vec<_>>();
    let snapshot_times = (0..mean_states.len())
        .map(|k| (k * ensemble.snapshot_every) as f64 * config.dt)
        .collect();
    Ok(EnsembleResult {
        snapshot_times,
        mean_states,
        records,
        n_success: total.count,
        failures,
    })
}

/// Trace distance between the ensemble mean and the master equation at one
/// snapshot time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedDistance {
    pub t_us: f64,
    pub distance: f64,
}

/// JSON summary of an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_traj: usize,
    pub base_seed: u64,
    pub params: SystemParams,
    pub n_success: usize,
    pub trace_distance_vs_me: Vec<TimedDistance>,
}

/// Compares the ensemble mean with the unconditional evolution of `rho0`
/// integrated with the same step.
pub fn compare_with_me(
    result: &EnsembleResult,
    rho0: &DensityMatrix,
    params: &SystemParams,
    config: &SmeConfig,
    snapshot_every: usize,
) -> Result<Vec<TimedDistance>> {
    let me = integrate_me(
        rho0,
        params,
        config.variant,
        config.dt,
        config.n_steps() as f64 * config.dt,
        snapshot_every,
    )?;
    result
        .mean_states
        .iter()
        .zip(&me.states)
        .zip(&result.snapshot_times)
        .map(|((mean, exact), &t_us)| {
            Ok(TimedDistance {
                t_us,
                distance: mean.trace_distance(exact)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::integrate_me;
    use crate::noise::{ScriptedIncrements, ZeroIncrements};
    use crate::operators::reference_state;
    use crate::params::Branch;

    fn small() -> SystemParams {
        SystemParams {
            n_max: 10,
            ..SystemParams::reference()
        }
    }

    #[test]
    fn no_measurement_reduces_to_master_equation() {
        let p = SystemParams { eta: 0.0, ..small() };
        let rho0 = reference_state(Branch::Plus, &p).unwrap();
        let cfg = SmeConfig {
            t_final: 0.05,
            stride: 1,
            ..SmeConfig::new(&p, Variant::Rwa)
        };
        let mut integ = SmeIntegrator::new(&p, Variant::Rwa, cfg.dt).unwrap();
        let mut noise = NoiseSource::new(3, 0).increments();
        let mut rho = rho0.clone();
        for _ in 0..cfg.n_steps() {
            integ.step(&mut rho, noise.next_increment(cfg.dt)).unwrap();
        }
        let me = integrate_me(&rho0, &p, Variant::Rwa, cfg.dt, cfg.t_final, cfg.n_steps()).unwrap();
        let last = me.states.last().unwrap();
        assert!(rho.trace_distance(last).unwrap() < 1e-12);
    }

    #[test]
    fn step_preserves_trace_and_positivity() {
        let p = small();
        let mut rho = reference_state(Branch::Plus, &p).unwrap();
        let mut integ = SmeIntegrator::new(&p, Variant::Full, 5e-5).unwrap();
        for dw in [0.02, -0.03, 0.05, -0.01] {
            integ.step(&mut rho, dw).unwrap();
            assert!((rho.trace().re - 1.0).abs() < 1e-12);
            assert!(rho.purity() <= 1.0 + 1e-8);
            assert!(rho.min_eigenvalue() > -1e-6, "{}", rho.min_eigenvalue());
        }
    }

    #[test]
    fn positive_increment_lowers_plus_population_once_mixed() {
        // With both branches present, Δy < 0 so a positive dW pushes p+ down.
        let p = small();
        let mut rho = reference_state(Branch::Plus, &p).unwrap();
        let mut integ = SmeIntegrator::new(&p, Variant::Rwa, 1e-4).unwrap();
        let mut drift_only = SmeIntegrator::new(&p, Variant::Rwa, 1e-4).unwrap();
        for _ in 0..200 {
            integ.step(&mut rho, 0.0).unwrap();
        }
        let obs = integ.observe(&rho);
        assert!(obs.p_plus < 1.0 && obs.delta_y < 0.0);
        let mut up = rho.clone();
        let mut flat = rho.clone();
        integ.step(&mut up, 0.01).unwrap();
        drift_only.step(&mut flat, 0.0).unwrap();
        assert!(integ.observe(&up).p_plus < drift_only.observe(&flat).p_plus);
    }

    #[test]
    fn record_photocurrent_identity() {
        let p = small();
        let rho0 = reference_state(Branch::Plus, &p).unwrap();
        let cfg = SmeConfig {
            t_final: 0.01,
            stride: 5,
            ..SmeConfig::new(&p, Variant::Rwa)
        };
        let mut noise = ScriptedIncrements::new(vec![0.01; 100]);
        let rec = simulate_trajectory(&rho0, &p, &cfg, &mut noise).unwrap();
        assert_eq!(rec.len(), 20);
        let k = p.measurement_rate();
        for i in 0..rec.len() {
            let expect = k * k * rec.y_mean[i] + k * rec.xi[i];
            assert_eq!(rec.photocurrent[i], expect);
            assert!((rec.xi[i] - 0.01 / 1e-4).abs() < 1e-9);
        }
        // The first sample closes a window in which the atom has started to decay.
        assert!((rec.y_mean[0] + 3.0).abs() < 1e-3, "{}", rec.y_mean[0]);
    }

    #[test]
    fn zero_noise_without_decay_stays_on_branch() {
        let p = SystemParams {
            gamma_perp: 0.0,
            ..small()
        };
        let rho0 = reference_state(Branch::Plus, &p).unwrap();
        let cfg = SmeConfig {
            t_final: 0.2,
            ..SmeConfig::new(&p, Variant::Rwa)
        };
        let rec = simulate_trajectory(&rho0, &p, &cfg, &mut ZeroIncrements).unwrap();
        assert!(rec.p_plus.iter().all(|&x| x > 0.999_999));
    }

    #[test]
    fn single_trajectory_ensemble_is_that_trajectory() {
        let p = small();
        let rho0 = reference_state(Branch::Plus, &p).unwrap();
        let cfg = SmeConfig {
            t_final: 0.01,
            ..SmeConfig::new(&p, Variant::Rwa)
        };
        let ens = EnsembleConfig {
            n_traj: 1,
            base_seed: 9,
            snapshot_every: 50,
            workers: 1,
            keep_records: true,
        };
        let res = ensemble_run(&rho0, &p, &cfg, &ens).unwrap();
        let mut noise = NoiseSource::new(9, 0).increments();
        let (rec, snaps) = run_trajectory(&rho0, &p, &cfg, &mut noise, 50).unwrap();
        assert_eq!(res.records[0], rec);
        assert_eq!(res.mean_states.len(), snaps.len());
        for (a, b) in res.mean_states.iter().zip(&snaps) {
            assert_eq!(a.matrix(), b.matrix());
        }
    }

    #[test]
    fn pairwise_tree_depends_only_on_length() {
        let leaf = |v: f64| Partial {
            sums: Some(vec![CMatrix::from_element(1, 1, C64::new(v, 0.0))]),
            count: 1,
        };
        let vals = [1e16, 1.0, -1e16, 1.0, 3.0];
        let a = pairwise(vals.iter().map(|&v| leaf(v)).collect());
        let b = pairwise(vals.iter().map(|&v| leaf(v)).collect());
        assert_eq!(a.count, 5);
        assert_eq!(a.sums.unwrap()[0], b.sums.unwrap()[0]);
    }
}
