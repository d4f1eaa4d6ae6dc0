//! Deterministic Liouvillian evolution, steady states and expectation values.
//!
//! A generator is stored in the form
//! `L[rho] = K rho + rho K† + sum_c c rho c†` with `K = -iH - ½ sum_c c†c`,
//! which is the standard Lindblad form rearranged so that each application
//! costs one sparse product for `K` and two per jump operator.
//!
//! In the displaced frame the cavity drive `E y` cancels exactly against the
//! commutator produced by shifting the cavity jump operator `a = b + alpha_bar`
//! to `b`, so the generator is built from `b` with no drive term.

use nalgebra::DMatrix;

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::operators::{build_joint_operators, CMatrix, JointOperators, Operator, C64, I, ZERO};
use crate::params::{Frame, SystemParams, Variant};
use crate::sparse::{adjoint_into, SparseOp};

/// Largest per-step trace change tolerated before a step is rejected.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Hamiltonian of the chosen variant, without the cavity drive when the
/// frame absorbs it.
pub(crate) fn hamiltonian(ops: &JointOperators, params: &SystemParams, variant: Variant) -> Operator {
    let drive = match params.frame {
        Frame::Lab => ops.y.scale(C64::new(params.drive, 0.0)),
        Frame::Displaced => Operator::zeros(ops.dim()),
    };
    let coupling = match variant {
        Variant::Full => (&(&ops.a_dag * &ops.sigma) - &(&ops.sigma_dag * &ops.a))
            .scale(C64::new(0.0, params.g)),
        Variant::Rwa => (&ops.mu_z * &ops.x).scale(C64::new(0.5 * params.g, 0.0)),
    };
    &coupling + &drive
}

/// Atomic jump operators of the chosen variant.
pub(crate) fn atomic_jumps(ops: &JointOperators, params: &SystemParams, variant: Variant) -> Vec<Operator> {
    if params.gamma_perp == 0.0 {
        return Vec::new();
    }
    match variant {
        Variant::Full => vec![ops.sigma.scale(C64::new((2.0 * params.gamma_perp).sqrt(), 0.0))],
        Variant::Rwa => {
            let r = C64::new((0.5 * params.gamma_perp).sqrt(), 0.0);
            vec![ops.mu.scale(r), ops.mu_z.scale(r), ops.mu_dag.scale(r)]
        }
    }
}

/// A Lindblad generator in `K`-form.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    k: SparseOp,
    k_dense: Operator,
    jumps: Vec<SparseOp>,
    jumps_dense: Vec<Operator>,
}

impl Generator {
    /// Generator of the unconditional master equation.
    pub fn new(params: &SystemParams, variant: Variant) -> Result<Self> {
        Self::with_cavity_fraction(params, variant, 1.0)
    }

    /// As [`Generator::new`] but with the cavity damping channel scaled by
    /// `fraction`; the remainder is handled by a measurement update.
    pub(crate) fn with_cavity_fraction(
        params: &SystemParams,
        variant: Variant,
        fraction: f64,
    ) -> Result<Self> {
        let ops = build_joint_operators(params)?;
        let h = hamiltonian(&ops, params, variant);
        let mut jumps = Vec::new();
        let cavity_rate = 2.0 * params.kappa * fraction;
        if cavity_rate > 0.0 {
            jumps.push(ops.b.scale(C64::new(cavity_rate.sqrt(), 0.0)));
        }
        jumps.extend(atomic_jumps(&ops, params, variant));
        Self::from_parts(h, jumps)
    }

    /// Builds a generator from a Hamiltonian and jump operators.
    pub fn from_parts(hamiltonian: Operator, jumps: Vec<Operator>) -> Result<Self> {
        let dim = hamiltonian.dim();
        for c in &jumps {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.dim(),
                });
            }
        }
        let mut k = hamiltonian.matrix() * (-I);
        for c in &jumps {
            k -= c.matrix().adjoint() * c.matrix() * C64::new(0.5, 0.0);
        }
        let k_dense = Operator::new(k);
        Ok(Generator {
            dim,
            k: SparseOp::from_operator(&k_dense),
            k_dense,
            jumps: jumps.iter().map(SparseOp::from_operator).collect(),
            jumps_dense: jumps,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The non-Hermitian effective operator `K`.
    pub fn effective(&self) -> &Operator {
        &self.k_dense
    }

    pub fn jumps(&self) -> &[Operator] {
        &self.jumps_dense
    }

    pub(crate) fn sparse_effective(&self) -> &SparseOp {
        &self.k
    }

    pub(crate) fn sparse_jumps(&self) -> &[SparseOp] {
        &self.jumps
    }

    /// `L[rho]` for Hermitian `rho`, returned as a (Hermitian) matrix.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<CMatrix> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho.dim(),
            });
        }
        let mut out = CMatrix::zeros(self.dim, self.dim);
        let mut ws = Workspace::new(self.dim);
        apply_hermitian(&self.k, &self.jumps, rho.as_slice(), out.as_mut_slice(), &mut ws);
        Ok(out)
    }

    /// `L[X]` for an arbitrary square matrix.
    pub fn apply_general(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.nrows() != self.dim || x.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.nrows(),
            });
        }
        let k = self.k_dense.matrix();
        let mut out = k * x + x * k.adjoint();
        for c in &self.jumps_dense {
            out += c.matrix() * x * c.matrix().adjoint();
        }
        Ok(out)
    }

    /// Dense matrix of `L` acting on column-major vectorized operators, so
    /// that entry `(i, j)` of `X` sits at index `i + j * dim`.
    pub fn superoperator(&self) -> CMatrix {
        let d = self.dim;
        let id = CMatrix::identity(d, d);
        let k = self.k_dense.matrix();
        // vec(A X B) = (B^T ⊗ A) vec(X)
        let mut l = id.kronecker(k) + k.conjugate().kronecker(&id);
        for c in &self.jumps_dense {
            let c = c.matrix();
            l += c.conjugate().kronecker(c);
        }
        l
    }
}

/// Scratch buffers for the fast Hermitian application.
pub(crate) struct Workspace {
    pub tmp: Vec<C64>,
    pub tmp_adj: Vec<C64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Workspace {
            tmp: vec![ZERO; dim * dim],
            tmp_adj: vec![ZERO; dim * dim],
        }
    }
}

/// `out = K rho + rho K† + sum_c c rho c†` for Hermitian `rho`.
pub(crate) fn apply_hermitian(
    k: &SparseOp,
    jumps: &[SparseOp],
    rho: &[C64],
    out: &mut [C64],
    ws: &mut Workspace,
) {
    let d = k.dim();
    k.mul_into(rho, &mut ws.tmp);
    // K rho + (K rho)†
    for j in 0..d {
        for i in 0..=j {
            let v = ws.tmp[i + j * d] + ws.tmp[j + i * d].conj();
            out[i + j * d] = v;
            out[j + i * d] = v.conj();
        }
    }
    for c in jumps {
        // c rho c† = c (c rho)†
        c.mul_into(rho, &mut ws.tmp);
        adjoint_into(&ws.tmp, &mut ws.tmp_adj, d);
        c.mul_add(&ws.tmp_adj, out);
    }
}

/// Classical fourth-order Runge-Kutta step of `d rho/dt = L[rho]` in place.
pub(crate) struct Rk4 {
    dim: usize,
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    stage: Vec<C64>,
    ws: Workspace,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        let z = || vec![ZERO; dim * dim];
        Rk4 {
            dim,
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            stage: z(),
            ws: Workspace::new(dim),
        }
    }

    pub fn step(&mut self, k: &SparseOp, jumps: &[SparseOp], rho: &mut [C64], dt: f64) {
        debug_assert_eq!(rho.len(), self.dim * self.dim);
        let half = 0.5 * dt;
        apply_hermitian(k, jumps, rho, &mut self.k1, &mut self.ws);
        axpy_into(&mut self.stage, rho, half, &self.k1);
        apply_hermitian(k, jumps, &self.stage, &mut self.k2, &mut self.ws);
        axpy_into(&mut self.stage, rho, half, &self.k2);
        apply_hermitian(k, jumps, &self.stage, &mut self.k3, &mut self.ws);
        axpy_into(&mut self.stage, rho, dt, &self.k3);
        apply_hermitian(k, jumps, &self.stage, &mut self.k4, &mut self.ws);
        let w = dt / 6.0;
        for (idx, r) in rho.iter_mut().enumerate() {
            *r += (self.k1[idx] + 2.0 * (self.k2[idx] + self.k3[idx]) + self.k4[idx]) * w;
        }
    }
}

fn axpy_into(out: &mut [C64], x: &[C64], a: f64, y: &[C64]) {
    for ((o, xv), yv) in out.iter_mut().zip(x).zip(y) {
        *o = xv + yv * a;
    }
}

/// Sampled solution of the master equation.
#[derive(Debug, Clone)]
pub struct MeSeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

/// Fixed-step RK4 integration of the master equation from `rho0`.
///
/// The state is re-Hermitized and renormalized after every step; the state is
/// recorded at `t = 0` and every `stride` steps thereafter.
pub fn integrate_me(
    rho0: &DensityMatrix,
    params: &SystemParams,
    variant: Variant,
    dt: f64,
    t_final: f64,
    stride: usize,
) -> Result<MeSeries> {
    params.check_time_step(dt, variant)?;
    let generator = Generator::new(params, variant)?;
    integrate_with(&generator, rho0, dt, t_final, stride)
}

/// As [`integrate_me`] with an explicit generator and no step-size check.
pub fn integrate_with(
    generator: &Generator,
    rho0: &DensityMatrix,
    dt: f64,
    t_final: f64,
    stride: usize,
) -> Result<MeSeries> {
    if rho0.dim() != generator.dim() {
        return Err(Error::DimensionMismatch {
            expected: generator.dim(),
            found: rho0.dim(),
        });
    }
    if stride == 0 {
        return Err(Error::InvalidParams("stride must be >= 1".into()));
    }
    let n_steps = (t_final / dt).round() as usize;
    let mut rk = Rk4::new(generator.dim());
    let mut rho = rho0.clone();
    let mut series = MeSeries {
        times: vec![0.0],
        states: vec![rho.clone()],
    };
    let mut max_drift = 0.0f64;
    for step in 1..=n_steps {
        rk.step(&generator.k, &generator.jumps, rho.as_mut_slice(), dt);
        rho.hermitize();
        let tr = rho.normalize();
        let drift = (tr - 1.0).abs();
        if !drift.is_finite() || !rho.is_finite() {
            return Err(Error::NonFinite { step });
        }
        if drift > TRACE_DRIFT_LIMIT {
            return Err(Error::TraceDrift {
                drift,
                limit: TRACE_DRIFT_LIMIT,
            });
        }
        max_drift = max_drift.max(drift);
        if step % stride == 0 {
            series.times.push(step as f64 * dt);
            series.states.push(rho.clone());
        }
    }
    log::debug!("master equation: {n_steps} steps, max renormalization {max_drift:.3e}");
    Ok(series)
}

/// `Tr[rho op]`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64> {
    rho.expectation(op)
}

/// Pivot ratio below which the constrained Liouvillian is treated as
/// singular, signalling more than one stationary state.
const DEGENERACY_RATIO: f64 = 1e-11;

/// Largest dimension for which the dense superoperator solve is attempted.
pub const DIRECT_SOLVE_MAX_DIM: usize = 48;

/// Stationary state of the master equation.
///
/// Uses a direct solve of the matricized Liouvillian with one equation
/// replaced by the trace condition; for large spaces it falls back to
/// long-time integration.
pub fn steady_state(params: &SystemParams, variant: Variant) -> Result<DensityMatrix> {
    let generator = Generator::new(params, variant)?;
    if generator.dim() <= DIRECT_SOLVE_MAX_DIM {
        steady_state_direct(&generator)
    } else {
        let dt = 0.05 / params.fastest_rate(variant);
        let t_max = 20.0 / params.gamma_perp.max(1e-3).min(params.kappa);
        steady_state_relaxed(&generator, dt, t_max, 1e-9)
    }
}

/// Null-space solve with an explicit trace row.
pub fn steady_state_direct(generator: &Generator) -> Result<DensityMatrix> {
    let d = generator.dim();
    let n = d * d;
    let mut l = generator.superoperator();
    for col in 0..n {
        l[(0, col)] = ZERO;
    }
    for i in 0..d {
        l[(0, i + i * d)] = C64::new(1.0, 0.0);
    }
    let mut rhs = nalgebra::DVector::from_element(n, ZERO);
    rhs[0] = C64::new(1.0, 0.0);
    let lu = l.lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..n).map(|i| u[(i, i)].norm()).collect();
    let max_pivot = pivots.iter().cloned().fold(0.0, f64::max);
    let min_pivot = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_pivot > DEGENERACY_RATIO * max_pivot) {
        return Err(Error::DegenerateSteadyState);
    }
    let v = lu.solve(&rhs).ok_or(Error::DegenerateSteadyState)?;
    let mut rho = DensityMatrix::new(DMatrix::from_column_slice(d, d, v.as_slice()));
    rho.hermitize();
    rho.normalize();
    Ok(rho)
}

/// Integrates from the maximally mixed state until `‖L[rho]‖ <= tol ‖L‖`.
pub fn steady_state_relaxed(
    generator: &Generator,
    dt: f64,
    t_max: f64,
    tol: f64,
) -> Result<DensityMatrix> {
    let d = generator.dim();
    let scale = generator_norm(generator);
    let mut rho = DensityMatrix::maximally_mixed(d);
    let mut rk = Rk4::new(d);
    let check_every = ((1.0 / generator_slowest_guess(scale)) / dt).ceil().max(100.0) as usize;
    let n_steps = (t_max / dt).ceil() as usize;
    let mut residual = f64::INFINITY;
    for step in 1..=n_steps {
        rk.step(&generator.k, &generator.jumps, rho.as_mut_slice(), dt);
        rho.hermitize();
        rho.normalize();
        if step % check_every == 0 {
            residual = generator.apply(&rho)?.norm() / scale;
            if residual <= tol {
                return Ok(rho);
            }
        }
    }
    Err(Error::NotConverged {
        residual,
        time: n_steps as f64 * dt,
    })
}

fn generator_slowest_guess(scale: f64) -> f64 {
    // Only sets how often the residual is checked.
    (scale * 1e-3).max(1.0)
}

/// Frobenius-type scale of the generator, `‖K‖ + sum_c ‖c‖²`, used to make
/// residuals dimensionless.
pub fn generator_norm(generator: &Generator) -> f64 {
    2.0 * generator.k_dense.matrix().norm()
        + generator
            .jumps_dense
            .iter()
            .map(|c| c.matrix().norm_squared())
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{coherent_state, product_state, reference_state, CVector};
    use crate::params::Branch;

    fn small(frame: Frame) -> SystemParams {
        SystemParams {
            n_max: 8,
            ..SystemParams::reference().in_frame(frame)
        }
    }

    fn random_state(d: usize, seed: u64) -> DensityMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = CMatrix::from_fn(d, d, |_, _| C64::new(next(), next()));
        let mut rho = DensityMatrix::new(&a * a.adjoint());
        rho.normalize();
        rho
    }

    #[test]
    fn fast_apply_matches_dense_formula() {
        for frame in [Frame::Lab, Frame::Displaced] {
            for variant in [Variant::Full, Variant::Rwa] {
                let p = small(frame);
                let gen = Generator::new(&p, variant).unwrap();
                let rho = random_state(p.dim(), 11);
                let fast = gen.apply(&rho).unwrap();
                let slow = gen.apply_general(rho.matrix()).unwrap();
                assert!((&fast - &slow).norm() < 1e-10 * slow.norm());
            }
        }
    }

    #[test]
    fn superoperator_matches_apply() {
        let p = SystemParams { n_max: 3, ..SystemParams::reference() };
        let gen = Generator::new(&p, Variant::Full).unwrap();
        let rho = random_state(p.dim(), 5);
        let l = gen.superoperator();
        let v = nalgebra::DVector::from_column_slice(rho.as_slice());
        let lv = l * v;
        let direct = gen.apply(&rho).unwrap();
        for (a, b) in lv.iter().zip(direct.as_slice()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn trace_free() {
        for variant in [Variant::Full, Variant::Rwa] {
            let p = SystemParams::reference();
            let gen = Generator::new(&p, variant).unwrap();
            let out = gen.apply(&random_state(p.dim(), 3)).unwrap();
            assert!(out.trace().norm() < 1e-12, "{}", out.trace());
        }
    }

    #[test]
    fn spontaneous_decay_of_excited_state() {
        let p = SystemParams {
            g: 0.0,
            drive: 0.0,
            n_max: 3,
            frame: Frame::Lab,
            ..SystemParams::reference()
        };
        let gen = Generator::new(&p, Variant::Full).unwrap();
        let e = CVector::from_vec(vec![ZERO, C64::new(1.0, 0.0)]);
        let rho = product_state(&e, ZERO, &p);
        let out = gen.apply(&rho).unwrap();
        let df = p.field_dim();
        let rate = 2.0 * p.gamma_perp;
        assert!((out[(0, 0)].re - rate).abs() < 1e-12);
        assert!((out[(df, df)].re + rate).abs() < 1e-12);
        assert!(out.norm() - rate * 2f64.sqrt() < 1e-12);
    }

    #[test]
    fn displaced_and_lab_generators_agree_on_field_amplitude() {
        // d<a>/dt for a product state must equal E + g<sigma> - kappa<a> in
        // both frames.
        let atom = CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        for frame in [Frame::Lab, Frame::Displaced] {
            let mut p = SystemParams::reference().in_frame(frame);
            p.n_max = if frame == Frame::Lab { 60 } else { 15 };
            let alpha = C64::new(4.0, -1.0);
            let rho = product_state(&atom, alpha, &p);
            let ops = build_joint_operators(&p).unwrap();
            let gen = Generator::new(&p, Variant::Full).unwrap();
            let d_rho = DensityMatrix::new(gen.apply(&rho).unwrap());
            let d_alpha = d_rho.expectation(&ops.a).unwrap();
            let s = rho.expectation(&ops.sigma).unwrap();
            let a = rho.expectation(&ops.a).unwrap();
            let expect = C64::new(p.drive, 0.0) + s * p.g - a * p.kappa;
            assert!((d_alpha - expect).norm() < 1e-8, "{frame:?}: {d_alpha} vs {expect}");
        }
    }

    #[test]
    fn driven_cavity_fills_to_alpha_bar() {
        let p = SystemParams {
            g: 0.0,
            gamma_perp: 0.0,
            drive: 40.0 * 2.0,
            n_max: 20,
            frame: Frame::Lab,
            ..SystemParams::reference()
        };
        let ops = build_joint_operators(&p).unwrap();
        let vac = product_state(&CVector::from_vec(vec![C64::new(1.0, 0.0), ZERO]), ZERO, &p);
        let series = integrate_me(&vac, &p, Variant::Full, 1e-3, 0.1, 10).unwrap();
        for (t, rho) in series.times.iter().zip(&series.states) {
            let a = rho.expectation(&ops.a).unwrap();
            let expect = p.alpha_bar() * (1.0 - (-p.kappa * t).exp());
            assert!((a.re - expect).abs() < 1e-4 && a.im.abs() < 1e-4, "t={t}");
        }
    }

    #[test]
    fn rwa_fixed_point_is_stationary_without_decay() {
        let p = SystemParams {
            gamma_perp: 0.0,
            ..SystemParams::reference()
        };
        let ops = build_joint_operators(&p).unwrap();
        let rho0 = reference_state(Branch::Plus, &p).unwrap();
        let series = integrate_me(&rho0, &p, Variant::Rwa, 1e-4, 1.0, 1000).unwrap();
        for rho in &series.states {
            let y = rho.expectation(&ops.y).unwrap().re;
            assert!((y + 3.0).abs() < 1e-3, "y = {y}");
        }
    }

    #[test]
    fn decoupled_steady_state() {
        let p = SystemParams {
            g: 0.0,
            n_max: 12,
            ..SystemParams::reference()
        };
        let rho = steady_state(&p, Variant::Full).unwrap();
        let ground = CVector::from_vec(vec![C64::new(1.0, 0.0), ZERO]);
        let field = coherent_state(ZERO, p.n_max);
        let expect = DensityMatrix::from_pure(&ground.kronecker(&field));
        assert!(rho.trace_distance(&expect).unwrap() < 1e-6);
    }

    #[test]
    fn degenerate_null_space_is_reported() {
        let p = SystemParams {
            g: 0.0,
            gamma_perp: 0.0,
            n_max: 4,
            ..SystemParams::reference()
        };
        assert!(matches!(
            steady_state(&p, Variant::Full),
            Err(Error::DegenerateSteadyState)
        ));
    }

    #[test]
    fn direct_and_relaxed_steady_states_agree() {
        let p = SystemParams {
            g: 20.0,
            kappa: 10.0,
            gamma_perp: 5.0,
            drive: 15.0,
            n_max: 6,
            frame: Frame::Lab,
            ..SystemParams::reference()
        };
        let gen = Generator::new(&p, Variant::Full).unwrap();
        let direct = steady_state_direct(&gen).unwrap();
        let relaxed = steady_state_relaxed(&gen, 1e-3, 50.0, 1e-11).unwrap();
        assert!(direct.trace_distance(&relaxed).unwrap() < 1e-6);
    }
}
