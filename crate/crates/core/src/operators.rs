//! Truncated Hilbert space, model operators, reference states and the
//! semiclassical fixed points.
//!
//! The joint space is ordered atom ⊗ field with atomic index 0 = |g⟩ and
//! 1 = |e⟩, so a joint index is `atom * (n_max + 1) + n`.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::params::{Branch, Frame, SystemParams};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Dense complex operator on a truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator(CMatrix);

impl Operator {
    pub fn new(m: CMatrix) -> Self {
        assert!(m.is_square(), "operators must be square");
        Operator(m)
    }

    pub fn identity(dim: usize) -> Self {
        Operator(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Operator(CMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Operator {
        Operator(self.0.adjoint())
    }

    /// Tensor product `self ⊗ other`.
    pub fn kron(&self, other: &Operator) -> Operator {
        Operator(self.0.kronecker(&other.0))
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        Operator(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn scale(&self, z: C64) -> Operator {
        Operator(&self.0 * z)
    }

    /// Largest entry-wise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..=i {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

/// Truncated annihilation operator with `sqrt(n)` on the superdiagonal.
pub fn build_field_annihilation(n_max: usize) -> Result<Operator> {
    if n_max < 1 {
        return Err(Error::InvalidParams("n_max must be >= 1".into()));
    }
    let d = n_max + 1;
    let mut m = CMatrix::zeros(d, d);
    for n in 1..d {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(Operator(m))
}

/// Dressed atomic state `2^{-1/2}(|g⟩ ∓ i|e⟩)` in the (g, e) basis.
pub fn dressed_state(branch: Branch) -> CVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_vec(vec![C64::new(s, 0.0), C64::new(0.0, -branch.sign() * s)])
}

/// Every operator of the model on the joint space.
///
/// In the displaced frame `a` is `b + alpha_bar`, where `b` is the truncated
/// ladder operator for the fluctuations; `x` and `y` are built from that
/// shifted `a`.
#[derive(Debug, Clone)]
pub struct JointOperators {
    pub a: Operator,
    pub a_dag: Operator,
    /// Bare truncated ladder operator (equal to `a` in the lab frame).
    pub b: Operator,
    pub sigma: Operator,
    pub sigma_dag: Operator,
    pub sigma_z: Operator,
    pub x: Operator,
    pub y: Operator,
    pub mu: Operator,
    pub mu_dag: Operator,
    pub mu_z: Operator,
    /// `|+⟩⟨+| ⊗ 1`
    pub proj_plus: Operator,
    /// `|-⟩⟨-| ⊗ 1`
    pub proj_minus: Operator,
    pub identity: Operator,
}

impl JointOperators {
    pub fn dim(&self) -> usize {
        self.identity.dim()
    }

    pub fn projector(&self, branch: Branch) -> &Operator {
        match branch {
            Branch::Plus => &self.proj_plus,
            Branch::Minus => &self.proj_minus,
        }
    }
}

fn atom_op(entries: [[C64; 2]; 2]) -> Operator {
    Operator(CMatrix::from_fn(2, 2, |i, j| entries[i][j]))
}

fn outer(u: &CVector, v: &CVector) -> Operator {
    Operator(u * v.adjoint())
}

pub fn build_joint_operators(params: &SystemParams) -> Result<JointOperators> {
    params.validate()?;
    let df = params.field_dim();
    let id_f = Operator::identity(df);
    let id_a = Operator::identity(2);

    let b_f = build_field_annihilation(params.n_max)?;
    let a_f = match params.frame {
        Frame::Lab => b_f.clone(),
        Frame::Displaced => &b_f + &id_f.scale(C64::new(params.alpha_bar(), 0.0)),
    };

    let sigma_a = atom_op([[ZERO, ONE], [ZERO, ZERO]]);
    let sigma_z_a = &(&sigma_a.adjoint() * &sigma_a) - &(&sigma_a * &sigma_a.adjoint());

    let plus = dressed_state(Branch::Plus);
    let minus = dressed_state(Branch::Minus);
    let mu_a = outer(&minus, &plus);
    let mu_z_a = &(&mu_a.adjoint() * &mu_a) - &(&mu_a * &mu_a.adjoint());

    let a = id_a.kron(&a_f);
    let a_dag = a.adjoint();
    let x = &a + &a_dag;
    let y = &(a.scale(-I)) + &(a_dag.scale(I));
    let sigma = sigma_a.kron(&id_f);
    let mu = mu_a.kron(&id_f);

    Ok(JointOperators {
        b: id_a.kron(&b_f),
        sigma_dag: sigma.adjoint(),
        sigma_z: sigma_z_a.kron(&id_f),
        mu_dag: mu.adjoint(),
        mu_z: mu_z_a.kron(&id_f),
        proj_plus: outer(&plus, &plus).kron(&id_f),
        proj_minus: outer(&minus, &minus).kron(&id_f),
        identity: Operator::identity(2 * df),
        a,
        a_dag,
        x,
        y,
        sigma,
        mu,
    })
}

/// Coefficients `e^{-|a|^2/2} a^n / sqrt(n!)` for `n <= n_max`, without
/// renormalization.
pub(crate) fn coherent_amplitudes(alpha: C64, n_max: usize) -> CVector {
    let mut c = CVector::zeros(n_max + 1);
    c[0] = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 1..=n_max {
        c[n] = c[n - 1] * alpha / (n as f64).sqrt();
    }
    c
}

/// Normalized truncated coherent state.
///
/// Logs a warning when the discarded tail probability exceeds 1e-8.
pub fn coherent_state(alpha: C64, n_max: usize) -> CVector {
    let mut c = coherent_amplitudes(alpha, n_max);
    let kept = c.norm_squared();
    let tail = 1.0 - kept;
    if tail > 1e-8 {
        log::warn!(
            "coherent state |{alpha}> truncated at n_max = {n_max} loses probability {tail:.3e}"
        );
    }
    c /= C64::new(kept.sqrt(), 0.0);
    c
}

/// Semiclassical fixed points of the factorized equations of motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointPair {
    /// Exact field amplitudes `(E + g s) / kappa`.
    pub alpha_plus: C64,
    pub alpha_minus: C64,
    /// Exact atomic polarizations.
    pub s_plus: C64,
    pub s_minus: C64,
    /// Inversion (zero at both fixed points).
    pub w: f64,
    /// Strong-driving approximants `alpha_bar ∓ i g / (2 kappa)`.
    pub alpha_plus_strong: C64,
    pub alpha_minus_strong: C64,
    /// Phase-quadrature means `∓ g / kappa`.
    pub y_plus: f64,
    pub y_minus: f64,
}

impl FixedPointPair {
    pub fn alpha(&self, branch: Branch) -> C64 {
        match branch {
            Branch::Plus => self.alpha_plus,
            Branch::Minus => self.alpha_minus,
        }
    }

    pub fn alpha_strong(&self, branch: Branch) -> C64 {
        match branch {
            Branch::Plus => self.alpha_plus_strong,
            Branch::Minus => self.alpha_minus_strong,
        }
    }

    pub fn y(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Plus => self.y_plus,
            Branch::Minus => self.y_minus,
        }
    }
}

pub fn compute_fixed_points(params: &SystemParams) -> Result<FixedPointPair> {
    params.validate_bistable()?;
    let (g, e, kappa) = (params.g, params.drive, params.kappa);
    let re = -g / (4.0 * e);
    let im = (0.25 - re * re).sqrt();
    let s_plus = C64::new(re, -im);
    let s_minus = C64::new(re, im);
    let alpha = |s: C64| (C64::new(e, 0.0) + s * g) / kappa;
    let half_split = g / (2.0 * kappa);
    Ok(FixedPointPair {
        alpha_plus: alpha(s_plus),
        alpha_minus: alpha(s_minus),
        s_plus,
        s_minus,
        w: 0.0,
        alpha_plus_strong: C64::new(params.alpha_bar(), -half_split),
        alpha_minus_strong: C64::new(params.alpha_bar(), half_split),
        y_plus: -g / kappa,
        y_minus: g / kappa,
    })
}

/// `|alpha_fix⟩⟨alpha_fix| ⊗ |±⟩⟨±|` with the strong-driving amplitudes.
///
/// In the displaced frame only the offset `∓ i g / (2 kappa)` is stored.
pub fn reference_state(branch: Branch, params: &SystemParams) -> Result<DensityMatrix> {
    params.validate()?;
    let half_split = params.g / (2.0 * params.kappa);
    let offset = C64::new(0.0, -branch.sign() * half_split);
    let amplitude = match params.frame {
        Frame::Lab => C64::new(params.alpha_bar(), 0.0) + offset,
        Frame::Displaced => offset,
    };
    let field = coherent_state(amplitude, params.n_max);
    let atom = dressed_state(branch);
    Ok(DensityMatrix::from_pure(&atom.kronecker(&field)))
}

/// `|atom⟩ ⊗ |alpha⟩` as a pure density matrix, with `alpha` given in the
/// lab frame and shifted as appropriate.
pub fn product_state(atom: &CVector, alpha_lab: C64, params: &SystemParams) -> DensityMatrix {
    let alpha = match params.frame {
        Frame::Lab => alpha_lab,
        Frame::Displaced => alpha_lab - params.alpha_bar(),
    };
    let field = coherent_state(alpha, params.n_max);
    DensityMatrix::from_pure(&atom.kronecker(&field))
}
