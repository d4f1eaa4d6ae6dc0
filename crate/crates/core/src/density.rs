//! Density matrices on the joint atom ⊗ field space.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::operators::{CMatrix, CVector, Operator, C64};
use crate::params::Branch;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Wraps a matrix without normalizing it.
    pub fn new(m: CMatrix) -> Self {
        assert!(m.is_square(), "density matrices must be square");
        DensityMatrix(m)
    }

    pub fn from_pure(psi: &CVector) -> Self {
        DensityMatrix(psi * psi.adjoint())
    }

    /// `1/dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn matrix_mut(&mut self) -> &mut CMatrix {
        &mut self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub(crate) fn as_slice(&self) -> &[C64] {
        self.0.as_slice()
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [C64] {
        self.0.as_mut_slice()
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn purity(&self) -> f64 {
        // Tr[rho^2] = sum_ij |rho_ij|^2 for Hermitian rho.
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Replaces the matrix by its Hermitian part.
    pub fn hermitize(&mut self) {
        let d = self.dim();
        for j in 0..d {
            for i in 0..j {
                let avg = 0.5 * (self.0[(i, j)] + self.0[(j, i)].conj());
                self.0[(i, j)] = avg;
                self.0[(j, i)] = avg.conj();
            }
            self.0[(j, j)].im = 0.0;
        }
    }

    /// Scales to unit trace and returns the trace found beforehand.
    pub fn normalize(&mut self) -> f64 {
        let tr = self.trace().re;
        self.0 /= C64::new(tr, 0.0);
        tr
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut h = self.clone();
        h.hermitize();
        let eig = SymmetricEigen::new(h.0);
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// `Tr[rho op]`.
    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: op.dim(),
            });
        }
        let m = op.matrix();
        let d = self.dim();
        // Tr[rho A] = sum_ij rho_ij A_ji
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..d {
            for i in 0..d {
                acc += self.0[(i, j)] * m[(j, i)];
            }
        }
        Ok(acc)
    }

    /// `½ ‖rho - sigma‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let diff = DensityMatrix(&self.0 - &other.0);
        Ok(0.5 * diff.eigenvalues().iter().map(|l| l.abs()).sum::<f64>())
    }

    /// Reduced field state `Tr_atom[rho]`.
    pub fn field_state(&self) -> CMatrix {
        let df = self.dim() / 2;
        let blk = |a: usize| self.0.view((a * df, a * df), (df, df)).into_owned();
        blk(0) + blk(1)
    }

    /// Reduced atomic state `Tr_field[rho]` in the (g, e) basis.
    pub fn atom_state(&self) -> CMatrix {
        let df = self.dim() / 2;
        CMatrix::from_fn(2, 2, |a, b| {
            (0..df).map(|n| self.0[(a * df + n, b * df + n)]).sum()
        })
    }

    /// Population of the dressed state `|±⟩`.
    pub fn dressed_population(&self, branch: Branch) -> f64 {
        let v = crate::operators::dressed_state(branch);
        (v.adjoint() * self.atom_state() * &v)[(0, 0)].re
    }
}
