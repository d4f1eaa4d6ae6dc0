//! Row-compressed operators for the inner integration loops.
//!
//! Dense operands are square and stored column-major, matching `nalgebra`.

use std::collections::BTreeMap;

use crate::operators::{CMatrix, Operator, C64};

#[derive(Debug, Clone)]
pub(crate) struct SparseOp {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseOp {
    pub fn from_dense(m: &CMatrix) -> Self {
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseOp {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn from_operator(op: &Operator) -> Self {
        Self::from_dense(op.matrix())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[cfg(test)]
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Iterates `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.cols[p], self.vals[p]))
        })
    }

    /// `Tr[self * rho]` for a column-major `rho`.
    pub fn trace_product(&self, rho: &[C64]) -> C64 {
        let d = self.dim;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * rho[self.cols[p] + i * d];
            }
        }
        acc
    }

    /// `out = self * x`.
    pub fn mul_into(&self, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for (xc, oc) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for i in 0..d {
                let mut s = C64::new(0.0, 0.0);
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += self.vals[p] * xc[self.cols[p]];
                }
                oc[i] = s;
            }
        }
    }

    /// `out += self * x`.
    pub fn mul_add(&self, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for (xc, oc) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for i in 0..d {
                let mut s = C64::new(0.0, 0.0);
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += self.vals[p] * xc[self.cols[p]];
                }
                oc[i] += s;
            }
        }
    }
}

/// A linear combination `sum_k c_k A_k` on the union sparsity pattern of its
/// terms, re-weighted in place.
#[derive(Debug, Clone)]
pub(crate) struct SparseCombo {
    op: SparseOp,
    /// `parts[k][p]` is the contribution of term `k` to stored entry `p`.
    parts: Vec<Vec<C64>>,
}

impl SparseCombo {
    pub fn new(terms: &[&SparseOp]) -> Self {
        let dim = terms[0].dim();
        let mut pattern: BTreeMap<(usize, usize), Vec<C64>> = BTreeMap::new();
        for (k, t) in terms.iter().enumerate() {
            assert_eq!(t.dim(), dim);
            for (i, j, v) in t.entries() {
                pattern
                    .entry((i, j))
                    .or_insert_with(|| vec![C64::new(0.0, 0.0); terms.len()])[k] += v;
            }
        }
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(pattern.len());
        let mut parts = vec![Vec::with_capacity(pattern.len()); terms.len()];
        for (&(i, j), contrib) in &pattern {
            row_ptr[i + 1] += 1;
            cols.push(j);
            for (k, c) in contrib.iter().enumerate() {
                parts[k].push(*c);
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let op = SparseOp {
            dim,
            row_ptr,
            vals: vec![C64::new(0.0, 0.0); cols.len()],
            cols,
        };
        SparseCombo { op, parts }
    }

    pub fn set_coeffs(&mut self, coeffs: &[C64]) {
        assert_eq!(coeffs.len(), self.parts.len());
        for (p, v) in self.op.vals.iter_mut().enumerate() {
            *v = self
                .parts
                .iter()
                .zip(coeffs)
                .map(|(part, c)| part[p] * c)
                .sum();
        }
    }

    pub fn op(&self) -> &SparseOp {
        &self.op
    }
}

/// `out = x^dagger` for a column-major square matrix.
pub(crate) fn adjoint_into(x: &[C64], out: &mut [C64], dim: usize) {
    for j in 0..dim {
        for i in 0..dim {
            out[i + j * dim] = x[j + i * dim].conj();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(d: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(d, d, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn sparse_product_matches_dense() {
        let mut a = random_matrix(6, 1);
        a[(2, 3)] = C64::new(0.0, 0.0);
        a[(0, 0)] = C64::new(0.0, 0.0);
        let x = random_matrix(6, 2);
        let s = SparseOp::from_dense(&a);
        assert_eq!(s.nnz(), 34);
        let mut out = vec![C64::new(0.0, 0.0); 36];
        s.mul_into(x.as_slice(), &mut out);
        let expect = &a * &x;
        for (o, e) in out.iter().zip(expect.as_slice()) {
            assert!((o - e).norm() < 1e-14);
        }
    }

    #[test]
    fn combination_matches_dense_sum() {
        let a = random_matrix(4, 3);
        let b = CMatrix::identity(4, 4);
        let (sa, sb) = (SparseOp::from_dense(&a), SparseOp::from_dense(&b));
        let mut combo = SparseCombo::new(&[&sa, &sb]);
        let (ca, cb) = (C64::new(0.5, -2.0), C64::new(3.0, 1.0));
        combo.set_coeffs(&[ca, cb]);
        let x = random_matrix(4, 4);
        let mut out = vec![C64::new(0.0, 0.0); 16];
        combo.op().mul_into(x.as_slice(), &mut out);
        let expect = (a * ca + b * cb) * &x;
        for (o, e) in out.iter().zip(expect.as_slice()) {
            assert!((o - e).norm() < 1e-13);
        }
    }
}
