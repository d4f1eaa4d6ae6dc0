//! Husimi Q-function of the reduced field state on a rectangular grid.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::operators::{coherent_amplitudes, CVector, C64};
use crate::params::{Frame, SystemParams};

/// Extents and resolution of a Q-function grid, in lab-frame amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QGridSpec {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for QGridSpec {
    /// 101 × 101 over Re α ∈ [0, 9], Im α ∈ [-4.5, 4.5].
    fn default() -> Self {
        QGridSpec {
            re_min: 0.0,
            re_max: 9.0,
            im_min: -4.5,
            im_max: 4.5,
            n_re: 101,
            n_im: 101,
        }
    }
}

impl QGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_re < 2 || self.n_im < 2 {
            return Err(Error::InvalidParams("Q grid needs at least 2 points per axis".into()));
        }
        if !(self.re_max > self.re_min && self.im_max > self.im_min) {
            return Err(Error::InvalidParams("Q grid extents must be increasing".into()));
        }
        Ok(())
    }

    fn axis(min: f64, max: f64, n: usize) -> Vec<f64> {
        let h = (max - min) / (n - 1) as f64;
        (0..n).map(|k| min + h * k as f64).collect()
    }
}

/// A local maximum of the Q-function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QPeak {
    /// Position refined by a parabolic fit through the neighbouring cells.
    pub alpha: C64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QGrid {
    pub re_axis: Vec<f64>,
    pub im_axis: Vec<f64>,
    /// `values[i_re][i_im]`.
    pub values: Vec<Vec<f64>>,
}

impl QGrid {
    pub fn cell_area(&self) -> f64 {
        (self.re_axis[1] - self.re_axis[0]) * (self.im_axis[1] - self.im_axis[0])
    }

    /// Riemann sum of the grid values.
    pub fn integral(&self) -> f64 {
        self.values.iter().flatten().sum::<f64>() * self.cell_area()
    }

    /// Largest value on the grid boundary.
    pub fn boundary_max(&self) -> f64 {
        let (nr, ni) = (self.re_axis.len(), self.im_axis.len());
        let mut m = 0.0f64;
        for i in 0..nr {
            for j in 0..ni {
                if i == 0 || j == 0 || i == nr - 1 || j == ni - 1 {
                    m = m.max(self.values[i][j]);
                }
            }
        }
        m
    }

    /// Strict interior local maxima (8-neighbourhood) whose value exceeds
    /// `min_fraction` of the global maximum, sorted by decreasing value.
    pub fn local_maxima(&self, min_fraction: f64) -> Vec<QPeak> {
        let (nr, ni) = (self.re_axis.len(), self.im_axis.len());
        let global = self.values.iter().flatten().cloned().fold(0.0, f64::max);
        let mut peaks = Vec::new();
        for i in 1..nr - 1 {
            for j in 1..ni - 1 {
                let v = self.values[i][j];
                if v < min_fraction * global {
                    continue;
                }
                let mut is_max = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let w = self.values[(i as i64 + di) as usize][(j as i64 + dj) as usize];
                        if w >= v {
                            is_max = false;
                        }
                    }
                }
                if is_max {
                    let re = refine(self.re_axis[i], self.re_axis[1] - self.re_axis[0], [
                        self.values[i - 1][j],
                        v,
                        self.values[i + 1][j],
                    ]);
                    let im = refine(self.im_axis[j], self.im_axis[1] - self.im_axis[0], [
                        self.values[i][j - 1],
                        v,
                        self.values[i][j + 1],
                    ]);
                    peaks.push(QPeak {
                        alpha: C64::new(re, im),
                        value: v,
                    });
                }
            }
        }
        peaks.sort_by(|a, b| b.value.total_cmp(&a.value));
        peaks
    }

    /// CSV with header `re,im,q`, one row per cell.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "re,im,q")?;
        for (i, re) in self.re_axis.iter().enumerate() {
            for (j, im) in self.im_axis.iter().enumerate() {
                writeln!(w, "{re:.8e},{im:.8e},{:.8e}", self.values[i][j])?;
            }
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

/// Vertex of the parabola through three equally spaced samples.
fn refine(centre: f64, h: f64, [l, c, r]: [f64; 3]) -> f64 {
    let denom = l - 2.0 * c + r;
    if denom.abs() < f64::MIN_POSITIVE {
        return centre;
    }
    centre + 0.5 * h * (l - r) / denom
}

/// `Q(α) = ⟨α| Tr_atom[rho] |α⟩ / π` on the grid.
///
/// Grid coordinates are lab-frame amplitudes; in the displaced frame the
/// coherent states are centred at `α - alpha_bar`.
pub fn q_function(rho: &DensityMatrix, params: &SystemParams, spec: &QGridSpec) -> Result<QGrid> {
    spec.validate()?;
    if rho.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: rho.dim(),
        });
    }
    let field = rho.field_state();
    let shift = match params.frame {
        Frame::Lab => 0.0,
        Frame::Displaced => params.alpha_bar(),
    };
    let re_axis = QGridSpec::axis(spec.re_min, spec.re_max, spec.n_re);
    let im_axis = QGridSpec::axis(spec.im_min, spec.im_max, spec.n_im);
    let values = re_axis
        .iter()
        .map(|&re| {
            im_axis
                .iter()
                .map(|&im| {
                    let c: CVector = coherent_amplitudes(C64::new(re - shift, im), params.n_max);
                    let q = (c.adjoint() * &field * &c)[(0, 0)].re / std::f64::consts::PI;
                    q.max(0.0)
                })
                .collect()
        })
        .collect();
    let grid = QGrid {
        re_axis,
        im_axis,
        values,
    };
    let edge = grid.boundary_max();
    if edge > 1e-6 {
        log::warn!("Q-function reaches {edge:.3e} on the grid boundary; the grid may be too small");
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{dressed_state, product_state};
    use crate::params::Branch;

    #[test]
    fn coherent_state_q_is_gaussian() {
        for frame in [Frame::Lab, Frame::Displaced] {
            let p = SystemParams::reference().in_frame(frame);
            let beta = C64::new(4.0, 1.0);
            let rho = product_state(&dressed_state(Branch::Plus), beta, &p);
            let spec = QGridSpec {
                n_re: 31,
                n_im: 31,
                ..QGridSpec::default()
            };
            let grid = q_function(&rho, &p, &spec).unwrap();
            for (i, re) in grid.re_axis.iter().enumerate() {
                for (j, im) in grid.im_axis.iter().enumerate() {
                    let d2 = (C64::new(*re, *im) - beta).norm_sqr();
                    let expect = (-d2).exp() / std::f64::consts::PI;
                    assert!((grid.values[i][j] - expect).abs() < 1e-6);
                }
            }
            let full = q_function(&rho, &p, &QGridSpec::default()).unwrap();
            assert!((full.integral() - 1.0).abs() < 1e-3);
            let peaks = full.local_maxima(0.1);
            assert_eq!(peaks.len(), 1);
            assert!((peaks[0].alpha - beta).norm() < 0.02);
        }
    }

    #[test]
    fn csv_layout() {
        let p = SystemParams { n_max: 4, ..SystemParams::reference() };
        let rho = DensityMatrix::maximally_mixed(p.dim());
        let spec = QGridSpec {
            n_re: 2,
            n_im: 3,
            ..QGridSpec::default()
        };
        let grid = q_function(&rho, &p, &spec).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "re,im,q");
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("0.00000000e0,-4.50000000e0,"));
    }
}
