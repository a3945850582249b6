//! The discrete linear operator `L_h` and the implicit-Euler systems
//! `I - dt L_h` built from it.

use crate::coeff::CoefficientSet;
use crate::error::Result;
use crate::grid::{Field, TorusGrid};
use crate::linalg::{bicgstab, CyclicFactor, CyclicTridiag, Csr};

const BICGSTAB_TOL: f64 = 1e-14;
const BICGSTAB_MAX_ITER: usize = 2000;

/// `L_h f = div((D/pi) grad f) + (grad phi/pi) . grad f + W f` at time `t`.
///
/// Diffusion uses compact differences with face-averaged `D/pi`, the drift
/// uses central differences and `W` is the central divergence of the drift,
/// so every column of `L_h` sums to zero.
pub fn linear_operator(c: &CoefficientSet, t: f64) -> Result<Csr> {
    let g = *c.grid();
    let h = g.h();
    let h2 = h * h;
    let mob = c.mobility(t)?;
    let drift = c.drift(t)?;
    let w = c.w(t)?;
    let a = mob.values();
    let rows = (0..g.len())
        .map(|i| {
            let mut row = Vec::with_capacity(1 + 2 * g.dim());
            let mut diag = w.values()[i];
            for axis in 0..g.dim() {
                let ip = g.shift(i, axis, 1);
                let im = g.shift(i, axis, -1);
                let ap = 0.5 * (a[i] + a[ip]);
                let am = 0.5 * (a[i] + a[im]);
                let b = drift.component(axis)[i] / (2.0 * h);
                row.push((ip, ap / h2 + b));
                row.push((im, am / h2 - b));
                diag -= (ap + am) / h2;
            }
            row.push((i, diag));
            row
        })
        .collect();
    Ok(Csr::from_rows(rows))
}

/// Applies `L_h` at time `t` to a field.
pub fn apply_operator(c: &CoefficientSet, t: f64, f: &Field) -> Result<Field> {
    f.grid().ensure_same(c.grid())?;
    let l = linear_operator(c, t)?;
    Ok(Field::from_raw(*f.grid(), l.matvec(f.values())))
}

/// A factorised `I - dt L_h(t)`, solvable with or without transposition.
#[derive(Clone, Debug)]
pub struct ShiftedSystem {
    inner: Inner,
}

#[derive(Clone, Debug)]
enum Inner {
    Tridiag { fwd: CyclicFactor, tr: CyclicFactor },
    Sparse { a: Csr, at: Csr },
}

impl ShiftedSystem {
    pub fn new(c: &CoefficientSet, t: f64, dt: f64) -> Result<Self> {
        let l = linear_operator(c, t)?;
        Self::from_operator(c.grid(), &l, dt)
    }

    pub fn from_operator(grid: &TorusGrid, l: &Csr, dt: f64) -> Result<Self> {
        let n = l.n;
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = l.row(i).map(|(j, v)| (j, -dt * v)).collect();
                row.push((i, 1.0));
                row
            })
            .collect();
        let a = Csr::from_rows(rows);
        if grid.dim() == 1 {
            let mut m = CyclicTridiag {
                lower: vec![0.0; n],
                diag: vec![0.0; n],
                upper: vec![0.0; n],
            };
            for i in 0..n {
                for (j, v) in a.row(i) {
                    if j == i {
                        m.diag[i] += v;
                    } else if j == (i + 1) % n {
                        m.upper[i] += v;
                    } else {
                        m.lower[i] += v;
                    }
                }
            }
            let fwd = m.factor()?;
            let tr = m.transpose().factor()?;
            Ok(Self {
                inner: Inner::Tridiag { fwd, tr },
            })
        } else {
            let at = a.transpose();
            Ok(Self {
                inner: Inner::Sparse { a, at },
            })
        }
    }

    /// `x = (I - dt L)^{-1} rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match &self.inner {
            Inner::Tridiag { fwd, .. } => Ok(fwd.solve(rhs)),
            Inner::Sparse { a, .. } => bicgstab(a, rhs, Some(rhs), BICGSTAB_TOL, BICGSTAB_MAX_ITER),
        }
    }

    /// `x = (I - dt L)^{-T} rhs`.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match &self.inner {
            Inner::Tridiag { tr, .. } => Ok(tr.solve(rhs)),
            Inner::Sparse { at, .. } => bicgstab(at, rhs, Some(rhs), BICGSTAB_TOL, BICGSTAB_MAX_ITER),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{build_coefficients, ProblemSpec};
    use crate::grid::{integrate, TorusGrid};
    use std::f64::consts::PI;

    fn coeffs(dim: usize, n: usize, d: &str, pi: &str, phi: &str) -> CoefficientSet {
        build_coefficients(&ProblemSpec::from_strs(dim, n, d, pi, phi, "1").unwrap()).unwrap()
    }

    #[test]
    fn columns_sum_to_zero() {
        for dim in [1, 2] {
            let c = coeffs(dim, 16, "2 + cos(2*pi*x1)", "1.5 + 0.5*sin(2*pi*x1)", "cos(2*pi*x1) + sin(4*pi*x1)");
            let l = linear_operator(&c, 0.0).unwrap();
            let ones = vec![1.0; l.n];
            let col_sums = l.transpose().matvec(&ones);
            assert!(col_sums.iter().all(|s| s.abs() < 1e-9), "{col_sums:?}");
            let rows = l.matvec(&ones);
            let w = c.w(0.0).unwrap();
            for (r, w) in rows.iter().zip(w.values()) {
                assert!((r - w).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn heat_operator_symbol() {
        let c = coeffs(1, 64, "1", "1", "0");
        let f = Field::from_fn(*c.grid(), |p| (2.0 * PI * p[0]).cos()).unwrap();
        let lf = apply_operator(&c, 0.0, &f).unwrap();
        let h = 1.0 / 64.0;
        let symbol = -4.0 * (PI * h).sin().powi(2) / (h * h);
        for i in 0..64 {
            assert!((lf.values()[i] - symbol * f.values()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn shifted_solves_agree_with_matvec() {
        for dim in [1, 2] {
            let c = coeffs(dim, 12, "2 + cos(2*pi*x1)", "1", "0.3*sin(2*pi*x1)");
            let g = TorusGrid::new(dim, 12).unwrap();
            let sys = ShiftedSystem::new(&c, 0.0, 1e-3).unwrap();
            let l = linear_operator(&c, 0.0).unwrap();
            let x: Vec<f64> = (0..g.len()).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
            let lx = l.matvec(&x);
            let ax: Vec<f64> = x.iter().zip(&lx).map(|(x, lx)| x - 1e-3 * lx).collect();
            let got = sys.solve(&ax).unwrap();
            for (a, b) in got.iter().zip(&x) {
                assert!((a - b).abs() < 1e-11);
            }
            let ltx = l.transpose().matvec(&x);
            let atx: Vec<f64> = x.iter().zip(&ltx).map(|(x, l)| x - 1e-3 * l).collect();
            let got = sys.solve_transpose(&atx).unwrap();
            for (a, b) in got.iter().zip(&x) {
                assert!((a - b).abs() < 1e-11);
            }
            let f = Field::new(g, got).unwrap();
            assert!(integrate(&f) > 0.0);
        }
    }
}
