//! Sparse solvers for the shifted systems `I - dt L_h`.

use crate::error::{Error, Result};

/// Periodic tridiagonal matrix: row `i` reads
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]` with cyclic indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CyclicTridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CyclicTridiag {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                self.lower[i] * x[(i + n - 1) % n] + self.diag[i] * x[i] + self.upper[i] * x[(i + 1) % n]
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.len();
        Self {
            lower: (0..n).map(|i| self.upper[(i + n - 1) % n]).collect(),
            diag: self.diag.clone(),
            upper: (0..n).map(|i| self.lower[(i + 1) % n]).collect(),
        }
    }

    pub fn factor(&self) -> Result<CyclicFactor> {
        CyclicFactor::new(self)
    }
}

/// Thomas factorisation of the cyclic system with the Sherman-Morrison
/// correction vector precomputed.
#[derive(Clone, Debug)]
pub struct CyclicFactor {
    lower: Vec<f64>,
    cprime: Vec<f64>,
    denom: Vec<f64>,
    z: Vec<f64>,
    alpha: f64,
    gamma: f64,
}

impl CyclicFactor {
    fn new(m: &CyclicTridiag) -> Result<Self> {
        let n = m.len();
        if n < 3 {
            return Err(Error::numerical("cyclic system needs at least 3 unknowns"));
        }
        let alpha = m.lower[0];
        let beta = m.upper[n - 1];
        let gamma = -m.diag[0];
        let mut diag = m.diag.clone();
        diag[0] -= gamma;
        diag[n - 1] -= alpha * beta / gamma;

        let mut cprime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = diag[0];
        for i in 0..n {
            if i > 0 {
                denom[i] = diag[i] - m.lower[i] * cprime[i - 1];
            }
            if denom[i] == 0.0 || !denom[i].is_finite() {
                return Err(Error::numerical(format!("singular tridiagonal pivot at row {i}")));
            }
            cprime[i] = m.upper[i] / denom[i];
        }
        let mut f = Self {
            lower: m.lower.clone(),
            cprime,
            denom,
            z: Vec::new(),
            alpha,
            gamma,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = beta;
        f.z = f.thomas(&u);
        Ok(f)
    }

    fn thomas(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut x = vec![0.0; n];
        x[0] = rhs[0] / self.denom[0];
        for i in 1..n {
            x[i] = (rhs[i] - self.lower[i] * x[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.cprime[i] * x[i + 1];
        }
        x
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut x = self.thomas(rhs);
        let ratio = self.alpha / self.gamma;
        let fact = (x[0] + ratio * x[n - 1]) / (1.0 + self.z[0] + ratio * self.z[n - 1]);
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= fact * zi;
        }
        x
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row `(column, value)` lists; duplicates are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                rows[c].push((i, v));
            }
        }
        Self::from_rows(rows)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).filter(|&(c, _)| c == i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                m[(i, c)] += v;
            }
        }
        m
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGSTAB. Stops when `|b - A x| <= tol |b|`.
pub fn bicgstab(a: &Csr, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&inv_diag).map(|(x, d)| x * d).collect() };
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| precond(b));
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..max_iter {
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond(&p);
        v = a.matvec(&p_hat);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
        if norm(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(x);
        }
        let s_hat = precond(&s);
        let t = a.matvec(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega == 0.0 {
            break;
        }
    }
    let res: Vec<f64> = b.iter().zip(a.matvec(&x)).map(|(b, a)| b - a).collect();
    if norm(&res) <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::numerical(format!(
            "BiCGSTAB stalled at relative residual {:.3e}",
            norm(&res) / bnorm
        )))
    }
}
