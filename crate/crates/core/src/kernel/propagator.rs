//! Discrete fundamental solution of `d/dt - L_h` as a product of implicit
//! Euler factors, and the periodised heat kernel used as a reference.

use nalgebra::DMatrix;

use super::operator::ShiftedSystem;
use crate::coeff::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{gradient, Field, TorusGrid, VectorField};

/// Longest time span a single factor may cover when `pi` depends on time.
pub const MAX_FACTOR_SPAN: f64 = 1e-2;
/// Entries below this are reported as undershoot.
pub const NEGATIVE_FLAG: f64 = -1e-10;
/// Entries below this make construction fail.
pub const NEGATIVE_FAIL: f64 = -1e-6;

/// `matrix[(i, j)] ~ K(x_i, t; y_j, s)`, so that applying to `g` is
/// `h^dim * matrix * g`.
#[derive(Clone, Debug)]
pub struct Propagator {
    grid: TorusGrid,
    s: f64,
    t: f64,
    substeps: usize,
    matrix: DMatrix<f64>,
}

impl Propagator {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn span(&self) -> f64 {
        self.t - self.s
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `h^dim * sum_j matrix[(i, j)]`.
    pub fn row_mass(&self, i: usize) -> f64 {
        self.grid.cell_volume() * self.matrix.row(i).sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.matrix.min()
    }

    /// True when some entry undershoots zero by more than 1e-10.
    pub fn has_undershoot(&self) -> bool {
        self.min_entry() < NEGATIVE_FLAG
    }

    pub fn row_field(&self, i: usize) -> Field {
        Field::from_raw(self.grid, self.matrix.row(i).iter().copied().collect())
    }

    /// The same matrix relabelled to `[s + by, t + by]`; exact for
    /// time-independent coefficients.
    pub(crate) fn shifted(&self, by: f64) -> Propagator {
        Propagator {
            s: self.s + by,
            t: self.t + by,
            ..self.clone()
        }
    }

    /// Composition `self` after `earlier`: the propagator from
    /// `earlier.s` to `self.t`.
    pub fn compose(&self, earlier: &Propagator) -> Result<Propagator> {
        self.grid.ensure_same(&earlier.grid)?;
        if (earlier.t - self.s).abs() > 1e-12 * self.t.abs().max(1.0) {
            return Err(Error::precondition(format!(
                "cannot compose [{}, {}] after [{}, {}]",
                self.s, self.t, earlier.s, earlier.t
            )));
        }
        Ok(Propagator {
            grid: self.grid,
            s: earlier.s,
            t: self.t,
            substeps: self.substeps + earlier.substeps,
            matrix: (&self.matrix * &earlier.matrix) * self.grid.cell_volume(),
        })
    }
}

fn check_span(c: &CoefficientSet, s: f64, t: f64, substeps: usize) -> Result<f64> {
    if !(t > s) {
        return Err(Error::precondition(format!("need t > s, got s = {s}, t = {t}")));
    }
    if substeps == 0 {
        return Err(Error::precondition("substeps must be at least 1"));
    }
    let dt = (t - s) / substeps as f64;
    if !c.time_independent_pi() && dt > MAX_FACTOR_SPAN * (1.0 + 1e-12) {
        return Err(Error::precondition(format!(
            "time-dependent pi needs factors of at most {MAX_FACTOR_SPAN}, got {dt}"
        )));
    }
    Ok(dt)
}

fn solve_columns(sys: &ShiftedSystem, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        let col: Vec<f64> = m.column(j).iter().copied().collect();
        let x = sys.solve(&col)?;
        out.column_mut(j).copy_from_slice(&x);
    }
    Ok(out)
}

fn matrix_power(base: DMatrix<f64>, mut k: usize) -> DMatrix<f64> {
    let n = base.nrows();
    let mut result: Option<DMatrix<f64>> = None;
    let mut b = base;
    loop {
        if k & 1 == 1 {
            result = Some(match result {
                None => b.clone(),
                Some(r) => &r * &b,
            });
        }
        k >>= 1;
        if k == 0 {
            return result.unwrap_or_else(|| DMatrix::identity(n, n));
        }
        b = &b * &b;
    }
}

/// Product of `substeps` factors `(I - dt L_h(t_mid))^{-1}` from `s` to `t`,
/// coefficients frozen at each factor's midpoint time.
pub fn build_propagator(c: &CoefficientSet, s: f64, t: f64, substeps: usize) -> Result<Propagator> {
    let dt = check_span(c, s, t, substeps)?;
    let grid = *c.grid();
    let n = grid.len();
    let identity = DMatrix::<f64>::identity(n, n);
    let product = if c.time_independent_pi() {
        let sys = ShiftedSystem::new(c, s, dt)?;
        matrix_power(solve_columns(&sys, &identity)?, substeps)
    } else {
        let mut p = identity;
        for k in 0..substeps {
            let sys = ShiftedSystem::new(c, s + (k as f64 + 0.5) * dt, dt)?;
            p = solve_columns(&sys, &p)?;
        }
        p
    };
    if let Some(bad) = product.iter().find(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("propagator has non-finite entry {bad}")));
    }
    let matrix = product / grid.cell_volume();
    let min = matrix.min();
    if min < NEGATIVE_FAIL {
        return Err(Error::numerical(format!(
            "propagator entry {min:.3e} is negative; refine the substeps"
        )));
    }
    Ok(Propagator {
        grid,
        s,
        t,
        substeps,
        matrix,
    })
}

/// `h^dim * matrix * g`.
pub fn apply_propagator(p: &Propagator, g: &Field) -> Result<Field> {
    p.grid.ensure_same(g.grid())?;
    let v = nalgebra::DVector::from_column_slice(g.values());
    let out = (&p.matrix * v) * p.grid.cell_volume();
    Field::new(p.grid, out.iter().copied().collect())
}

/// Propagates a single field with the same factors as
/// [`build_propagator`], without forming the matrix.
pub fn propagate(c: &CoefficientSet, g: &Field, s: f64, t: f64, substeps: usize) -> Result<Field> {
    g.grid().ensure_same(c.grid())?;
    let dt = check_span(c, s, t, substeps)?;
    let mut v = g.values().to_vec();
    if c.time_independent_pi() {
        let sys = ShiftedSystem::new(c, s, dt)?;
        for _ in 0..substeps {
            v = sys.solve(&v)?;
        }
    } else {
        for k in 0..substeps {
            let sys = ShiftedSystem::new(c, s + (k as f64 + 0.5) * dt, dt)?;
            v = sys.solve(&v)?;
        }
    }
    Field::new(*g.grid(), v)
}

/// Central `y`-gradient of every row of the kernel.
pub fn kernel_y_gradient(p: &Propagator) -> Vec<VectorField> {
    (0..p.grid.len()).map(|i| gradient(&p.row_field(i))).collect()
}

/// Images `|k|_inf <= 3` of the whole-space heat kernel with diffusivity `a`.
pub fn periodized_heat_kernel(x: &[f64], y: &[f64], tau: f64, a: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::precondition(format!("tau must be positive, got {tau}")));
    }
    if !(a > 0.0) {
        return Err(Error::precondition(format!("diffusivity must be positive, got {a}")));
    }
    let dim = x.len();
    if y.len() != dim || !(1..=2).contains(&dim) {
        return Err(Error::precondition("points must share dimension 1 or 2"));
    }
    let norm = (4.0 * std::f64::consts::PI * a * tau).powf(-(dim as f64) / 2.0);
    let image = |k: [i32; 2]| -> f64 {
        let r2: f64 = (0..dim)
            .map(|ax| {
                let d = x[ax] - y[ax] - k[ax] as f64;
                d * d
            })
            .sum();
        (-r2 / (4.0 * a * tau)).exp()
    };
    let mut sum = 0.0;
    for k1 in -3..=3 {
        if dim == 1 {
            sum += image([k1, 0]);
        } else {
            for k2 in -3..=3 {
                sum += image([k1, k2]);
            }
        }
    }
    Ok(norm * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{build_coefficients, ProblemSpec};
    use crate::grid::{integrate, sup_norm};
    use std::f64::consts::PI;

    fn coeffs(dim: usize, n: usize, d: &str, pi: &str, phi: &str) -> CoefficientSet {
        build_coefficients(&ProblemSpec::from_strs(dim, n, d, pi, phi, "1").unwrap()).unwrap()
    }

    #[test]
    fn heat_diagonal_matches_gaussian() {
        let c = coeffs(1, 64, "1", "1", "0");
        let p = build_propagator(&c, 0.0, 0.01, 100).unwrap();
        let want = periodized_heat_kernel(&[0.0], &[0.0], 0.01, 1.0).unwrap();
        let images = 1.0 + 2.0 * (-25.0f64).exp();
        assert!((want - (0.04 * PI).powf(-0.5) * images).abs() < 1e-12);
        for i in [0, 17, 63] {
            let d = p.matrix()[(i, i)];
            assert!((d - 2.8209).abs() <= 0.02 * 2.8209, "{d}");
        }
    }

    #[test]
    fn row_mass_is_one_without_potential() {
        let c = coeffs(1, 32, "2 + cos(2*pi*x1)", "1.5 + 0.5*sin(2*pi*x1)", "0");
        let p = build_propagator(&c, 0.0, 0.05, 20).unwrap();
        for i in 0..32 {
            assert!((p.row_mass(i) - 1.0).abs() <= 1e-8);
        }
        let out = apply_propagator(&p, &Field::constant(*c.grid(), 2.5)).unwrap();
        assert!(out.values().iter().all(|v| (v - 2.5).abs() <= 1e-8));
    }

    #[test]
    fn near_identity_for_tiny_step() {
        let c = coeffs(1, 32, "1", "1", "0");
        let p = build_propagator(&c, 0.0, 1e-8, 1).unwrap();
        let g = Field::from_fn(*c.grid(), |x| 1.0 + (2.0 * PI * x[0]).sin()).unwrap();
        let out = apply_propagator(&p, &g).unwrap();
        for (a, b) in out.values().iter().zip(g.values()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn fourier_mode_decays() {
        let c = coeffs(1, 128, "1", "1", "0");
        let tau = 0.01;
        let p = build_propagator(&c, 0.0, tau, 4000).unwrap();
        let g = Field::from_fn(*c.grid(), |x| (2.0 * PI * x[0]).cos()).unwrap();
        let out = apply_propagator(&p, &g).unwrap();
        let decay = (-4.0 * PI * PI * tau).exp();
        for (o, v) in out.values().iter().zip(g.values()) {
            assert!((o - decay * v).abs() <= 1e-4);
        }
        let sparse = propagate(&c, &g, 0.0, tau, 4000).unwrap();
        for (a, b) in sparse.values().iter().zip(out.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn positivity_and_long_time_flattening() {
        let c = coeffs(1, 64, "2 + cos(2*pi*x1)", "1", "0");
        let p = build_propagator(&c, 0.0, 0.1, 10).unwrap();
        assert!(p.min_entry() > 0.0);
        let g = Field::from_fn(*c.grid(), |x| if x[0] < 0.3 { 1.0 } else { 0.0 }).unwrap();
        assert!(apply_propagator(&p, &g).unwrap().min() >= -1e-10);

        let heat = coeffs(1, 64, "1", "1", "0");
        let long = build_propagator(&heat, 0.0, 1.0, 200).unwrap();
        let grads = kernel_y_gradient(&long);
        assert!(grads.iter().all(|g| g.sup_norm() <= 1e-3));
    }

    #[test]
    fn gradient_vanishes_on_diagonal() {
        let c = coeffs(1, 64, "1", "1", "0");
        let p = build_propagator(&c, 0.0, 0.01, 50).unwrap();
        let grads = kernel_y_gradient(&p);
        for (i, g) in grads.iter().enumerate() {
            assert!(g.component(0)[i].abs() <= 1e-8);
        }
    }

    #[test]
    fn gradient_integral_matches_gaussian() {
        // Dominant image: integral of |d/dy G| over R is 2 G(0).
        let tau = 0.01;
        let want = 2.0 * (4.0 * PI * tau).powf(-0.5);
        let c = coeffs(1, 128, "1", "1", "0");
        let p = build_propagator(&c, 0.0, tau, 400).unwrap();
        let g = &kernel_y_gradient(&p)[40];
        let got = integrate(&g.magnitude());
        assert!((got - want).abs() <= 0.02 * want, "{got} vs {want}");
    }

    #[test]
    fn periodized_kernel_examples() {
        let tau = 0.0025;
        let peak = periodized_heat_kernel(&[0.3], &[0.3], tau, 1.0).unwrap();
        assert!((peak - (0.01 * PI).powf(-0.5)).abs() <= 1e-12);
        assert!((peak - 5.6419).abs() < 1e-4);

        let far = periodized_heat_kernel(&[0.5], &[0.0], tau, 1.0).unwrap();
        let want = 2.0 * (0.01 * PI).powf(-0.5) * (-25.0f64).exp();
        assert!((far - want).abs() <= 1e-15);

        let g = TorusGrid::new(1, 256).unwrap();
        let row = Field::from_fn(g, |y| periodized_heat_kernel(&[0.1], &y[..1], tau, 1.0).unwrap()).unwrap();
        assert!((integrate(&row) - 1.0).abs() <= 1e-10);

        let g2 = TorusGrid::new(2, 64).unwrap();
        let row = Field::from_fn(g2, |y| periodized_heat_kernel(&[0.2, 0.7], &y[..], 0.01, 0.5).unwrap()).unwrap();
        assert!((integrate(&row) - 1.0).abs() <= 1e-10);

        assert!(periodized_heat_kernel(&[0.0], &[0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn semigroup_property() {
        let c = coeffs(1, 32, "2 + cos(2*pi*x1)", "1", "0.2*sin(2*pi*x1)");
        let a = build_propagator(&c, 0.0, 0.02, 8).unwrap();
        let b = build_propagator(&c, 0.02, 0.05, 12).unwrap();
        let whole = build_propagator(&c, 0.0, 0.05, 20).unwrap();
        let composed = b.compose(&a).unwrap();
        let diff = (composed.matrix() - whole.matrix()).abs().max();
        assert!(diff <= 1e-8, "{diff}");
    }

    #[test]
    fn time_dependent_pi_needs_short_factors() {
        let mut spec = ProblemSpec::from_strs(1, 16, "1", "1 + 0.5*sin(2*pi*t)", "0", "1").unwrap();
        spec.t_final = 1.0;
        let c = build_coefficients(&spec).unwrap();
        assert!(build_propagator(&c, 0.0, 0.1, 5).is_err());
        let p = build_propagator(&c, 0.0, 0.1, 10).unwrap();
        for i in 0..16 {
            assert!((p.row_mass(i) - 1.0).abs() <= 1e-8);
        }
        let g = Field::from_fn(*c.grid(), |x| 1.0 + (2.0 * PI * x[0]).cos()).unwrap();
        let dense = apply_propagator(&p, &g).unwrap();
        let sparse = propagate(&c, &g, 0.0, 0.1, 10).unwrap();
        for (a, b) in dense.values().iter().zip(sparse.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn first_order_in_time() {
        let c = coeffs(1, 64, "2 + cos(2*pi*x1)", "1", "0.3*cos(2*pi*x1)");
        let g = Field::from_fn(*c.grid(), |x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin()).unwrap();
        let run = |m| propagate(&c, &g, 0.0, 0.05, m).unwrap();
        let (a, b, cc) = (run(50), run(100), run(200));
        let d1 = sup_norm(&a.zip_map(&b, |x, y| x - y));
        let d2 = sup_norm(&b.zip_map(&cc, |x, y| x - y));
        let ratio = d2 / d1;
        assert!((0.4..=0.6).contains(&ratio), "{ratio}");
    }

    #[test]
    fn agrees_with_matrix_exponential() {
        let c = coeffs(1, 32, "2 + cos(2*pi*x1)", "1", "0.3*sin(2*pi*x1)");
        let l = crate::kernel::operator::linear_operator(&c, 0.0).unwrap().to_dense();
        let tau = 0.02;
        let exact = (l * tau).exp() / c.grid().cell_volume();
        let coarse = build_propagator(&c, 0.0, tau, 256).unwrap();
        let fine = build_propagator(&c, 0.0, tau, 512).unwrap();
        let e1 = (coarse.matrix() - &exact).abs().max();
        let e2 = (fine.matrix() - &exact).abs().max();
        assert!(e2 < e1 && e2 / e1 > 0.4 && e2 / e1 < 0.6, "{e1} {e2}");
    }
}
