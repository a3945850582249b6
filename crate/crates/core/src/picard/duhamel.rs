//! The Duhamel map on a uniform time lattice.
//!
//! `Psi f` is advanced by `u_j = A_j^{-1} (u_{j-1} + dt S_{j-1/2})`, where
//! `A_j = I - dt L_h(t_{j-1/2})` and `S = div(V g log g)` with `g` the
//! midpoint average of `f`. Unrolled, this is the kernel sum
//! `P(t_N, t_0) f0 - sum_k dt h^d sum_y grad_y K(., t_N; y, t_{k-1}) . V g log g`.

use crate::coeff::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{Field, Placement, TorusGrid, Trajectory, VectorField};
use crate::kernel::{build_propagator, kernel_y_gradient, ShiftedSystem};

/// Uniform lattice `t0 + j dt`, `j = 0..=steps`, with its implicit-Euler
/// factors and drift fields cached.
#[derive(Clone, Debug)]
pub struct Lattice {
    grid: TorusGrid,
    t0: f64,
    dt: f64,
    steps: usize,
    systems: Vec<ShiftedSystem>,
    v: Vec<Vec<Vec<f64>>>,
    v_zero: bool,
}

impl Lattice {
    /// `span` is split into `steps` equal pieces starting at absolute time `t0`.
    pub fn new(c: &CoefficientSet, t0: f64, span: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::precondition("lattice needs at least one step"));
        }
        if !(span > 0.0 && span.is_finite()) {
            return Err(Error::precondition(format!("window length must be positive, got {span}")));
        }
        let dt = span / steps as f64;
        let frozen = c.time_independent_pi();
        let count = if frozen { 1 } else { steps };
        let mut systems = Vec::with_capacity(count);
        let mut v = Vec::with_capacity(count);
        for k in 0..count {
            let tm = t0 + (k as f64 + 0.5) * dt;
            systems.push(ShiftedSystem::new(c, tm, dt)?);
            if !c.v_is_zero() {
                v.push(c.v(tm)?.components().to_vec());
            }
        }
        Ok(Self {
            grid: *c.grid(),
            t0,
            dt,
            steps,
            systems,
            v,
            v_zero: c.v_is_zero(),
        })
    }

    /// Lattice matching the (uniform) times of `f`.
    pub fn matching(c: &CoefficientSet, t0: f64, f: &Trajectory) -> Result<Self> {
        let times = f.times();
        if times.len() < 2 {
            return Err(Error::precondition("trajectory needs at least two frames"));
        }
        let steps = times.len() - 1;
        let span = times[steps];
        let dt = span / steps as f64;
        for (j, &t) in times.iter().enumerate() {
            if (t - j as f64 * dt).abs() > 1e-9 * span {
                return Err(Error::precondition(format!(
                    "trajectory times are not uniform: t[{j}] = {t}, expected {}",
                    j as f64 * dt
                )));
            }
        }
        Self::new(c, t0, span, steps)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn span(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn local_time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn local_times(&self) -> Vec<f64> {
        (0..=self.steps).map(|j| self.local_time(j)).collect()
    }

    /// True when `Psi` ignores its argument (`V = 0`).
    pub fn is_linear(&self) -> bool {
        self.v_zero
    }

    fn system(&self, k: usize) -> &ShiftedSystem {
        &self.systems[k.min(self.systems.len() - 1)]
    }

    /// `div_c(V g log g)` at the midpoint of step `k`.
    fn source(&self, k: usize, g: &[f64]) -> Result<Vec<f64>> {
        let v = &self.v[k.min(self.v.len() - 1)];
        let grid = &self.grid;
        let inv = 0.5 / grid.h();
        let mut flux = vec![0.0; g.len()];
        let mut out = vec![0.0; g.len()];
        for (i, &gi) in g.iter().enumerate() {
            if !(gi > 0.0) {
                return Err(Error::LeftFixedPointSet(format!(
                    "nonpositive value {gi} at cell {i}; log undefined"
                )));
            }
        }
        for (axis, comp) in v.iter().enumerate() {
            for ((fl, &gi), &vi) in flux.iter_mut().zip(g).zip(comp) {
                *fl = vi * gi * gi.ln();
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += (flux[grid.shift(i, axis, 1)] - flux[grid.shift(i, axis, -1)]) * inv;
            }
        }
        Ok(out)
    }

    /// Applies `Psi` to frame values on this lattice.
    pub(crate) fn apply(&self, f: &[Field], f0: &Field) -> Result<Vec<Field>> {
        if f.len() != self.steps + 1 {
            return Err(Error::precondition(format!(
                "expected {} frames, got {}",
                self.steps + 1,
                f.len()
            )));
        }
        let mut out = Vec::with_capacity(self.steps + 1);
        out.push(f0.clone());
        let mut u = f0.values().to_vec();
        let mut g = vec![0.0; u.len()];
        for k in 0..self.steps {
            if !self.v_zero {
                let (a, b) = (f[k].values(), f[k + 1].values());
                for ((gi, x), y) in g.iter_mut().zip(a).zip(b) {
                    *gi = 0.5 * (x + y);
                }
                let s = self.source(k, &g)?;
                for (ui, si) in u.iter_mut().zip(&s) {
                    *ui += self.dt * si;
                }
            }
            u = self.system(k).solve(&u)?;
            if let Some((i, bad)) = u.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFinite { cell: i, value: *bad });
            }
            out.push(Field::from_raw(self.grid, u.clone()));
        }
        Ok(out)
    }

    /// `Psi f` as a trajectory on local times.
    pub fn psi(&self, f: &Trajectory, f0: &Field) -> Result<Trajectory> {
        f.grid().ensure_same(&self.grid)?;
        f0.grid().ensure_same(&self.grid)?;
        let frames = self.apply(f.frames(), f0)?;
        Trajectory::from_frames(self.grid, self.local_times(), frames)
    }
}

/// `Psi f` on the lattice of `f`'s (uniform) times, starting at absolute time 0.
pub fn psi_map(c: &CoefficientSet, f0: &Field, f: &Trajectory) -> Result<Trajectory> {
    Lattice::matching(c, 0.0, f)?.psi(f, f0)
}

/// `Psi f` written with explicit kernels: every frame is
/// `h^d P(t_m, t_0) f0` minus the sum over earlier steps of
/// `dt h^d sum_y grad_y K(x, t_m; y, t_{k-1}) . V g log g`.
/// Dense and quadratic in the step count; meant for small cross-checks.
pub fn psi_map_kernel_form(c: &CoefficientSet, f0: &Field, f: &Trajectory) -> Result<Trajectory> {
    let lattice = Lattice::matching(c, 0.0, f)?;
    let grid = lattice.grid;
    let h_d = grid.cell_volume();
    let dt = lattice.dt;
    let n = grid.len();
    let mid_flux: Vec<VectorField> = (0..lattice.steps)
        .map(|k| {
            let g = f.frames()[k].zip_map(&f.frames()[k + 1], |a, b| 0.5 * (a + b));
            if g.min() <= 0.0 {
                return Err(Error::LeftFixedPointSet(format!("nonpositive midpoint value {}", g.min())));
            }
            Ok(c.v((k as f64 + 0.5) * dt)?.scale(&g.map(|x| x * x.ln())))
        })
        .collect::<Result<_>>()?;
    let mut frames = vec![f0.clone()];
    for m in 1..=lattice.steps {
        let p0 = build_propagator(c, 0.0, m as f64 * dt, m)?;
        let mut vals: Vec<f64> = (0..n)
            .map(|i| h_d * p0.row_field(i).values().iter().zip(f0.values()).map(|(k, y)| k * y).sum::<f64>())
            .collect();
        if !c.v_is_zero() {
            for (k, flux) in mid_flux.iter().enumerate().take(m) {
                let p = build_propagator(c, k as f64 * dt, m as f64 * dt, m - k)?;
                let grads = kernel_y_gradient(&p);
                for (i, gk) in grads.iter().enumerate() {
                    debug_assert_eq!(gk.placement(), Placement::Cell);
                    vals[i] -= dt * h_d * gk.dot(flux).values().iter().sum::<f64>();
                }
            }
        }
        frames.push(Field::new(grid, vals)?);
    }
    Trajectory::from_frames(grid, lattice.local_times(), frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{build_coefficients, ProblemSpec};
    use crate::kernel::propagate;

    fn coeffs(n: usize, d: &str, pi: &str, phi: &str) -> CoefficientSet {
        build_coefficients(&ProblemSpec::from_strs(1, n, d, pi, phi, "1").unwrap()).unwrap()
    }

    fn trial(c: &CoefficientSet, span: f64, steps: usize) -> (Field, Trajectory) {
        let grid = *c.grid();
        let f0 = Field::from_fn(grid, |p| 1.0 + 0.3 * (std::f64::consts::TAU * p[0]).sin()).unwrap();
        let times: Vec<f64> = (0..=steps).map(|j| j as f64 * span / steps as f64).collect();
        let frames = times
            .iter()
            .map(|&t| Field::from_fn(grid, |p| 1.0 + 0.2 * (std::f64::consts::TAU * (p[0] - t)).cos()).unwrap())
            .collect();
        (f0, Trajectory::from_frames(grid, times, frames).unwrap())
    }

    #[test]
    fn recursion_matches_kernel_sum() {
        for pi in ["1", "1.5 + 0.5*sin(2*pi*x1)", "1.5 + 0.3*cos(2*pi*(x1 + t))"] {
            let c = coeffs(32, "2 + cos(2*pi*x1)", pi, "0.5*sin(2*pi*x1)");
            let (f0, f) = trial(&c, 0.04, 8);
            let a = psi_map(&c, &f0, &f).unwrap();
            let b = psi_map_kernel_form(&c, &f0, &f).unwrap();
            let dist = a.sup_distance(&b);
            assert!(dist < 1e-11, "pi = {pi}: {dist}");
        }
    }

    #[test]
    fn heat_case_is_the_propagated_datum() {
        let c = coeffs(64, "1", "1", "0");
        let (f0, f) = trial(&c, 0.01, 16);
        let out = psi_map(&c, &f0, &f).unwrap();
        let direct = propagate(&c, &f0, 0.0, 0.01, 16).unwrap();
        assert_eq!(out.last().unwrap(), &direct);
    }

    #[test]
    fn mass_is_conserved() {
        let c = coeffs(48, "2 + cos(2*pi*x1)", "1.2 + 0.2*sin(2*pi*x1)", "cos(2*pi*x1)");
        let (f0, f) = trial(&c, 0.02, 10);
        let out = psi_map(&c, &f0, &f).unwrap();
        let m0 = crate::grid::integrate(&f0);
        for frame in out.frames() {
            assert!((crate::grid::integrate(frame) - m0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonuniform_times() {
        let c = coeffs(8, "1", "1", "0");
        let g = *c.grid();
        let fr = vec![Field::constant(g, 1.0); 3];
        let f = Trajectory::from_frames(g, vec![0.0, 0.1, 0.3], fr).unwrap();
        assert!(matches!(psi_map(&c, &Field::constant(g, 1.0), &f), Err(Error::Precondition(_))));
    }

    #[test]
    fn nonpositive_argument_is_reported() {
        let c = coeffs(8, "2 + cos(2*pi*x1)", "1", "0");
        let g = *c.grid();
        let mut frames = vec![Field::constant(g, 1.0); 3];
        frames[1] = Field::constant(g, -1.0);
        let f = Trajectory::from_frames(g, vec![0.0, 0.1, 0.2], frames).unwrap();
        assert!(matches!(
            psi_map(&c, &Field::constant(g, 1.0), &f),
            Err(Error::LeftFixedPointSet(_))
        ));
    }
}
