//! Empirical checks of the kernel estimates: Gaussian envelopes, the
//! time-integrated derivative bounds and the row-mass comparison.

use nalgebra::DMatrix;

use super::operator::{linear_operator, ShiftedSystem};
use super::propagator::{build_propagator, Propagator};
use crate::coeff::{build_coefficients, CoefficientSet, ProblemSpec};
use crate::error::{Error, Result};
use crate::grid::{gradient, Field, TorusGrid};

/// Samples below this fraction of the largest one are left out of the fit.
pub const DEFAULT_FIT_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFit {
    pub c_fit_big: f64,
    pub c_fit: f64,
    /// Largest `log|sample| - log(bound)`; zero by construction.
    pub max_residual: f64,
    pub deriv_order: (u32, u32),
    pub samples: usize,
}

fn unit_horizon(span: f64) -> Result<()> {
    if span > 1.0 {
        Err(Error::HorizonExceeded { span })
    } else {
        Ok(())
    }
}

/// Propagators over `tau_min * 2^k`, `k < levels`, all starting at `s`.
/// With time-independent `pi` each level is the square of the previous one.
pub fn time_ladder(
    c: &CoefficientSet,
    s: f64,
    tau_min: f64,
    levels: usize,
    substeps: usize,
) -> Result<Vec<Propagator>> {
    let top = tau_min * (1u64 << levels.saturating_sub(1)) as f64;
    unit_horizon(top)?;
    let mut out: Vec<Propagator> = Vec::with_capacity(levels);
    for k in 0..levels {
        let tau = tau_min * (1u64 << k) as f64;
        let p = match out.last() {
            Some(prev) if c.time_independent_pi() => {
                let later = prev.shifted(prev.span());
                later.compose(prev)?
            }
            _ => build_propagator(c, s, s + tau, substeps << k)?,
        };
        out.push(p);
    }
    Ok(out)
}

/// Magnitude of the order-`b` `y`-derivative of one kernel row.
fn row_derivative(grid: TorusGrid, row: &[f64], b: u32) -> Vec<f64> {
    match b {
        0 => row.iter().map(|v| v.abs()).collect(),
        1 => gradient(&Field::from_raw(grid, row.to_vec())).magnitude().into_values(),
        _ => {
            let h2 = grid.h() * grid.h();
            (0..grid.len())
                .map(|i| {
                    let second = |a: usize| {
                        (row[grid.shift(i, a, 1)] - 2.0 * row[i] + row[grid.shift(i, a, -1)]) / h2
                    };
                    if grid.dim() == 1 {
                        second(0).abs()
                    } else {
                        let pp = row[grid.shift(grid.shift(i, 0, 1), 1, 1)];
                        let pm = row[grid.shift(grid.shift(i, 0, 1), 1, -1)];
                        let mp = row[grid.shift(grid.shift(i, 0, -1), 1, 1)];
                        let mm = row[grid.shift(grid.shift(i, 0, -1), 1, -1)];
                        let mixed = (pp - pm - mp + mm) / (4.0 * h2);
                        (second(0).powi(2) + 2.0 * mixed * mixed + second(1).powi(2)).sqrt()
                    }
                })
                .collect()
        }
    }
}

/// Fits `|d_t^a grad_y^b K| <= C tau^{-(d+2a+b)/2} exp(-c r^2 / tau)` over
/// every entry of every propagator in `ladder`.
///
/// `c` comes from a least-squares fit of the log samples against
/// `r^2 / tau`; `C` is then the smallest constant that makes the envelope
/// hold on all samples.
pub fn validate_gaussian_bounds(
    ladder: &[Propagator],
    coeffs: &CoefficientSet,
    orders: (u32, u32),
    floor: f64,
) -> Result<GaussianFit> {
    let (a, b) = orders;
    if 2 * a + b > 2 {
        return Err(Error::precondition(format!(
            "derivative orders (a, b) = ({a}, {b}) need 2a + b <= 2"
        )));
    }
    if ladder.is_empty() {
        return Err(Error::precondition("empty propagator ladder"));
    }
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    for p in ladder {
        unit_horizon(p.span())?;
        let grid = *p.grid();
        coeffs.grid().ensure_same(&grid)?;
        let tau = p.span();
        let m: DMatrix<f64> = if a == 1 {
            linear_operator(coeffs, p.t())?.to_dense() * p.matrix()
        } else {
            p.matrix().clone()
        };
        let mut level = Vec::with_capacity(grid.len() * grid.len());
        for i in 0..grid.len() {
            let row: Vec<f64> = m.row(i).iter().copied().collect();
            let x = grid.point(i);
            for (j, v) in row_derivative(grid, &row, b).into_iter().enumerate() {
                let r = grid.torus_distance(&x, &grid.point(j));
                level.push((r * r / tau, v));
            }
        }
        let vmax = level.iter().fold(0.0f64, |m, &(_, v)| m.max(v));
        let exponent = (grid.dim() as f64 + 2.0 * a as f64 + b as f64) / 2.0;
        for (xi, v) in level {
            if v > 0.0 && v >= floor * vmax {
                xs.push(xi);
                zs.push(v.ln() + exponent * tau.ln());
            }
        }
    }
    let n = xs.len() as f64;
    if n < 2.0 {
        return Err(Error::numerical("too few kernel samples above the fit floor"));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let mz = zs.iter().sum::<f64>() / n;
    let sxz: f64 = xs.iter().zip(&zs).map(|(x, z)| (x - mx) * (z - mz)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let c_fit = -sxz / sxx;
    if !(c_fit.is_finite() && c_fit > 0.0) {
        return Err(Error::numerical(format!("Gaussian fit rate is not positive: {c_fit}")));
    }
    let log_c = xs
        .iter()
        .zip(&zs)
        .map(|(x, z)| z + c_fit * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_residual = xs
        .iter()
        .zip(&zs)
        .map(|(x, z)| z - (log_c - c_fit * x))
        .fold(f64::NEG_INFINITY, f64::max);
    let c_fit_big = log_c.exp();
    if !c_fit_big.is_finite() {
        return Err(Error::numerical("Gaussian fit constant is not finite"));
    }
    Ok(GaussianFit {
        c_fit_big,
        c_fit,
        max_residual,
        deriv_order: orders,
        samples: xs.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassSandwichReport {
    pub lower: f64,
    pub upper: f64,
    pub min_row_mass: f64,
    pub max_row_mass: f64,
    /// Largest amount by which a row mass leaves `[lower, upper]`.
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks `exp(W_inf (t - s)) <= h^d sum_j K_ij <= exp(W_sup (t - s))`.
pub fn validate_mass_sandwich(p: &Propagator, c: &CoefficientSet, tolerance: f64) -> MassSandwichReport {
    let span = p.span();
    let lower = (c.w_inf * span).exp();
    let upper = (c.w_sup * span).exp();
    let masses: Vec<f64> = (0..p.grid().len()).map(|i| p.row_mass(i)).collect();
    let min_row_mass = masses.iter().copied().fold(f64::INFINITY, f64::min);
    let max_row_mass = masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_violation = (lower - min_row_mass).max(max_row_mass - upper).max(0.0);
    MassSandwichReport {
        lower,
        upper,
        min_row_mass,
        max_row_mass,
        max_violation,
        tolerance,
        passed: max_violation <= tolerance,
    }
}

/// Backward-in-`s` sweeps `q <- (I - dt L_h)^{-T} q` on a uniform lattice.
struct BackwardLadder {
    systems: Vec<ShiftedSystem>,
    dt: f64,
}

impl BackwardLadder {
    fn new(c: &CoefficientSet, dt: f64, t_end: f64) -> Result<Self> {
        let intervals = (t_end / dt).round() as usize;
        let systems = if c.time_independent_pi() {
            vec![ShiftedSystem::new(c, 0.0, dt)?]
        } else {
            (0..intervals)
                .map(|k| ShiftedSystem::new(c, (k as f64 + 0.5) * dt, dt))
                .collect::<Result<_>>()?
        };
        Ok(Self { systems, dt })
    }

    /// Moves `q` from lattice time `(k+1) dt` to `k dt`.
    fn step(&self, q: &[f64], k: usize) -> Result<Vec<f64>> {
        let sys = &self.systems[k.min(self.systems.len() - 1)];
        sys.solve_transpose(q)
    }
}

/// `integral over y of |grad_y q|`.
fn gradient_mass(grid: TorusGrid, q: &[f64]) -> f64 {
    let g = gradient(&Field::from_raw(grid, q.to_vec()));
    grid.cell_volume() * g.magnitude().values().iter().sum::<f64>()
}

/// Running integrals `int_{t-k dt}^{t} int |grad_y q| dy ds`, `k = 0..=steps`,
/// for the sweep started from `q` at lattice index `steps`.
fn grad_partials(ladder: &BackwardLadder, grid: TorusGrid, mut q: Vec<f64>, steps: usize) -> Result<Vec<f64>> {
    let mut partial = vec![0.0; steps + 1];
    for k in 1..=steps {
        q = ladder.step(&q, steps - k)?;
        partial[k] = partial[k - 1] + ladder.dt * gradient_mass(grid, &q);
    }
    Ok(partial)
}

fn ratio_or_zero(value: f64, rhs: f64) -> f64 {
    if value == 0.0 {
        0.0
    } else {
        value / rhs
    }
}

fn unit_row(grid: TorusGrid, i: usize) -> Vec<f64> {
    let mut q = vec![0.0; grid.len()];
    q[i] = 1.0 / grid.cell_volume();
    q
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegralSample {
    /// `"grad"`, `"time_grad"` or `"holder"`.
    pub bound: &'static str,
    pub x: [f64; 2],
    /// `|t - t'|` for the first two bounds, `t` for the Hoelder bound.
    pub window: f64,
    /// `|x - x'|` for the Hoelder bound, zero otherwise.
    pub dx: f64,
    pub value: f64,
    /// `value` divided by the right-hand side without its constant.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegralConstants {
    pub n_per_axis: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub samples: Vec<IntegralSample>,
}

#[derive(Clone, Debug)]
pub struct IntegralOptions {
    pub times: Vec<f64>,
    /// Sample points `x` (coordinates in `[0, 1)`).
    pub points: Vec<[f64; 2]>,
    /// Physical offsets `|x - x'|` for the Hoelder bound.
    pub offsets: Vec<f64>,
    pub beta: f64,
    /// Lattice step; `None` means `min(times) / 16`.
    pub dt: Option<f64>,
}

impl IntegralOptions {
    pub fn standard(beta: f64) -> Self {
        Self {
            times: vec![0.01, 0.02, 0.04, 0.08],
            points: vec![[0.0, 0.0], [0.25, 0.0], [0.5, 0.5], [0.75, 0.25]],
            offsets: vec![1.0 / 64.0, 2.0 / 64.0, 4.0 / 64.0, 8.0 / 64.0],
            beta,
            dt: None,
        }
    }
}

fn cell_of(grid: TorusGrid, x: [f64; 2]) -> usize {
    let n = grid.n_per_axis() as f64;
    let idx = |v: f64| ((v.rem_euclid(1.0) * n).round() as usize) % grid.n_per_axis();
    grid.flat_index([idx(x[0]), if grid.dim() == 2 { idx(x[1]) } else { 0 }])
}

/// Evaluates the three time-integrated kernel bounds on one grid and
/// returns the smallest constants consistent with every sample:
///
/// * `int_{t'}^{t} int |grad_y K(x,t;y,s)| dy ds <= C1 |t - t'|^{1/2}`
/// * `int_0^{t'} int int_{t'}^{t} |d_tau grad_y K(x,tau;y,s)| <= C2 |t - t'|^{1/2}`
/// * `int_0^t int |grad_y K(x,t;y,s) - grad_y K(x',t;y,s)| <= C3 t^{(1-beta)/2} |x - x'|^beta`
pub fn integral_constants(c: &CoefficientSet, opts: &IntegralOptions) -> Result<IntegralConstants> {
    let grid = *c.grid();
    let t_star = opts.times.iter().copied().fold(0.0, f64::max);
    let t_min = opts.times.iter().copied().fold(f64::INFINITY, f64::min);
    if !(t_min > 0.0) {
        return Err(Error::precondition("integral bound times must be positive"));
    }
    unit_horizon(t_star)?;
    let dt = opts.dt.unwrap_or(t_min / 16.0);
    let steps = |w: f64| (w / dt).round() as usize;
    let ladder = BackwardLadder::new(c, dt, t_star)?;
    let n_end = steps(t_star);
    let mut samples = Vec::new();

    for &x in &opts.points {
        let i = cell_of(grid, x);
        let xp = grid.point(i);

        // First bound: one sweep back from t = t_star.
        let partial = grad_partials(&ladder, grid, unit_row(grid, i), n_end)?;
        for &w in &opts.times {
            let value = partial[steps(w)];
            samples.push(IntegralSample {
                bound: "grad",
                x: xp,
                window: w,
                dx: 0.0,
                value,
                ratio: ratio_or_zero(value, w.sqrt()),
            });
        }

        // Second bound: t' = t_star / 2, windows t - t' = w / 2.
        let n_prime = steps(t_star / 2.0);
        let n_tau = steps(t_star / 2.0);
        let mut by_tau = vec![0.0; n_tau + 1];
        for j in 1..=n_tau {
            let tau_idx = n_prime + j;
            let l = linear_operator(c, tau_idx as f64 * dt)?;
            let mut q = l.transpose().matvec(&unit_row(grid, i));
            let mut inner = 0.0;
            for k in 1..=tau_idx {
                q = ladder.step(&q, tau_idx - k)?;
                if tau_idx - k < n_prime {
                    inner += dt * gradient_mass(grid, &q);
                }
            }
            by_tau[j] = by_tau[j - 1] + dt * inner;
        }
        for &w in &opts.times {
            let window = w / 2.0;
            let value = by_tau[steps(window)];
            samples.push(IntegralSample {
                bound: "time_grad",
                x: xp,
                window,
                dx: 0.0,
                value,
                ratio: ratio_or_zero(value, window.sqrt()),
            });
        }

        // Third bound: the row difference obeys the same backward sweep.
        for &off in &opts.offsets {
            let cells = (off * grid.n_per_axis() as f64).round() as isize;
            let ip = grid.shift(i, 0, cells);
            let dx = grid.torus_distance(&xp, &grid.point(ip));
            let diff: Vec<f64> = unit_row(grid, i)
                .iter()
                .zip(unit_row(grid, ip))
                .map(|(a, b)| a - b)
                .collect();
            let partial = grad_partials(&ladder, grid, diff.clone(), n_end)?;
            for &t in &opts.times {
                // A sweep back from t_star covers [0, t] only when pi is
                // static; otherwise restart from t.
                let value = if c.time_independent_pi() || steps(t) == n_end {
                    partial[steps(t)]
                } else {
                    grad_partials(&ladder, grid, diff.clone(), steps(t))?[steps(t)]
                };
                let rhs = t.powf((1.0 - opts.beta) / 2.0) * dx.powf(opts.beta);
                samples.push(IntegralSample {
                    bound: "holder",
                    x: xp,
                    window: t,
                    dx,
                    value,
                    ratio: ratio_or_zero(value, rhs),
                });
            }
        }
    }
    let best = |name: &str| {
        samples
            .iter()
            .filter(|s| s.bound == name)
            .map(|s| s.ratio)
            .fold(0.0, f64::max)
    };
    Ok(IntegralConstants {
        n_per_axis: grid.n_per_axis(),
        c1: best("grad"),
        c2: best("time_grad"),
        c3: best("holder"),
        samples,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegralBoundsReport {
    pub coarse: IntegralConstants,
    pub fine: IntegralConstants,
    /// `max/min` of each constant across the two grids.
    pub drift: [f64; 3],
    pub stable: bool,
}

/// Fits the three integral constants on the problem grid and on one
/// refinement, flagging drift of a factor 2 or more.
pub fn validate_integral_bounds(spec: &ProblemSpec, opts: &IntegralOptions) -> Result<IntegralBoundsReport> {
    let coarse_c = build_coefficients(spec)?;
    let mut fine_spec = spec.clone();
    fine_spec.n_per_axis *= 2;
    let fine_c = build_coefficients(&fine_spec)?;
    let coarse = integral_constants(&coarse_c, opts)?;
    let fine = integral_constants(&fine_c, opts)?;
    let ratio = |a: f64, b: f64| if a.min(b) > 0.0 { a.max(b) / a.min(b) } else { f64::INFINITY };
    let drift = [
        ratio(coarse.c1, fine.c1),
        ratio(coarse.c2, fine.c2),
        ratio(coarse.c3, fine.c3),
    ];
    Ok(IntegralBoundsReport {
        stable: drift.iter().all(|d| *d < 2.0),
        coarse,
        fine,
        drift,
    })
}

/// `C1` of the first integral bound on the problem grid; this is the
/// constant fed into the fixed-point time bound.
pub fn fitted_c_gauss(c: &CoefficientSet) -> Result<f64> {
    let opts = IntegralOptions::standard(c.beta_declared);
    let grid = *c.grid();
    let t_star = opts.times.iter().copied().fold(0.0, f64::max);
    let dt = opts.times.iter().copied().fold(f64::INFINITY, f64::min) / 16.0;
    let steps = |w: f64| (w / dt).round() as usize;
    let ladder = BackwardLadder::new(c, dt, t_star)?;
    let mut best = 0.0f64;
    for &x in &opts.points {
        let partial = grad_partials(&ladder, grid, unit_row(grid, cell_of(grid, x)), steps(t_star))?;
        for &w in &opts.times {
            best = best.max(partial[steps(w)] / w.sqrt());
        }
    }
    Ok(best)
}
