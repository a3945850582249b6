//! Finite-volume solver for the divergence form
//! `f_t = div((f/pi) grad(D log f + phi))`.
//!
//! Face fluxes are `(f_face/pi_face) (mu_j - mu_i)/h` with `mu = D log f + phi`.
//! Any nonnegative face value of `f` conserves mass exactly, dissipates the
//! discrete free energy and leaves `f_eq` fixed. The logarithmic mean gives
//! second-order accuracy (for constant `D` the flux is exactly
//! `D (f_j - f_i)/h`); the upwind value is first order.

use crate::coeff::{build_coefficients, validate_assumptions, CoefficientSet, ProblemSpec};
use crate::equilibrium::{
    apriori_bounds, chemical_potential, dissipation_rate, equilibrium_state, free_energy,
    AprioriBounds, EquilibriumState,
};
use crate::error::{Error, Result};
use crate::grid::{integrate, sup_norm, Field, Trajectory};
use crate::kernel::ShiftedSystem;
use crate::linalg::Csr;

/// Smallest step the explicit stepper will halve down to.
pub const DT_MIN: f64 = 1e-12;
const MAX_DAMPING: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stepper {
    Explicit,
    Implicit,
}

impl std::str::FromStr for Stepper {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Stepper::Explicit),
            "implicit" => Ok(Stepper::Implicit),
            other => Err(Error::precondition(format!(
                "stepper must be explicit or implicit, got {other:?}"
            ))),
        }
    }
}

/// Face value of `f` in the mobility.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mobility {
    /// `(f_j - f_i) / (log f_j - log f_i)`.
    LogMean,
    /// The cell upstream of the potential jump.
    Upwind,
}

impl std::str::FromStr for Mobility {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logmean" => Ok(Mobility::LogMean),
            "upwind" => Ok(Mobility::Upwind),
            other => Err(Error::precondition(format!(
                "mobility must be logmean or upwind, got {other:?}"
            ))),
        }
    }
}

impl Mobility {
    /// Face value and its partial derivatives in `a` and `b`.
    fn face(self, a: f64, b: f64, dmu: f64) -> (f64, f64, f64) {
        match self {
            Mobility::Upwind => {
                if dmu > 0.0 {
                    (b, 0.0, 1.0)
                } else {
                    (a, 1.0, 0.0)
                }
            }
            Mobility::LogMean => {
                let m = 0.5 * (a + b);
                let x = (b - a) / (a + b);
                if x.abs() < 1e-3 {
                    let d = b - a;
                    (m * (1.0 - x * x / 3.0), 0.5 + d / (6.0 * m), 0.5 - d / (6.0 * m))
                } else {
                    let l = b.ln() - a.ln();
                    let lm = (b - a) / l;
                    (lm, (lm / a - 1.0) / l, (1.0 - lm / b) / l)
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FVConfig {
    pub dt_safety: f64,
    pub stepper: Stepper,
    pub mobility: Mobility,
    pub max_newton_iter: usize,
    pub newton_tol: f64,
    /// Steps between diagnostic rows.
    pub diag_every: usize,
    /// Fixed step; `None` uses [`stable_dt`].
    pub dt: Option<f64>,
    /// Steps between stored frames (the final frame is always stored).
    pub snapshot_every: usize,
}

impl Default for FVConfig {
    fn default() -> Self {
        Self {
            dt_safety: 0.9,
            stepper: Stepper::Implicit,
            mobility: Mobility::LogMean,
            max_newton_iter: 50,
            newton_tol: 1e-12,
            diag_every: 1,
            dt: None,
            snapshot_every: 1,
        }
    }
}

impl FVConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(Error::precondition(format!(
                "dt_safety must lie in (0, 1], got {}",
                self.dt_safety
            )));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::precondition("newton_tol must be positive"));
        }
        if self.max_newton_iter == 0 || self.diag_every == 0 || self.snapshot_every == 0 {
            return Err(Error::precondition(
                "max_newton_iter, diag_every and snapshot_every must be at least 1",
            ));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::precondition(format!("dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub free_energy: f64,
    pub dissipation_rate: f64,
    /// Centred difference of the free energy across neighbouring rows.
    pub df_dt_numeric: f64,
    pub min_f: f64,
    pub max_f: f64,
    pub linf_to_feq: f64,
}

impl DiagnosticsRow {
    pub const HEADER: &'static str =
        "t,mass,free_energy,dissipation_rate,dF_dt_numeric,min_f,max_f,linf_to_feq";
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub rows: Vec<DiagnosticsRow>,
    pub steps: usize,
    pub dt: f64,
    /// Explicit steps retried with a halved step.
    pub halvings: usize,
    pub max_newton_iterations: usize,
    /// Implicit steps whose free energy rose by more than `1e-12`.
    pub energy_increases: usize,
    pub warnings: Vec<String>,
    pub equilibrium: EquilibriumState,
    pub bounds: AprioriBounds,
}

/// Cell residual `R(f)_i = sum_faces (J_{i+1/2} - J_{i-1/2}) / h`.
fn flux_divergence(f: &[f64], mu: &[f64], pi: &[f64], c: &CoefficientSet, mob: Mobility) -> Vec<f64> {
    let g = c.grid();
    let h = g.h();
    let mut r = vec![0.0; f.len()];
    for a in 0..g.dim() {
        for i in 0..f.len() {
            let j = g.shift(i, a, 1);
            let dmu = mu[j] - mu[i];
            let (face, _, _) = mob.face(f[i], f[j], dmu);
            let flux = face * dmu / (0.5 * (pi[i] + pi[j]) * h * h);
            r[i] += flux;
            r[j] -= flux;
        }
    }
    r
}

/// Jacobian of [`flux_divergence`] (an upwind choice is held fixed).
fn flux_jacobian(f: &[f64], mu: &[f64], pi: &[f64], c: &CoefficientSet, mob: Mobility) -> Csr {
    let g = c.grid();
    let h = g.h();
    let d = c.d().values();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(1 + 2 * g.dim()); f.len()];
    for a in 0..g.dim() {
        for i in 0..f.len() {
            let j = g.shift(i, a, 1);
            let dmu = mu[j] - mu[i];
            let scale = 1.0 / (0.5 * (pi[i] + pi[j]) * h * h);
            let (face, da, db) = mob.face(f[i], f[j], dmu);
            let di = (da * dmu - face * d[i] / f[i]) * scale;
            let dj = (db * dmu + face * d[j] / f[j]) * scale;
            rows[i].push((i, di));
            rows[i].push((j, dj));
            rows[j].push((i, -di));
            rows[j].push((j, -dj));
        }
    }
    Csr::from_rows(rows)
}

fn residual_at(f: &[f64], c: &CoefficientSet, pi: &[f64], mob: Mobility) -> Result<(Vec<f64>, Vec<f64>)> {
    let field = Field::new(*c.grid(), f.to_vec())?;
    let mu = chemical_potential(&field, c)?;
    let r = flux_divergence(f, mu.values(), pi, c, mob);
    Ok((r, mu.into_values()))
}

/// One step from `t` to `t + dt`. Explicit mode evaluates the fluxes at
/// `f`; implicit mode solves `g - f - dt R(g) = 0` by damped Newton with
/// `pi` at `t + dt`. Returns the new field and the Newton iteration count.
fn step_inner(f: &Field, c: &CoefficientSet, t: f64, dt: f64, cfg: &FVConfig) -> Result<(Field, usize)> {
    f.ensure_positive()?;
    match cfg.stepper {
        Stepper::Explicit => {
            let pi = c.pi(t)?;
            let (r, _) = residual_at(f.values(), c, pi.values(), cfg.mobility)?;
            let out: Vec<f64> = f.values().iter().zip(&r).map(|(x, r)| x + dt * r).collect();
            Ok((Field::new(*f.grid(), out)?, 0))
        }
        Stepper::Implicit => {
            let pi = c.pi(t + dt)?;
            let pv = pi.values();
            let f_old = f.values();
            let scale = sup_norm(f).max(1.0);
            let mut g = f_old.to_vec();
            let (r, mut mu) = residual_at(&g, c, pv, cfg.mobility)?;
            let mut res: Vec<f64> = (0..g.len()).map(|i| g[i] - f_old[i] - dt * r[i]).collect();
            let mut res_norm = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for it in 1..=cfg.max_newton_iter {
                if res_norm <= cfg.newton_tol * scale {
                    return Ok((Field::new(*f.grid(), g)?, it - 1));
                }
                let jac = flux_jacobian(&g, &mu, pv, c, cfg.mobility);
                let sys = ShiftedSystem::from_operator(c.grid(), &jac, dt)?;
                let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
                let delta = sys.solve(&rhs)?;
                let mut alpha = 1.0;
                let mut accepted = false;
                for _ in 0..MAX_DAMPING {
                    let trial: Vec<f64> = g.iter().zip(&delta).map(|(x, d)| x + alpha * d).collect();
                    if trial.iter().all(|v| *v > 0.0) {
                        let (tr, tmu) = residual_at(&trial, c, pv, cfg.mobility)?;
                        let tres: Vec<f64> = (0..g.len()).map(|i| trial[i] - f_old[i] - dt * tr[i]).collect();
                        let tnorm = tres.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                        if tnorm < res_norm || alpha == 1.0 && tnorm <= cfg.newton_tol * scale {
                            g = trial;
                            mu = tmu;
                            res = tres;
                            res_norm = tnorm;
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    return Err(Error::numerical(format!(
                        "Newton line search stalled at t = {t} (residual {res_norm:e})"
                    )));
                }
            }
            if res_norm <= cfg.newton_tol * scale {
                return Ok((Field::new(*f.grid(), g)?, cfg.max_newton_iter));
            }
            Err(Error::numerical(format!(
                "Newton did not converge in {} iterations at t = {t} (residual {res_norm:e})",
                cfg.max_newton_iter
            )))
        }
    }
}

/// One finite-volume step of length `dt` starting at time `t`.
pub fn fv_step(f: &Field, c: &CoefficientSet, t: f64, dt: f64, cfg: &FVConfig) -> Result<Field> {
    f.grid().ensure_same(c.grid())?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::precondition(format!("dt must be positive, got {dt}")));
    }
    step_inner(f, c, t, dt, cfg).map(|(g, _)| g)
}

/// Explicit: `safety h^2 / (2 dim max(D/pi) + h max|grad phi/pi|)`.
/// Implicit: `safety h`.
pub fn stable_dt(c: &CoefficientSet, t: f64, cfg: &FVConfig) -> Result<f64> {
    let g = c.grid();
    let h = g.h();
    match cfg.stepper {
        Stepper::Implicit => Ok(cfg.dt_safety * h),
        Stepper::Explicit => {
            let diff = c.mobility(t)?.max();
            let drift = c.drift(t)?.sup_norm();
            Ok(cfg.dt_safety * h * h / (2.0 * g.dim() as f64 * diff + h * drift))
        }
    }
}

/// Runs the problem to its `T_final`.
pub fn simulate(spec: &ProblemSpec, cfg: &FVConfig) -> Result<(Trajectory, SimulationReport)> {
    let c = build_coefficients(spec)?;
    let f0 = spec.initial_field()?;
    validate_assumptions(&c, &f0, spec).into_result()?;
    simulate_with(&c, &f0, spec.t_final, cfg)
}

/// Marches [`fv_step`] from `f0` to `t_final` with uniform steps (halved
/// locally in explicit mode when positivity would be lost).
pub fn simulate_with(
    c: &CoefficientSet,
    f0: &Field,
    t_final: f64,
    cfg: &FVConfig,
) -> Result<(Trajectory, SimulationReport)> {
    cfg.validate()?;
    f0.grid().ensure_same(c.grid())?;
    f0.ensure_positive()?;
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::precondition(format!("T_final must be positive, got {t_final}")));
    }
    let target = match cfg.dt {
        Some(dt) => dt,
        None => stable_dt(c, 0.0, cfg)?,
    };
    let steps = (t_final / target).ceil().max(1.0) as usize;
    let dt = t_final / steps as f64;
    let mass0 = integrate(f0);
    let eq = equilibrium_state(c, mass0, 1e-14)?;
    let bounds = apriori_bounds(f0, &eq, c)?;
    let h = c.grid().h();
    let slack = 1e-6 + h * h;

    let mut traj = Trajectory::new(*c.grid());
    traj.push(0.0, f0.clone())?;
    let mut rows = vec![diagnostics(0, 0.0, f0, c, &eq)?];
    let mut warnings = Vec::new();
    let mut f = f0.clone();
    let mut energy = rows[0].free_energy;
    let (mut halvings, mut newton_max, mut energy_increases) = (0, 0, 0);
    for k in 1..=steps {
        let t0 = (k - 1) as f64 * dt;
        let t1 = if k == steps { t_final } else { k as f64 * dt };
        let next = match cfg.stepper {
            Stepper::Implicit => {
                let (g, its) = step_inner(&f, c, t0, t1 - t0, cfg)?;
                newton_max = newton_max.max(its);
                g
            }
            Stepper::Explicit => explicit_span(&f, c, t0, t1, cfg, &mut halvings)?,
        };
        f = next;
        let fe = free_energy(&f, c)?;
        if cfg.stepper == Stepper::Implicit && fe > energy + 1e-12 {
            energy_increases += 1;
        }
        energy = fe;
        if let Some(w) = envelope_violation(&f, &bounds, slack, t1) {
            if warnings.len() < 100 {
                warnings.push(w);
            }
        }
        if k % cfg.diag_every == 0 || k == steps {
            rows.push(diagnostics(k, t1, &f, c, &eq)?);
        }
        if k % cfg.snapshot_every == 0 || k == steps {
            traj.push(t1, f.clone())?;
        }
    }
    fill_energy_slopes(&mut rows);
    Ok((
        traj,
        SimulationReport {
            rows,
            steps,
            dt,
            halvings,
            max_newton_iterations: newton_max,
            energy_increases,
            warnings,
            equilibrium: eq,
            bounds,
        },
    ))
}

fn explicit_span(f: &Field, c: &CoefficientSet, t0: f64, t1: f64, cfg: &FVConfig, halvings: &mut usize) -> Result<Field> {
    let mut t = t0;
    let mut cur = f.clone();
    let mut dt = t1 - t0;
    while t < t1 {
        let span = dt.min(t1 - t);
        let (g, _) = step_inner(&cur, c, t, span, cfg)?;
        if g.min() > 0.0 {
            cur = g;
            t += span;
        } else {
            dt *= 0.5;
            *halvings += 1;
            if dt < DT_MIN {
                return Err(Error::numerical(format!(
                    "explicit step fell below {DT_MIN:e} at t = {t} to keep positivity"
                )));
            }
        }
    }
    Ok(cur)
}

fn envelope_violation(f: &Field, b: &AprioriBounds, slack: f64, t: f64) -> Option<String> {
    let (lo, hi) = (b.lower_env.values(), b.upper_env.values());
    f.values().iter().enumerate().find_map(|(i, &v)| {
        if v < lo[i] - slack {
            Some(format!("t = {t}: f = {v} below lower envelope {} at cell {i}", lo[i]))
        } else if v > hi[i] + slack {
            Some(format!("t = {t}: f = {v} above upper envelope {} at cell {i}", hi[i]))
        } else {
            None
        }
    })
}

fn diagnostics(step: usize, t: f64, f: &Field, c: &CoefficientSet, eq: &EquilibriumState) -> Result<DiagnosticsRow> {
    Ok(DiagnosticsRow {
        step,
        t,
        mass: integrate(f),
        free_energy: free_energy(f, c)?,
        dissipation_rate: dissipation_rate(f, c, t)?,
        df_dt_numeric: 0.0,
        min_f: f.min(),
        max_f: f.max(),
        linf_to_feq: sup_norm(&f.zip_map(&eq.f_eq, |a, b| a - b)),
    })
}

fn fill_energy_slopes(rows: &mut [DiagnosticsRow]) {
    let n = rows.len();
    if n < 2 {
        return;
    }
    let slope = |a: &DiagnosticsRow, b: &DiagnosticsRow| (b.free_energy - a.free_energy) / (b.t - a.t);
    let slopes: Vec<f64> = (0..n)
        .map(|k| match k {
            0 => slope(&rows[0], &rows[1]),
            k if k == n - 1 => slope(&rows[n - 2], &rows[n - 1]),
            k => slope(&rows[k - 1], &rows[k + 1]),
        })
        .collect();
    for (row, s) in rows.iter_mut().zip(slopes) {
        row.df_dt_numeric = s;
    }
}
