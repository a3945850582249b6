//! Browser bindings for three one-dimensional operations: the equilibrium
//! profile, a finite-volume run, and the fixed-point time bound.
//!
//! The plain functions are what the wrappers call; they also run natively.

use fptorus::equilibrium::{equilibrium_state, free_energy};
use fptorus::fvsolver::{simulate_with, stable_dt, FVConfig};
use fptorus::grid::{integrate, sup_norm};
use fptorus::kernel::fitted_c_gauss;
use fptorus::picard::time_bound;
use fptorus::{build_coefficients, validate_assumptions, CoefficientSet, Field, ProblemSpec};
use wasm_bindgen::prelude::*;

/// Largest grid the page accepts.
pub const MAX_N: usize = 512;

fn problem(d: &str, pi: &str, phi: &str, f0: &str, n: usize) -> Result<(CoefficientSet, Field), String> {
    if !(4..=MAX_N).contains(&n) {
        return Err(format!("n must lie in 4..={MAX_N}, got {n}"));
    }
    let spec = ProblemSpec::from_strs(1, n, d, pi, phi, f0).map_err(|e| e.to_string())?;
    let c = build_coefficients(&spec).map_err(|e| e.to_string())?;
    let f0 = spec.initial_field().map_err(|e| e.to_string())?;
    validate_assumptions(&c, &f0, &spec).into_result().map_err(|e| e.to_string())?;
    Ok((c, f0))
}

fn points(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub c_eq: f64,
    pub free_energy: f64,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

/// `f_eq = exp(-(phi - C_eq)/D)` with total mass `mass`.
pub fn equilibrium_profile(d: &str, phi: &str, n: usize, mass: f64) -> Result<Profile, String> {
    let (c, _) = problem(d, "1", phi, "1", n)?;
    let eq = equilibrium_state(&c, mass, 1e-13).map_err(|e| e.to_string())?;
    Ok(Profile {
        c_eq: eq.c_eq,
        free_energy: free_energy(&eq.f_eq, &c).map_err(|e| e.to_string())?,
        x: points(n),
        values: eq.f_eq.into_values(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub n: usize,
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    /// Frames back to back, `n` values each.
    pub frames: Vec<f64>,
    pub diag_t: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub equilibrium: Vec<f64>,
}

/// Implicit finite-volume run to `t_final`, keeping about `frames` frames.
pub fn run_simulation(
    d: &str,
    pi: &str,
    phi: &str,
    f0: &str,
    n: usize,
    t_final: f64,
    frames: usize,
) -> Result<Run, String> {
    let (c, f0) = problem(d, pi, phi, f0, n)?;
    if !(t_final > 0.0 && t_final <= 100.0) {
        return Err(format!("T must lie in (0, 100], got {t_final}"));
    }
    let mut cfg = FVConfig::default();
    let dt = stable_dt(&c, 0.0, &cfg).map_err(|e| e.to_string())?.min(t_final / 20.0);
    let steps = (t_final / dt).ceil() as usize;
    let every = (steps / frames.max(1)).max(1);
    cfg.dt = Some(dt);
    cfg.snapshot_every = every;
    cfg.diag_every = every;
    let (traj, report) = simulate_with(&c, &f0, t_final, &cfg).map_err(|e| e.to_string())?;
    Ok(Run {
        n,
        x: points(n),
        times: traj.times().to_vec(),
        frames: traj.frames().iter().flat_map(|f| f.values().iter().copied()).collect(),
        diag_t: report.rows.iter().map(|r| r.t).collect(),
        mass: report.rows.iter().map(|r| r.mass).collect(),
        energy: report.rows.iter().map(|r| r.free_energy).collect(),
        equilibrium: report.equilibrium.f_eq.into_values(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bound {
    pub mu: f64,
    pub f0_norm: f64,
    pub c_gauss: f64,
    pub v_norm: f64,
    pub w_inf: f64,
    pub w_sup: f64,
    pub t: f64,
}

/// Local existence time of the problem with `mu = min f0 / 4` and the
/// fitted kernel constant.
pub fn problem_time_bound(d: &str, pi: &str, phi: &str, f0: &str, n: usize) -> Result<Bound, String> {
    let (c, f0) = problem(d, pi, phi, f0, n)?;
    let mu = f0.min() / 4.0;
    let f0_norm = sup_norm(&f0);
    let c_gauss = fitted_c_gauss(&c).map_err(|e| e.to_string())?;
    Ok(Bound {
        mu,
        f0_norm,
        c_gauss,
        v_norm: c.v_norm,
        w_inf: c.w_inf,
        w_sup: c.w_sup,
        t: time_bound(mu, f0_norm, c_gauss, c.v_norm, c.w_inf, c.w_sup),
    })
}

#[wasm_bindgen]
pub struct EquilibriumView(Profile);

#[wasm_bindgen]
impl EquilibriumView {
    #[wasm_bindgen(getter)]
    pub fn c_eq(&self) -> f64 {
        self.0.c_eq
    }

    #[wasm_bindgen(getter)]
    pub fn free_energy(&self) -> f64 {
        self.0.free_energy
    }

    pub fn x(&self) -> Vec<f64> {
        self.0.x.clone()
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.values.clone()
    }
}

#[wasm_bindgen]
pub fn equilibrium(d: &str, phi: &str, n: usize, mass: f64) -> Result<EquilibriumView, JsError> {
    equilibrium_profile(d, phi, n, mass)
        .map(EquilibriumView)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct RunView(Run);

#[wasm_bindgen]
impl RunView {
    #[wasm_bindgen(getter)]
    pub fn n(&self) -> usize {
        self.0.n
    }

    #[wasm_bindgen(getter)]
    pub fn frame_count(&self) -> usize {
        self.0.times.len()
    }

    pub fn x(&self) -> Vec<f64> {
        self.0.x.clone()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.0.times.get(k).copied().unwrap_or(f64::NAN)
    }

    pub fn frame(&self, k: usize) -> Vec<f64> {
        self.0.frames.chunks(self.0.n).nth(k).map(<[f64]>::to_vec).unwrap_or_default()
    }

    pub fn diag_t(&self) -> Vec<f64> {
        self.0.diag_t.clone()
    }

    pub fn mass(&self) -> Vec<f64> {
        self.0.mass.clone()
    }

    pub fn energy(&self) -> Vec<f64> {
        self.0.energy.clone()
    }

    pub fn equilibrium(&self) -> Vec<f64> {
        self.0.equilibrium.clone()
    }
}

#[wasm_bindgen]
pub fn simulate(
    d: &str,
    pi: &str,
    phi: &str,
    f0: &str,
    n: usize,
    t_final: f64,
    frames: usize,
) -> Result<RunView, JsError> {
    run_simulation(d, pi, phi, f0, n, t_final, frames)
        .map(RunView)
        .map_err(|e| JsError::new(&e))
}

/// `[T, mu, |f0|, C, |V|, W_inf, W_sup]`.
#[wasm_bindgen]
pub fn bound(d: &str, pi: &str, phi: &str, f0: &str, n: usize) -> Result<Vec<f64>, JsError> {
    let b = problem_time_bound(d, pi, phi, f0, n).map_err(|e| JsError::new(&e))?;
    Ok(vec![b.t, b.mu, b.f0_norm, b.c_gauss, b.v_norm, b.w_inf, b.w_sup])
}

/// Total mass of `f0` on an `n`-point grid, for the equilibrium panel.
#[wasm_bindgen]
pub fn mass_of(f0: &str, n: usize) -> Result<f64, JsError> {
    let (_, f) = problem("1", "1", "0", f0, n).map_err(|e| JsError::new(&e))?;
    Ok(integrate(&f))
}
