//! March of fixed-point windows of length at most `T'` up to `T_final`.

use crate::coeff::CoefficientSet;
use crate::equilibrium::{apriori_bounds, equilibrium_state};
use crate::error::{Error, Result};
use crate::grid::{integrate, sup_norm, Field, Trajectory};
use crate::kernel::fitted_c_gauss;

use super::duhamel::Lattice;
use super::solve::{iterate, Bounds, PicardOptions};
use super::{time_bound_primed, DEFAULT_SAFETY};

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalOptions {
    /// Per-window iteration settings; refinement is ignored.
    pub picard: PicardOptions,
    /// Defaults to `min f0 / 4`.
    pub mu: Option<f64>,
    /// Defaults to the fitted first integral-bound constant.
    pub c_gauss: Option<f64>,
    pub safety: f64,
    /// Slack on `m <= f <= M`.
    pub bound_tol: f64,
    /// Forces a window count; must not make windows longer than `T'`.
    pub windows: Option<usize>,
    /// Upper limit on stored seam frames (the final one is always kept).
    pub max_frames: usize,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        Self {
            picard: PicardOptions {
                refine: false,
                ..PicardOptions::default()
            },
            mu: None,
            c_gauss: None,
            safety: DEFAULT_SAFETY,
            bound_tol: 1e-4,
            windows: None,
            max_frames: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalPlan {
    pub mu: f64,
    pub m: f64,
    pub big_m: f64,
    pub r_prime: f64,
    pub gamma: f64,
    /// Formula value times the safety factor.
    pub t_prime: f64,
    pub c_gauss: f64,
    pub num_windows: usize,
    pub window_length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSummary {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub iterations: usize,
    pub residual: f64,
    pub min_f: f64,
    pub max_f: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalReport {
    pub windows: Vec<WindowSummary>,
    /// Every window started from the exact bits its predecessor ended on.
    pub seams_bit_identical: bool,
    pub mass_drift: f64,
}

fn tag(k: usize, e: Error) -> Error {
    match e {
        Error::LeftFixedPointSet(msg) => Error::LeftFixedPointSet(format!("window {k}: {msg}")),
        Error::Numerical(msg) => Error::Numerical(format!("window {k}: {msg}")),
        other => other,
    }
}

/// Solves up to `t_final` by concatenating fixed-point windows. Each
/// window lives in `{f >= gamma, |f| <= R'}` and every frame is checked
/// against the a priori bounds `[m, M]`.
pub fn global_solve(
    c: &CoefficientSet,
    f0: &Field,
    t_final: f64,
    opts: &GlobalOptions,
) -> Result<(Trajectory, GlobalPlan, GlobalReport)> {
    f0.grid().ensure_same(c.grid())?;
    f0.ensure_positive()?;
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::precondition(format!("T_final must be positive, got {t_final}")));
    }
    if c.c_d < 1.0 {
        return Err(Error::Assumption {
            assumption: "A4",
            detail: format!("C_D = min D = {} < 1", c.c_d),
        });
    }
    let mass = integrate(f0);
    let eq = equilibrium_state(c, mass, 1e-13)?;
    let ap = apriori_bounds(f0, &eq, c)?;
    let mu = opts.mu.unwrap_or(f0.min() / 4.0);
    let c_gauss = match opts.c_gauss {
        Some(v) => v,
        None => fitted_c_gauss(c)?,
    };
    let r_prime = 1.0 + mu + 2.0 * sup_norm(f0) + 2.0 * ap.big_m;
    let gamma = mu.min(ap.m / 4.0);
    let t_prime = opts.safety * time_bound_primed(mu, ap.m, r_prime, c_gauss, c.v_norm, c.w_inf, c.w_sup);
    let needed = (t_final / t_prime).ceil() as usize;
    let num_windows = match opts.windows {
        Some(w) if w < needed => {
            return Err(Error::precondition(format!(
                "{w} windows would exceed T' = {t_prime:e}; need at least {needed}"
            )))
        }
        Some(w) => w,
        None => needed,
    };
    let window_length = t_final / num_windows as f64;
    let plan = GlobalPlan {
        mu,
        m: ap.m,
        big_m: ap.big_m,
        r_prime,
        gamma,
        t_prime,
        c_gauss,
        num_windows,
        window_length,
    };

    let bounds = Bounds {
        lower: gamma,
        upper: r_prime,
    };
    let iter_opts = PicardOptions {
        refine: false,
        ..opts.picard.clone()
    };
    let shared = if c.time_independent_pi() {
        Some(Lattice::new(c, 0.0, window_length, iter_opts.n_t)?)
    } else {
        None
    };
    let stride = num_windows.div_ceil(opts.max_frames.max(1));
    let mut traj = Trajectory::new(*c.grid());
    traj.push(0.0, f0.clone())?;
    let mut windows = Vec::with_capacity(num_windows);
    let mut seams = true;
    let mut start = f0.clone();
    for k in 0..num_windows {
        let t_start = k as f64 * window_length;
        let t_end = if k + 1 == num_windows {
            t_final
        } else {
            (k + 1) as f64 * window_length
        };
        let own;
        let lattice = match &shared {
            Some(l) => l,
            None => {
                own = Lattice::new(c, t_start, window_length, iter_opts.n_t)?;
                &own
            }
        };
        let (frames, report) = iterate(lattice, &start, &bounds, &iter_opts).map_err(|e| tag(k, e))?;
        seams &= frames[0]
            .values()
            .iter()
            .zip(start.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        let min_f = frames.iter().map(Field::min).fold(f64::INFINITY, f64::min);
        let max_f = frames.iter().map(Field::max).fold(f64::NEG_INFINITY, f64::max);
        if min_f < ap.m - opts.bound_tol || max_f > ap.big_m + opts.bound_tol {
            return Err(Error::numerical(format!(
                "window {k}: range [{min_f}, {max_f}] violates a priori bounds [{}, {}]",
                ap.m, ap.big_m
            )));
        }
        windows.push(WindowSummary {
            index: k,
            t_start,
            t_end,
            iterations: report.iterations,
            residual: report.final_residual,
            min_f,
            max_f,
        });
        start = frames.into_iter().next_back().expect("lattice has frames");
        if (k + 1) % stride == 0 || k + 1 == num_windows {
            traj.push(t_end, start.clone())?;
        }
    }
    let mass_drift = (integrate(&start) - mass).abs();
    Ok((
        traj,
        plan,
        GlobalReport {
            windows,
            seams_bit_identical: seams,
            mass_drift,
        },
    ))
}
