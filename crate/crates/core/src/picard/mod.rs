//! The fixed-point construction: the set `Y`, the Duhamel map `Psi`, the
//! explicit local time bound, Banach iteration and the global march.

mod duhamel;
pub mod forms;
mod global;
mod solve;

use rand::Rng;

use crate::coeff::{CoefficientSet, ProblemSpec};
use crate::error::{Error, Result};
use crate::grid::{sup_norm, Field, Trajectory};
use crate::kernel::fitted_c_gauss;

pub use duhamel::{psi_map, psi_map_kernel_form, Lattice};
pub use global::{global_solve, GlobalOptions, GlobalPlan, GlobalReport, WindowSummary};
pub use solve::{
    continuity_check, contraction_ratio, fixed_point_solve, FixedPointReport, IterationRecord,
    PicardOptions,
};

/// Fraction of the formula time actually used for a window.
pub const DEFAULT_SAFETY: f64 = 0.5;

/// Local existence time: `T^{1/2}` is the smaller of
/// `min(mu, 1) / (2 (C R (2R/mu + |log mu| + 1) |V| + 1))` and
/// `sqrt(log 2 / (|W_inf| + |W_sup| + 1))`, with `R = 1 + mu + 2 |f0|`.
pub fn time_bound(mu: f64, f0_norm: f64, c_gauss: f64, v_norm: f64, w_inf: f64, w_sup: f64) -> f64 {
    let r = 1.0 + mu + 2.0 * f0_norm;
    bound_from(mu.min(1.0), mu, r, c_gauss, v_norm, w_inf, w_sup)
}

/// The window time of the global march: `gamma = min(mu, m/4)` replaces
/// `mu` inside the logarithmic factor, `R'` replaces `R`, and the numerator
/// is `min(mu, 1, m/4)`.
pub fn time_bound_primed(
    mu: f64,
    m: f64,
    r_prime: f64,
    c_gauss: f64,
    v_norm: f64,
    w_inf: f64,
    w_sup: f64,
) -> f64 {
    let gamma = mu.min(m / 4.0);
    bound_from(mu.min(1.0).min(m / 4.0), gamma, r_prime, c_gauss, v_norm, w_inf, w_sup)
}

fn bound_from(numerator: f64, lower: f64, r: f64, c_gauss: f64, v_norm: f64, w_inf: f64, w_sup: f64) -> f64 {
    let log_factor = 2.0 * r / lower + lower.ln().abs() + 1.0;
    let first = numerator / (2.0 * (c_gauss * r * log_factor * v_norm + 1.0));
    let second = (std::f64::consts::LN_2 / (w_inf.abs() + w_sup.abs() + 1.0)).sqrt();
    first.min(second).powi(2)
}

/// Parameters of `Y = {f >= mu, |f| <= R}` on `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PicardSpace {
    pub mu: f64,
    pub lambda: f64,
    pub f0_norm: f64,
    pub r: f64,
    /// Window length actually used (`safety * formula`).
    pub t: f64,
    pub c_gauss: f64,
    pub w_inf: f64,
    pub w_sup: f64,
    pub v_norm: f64,
    pub safety: f64,
}

impl PicardSpace {
    pub fn new(mu: f64, lambda: f64, f0_norm: f64, c_gauss: f64, c: &CoefficientSet, safety: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::precondition(format!("mu must be positive, got {mu}")));
        }
        if !(safety > 0.0 && safety <= 1.0) {
            return Err(Error::precondition(format!("safety must lie in (0, 1], got {safety}")));
        }
        let t = safety * time_bound(mu, f0_norm, c_gauss, c.v_norm, c.w_inf, c.w_sup);
        Ok(Self {
            mu,
            lambda,
            f0_norm,
            r: 1.0 + mu + 2.0 * f0_norm,
            t,
            c_gauss,
            w_inf: c.w_inf,
            w_sup: c.w_sup,
            v_norm: c.v_norm,
            safety,
        })
    }

    /// Space for the problem's initial datum. `C` defaults to the fitted
    /// first integral-bound constant of the problem's kernel.
    pub fn for_problem(f0: &Field, c: &CoefficientSet, spec: &ProblemSpec, c_gauss: Option<f64>) -> Result<Self> {
        let c_gauss = match c_gauss {
            Some(v) => v,
            None => fitted_c_gauss(c)?,
        };
        Self::new(spec.mu_for(f0), spec.lambda_for(f0), sup_norm(f0), c_gauss, c, DEFAULT_SAFETY)
    }

    /// Re-evaluates the formula from the stored constants.
    pub fn formula_time(&self) -> f64 {
        time_bound(self.mu, self.f0_norm, self.c_gauss, self.v_norm, self.w_inf, self.w_sup)
    }

    /// `Err` with a witness if the trajectory leaves `Y` by more than `slack`.
    pub fn check_member(&self, f: &Trajectory, slack: f64) -> Result<()> {
        for (k, frame) in f.frames().iter().enumerate() {
            let lo = frame.min();
            if lo < self.mu - slack {
                return Err(Error::LeftFixedPointSet(format!(
                    "min {lo} < mu = {} at t = {} (cell {})",
                    self.mu,
                    f.times()[k],
                    frame.argmin()
                )));
            }
            let hi = sup_norm(frame);
            if hi > self.r + slack {
                return Err(Error::LeftFixedPointSet(format!(
                    "sup {hi} > R = {} at t = {}",
                    self.r,
                    f.times()[k]
                )));
            }
        }
        Ok(())
    }

    /// A smooth random element of `Y` on `lattice`: low Fourier modes in
    /// space and time with `1/k^2` decay, clipped into `[mu, R]`.
    pub fn random_element<R: Rng>(&self, lattice: &Lattice, rng: &mut R) -> Result<Trajectory> {
        let grid = *lattice.grid();
        let modes = 4;
        let centre = rng.random_range(self.mu..=self.r);
        let amp = 0.5 * (self.r - self.mu);
        let mut coeffs = Vec::new();
        for k in 1..=modes {
            for axis in 0..grid.dim() {
                for ell in 0..=2 {
                    let w = amp / (k * k) as f64 / (1 + ell) as f64;
                    coeffs.push((
                        k as f64,
                        axis,
                        ell as f64,
                        rng.random_range(-w..=w),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    ));
                }
            }
        }
        let span = lattice.span();
        let mut frames = Vec::with_capacity(lattice.steps() + 1);
        for j in 0..=lattice.steps() {
            let t = lattice.local_time(j) / span.max(f64::MIN_POSITIVE);
            let frame = Field::from_fn(grid, |p| {
                let mut v = centre;
                for &(k, axis, ell, a, phase) in &coeffs {
                    v += a * (std::f64::consts::TAU * k * p[axis] + phase).cos() * (std::f64::consts::PI * ell * t).cos();
                }
                v.clamp(self.mu, self.r)
            })?;
            frames.push(frame);
        }
        Trajectory::from_frames(grid, lattice.local_times(), frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn time_bound_examples() {
        assert_eq!(time_bound(1.0, 1.0, 3.7, 0.0, 0.0, 0.0), 0.25);
        assert_eq!(time_bound(1.0, 1.0, 100.0, 0.0, 0.0, 0.0), 0.25);
        let t = time_bound(1.0, 1.0, 1.0, 0.0, -10.0, 10.0);
        assert!((t - std::f64::consts::LN_2 / 21.0).abs() < 1e-15);
        assert!((t - 0.03301).abs() < 1e-5);
        let mut prev = f64::INFINITY;
        for v in [0.0, 0.1, 1.0, 10.0, 1e3, 1e6] {
            let t = time_bound(1.0, 1.0, 1.0, v, 0.0, 0.0);
            assert!(t <= prev);
            prev = t;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn primed_bound_reduces_to_local_one() {
        // With m/4 >= mu and M = 0 the primed constants coincide.
        let (mu, f0) = (0.2, 1.0);
        let r = 1.0 + mu + 2.0 * f0;
        let a = time_bound(mu, f0, 1.3, 2.0, -1.0, 3.0);
        let b = time_bound_primed(mu, 4.0 * mu, r, 1.3, 2.0, -1.0, 3.0);
        assert!((a - b).abs() < 1e-15);
        assert!(time_bound_primed(mu, 0.1, r + 2.0, 1.3, 2.0, -1.0, 3.0) < a);
    }

    proptest! {
        #[test]
        fn monotone_in_v_and_w(
            mu in 0.01f64..2.0,
            f0 in 0.1f64..5.0,
            v in 0.0f64..100.0,
            dv in 0.0f64..100.0,
            w in 0.0f64..100.0,
            dw in 0.0f64..100.0,
        ) {
            let base = time_bound(mu, f0, 1.0, v, -w, w);
            prop_assert!(time_bound(mu, f0, 1.0, v + dv, -w, w) <= base);
            prop_assert!(time_bound(mu, f0, 1.0, v, -w - dw, w) <= base);
        }

        #[test]
        fn log_norm_estimates(
            mu in 0.01f64..1.0,
            spread in 0.0f64..10.0,
            a in proptest::collection::vec(0.0f64..1.0, 16),
            b in proptest::collection::vec(0.0f64..1.0, 16),
        ) {
            let r = mu + spread;
            let f: Vec<f64> = a.iter().map(|x| mu + x * spread).collect();
            let g: Vec<f64> = b.iter().map(|x| mu + x * spread).collect();
            let lhs = f.iter().zip(&g).map(|(x, y)| (x.ln() - y.ln()).abs()).fold(0.0, f64::max);
            let dist = f.iter().zip(&g).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(lhs <= dist / mu * (1.0 + 1e-12) + 1e-15);
            let sup_log = f.iter().map(|x| x.ln().abs()).fold(0.0, f64::max);
            prop_assert!(sup_log <= r / mu + mu.ln().abs() + 1.0);
        }
    }
}
