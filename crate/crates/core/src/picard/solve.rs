//! Banach iteration for the fixed point of `Psi` and the measured
//! contraction and continuity constants.

use crate::coeff::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{sup_norm, Field, Trajectory};

use super::duhamel::Lattice;
use super::PicardSpace;

/// Ratios above this count as growth for the non-contraction test.
const GROWTH: f64 = 1.0;
/// Consecutive growth steps tolerated before giving up.
const GROWTH_STREAK: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct PicardOptions {
    /// Stop when consecutive iterates differ by at most this in sup norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial number of time steps per window.
    pub n_t: usize,
    /// Cap for the doubling of `n_t`.
    pub max_n_t: usize,
    /// Double `n_t` until the fixed point moves by less than `refine_tol`.
    pub refine: bool,
    /// Defaults to `tol / 10`.
    pub refine_tol: Option<f64>,
    /// Slack on the membership test `mu <= f`, `|f| <= R`.
    pub y_slack: f64,
    /// Fail as soon as an iterate leaves `Y`; otherwise only flag it.
    pub strict: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 60,
            n_t: 64,
            max_n_t: 1024,
            refine: true,
            refine_tol: None,
            y_slack: 1e-10,
            strict: true,
        }
    }
}

impl PicardOptions {
    pub fn refine_tol(&self) -> f64 {
        self.refine_tol.unwrap_or(self.tol / 10.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `sup |f_k - f_{k-1}|` over the whole trajectory.
    pub residual: f64,
    /// `residual_k / residual_{k-1}`; `None` on the first step or after an
    /// exact zero.
    pub ratio: Option<f64>,
    pub min_f: f64,
    pub max_f: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointReport {
    pub iterations: usize,
    pub final_residual: f64,
    /// Largest ratio of successive differences above the roundoff floor.
    pub empirical_contraction: f64,
    pub in_y_every_iterate: bool,
    pub history: Vec<IterationRecord>,
    /// Time steps of the returned trajectory.
    pub n_t: usize,
    /// Sup change between the last two quadrature levels, when refined.
    pub quadrature_change: Option<f64>,
    /// `true` if the refinement met its tolerance (or was not requested).
    pub quadrature_converged: bool,
}

pub(crate) struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl From<&PicardSpace> for Bounds {
    fn from(s: &PicardSpace) -> Self {
        Self { lower: s.mu, upper: s.r }
    }
}

fn frames_distance(a: &[Field], b: &[Field]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.values().iter().zip(y.values()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Iterates `f <- Psi f` on one lattice from the constant extension of `f0`.
pub(crate) fn iterate(
    lattice: &Lattice,
    f0: &Field,
    bounds: &Bounds,
    opts: &PicardOptions,
) -> Result<(Vec<Field>, FixedPointReport)> {
    let mut f = vec![f0.clone(); lattice.steps() + 1];
    let mut history = Vec::new();
    let mut in_y = true;
    let mut prev: Option<f64> = None;
    let mut streak = Vec::new();
    let mut contraction: f64 = 0.0;
    let floor = 1e3 * f64::EPSILON * bounds.upper.max(1.0);
    for iteration in 1..=opts.max_iter {
        let g = lattice.apply(&f, f0)?;
        let residual = frames_distance(&g, &f);
        let min_f = g.iter().map(Field::min).fold(f64::INFINITY, f64::min);
        let max_f = g.iter().map(sup_norm).fold(0.0, f64::max);
        if min_f < bounds.lower - opts.y_slack || max_f > bounds.upper + opts.y_slack {
            in_y = false;
            if opts.strict {
                return Err(Error::LeftFixedPointSet(format!(
                    "iterate {iteration}: range [{min_f}, {max_f}] outside [{}, {}]",
                    bounds.lower, bounds.upper
                )));
            }
        }
        let ratio = match prev {
            Some(p) if p > 0.0 => Some(residual / p),
            _ => None,
        };
        if let (Some(r), Some(p)) = (ratio, prev) {
            if p > floor && residual > floor {
                contraction = contraction.max(r);
            }
            if r > GROWTH {
                streak.push(r);
                if streak.len() >= GROWTH_STREAK {
                    return Err(Error::NonContraction { ratios: streak });
                }
            } else {
                streak.clear();
            }
        }
        history.push(IterationRecord {
            iteration,
            residual,
            ratio,
            min_f,
            max_f,
        });
        f = g;
        prev = Some(residual);
        if residual <= opts.tol {
            let report = FixedPointReport {
                iterations: iteration,
                final_residual: residual,
                empirical_contraction: contraction,
                in_y_every_iterate: in_y,
                history,
                n_t: lattice.steps(),
                quadrature_change: None,
                quadrature_converged: true,
            };
            return Ok((f, report));
        }
    }
    Err(Error::numerical(format!(
        "no convergence in {} iterations (last residual {:e})",
        opts.max_iter,
        prev.unwrap_or(f64::NAN)
    )))
}

/// Fixed point of `Psi` on `[0, space.t]`, starting from `f(., t) = f0`.
///
/// With `opts.refine` the step count is doubled until the fixed point
/// changes by less than `opts.refine_tol()` on the shared lattice points,
/// or `opts.max_n_t` is reached.
pub fn fixed_point_solve(
    c: &CoefficientSet,
    f0: &Field,
    space: &PicardSpace,
    opts: &PicardOptions,
) -> Result<(Trajectory, FixedPointReport)> {
    f0.grid().ensure_same(c.grid())?;
    let lo = f0.min();
    if lo < 4.0 * space.mu * (1.0 - 1e-12) {
        return Err(Error::precondition(format!(
            "min f0 = {lo} is below 4 mu = {}",
            4.0 * space.mu
        )));
    }
    if opts.n_t == 0 || opts.max_n_t < opts.n_t {
        return Err(Error::precondition(format!(
            "need 0 < n_t <= max_n_t, got {} and {}",
            opts.n_t, opts.max_n_t
        )));
    }
    let bounds = Bounds::from(space);
    let mut n_t = opts.n_t;
    let lattice = Lattice::new(c, 0.0, space.t, n_t)?;
    let (mut frames, mut report) = iterate(&lattice, f0, &bounds, opts)?;
    let mut all_in_y = report.in_y_every_iterate;
    let mut worst = report.empirical_contraction;
    if opts.refine {
        report.quadrature_converged = false;
        while 2 * n_t <= opts.max_n_t {
            n_t *= 2;
            let fine = Lattice::new(c, 0.0, space.t, n_t)?;
            let (fine_frames, fine_report) = iterate(&fine, f0, &bounds, opts)?;
            let change = frames
                .iter()
                .zip(fine_frames.iter().step_by(2))
                .map(|(a, b)| sup_norm(&a.zip_map(b, |x, y| x - y)))
                .fold(0.0, f64::max);
            all_in_y &= fine_report.in_y_every_iterate;
            worst = worst.max(fine_report.empirical_contraction);
            frames = fine_frames;
            report = fine_report;
            report.quadrature_change = Some(change);
            report.quadrature_converged = change < opts.refine_tol();
            if report.quadrature_converged {
                break;
            }
        }
    }
    report.in_y_every_iterate = all_in_y;
    report.empirical_contraction = worst;
    let times = (0..=n_t).map(|j| j as f64 * space.t / n_t as f64).collect();
    Ok((Trajectory::from_frames(*c.grid(), times, frames)?, report))
}

/// `sup |Psi f - Psi g| / sup |f - g|` on the common lattice of `f` and `g`.
pub fn contraction_ratio(c: &CoefficientSet, f0: &Field, f: &Trajectory, g: &Trajectory) -> Result<f64> {
    if f.times() != g.times() {
        return Err(Error::precondition("trajectories live on different time lattices"));
    }
    let den = f.sup_distance(g);
    if den == 0.0 {
        return Ok(0.0);
    }
    let lattice = Lattice::matching(c, 0.0, f)?;
    let pf = lattice.apply(f.frames(), f0)?;
    let pg = lattice.apply(g.frames(), f0)?;
    Ok(frames_distance(&pf, &pg) / den)
}

/// `sup |f - g| / sup |f0 - g0|` for the fixed points from `f0` and `g0`,
/// both on the step count chosen for `f0`.
pub fn continuity_check(
    c: &CoefficientSet,
    f0: &Field,
    g0: &Field,
    space: &PicardSpace,
    opts: &PicardOptions,
) -> Result<f64> {
    f0.grid().ensure_same(g0.grid())?;
    let den = sup_norm(&f0.zip_map(g0, |a, b| a - b));
    if den == 0.0 {
        return Ok(0.0);
    }
    let (f, report) = fixed_point_solve(c, f0, space, opts)?;
    let fixed = PicardOptions {
        n_t: report.n_t,
        max_n_t: report.n_t,
        refine: false,
        ..opts.clone()
    };
    let (g, _) = fixed_point_solve(c, g0, space, &fixed)?;
    Ok(f.sup_distance(&g) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{build_coefficients, ProblemSpec};
    use crate::picard::psi_map;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn setup(d: &str, pi: &str, phi: &str, f0: &str, n: usize) -> (CoefficientSet, Field, ProblemSpec) {
        let spec = ProblemSpec::from_strs(1, n, d, pi, phi, f0).unwrap();
        let c = build_coefficients(&spec).unwrap();
        let f0 = spec.initial_field().unwrap();
        (c, f0, spec)
    }

    #[test]
    fn heat_case_converges_at_once_and_decays() {
        let (c, f0, spec) = setup("1", "1", "0", "1 + 0.5*cos(2*pi*x1)", 128);
        let space = PicardSpace::for_problem(&f0, &c, &spec, Some(1.0)).unwrap();
        let (f, report) = fixed_point_solve(&c, &f0, &space, &PicardOptions::default()).unwrap();
        assert!(report.iterations <= 2);
        assert_eq!(report.empirical_contraction, 0.0);
        for (t, frame) in f.times().iter().zip(f.frames()) {
            let exact = Field::from_fn(*c.grid(), |p| 1.0 + 0.5 * (-4.0 * PI * PI * t).exp() * (TAU * p[0]).cos()).unwrap();
            assert!(sup_norm(&frame.zip_map(&exact, |a, b| a - b)) < 1e-3);
        }
    }

    #[test]
    fn constant_datum_is_steady() {
        // Constants are steady for constant D, and for c = 1 under any D.
        for (d, value) in [("1.5", 1.7), ("2 + cos(2*pi*x1)", 1.0)] {
            let (c, f0, spec) = setup(d, "1.5 + 0.5*sin(2*pi*x1)", "0", &value.to_string(), 64);
            let space = PicardSpace::for_problem(&f0, &c, &spec, Some(1.0)).unwrap();
            let (f, _) = fixed_point_solve(&c, &f0, &space, &PicardOptions::default()).unwrap();
            for frame in f.frames() {
                assert!(frame.values().iter().all(|v| (v - value).abs() < 1e-8), "D = {d}");
            }
        }
    }

    #[test]
    fn variable_diffusion_contracts() {
        let (c, f0, spec) = setup("2 + cos(2*pi*x1)", "1", "0", "1 + 0.25*cos(2*pi*x1)", 128);
        let space = PicardSpace::for_problem(&f0, &c, &spec, None).unwrap();
        let opts = PicardOptions::default();
        let (f, report) = fixed_point_solve(&c, &f0, &space, &opts).unwrap();
        assert!(report.in_y_every_iterate);
        assert!(report.empirical_contraction <= 0.5, "{}", report.empirical_contraction);
        assert!(report.final_residual <= opts.tol);
        let again = psi_map(&c, &f0, &f).unwrap();
        assert!(again.sup_distance(&f) <= 2.0 * opts.tol);
    }

    #[test]
    fn leaving_y_is_reported() {
        let (c, f0, spec) = setup("2 + cos(2*pi*x1)", "1", "0", "1 + 0.25*cos(2*pi*x1)", 32);
        let mut space = PicardSpace::for_problem(&f0, &c, &spec, Some(1.0)).unwrap();
        space.r = 1.0;
        assert!(matches!(
            fixed_point_solve(&c, &f0, &space, &PicardOptions::default()),
            Err(Error::LeftFixedPointSet(_))
        ));
        let lax = PicardOptions {
            strict: false,
            ..PicardOptions::default()
        };
        let (_, report) = fixed_point_solve(&c, &f0, &space, &lax).unwrap();
        assert!(!report.in_y_every_iterate);
    }

    #[test]
    fn contraction_ratio_cases() {
        let (c, f0, spec) = setup("2 + cos(2*pi*x1)", "1", "0", "1 + 0.25*cos(2*pi*x1)", 64);
        let space = PicardSpace::for_problem(&f0, &c, &spec, None).unwrap();
        let lattice = Lattice::new(&c, 0.0, space.t, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = space.random_element(&lattice, &mut rng).unwrap();
        assert_eq!(contraction_ratio(&c, &f0, &f, &f).unwrap(), 0.0);
        for _ in 0..5 {
            let g = space.random_element(&lattice, &mut rng).unwrap();
            let r = contraction_ratio(&c, &f0, &f, &g).unwrap();
            assert!(r <= 0.55, "{r}");
        }
        let (h, hf0, hspec) = setup("1", "1", "0", "1 + 0.5*cos(2*pi*x1)", 32);
        let hspace = PicardSpace::for_problem(&hf0, &h, &hspec, Some(1.0)).unwrap();
        let hl = Lattice::new(&h, 0.0, hspace.t, 8).unwrap();
        let a = hspace.random_element(&hl, &mut rng).unwrap();
        let b = hspace.random_element(&hl, &mut rng).unwrap();
        assert_eq!(contraction_ratio(&h, &hf0, &a, &b).unwrap(), 0.0);
    }

    #[test]
    fn random_elements_lie_in_y() {
        let (c, f0, spec) = setup("2 + cos(2*pi*x1)", "1", "0", "1 + 0.25*cos(2*pi*x1)", 32);
        let space = PicardSpace::for_problem(&f0, &c, &spec, Some(1.0)).unwrap();
        let lattice = Lattice::new(&c, 0.0, space.t, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let f = space.random_element(&lattice, &mut rng).unwrap();
            space.check_member(&f, 0.0).unwrap();
        }
    }

    #[test]
    fn continuity_for_heat() {
        let (c, f0, _) = setup("1", "1", "0", "1 + 0.5*cos(2*pi*x1)", 64);
        let g0 = f0.zip_map(&Field::from_fn(*c.grid(), |p| 0.01 * (TAU * p[0]).cos()).unwrap(), |a, b| a + b);
        let mu = f0.min().min(g0.min()) / 4.0;
        let space = PicardSpace::new(mu, g0.max(), sup_norm(&g0), 1.0, &c, 0.5).unwrap();
        let opts = PicardOptions::default();
        assert_eq!(continuity_check(&c, &f0, &f0, &space, &opts).unwrap(), 0.0);
        let r = continuity_check(&c, &f0, &g0, &space, &opts).unwrap();
        assert!(r <= 1.0 + 1e-6, "{r}");
    }

    #[test]
    fn rejects_datum_below_four_mu() {
        let (c, f0, spec) = setup("1", "1", "0", "1", 16);
        let mut space = PicardSpace::for_problem(&f0, &c, &spec, Some(1.0)).unwrap();
        space.mu = 0.3;
        assert!(matches!(
            fixed_point_solve(&c, &f0, &space, &PicardOptions::default()),
            Err(Error::Precondition(_))
        ));
    }
}
