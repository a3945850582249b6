//! Coefficient functions `D`, `pi`, `phi`, their sampling on a grid, the
//! derived fields `V = grad D / pi` and `W = div(grad phi / pi)`, and the
//! checks of the standing assumptions A1..A4.

pub mod config;
pub mod expr;

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, Field, Placement, TorusGrid, VectorField};

pub use expr::{eval_expr, parse_expr, EvalError, Expr, ParseError, ParseErrorKind};

/// Number of uniform time intervals used to sample a time-dependent `pi`.
pub const PI_TIME_SAMPLES: usize = 64;

/// A coefficient given either as an expression or as tabulated samples.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Expr(Expr),
    Table(Field),
}

impl Source {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(Source::Expr(parse_expr(src)?))
    }

    pub fn constant(c: f64) -> Self {
        Source::Expr(Expr::Num(c))
    }

    pub fn depends_on_time(&self) -> bool {
        match self {
            Source::Expr(e) => e.depends_on_time(),
            Source::Table(_) => false,
        }
    }

    pub fn sample(&self, grid: TorusGrid, time: f64) -> Result<Field> {
        match self {
            Source::Table(f) => {
                f.grid().ensure_same(&grid)?;
                Ok(f.clone())
            }
            Source::Expr(e) => {
                if e.max_coordinate() > grid.dim() {
                    return Err(EvalError::MissingCoordinate {
                        index: e.max_coordinate(),
                        dim: grid.dim(),
                    }
                    .into());
                }
                let mut values = Vec::with_capacity(grid.len());
                for i in 0..grid.len() {
                    let p = grid.point(i);
                    values.push(e.eval(&p[..grid.dim()], time)?);
                }
                Field::new(grid, values)
            }
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Expr(e) => write!(f, "{e}"),
            Source::Table(_) => f.write_str("<table>"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    /// Relative residual for the equilibrium constant bisection.
    pub root: f64,
    /// Sup-norm stopping tolerance of the Picard iteration.
    pub picard: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root: 1e-12,
            picard: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub dim: usize,
    pub n_per_axis: usize,
    pub d: Source,
    pub pi: Source,
    pub phi: Source,
    pub f0: Source,
    /// Lower level of the fixed-point set; `None` means `min f0 / 4`.
    pub mu: Option<f64>,
    /// Upper bound on `f0`; `None` means `max f0`.
    pub lambda: Option<f64>,
    pub beta_declared: f64,
    pub t_final: f64,
    pub tolerances: Tolerances,
}

impl ProblemSpec {
    /// Heat equation `D = pi = 1`, `phi = 0` with the given initial datum.
    pub fn heat(dim: usize, n: usize, f0: &str) -> Result<Self> {
        Self::from_strs(dim, n, "1", "1", "0", f0)
    }

    pub fn from_strs(dim: usize, n: usize, d: &str, pi: &str, phi: &str, f0: &str) -> Result<Self> {
        Ok(Self {
            dim,
            n_per_axis: n,
            d: Source::parse(d)?,
            pi: Source::parse(pi)?,
            phi: Source::parse(phi)?,
            f0: Source::parse(f0)?,
            mu: None,
            lambda: None,
            beta_declared: 0.5,
            t_final: 1.0,
            tolerances: Tolerances::default(),
        })
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.dim, self.n_per_axis)
    }

    pub fn initial_field(&self) -> Result<Field> {
        let f0 = self.f0.sample(self.grid()?, 0.0)?;
        f0.ensure_positive()?;
        Ok(f0)
    }

    /// `mu` as configured, or the largest value A3 allows.
    pub fn mu_for(&self, f0: &Field) -> f64 {
        self.mu.unwrap_or(f0.min() / 4.0)
    }

    pub fn lambda_for(&self, f0: &Field) -> f64 {
        self.lambda.unwrap_or(f0.max())
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::precondition(format!("mu must be positive, got {mu}")));
            }
            if let Some(l) = self.lambda {
                if l < 4.0 * mu {
                    return Err(Error::precondition(format!(
                        "Lambda = {l} is below 4 mu = {}",
                        4.0 * mu
                    )));
                }
            }
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::precondition(format!(
                "T_final must be positive, got {}",
                self.t_final
            )));
        }
        if !(self.beta_declared > 0.0 && self.beta_declared < 1.0) {
            return Err(Error::precondition(format!(
                "beta must lie in (0, 1), got {}",
                self.beta_declared
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum PiSource {
    Static(Field),
    Dynamic(Expr),
}

/// Sampled coefficients and the constants certified from them.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    grid: TorusGrid,
    d: Field,
    phi: Field,
    pi: PiSource,
    grad_d: VectorField,
    grad_phi: VectorField,
    v_zero: bool,
    pub theta: f64,
    pub c_d: f64,
    pub c_pi_low: f64,
    pub c_pi_up: f64,
    pub w_inf: f64,
    pub w_sup: f64,
    /// Sampled sup of `|V|` over the grid and the time samples.
    pub v_norm: f64,
    pub beta_declared: f64,
    pub time_samples: Vec<f64>,
}

/// Samples `D`, `pi`, `phi` and certifies theta, C_D, the pi bounds and
/// the range of `W`.
pub fn build_coefficients(spec: &ProblemSpec) -> Result<CoefficientSet> {
    spec.validate()?;
    let grid = spec.grid()?;
    if spec.d.depends_on_time() {
        return Err(Error::precondition("D must not depend on t"));
    }
    if spec.phi.depends_on_time() {
        return Err(Error::precondition("phi must not depend on t"));
    }
    let d = spec.d.sample(grid, 0.0)?;
    let phi = spec.phi.sample(grid, 0.0)?;
    let pi = match &spec.pi {
        Source::Expr(e) if e.depends_on_time() => PiSource::Dynamic(e.clone()),
        other => PiSource::Static(other.sample(grid, 0.0)?),
    };
    let times = match pi {
        PiSource::Static(_) => vec![0.0],
        PiSource::Dynamic(_) => (0..=PI_TIME_SAMPLES)
            .map(|k| spec.t_final * k as f64 / PI_TIME_SAMPLES as f64)
            .collect(),
    };
    CoefficientSet::assemble(grid, d, phi, pi, spec.beta_declared, times)
}

impl CoefficientSet {
    /// Time-independent coefficients from already sampled fields.
    pub fn from_fields(d: Field, pi: Field, phi: Field, beta_declared: f64) -> Result<Self> {
        let grid = *d.grid();
        grid.ensure_same(pi.grid())?;
        grid.ensure_same(phi.grid())?;
        Self::assemble(grid, d, phi, PiSource::Static(pi), beta_declared, vec![0.0])
    }

    fn assemble(
        grid: TorusGrid,
        d: Field,
        phi: Field,
        pi: PiSource,
        beta_declared: f64,
        time_samples: Vec<f64>,
    ) -> Result<Self> {
        let (cell, value) = (d.argmin(), d.min());
        if value <= 0.0 {
            return Err(Error::Assumption {
                assumption: "A4",
                detail: format!("D = {value} <= 0 at cell {cell}"),
            });
        }
        let grad_d = gradient(&d);
        let grad_phi = gradient(&phi);
        let v_zero = grad_d.components().iter().flatten().all(|&x| x == 0.0);
        let mut set = Self {
            grid,
            c_d: d.min(),
            d,
            phi,
            pi,
            grad_d,
            grad_phi,
            v_zero,
            theta: f64::INFINITY,
            c_pi_low: f64::INFINITY,
            c_pi_up: f64::NEG_INFINITY,
            w_inf: f64::INFINITY,
            w_sup: f64::NEG_INFINITY,
            v_norm: 0.0,
            beta_declared,
            time_samples,
        };
        for &t in &set.time_samples.clone() {
            let pi = set.pi(t)?;
            let (cell, value) = (pi.argmin(), pi.min());
            if value <= 0.0 {
                return Err(Error::Assumption {
                    assumption: "A4",
                    detail: format!("pi = {value} <= 0 at cell {cell}, t = {t}"),
                });
            }
            set.c_pi_low = set.c_pi_low.min(value);
            set.c_pi_up = set.c_pi_up.max(pi.max());
            set.theta = set.theta.min(set.d.zip_map(&pi, |d, p| d / p).min());
            let w = set.w(t)?;
            set.w_inf = set.w_inf.min(w.min());
            set.w_sup = set.w_sup.max(w.max());
            set.v_norm = set.v_norm.max(set.v(t)?.sup_norm());
        }
        Ok(set)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn d(&self) -> &Field {
        &self.d
    }

    pub fn phi(&self) -> &Field {
        &self.phi
    }

    pub fn time_independent_pi(&self) -> bool {
        matches!(self.pi, PiSource::Static(_))
    }

    /// True when the sampled `grad D` vanishes identically, so `V = 0`.
    pub fn v_is_zero(&self) -> bool {
        self.v_zero
    }

    pub fn pi(&self, t: f64) -> Result<Field> {
        match &self.pi {
            PiSource::Static(f) => Ok(f.clone()),
            PiSource::Dynamic(e) => {
                let f = Source::Expr(e.clone()).sample(self.grid, t)?;
                if f.min() <= 0.0 {
                    return Err(Error::Assumption {
                        assumption: "A4",
                        detail: format!("pi = {} <= 0 at cell {}, t = {t}", f.min(), f.argmin()),
                    });
                }
                Ok(f)
            }
        }
    }

    /// Diffusivity `D / pi`.
    pub fn mobility(&self, t: f64) -> Result<Field> {
        Ok(self.d.zip_map(&self.pi(t)?, |d, p| d / p))
    }

    /// Drift `grad phi / pi` (cell-centred).
    pub fn drift(&self, t: f64) -> Result<VectorField> {
        Ok(self.grad_phi.scale(&self.pi(t)?.map(|p| 1.0 / p)))
    }

    /// `V = grad D / pi`.
    pub fn v(&self, t: f64) -> Result<VectorField> {
        if self.v_zero {
            return Ok(VectorField::zeros(self.grid, Placement::Cell));
        }
        Ok(self.grad_d.scale(&self.pi(t)?.map(|p| 1.0 / p)))
    }

    /// `W = div(grad phi / pi)`.
    pub fn w(&self, t: f64) -> Result<Field> {
        Ok(divergence(&self.drift(t)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Witnessing extremum, e.g. `min D/pi = 0.5`.
    pub witness: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// First failure as an error, if any.
    pub fn into_result(self) -> Result<()> {
        match self.checks.into_iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(c) => Err(Error::Assumption {
                assumption: c.name,
                detail: c.witness,
            }),
        }
    }
}

pub fn validate_assumptions(c: &CoefficientSet, f0: &Field, spec: &ProblemSpec) -> AssumptionReport {
    let finite = [c.theta, c.c_d, c.c_pi_up, c.w_inf, c.w_sup, c.v_norm]
        .iter()
        .all(|x| x.is_finite());
    let mu = spec.mu_for(f0);
    let lambda = spec.lambda_for(f0);
    let same_grid = f0.grid() == c.grid();
    let (lo, hi) = (f0.min(), f0.max());
    let checks = vec![
        AssumptionCheck {
            name: "A1",
            passed: c.theta > 0.0,
            witness: format!("min D/pi = {}", c.theta),
        },
        AssumptionCheck {
            name: "A2",
            passed: finite && c.beta_declared > 0.0 && c.beta_declared < 1.0,
            witness: format!(
                "sampled coefficients bounded: {finite}; beta declared (not verified) = {}",
                c.beta_declared
            ),
        },
        AssumptionCheck {
            name: "A3",
            passed: same_grid && lo >= 4.0 * mu && hi <= lambda && mu > 0.0,
            witness: if !same_grid {
                "f0 lives on a different grid".to_string()
            } else if lo < 4.0 * mu {
                format!("min f0 = {lo} < 4 mu = {}", 4.0 * mu)
            } else {
                format!("max f0 = {hi}, Lambda = {lambda}, min f0 = {lo}, 4 mu = {}", 4.0 * mu)
            },
        },
        AssumptionCheck {
            name: "A4",
            passed: c.c_d >= 1.0 && c.c_pi_low > 0.0,
            witness: format!(
                "C_D = min D = {}, pi in [{}, {}]",
                c.c_d, c.c_pi_low, c.c_pi_up
            ),
        },
    ];
    AssumptionReport { checks }
}
