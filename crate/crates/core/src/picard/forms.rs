//! Two discrete right-hand sides of the equation and the residual of the
//! time-discrete fixed-point equation.

use crate::coeff::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{divergence, face_gradient, Field, Placement, Trajectory, VectorField};
use crate::kernel::apply_operator;

/// `L_h f + div_c(V f log f)`.
pub fn rhs_expanded(c: &CoefficientSet, f: &Field, t: f64) -> Result<Field> {
    f.ensure_positive()?;
    let lf = apply_operator(c, t, f)?;
    let src = divergence(&c.v(t)?.scale(&f.map(|x| x * x.ln())));
    Ok(lf.zip_map(&src, |a, b| a + b))
}

/// `div((f/pi) grad(D log f + phi))` with compact face differences and
/// arithmetic face averages of `f/pi`.
pub fn rhs_divergence(c: &CoefficientSet, f: &Field, t: f64) -> Result<Field> {
    f.ensure_positive()?;
    let grid = *f.grid();
    let pi = c.pi(t)?;
    let potential = f.zip_map(c.d(), |x, d| d * x.ln()).zip_map(c.phi(), |a, p| a + p);
    let grad = face_gradient(&potential);
    let weight = f.zip_map(&pi, |x, p| x / p);
    let w = weight.values();
    let comps = (0..grid.dim())
        .map(|a| {
            grad.component(a)
                .iter()
                .enumerate()
                .map(|(i, g)| 0.5 * (w[i] + w[grid.shift(i, a, 1)]) * g)
                .collect()
        })
        .collect();
    Ok(divergence(&VectorField::new(grid, Placement::Face, comps)?))
}

/// `max_j sup |(f_j - f_{j-1})/dt - L_h f_{j-1/2} - div_c(V f log f)_{j-1/2}|`
/// on a uniform trajectory, coefficients at the midpoint times.
pub fn nfp_residual(c: &CoefficientSet, f: &Trajectory) -> Result<f64> {
    let times = f.times();
    if times.len() < 2 {
        return Err(Error::precondition("trajectory needs at least two frames"));
    }
    let mut worst: f64 = 0.0;
    for j in 1..times.len() {
        let dt = times[j] - times[j - 1];
        let (a, b) = (&f.frames()[j - 1], &f.frames()[j]);
        let mid = a.zip_map(b, |x, y| 0.5 * (x + y));
        let rhs = rhs_expanded(c, &mid, 0.5 * (times[j] + times[j - 1]))?;
        let r = b
            .zip_map(a, |x, y| (x - y) / dt)
            .zip_map(&rhs, |d, r| (d - r).abs())
            .max();
        worst = worst.max(r);
    }
    Ok(worst)
}
