//! Equilibrium state, free energy, dissipation rate and the two-sided
//! a priori envelopes.

use crate::coeff::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{integrate, Field};

/// Maximum number of geometric bracket expansions in the `C_eq` search.
pub const MAX_BRACKET_EXPANSIONS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumState {
    pub f_eq: Field,
    pub c_eq: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AprioriBounds {
    pub m: f64,
    pub big_m: f64,
    pub lower_env: Field,
    pub upper_env: Field,
}

fn gibbs(c: &CoefficientSet, c_eq: f64) -> Field {
    c.phi().zip_map(c.d(), |phi, d| (-(phi - c_eq) / d).exp())
}

/// `f_eq = exp(-(phi - C_eq)/D)` with `C_eq` fixed by bisection so that the
/// total mass matches. `rel_tol` bounds `|mass(C) - mass| / mass`.
pub fn equilibrium_state(c: &CoefficientSet, mass: f64, rel_tol: f64) -> Result<EquilibriumState> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::precondition(format!("mass must be positive, got {mass}")));
    }
    let g = |cc: f64| integrate(&gibbs(c, cc)) - mass;
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut width = 2.0;
    let mut expansions = 0;
    while g(lo) > 0.0 {
        lo -= width;
        width *= 2.0;
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS {
            return Err(Error::numerical("equilibrium bracket expansion failed (lower end)"));
        }
    }
    width = 2.0;
    while g(hi) < 0.0 {
        hi += width;
        width *= 2.0;
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS {
            return Err(Error::numerical("equilibrium bracket expansion failed (upper end)"));
        }
    }
    let mut mid = 0.5 * (lo + hi);
    loop {
        let gm = g(mid);
        if gm.abs() <= rel_tol * mass {
            break;
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let next = 0.5 * (lo + hi);
        if next == lo || next == hi {
            // Bracket collapsed to adjacent floats; this is as close as it gets.
            break;
        }
        mid = next;
    }
    Ok(EquilibriumState {
        f_eq: gibbs(c, mid),
        c_eq: mid,
        mass,
    })
}

/// `F[f] = integral of D f (log f - 1) + phi f`.
pub fn free_energy(f: &Field, c: &CoefficientSet) -> Result<f64> {
    f.grid().ensure_same(c.grid())?;
    f.ensure_positive()?;
    let v = f.values();
    let d = c.d().values();
    let phi = c.phi().values();
    let sum: f64 = (0..v.len())
        .map(|i| d[i] * v[i] * (v[i].ln() - 1.0) + phi[i] * v[i])
        .sum();
    Ok(sum * f.grid().cell_volume())
}

/// `D log f + phi`.
pub fn chemical_potential(f: &Field, c: &CoefficientSet) -> Result<Field> {
    f.grid().ensure_same(c.grid())?;
    f.ensure_positive()?;
    let d = c.d().values();
    let phi = c.phi().values();
    let values = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| d[i] * x.ln() + phi[i])
        .collect();
    Ok(Field::from_raw(*f.grid(), values))
}

/// Rate `integral (f/pi) |grad(D log f + phi)|^2`, evaluated on cell faces
/// with the compact differences of the finite-volume solver and
/// face-averaged `f` and `pi`.
pub fn dissipation_rate(f: &Field, c: &CoefficientSet, time: f64) -> Result<f64> {
    let mu = chemical_potential(f, c)?;
    let pi = c.pi(time)?;
    let g = *f.grid();
    let h = g.h();
    let (fv, pv, mv) = (f.values(), pi.values(), mu.values());
    let mut sum = 0.0;
    for a in 0..g.dim() {
        for i in 0..g.len() {
            let j = g.shift(i, a, 1);
            let mob = (fv[i] + fv[j]) / (pv[i] + pv[j]);
            let grad = (mv[j] - mv[i]) / h;
            sum += mob * grad * grad;
        }
    }
    Ok(sum * g.cell_volume())
}

/// Envelopes `exp(min_y(D log(f0/f_eq)) / D(x)) f_eq(x)` and the analogue
/// with `max`, together with their extrema `m` and `M`.
pub fn apriori_bounds(f0: &Field, eq: &EquilibriumState, c: &CoefficientSet) -> Result<AprioriBounds> {
    f0.grid().ensure_same(c.grid())?;
    f0.ensure_positive()?;
    let weighted = f0
        .zip_map(&eq.f_eq, |f, e| (f / e).ln())
        .zip_map(c.d(), |l, d| d * l);
    let (lo, hi) = (weighted.min(), weighted.max());
    let lower_env = c.d().zip_map(&eq.f_eq, |d, e| (lo / d).exp() * e);
    let upper_env = c.d().zip_map(&eq.f_eq, |d, e| (hi / d).exp() * e);
    Ok(AprioriBounds {
        m: lower_env.min(),
        big_m: upper_env.max(),
        lower_env,
        upper_env,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{build_coefficients, ProblemSpec};
    use crate::grid::TorusGrid;
    use proptest::prelude::*;
    use std::f64::consts::{E, PI};

    fn coeffs(d: &str, phi: &str, n: usize) -> CoefficientSet {
        build_coefficients(&ProblemSpec::from_strs(1, n, d, "1", phi, "1").unwrap()).unwrap()
    }

    /// `-log I0(1)` from a 4096-point trapezoid sum, independent of the
    /// solver grid.
    fn minus_log_i0_one() -> f64 {
        let n = 4096;
        let s: f64 = (0..n).map(|k| (-(2.0 * PI * k as f64 / n as f64).cos()).exp()).sum();
        -(s / n as f64).ln()
    }

    #[test]
    fn flat_equilibria() {
        let c = coeffs("1", "0", 32);
        let eq = equilibrium_state(&c, 1.0, 1e-12).unwrap();
        assert!(eq.c_eq.abs() < 1e-12);
        assert!(eq.f_eq.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let c = coeffs("2", "0", 32);
        let eq = equilibrium_state(&c, 3.0, 1e-12).unwrap();
        assert!((eq.c_eq - 2.0 * 3f64.ln()).abs() < 1e-11);
        assert!(eq.f_eq.values().iter().all(|&v| (v - 3.0).abs() < 1e-11));
    }

    #[test]
    fn cosine_equilibrium_constant() {
        let c = coeffs("1", "cos(2*pi*x1)", 128);
        let eq = equilibrium_state(&c, 1.0, 1e-12).unwrap();
        assert!((eq.c_eq - minus_log_i0_one()).abs() <= 1e-5, "{}", eq.c_eq);
        assert!((eq.c_eq + 0.23597).abs() <= 1e-4);
        assert!((integrate(&eq.f_eq) - 1.0).abs() <= 1e-12);
        let f = free_energy(&eq.f_eq, &c).unwrap();
        assert!((f - (minus_log_i0_one() - 1.0)).abs() <= 1e-4, "{f}");
        for i in 0..128 {
            let phi = c.phi().values()[i];
            let want = (-(phi - eq.c_eq)).exp();
            assert!((eq.f_eq.values()[i] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_nonpositive_mass() {
        let c = coeffs("1", "0", 16);
        assert!(equilibrium_state(&c, 0.0, 1e-12).is_err());
        assert!(equilibrium_state(&c, -1.0, 1e-12).is_err());
    }

    #[test]
    fn free_energy_examples() {
        let c = coeffs("1", "0", 16);
        let g = *c.grid();
        assert!((free_energy(&Field::constant(g, 1.0), &c).unwrap() + 1.0).abs() < 1e-14);
        assert!(free_energy(&Field::constant(g, E), &c).unwrap().abs() < 1e-14);
        let mut v = vec![1.0; 16];
        v[5] = -0.1;
        match free_energy(&Field::new(g, v).unwrap(), &c) {
            Err(Error::NonPositive { cell, .. }) => assert_eq!(cell, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dissipation_examples() {
        let c = coeffs("1", "cos(2*pi*x1)", 64);
        let eq = equilibrium_state(&c, 1.0, 1e-12).unwrap();
        assert!(dissipation_rate(&eq.f_eq, &c, 0.0).unwrap().abs() <= 1e-12);

        let heat = coeffs("1", "0", 16);
        let two = Field::constant(*heat.grid(), 2.0);
        assert_eq!(dissipation_rate(&two, &heat, 0.0).unwrap(), 0.0);

        let rate = |n: usize| {
            let c = coeffs("1", "0", n);
            let f = Field::from_fn(*c.grid(), |p| 1.0 + 0.5 * (2.0 * PI * p[0]).cos()).unwrap();
            dissipation_rate(&f, &c, 0.0).unwrap()
        };
        let (coarse, fine) = (rate(128), rate(1024));
        assert!(coarse > 0.0);
        assert!((coarse - fine).abs() <= 0.01 * fine, "{coarse} vs {fine}");
    }

    #[test]
    fn apriori_examples() {
        let c = coeffs("1", "0", 64);
        let g = *c.grid();
        let f0 = Field::from_fn(g, |p| 1.5 + 0.5 * (2.0 * PI * p[0]).cos()).unwrap();
        let eq = equilibrium_state(&c, integrate(&f0), 1e-12).unwrap();
        let b = apriori_bounds(&f0, &eq, &c).unwrap();
        assert!((b.m - 1.0).abs() < 1e-12 && (b.big_m - 2.0).abs() < 1e-12);

        let c = coeffs("1", "cos(2*pi*x1)", 128);
        let f0 = Field::constant(*c.grid(), 1.0);
        let eq = equilibrium_state(&c, 1.0, 1e-12).unwrap();
        let b = apriori_bounds(&f0, &eq, &c).unwrap();
        assert!((b.m - (-2.0f64).exp()).abs() <= 1e-6, "{}", b.m);
        assert!((b.big_m - 2.0f64.exp()).abs() <= 1e-4, "{}", b.big_m);

        let b = apriori_bounds(&eq.f_eq, &eq, &c).unwrap();
        assert!((b.m - eq.f_eq.min()).abs() < 1e-12);
        assert!((b.big_m - eq.f_eq.max()).abs() < 1e-12);
        for i in 0..128 {
            assert!((b.lower_env.values()[i] - eq.f_eq.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_map_is_monotone() {
        let c = coeffs("2 + cos(2*pi*x1)", "sin(2*pi*x1)", 64);
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=12 {
            let eq = equilibrium_state(&c, 0.25 * k as f64, 1e-12).unwrap();
            assert!(eq.c_eq > prev);
            prev = eq.c_eq;
        }
    }

    #[test]
    fn equilibrium_minimises_free_energy() {
        use rand::{Rng, SeedableRng};
        let c = coeffs("2 + cos(2*pi*x1)", "0.5*sin(2*pi*x1)", 64);
        let eq = equilibrium_state(&c, 1.0, 1e-13).unwrap();
        let f_eq = free_energy(&eq.f_eq, &c).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = raw.iter().sum::<f64>() / 64.0;
            let eps = 1e-2;
            let perturbed = Field::new(
                *c.grid(),
                raw.iter()
                    .zip(eq.f_eq.values())
                    .map(|(r, e)| e + eps * (r - mean))
                    .collect(),
            )
            .unwrap();
            assert!(f_eq <= free_energy(&perturbed, &c).unwrap() + 1e-12);
        }
    }

    fn positive_field(n: usize) -> impl Strategy<Value = Field> {
        proptest::collection::vec(0.05f64..5.0, n)
            .prop_map(move |v| Field::new(TorusGrid::new(1, n).unwrap(), v).unwrap())
    }

    proptest! {
        #[test]
        fn dissipation_is_nonnegative(f in positive_field(32)) {
            let c = coeffs("1.5 + sin(2*pi*x1)", "cos(2*pi*x1)", 32);
            prop_assert!(dissipation_rate(&f, &c, 0.0).unwrap() >= -1e-13);
        }

        #[test]
        fn envelopes_sandwich_initial_data(f0 in positive_field(32)) {
            let c = coeffs("1.5 + sin(2*pi*x1)", "cos(2*pi*x1)", 32);
            let eq = equilibrium_state(&c, integrate(&f0), 1e-12).unwrap();
            let b = apriori_bounds(&f0, &eq, &c).unwrap();
            for i in 0..32 {
                let v = f0.values()[i];
                prop_assert!(b.lower_env.values()[i] <= v * (1.0 + 1e-12));
                prop_assert!(v <= b.upper_env.values()[i] * (1.0 + 1e-12));
            }
            prop_assert!(b.m > 0.0 && b.m <= b.big_m);
        }
    }
}
