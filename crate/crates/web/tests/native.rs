use fptorus_web::{equilibrium_profile, problem_time_bound, run_simulation};

#[test]
fn flat_equilibrium() {
    let p = equilibrium_profile("1", "0", 32, 1.0).unwrap();
    assert!(p.c_eq.abs() < 1e-12);
    assert!((p.free_energy + 1.0).abs() < 1e-12);
    assert!(p.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn cosine_equilibrium_constant() {
    // -log I0(1) from its series.
    let mut term = 1.0;
    let mut i0 = 1.0;
    for k in 1..30 {
        term *= 0.25 / (k * k) as f64;
        i0 += term;
    }
    let p = equilibrium_profile("1", "cos(2*pi*x1)", 128, 1.0).unwrap();
    assert!((p.c_eq + f64::ln(i0)).abs() < 1e-6, "{}", p.c_eq);
}

#[test]
fn simulation_conserves_mass_and_dissipates() {
    let run = run_simulation("1", "1", "cos(2*pi*x1)", "1", 64, 0.5, 10).unwrap();
    assert!(run.times.len() >= 2);
    assert_eq!(run.frames.len(), run.times.len() * 64);
    let m0 = run.mass[0];
    assert!(run.mass.iter().all(|m| (m - m0).abs() < 1e-12));
    assert!(run.energy.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn heat_bound_uses_only_the_w_term() {
    let b = problem_time_bound("1", "1", "0", "1", 32).unwrap();
    assert_eq!(b.v_norm, 0.0);
    let expected = (b.mu.min(1.0) / 2.0).min(f64::ln(2.0).sqrt()).powi(2);
    assert_eq!(b.t, expected);
}

#[test]
fn bad_input_is_reported() {
    assert!(run_simulation("1", "-1", "0", "1", 32, 0.1, 4).unwrap_err().contains("A4"));
    assert!(equilibrium_profile("1 +", "0", 32, 1.0).is_err());
    assert!(equilibrium_profile("1", "0", 2, 1.0).is_err());
}
