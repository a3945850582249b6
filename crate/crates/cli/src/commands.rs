use fptorus::equilibrium::{apriori_bounds, equilibrium_state, free_energy};
use fptorus::fvsolver::{simulate_with, DiagnosticsRow};
use fptorus::grid::{integrate, sup_norm};
use fptorus::kernel::{
    build_propagator, fitted_c_gauss, time_ladder, validate_gaussian_bounds, validate_integral_bounds,
    validate_mass_sandwich, IntegralOptions,
};
use fptorus::picard::{
    contraction_ratio, fixed_point_solve, global_solve, time_bound, time_bound_primed, Lattice, PicardSpace,
};
use fptorus::{build_coefficients, validate_assumptions, CoefficientSet, Error, Field, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::output::{num, OutDir};
use crate::run::RunConfig;

/// What a command reports back besides its files.
#[derive(Debug, Default)]
pub struct Summary {
    pub lines: Vec<String>,
    /// Set when the command ran but one of its checks failed.
    pub failed: Option<String>,
}

fn problem(rc: &RunConfig) -> Result<(CoefficientSet, Field)> {
    let c = build_coefficients(&rc.spec)?;
    let f0 = rc.spec.initial_field()?;
    validate_assumptions(&c, &f0, &rc.spec).into_result()?;
    Ok((c, f0))
}

fn c_gauss(rc: &RunConfig, c: &CoefficientSet) -> Result<f64> {
    match rc.c_gauss {
        Some(v) => Ok(v),
        None => fitted_c_gauss(c),
    }
}

pub fn simulate(rc: &RunConfig, out: &OutDir) -> Result<Summary> {
    let (c, f0) = problem(rc)?;
    let (traj, report) = simulate_with(&c, &f0, rc.spec.t_final, &rc.fv)?;
    let header: Vec<&str> = DiagnosticsRow::HEADER.split(',').collect();
    let mut w = out.csv("diagnostics.csv", &header)?;
    for r in &report.rows {
        w.write_record(
            [
                r.t,
                r.mass,
                r.free_energy,
                r.dissipation_rate,
                r.df_dt_numeric,
                r.min_f,
                r.max_f,
                r.linf_to_feq,
            ]
            .map(num),
        )?;
    }
    w.flush()?;
    for (k, (t, f)) in traj.times().iter().zip(traj.frames()).enumerate() {
        out.snapshot(&format!("snapshots/snap_{k:05}.csv"), f, &[format!("t={}", num(*t))])?;
    }
    if !report.warnings.is_empty() {
        std::fs::write(out.path("warnings.txt"), report.warnings.join("\n") + "\n")?;
    }
    let last = report.rows.last().expect("at least one diagnostics row");
    Ok(Summary {
        lines: vec![
            format!("steps = {}, dt = {}", report.steps, num(report.dt)),
            format!(
                "mass drift = {:e}, final distance to equilibrium = {:e}",
                (last.mass - report.rows[0].mass).abs(),
                last.linf_to_feq
            ),
            format!(
                "energy increases = {}, explicit halvings = {}, warnings = {}",
                report.energy_increases,
                report.halvings,
                report.warnings.len()
            ),
        ],
        failed: None,
    })
}

pub fn equilibrium(rc: &RunConfig, out: &OutDir) -> Result<Summary> {
    let (c, f0) = problem(rc)?;
    let eq = equilibrium_state(&c, integrate(&f0), rc.spec.tolerances.root)?;
    let energy = free_energy(&eq.f_eq, &c)?;
    let header = ["C_eq", "mass", "min", "max", "F"];
    let row = [eq.c_eq, eq.mass, eq.f_eq.min(), eq.f_eq.max(), energy].map(num);
    let mut w = out.csv("equilibrium.csv", &header)?;
    w.write_record(&row)?;
    w.flush()?;
    out.snapshot("feq.csv", &eq.f_eq, &[format!("C_eq={}", num(eq.c_eq))])?;
    Ok(Summary {
        lines: vec![header.join(","), row.join(",")],
        failed: None,
    })
}

pub fn bounds(rc: &RunConfig, out: &OutDir) -> Result<Summary> {
    let (c, f0) = problem(rc)?;
    let eq = equilibrium_state(&c, integrate(&f0), rc.spec.tolerances.root)?;
    let ap = apriori_bounds(&f0, &eq, &c)?;
    let mu = rc.spec.mu_for(&f0);
    let norm = sup_norm(&f0);
    let cg = c_gauss(rc, &c)?;
    let r = 1.0 + mu + 2.0 * norm;
    let r_prime = r + 2.0 * ap.big_m;
    let gamma = mu.min(ap.m / 4.0);
    let t = time_bound(mu, norm, cg, c.v_norm, c.w_inf, c.w_sup);
    let t_prime = time_bound_primed(mu, ap.m, r_prime, cg, c.v_norm, c.w_inf, c.w_sup);
    let header = [
        "m", "M", "R", "R_prime", "gamma", "T", "T_prime", "mu", "f0_norm", "c_gauss", "v_norm", "w_inf", "w_sup",
    ];
    let row = [
        ap.m, ap.big_m, r, r_prime, gamma, t, t_prime, mu, norm, cg, c.v_norm, c.w_inf, c.w_sup,
    ]
    .map(num);
    let mut w = out.csv("bounds.csv", &header)?;
    w.write_record(&row)?;
    w.flush()?;
    Ok(Summary {
        lines: vec![header.join(","), row.join(",")],
        failed: None,
    })
}

pub fn picard(rc: &RunConfig, out: &OutDir) -> Result<Summary> {
    let (c, f0) = problem(rc)?;
    let space = PicardSpace::new(
        rc.spec.mu_for(&f0),
        rc.spec.lambda_for(&f0),
        sup_norm(&f0),
        c_gauss(rc, &c)?,
        &c,
        rc.safety,
    )?;
    let (traj, report) = fixed_point_solve(&c, &f0, &space, &rc.picard)?;

    let mut w = out.csv("iterations.csv", &["iteration", "residual", "ratio", "min_f", "max_f"])?;
    for h in &report.history {
        w.write_record([
            h.iteration.to_string(),
            num(h.residual),
            h.ratio.map(num).unwrap_or_default(),
            num(h.min_f),
            num(h.max_f),
        ])?;
    }
    w.flush()?;

    let lattice = Lattice::new(&c, 0.0, space.t, report.n_t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
    let mut w = out.csv("contraction.csv", &["pair", "ratio"])?;
    let mut worst: f64 = 0.0;
    for k in 0..rc.pairs {
        let f = space.random_element(&lattice, &mut rng)?;
        let g = space.random_element(&lattice, &mut rng)?;
        let ratio = contraction_ratio(&c, &f0, &f, &g)?;
        worst = worst.max(ratio);
        w.write_record([k.to_string(), num(ratio)])?;
    }
    w.flush()?;

    let mut w = out.csv("report.csv", &["key", "value"])?;
    let entries = [
        ("T", num(space.t)),
        ("T_formula", num(space.formula_time())),
        ("mu", num(space.mu)),
        ("R", num(space.r)),
        ("c_gauss", num(space.c_gauss)),
        ("iterations", report.iterations.to_string()),
        ("final_residual", num(report.final_residual)),
        ("empirical_contraction", num(report.empirical_contraction)),
        ("worst_pair_ratio", num(worst)),
        ("in_y_every_iterate", report.in_y_every_iterate.to_string()),
        ("n_t", report.n_t.to_string()),
        ("quadrature_change", report.quadrature_change.map(num).unwrap_or_default()),
        ("quadrature_converged", report.quadrature_converged.to_string()),
    ];
    for (k, v) in &entries {
        w.write_record([*k, v.as_str()])?;
    }
    w.flush()?;
    let last = traj.last().expect("fixed point has frames");
    out.snapshot("final.csv", last, &[format!("t={}", num(space.t))])?;
    Ok(Summary {
        lines: vec![
            format!("T = {}, n_t = {}", num(space.t), report.n_t),
            format!(
                "iterations = {}, residual = {:e}, rate = {:e}, worst pair ratio = {:e}",
                report.iterations, report.final_residual, report.empirical_contraction, worst
            ),
        ],
        failed: None,
    })
}

pub fn global(rc: &RunConfig, out: &OutDir) -> Result<Summary> {
    let (c, f0) = problem(rc)?;
    let (traj, plan, report) = global_solve(&c, &f0, rc.spec.t_final, &rc.global)?;
    let mut w = out.csv(
        "windows.csv",
        &["index", "t_start", "t_end", "iterations", "residual", "min_f", "max_f"],
    )?;
    for s in &report.windows {
        w.write_record([
            s.index.to_string(),
            num(s.t_start),
            num(s.t_end),
            s.iterations.to_string(),
            num(s.residual),
            num(s.min_f),
            num(s.max_f),
        ])?;
    }
    w.flush()?;
    let header = ["mu", "m", "M", "R_prime", "gamma", "T_prime", "c_gauss", "num_windows", "window_length"];
    let mut row = [plan.mu, plan.m, plan.big_m, plan.r_prime, plan.gamma, plan.t_prime, plan.c_gauss]
        .map(num)
        .to_vec();
    row.push(plan.num_windows.to_string());
    row.push(num(plan.window_length));
    let mut w = out.csv("plan.csv", &header)?;
    w.write_record(&row)?;
    w.flush()?;
    let mut w = out.csv("seams.csv", &["t", "mass", "min_f", "max_f"])?;
    for (t, f) in traj.times().iter().zip(traj.frames()) {
        w.write_record([*t, integrate(f), f.min(), f.max()].map(num))?;
    }
    w.flush()?;
    out.snapshot(
        "final.csv",
        traj.last().expect("trajectory has frames"),
        &[format!("t={}", num(rc.spec.t_final))],
    )?;
    Ok(Summary {
        lines: vec![
            format!("windows = {} of length {}", plan.num_windows, num(plan.window_length)),
            format!(
                "seams bit-identical = {}, mass drift = {:e}",
                report.seams_bit_identical, report.mass_drift
            ),
        ],
        failed: (!report.seams_bit_identical).then(|| "window seams differ".to_string()),
    })
}

struct Check {
    name: &'static str,
    passed: bool,
    value: f64,
    detail: String,
}

pub fn kernel_validate(rc: &RunConfig, out: &OutDir) -> Result<Summary> {
    let (c, _) = problem(rc)?;
    let mut checks = Vec::new();
    let ladder = time_ladder(&c, 0.0, 1e-3, 3, 1024)?;
    for (name, orders) in [("gaussian_fit", (0, 0)), ("gaussian_fit_gradient", (0, 1))] {
        let fit = validate_gaussian_bounds(&ladder, &c, orders, 1e-3)?;
        checks.push(Check {
            name,
            passed: fit.c_fit.is_finite() && fit.c_fit > 0.0 && fit.c_fit_big.is_finite(),
            value: fit.c_fit,
            detail: format!("c = {}, C = {}, samples = {}", num(fit.c_fit), num(fit.c_fit_big), fit.samples),
        });
    }
    let p = build_propagator(&c, 0.0, 0.05, 500)?;
    let sandwich = validate_mass_sandwich(&p, &c, 1e-6);
    checks.push(Check {
        name: "mass_sandwich",
        passed: sandwich.passed,
        value: sandwich.max_violation,
        detail: format!(
            "row mass in [{}, {}], envelope [{}, {}]",
            num(sandwich.min_row_mass),
            num(sandwich.max_row_mass),
            num(sandwich.lower),
            num(sandwich.upper)
        ),
    });
    let ints = validate_integral_bounds(&rc.spec, &IntegralOptions::standard(rc.spec.beta_declared))?;
    checks.push(Check {
        name: "integral_refinement",
        passed: ints.stable,
        value: ints.drift.iter().copied().fold(0.0, f64::max),
        detail: format!(
            "C1 {} -> {}, C2 {} -> {}, C3 {} -> {}",
            num(ints.coarse.c1),
            num(ints.fine.c1),
            num(ints.coarse.c2),
            num(ints.fine.c2),
            num(ints.coarse.c3),
            num(ints.fine.c3)
        ),
    });
    let horizon = time_ladder(&c, 0.0, 0.75, 2, 8);
    checks.push(Check {
        name: "horizon_rejected",
        passed: matches!(horizon, Err(Error::HorizonExceeded { .. })),
        value: 1.5,
        detail: "t - s = 1.5".into(),
    });

    let mut w = out.csv("checks.csv", &["check", "passed", "value", "detail"])?;
    for ch in &checks {
        w.write_record([ch.name, if ch.passed { "true" } else { "false" }, &num(ch.value), &ch.detail])?;
    }
    w.flush()?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    Ok(Summary {
        lines: checks
            .iter()
            .map(|ch| format!("{}: {} ({})", ch.name, if ch.passed { "pass" } else { "FAIL" }, ch.detail))
            .collect(),
        failed: (!failed.is_empty()).then(|| format!("kernel checks failed: {}", failed.join(", "))),
    })
}
