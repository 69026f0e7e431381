//! The four subcommands: trajectory CSV, conservation report, section-map
//! batch, and scenario self-checks.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;

use affine_rolling::dynamics::{
    chaplygin_rhs_array, integrate_chaplygin, integrate_full, integrate_homsphere,
    integrate_reduced_v0, momentum_from_omega, mparallel_rhs, omega_from_momentum,
    reduced_rhs_v0_array, FullState, ReducedState, ScenarioParams, SphereReducedState,
};
use affine_rolling::invariants::{
    chaplygin_w0_measure_density, homsphere_integrals, j_integrals, moving_energy,
    mparallel_measure_density, mparallel_regime, revolution_measure_density, solve_yy,
    spatial_momentum, EnergyVariant,
};
use affine_rolling::ode::Trajectory;
use affine_rolling::poincare::{
    andoyer_to_state, balanced_section_map, balanced_seed_from_levels, homsphere_section_map,
    homsphere_seed_from_levels, state_to_andoyer, SectionSpec,
};
use affine_rolling::{Vec3};

use crate::error::CliError;
use crate::output::{write_csv, write_scatter_svg};
use crate::scenario::{
    attitude_from_gamma, balanced_seed_grid, homsphere_seed_grid, PlaneSpec,
    Scenario, SurfaceSpec, SystemKind,
};

/// Command-line overrides applied on top of the scenario file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub t_max: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub seeds: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub svg: bool,
}

impl Overrides {
    fn apply(&self, sc: &Scenario) -> Scenario {
        let mut sc = sc.clone();
        if let Some(t) = self.t_max {
            sc.integrator.t_max = t;
            sc.section.t_max = t;
        }
        if let Some(r) = self.rtol {
            sc.integrator.rtol = r;
        }
        if let Some(a) = self.atol {
            sc.integrator.atol = a;
        }
        if let Some(s) = self.seeds {
            sc.section.seeds = s;
        }
        sc
    }
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    match out {
        Some(path) => {
            let f = std::fs::File::create(path)
                .map_err(|e| CliError::Config(format!("cannot create {}: {e}", path.display())))?;
            Ok(Box::new(std::io::BufWriter::new(f)))
        }
        None => Ok(Box::new(std::io::BufWriter::new(std::io::stdout()))),
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn simulate(sc: &Scenario, ov: &Overrides) -> Result<(), CliError> {
    let sc = ov.apply(sc);
    let params = sc.build_params()?;
    let opts = sc.step_opts();
    let span = (0.0, sc.integrator.t_max);
    let mut out = open_out(&ov.out)?;
    match sc.system_kind() {
        SystemKind::Sphere6 => {
            let s0 = sc.initial_reduced(&params)?;
            let traj = integrate_chaplygin(&params, &s0, span, opts).map_err(CliError::numerical)?;
            emit_reduced(&mut out, &traj)
        }
        SystemKind::Revolution6 => {
            let s0 = sc.initial_reduced(&params)?;
            let traj =
                integrate_reduced_v0(&params, &s0, span, opts).map_err(CliError::numerical)?;
            emit_reduced(&mut out, &traj)
        }
        SystemKind::Homsphere9 => {
            let s0 = sc.initial_homsphere(&params)?;
            let traj =
                integrate_homsphere(&params, &s0, span, opts).map_err(CliError::numerical)?;
            write_csv(
                &mut out,
                &["time", "M1", "M2", "M3", "g1", "g2", "g3", "U1", "U2", "U3"],
                traj.times.iter().zip(traj.states.iter()).map(|(t, y)| {
                    let mut row = vec![*t];
                    row.extend_from_slice(y);
                    row
                }),
            )
        }
        SystemKind::Full15 => {
            let s0 = sc.initial_full(&params)?;
            let traj = integrate_full(&params, &s0, span, opts).map_err(CliError::numerical)?;
            write_csv(
                &mut out,
                &["time", "M1", "M2", "M3", "g1", "g2", "g3", "u1", "u2", "u3"],
                traj.times.iter().zip(traj.states.iter()).map(|(t, y)| {
                    let s = FullState::from_array(y);
                    let g = s.b.gamma();
                    vec![*t, s.m.x, s.m.y, s.m.z, g.x, g.y, g.z, s.u.x, s.u.y, s.u.z]
                }),
            )
        }
    }
    .map_err(|e| CliError::Config(format!("writing output: {e}")))
}

fn emit_reduced(out: &mut dyn Write, traj: &Trajectory<6>) -> std::io::Result<()> {
    write_csv(
        out,
        &["time", "M1", "M2", "M3", "g1", "g2", "g3"],
        traj.times.iter().zip(traj.states.iter()).map(|(t, y)| {
            let mut row = vec![*t];
            row.extend_from_slice(y);
            row
        }),
    )
}

// ---------------------------------------------------------------------------
// invariants
// ---------------------------------------------------------------------------

struct Row {
    name: &'static str,
    initial: f64,
    drift: f64,
    tolerance: f64,
}

/// `max |v - v0| / max(|v0|, scale)`: the scale argument keeps rows for
/// integrals whose level happens to be 0 (such as `<M, gamma>` on the
/// section levels) meaningful by comparing against the natural magnitude of
/// the quantity instead of an absolute epsilon.
fn drift_against(values: &[f64], scale: f64) -> f64 {
    let v0 = values[0];
    let denom = v0.abs().max(scale).max(1e-12);
    values
        .iter()
        .fold(0.0_f64, |acc, v| acc.max((v - v0).abs()))
        / denom
}

pub fn invariants(sc: &Scenario, ov: &Overrides) -> Result<(), CliError> {
    let sc = ov.apply(sc);
    let params = sc.build_params()?;
    let opts = sc.step_opts();
    let span = (0.0, sc.integrator.t_max);
    let mut rows: Vec<Row> = Vec::new();

    match sc.system_kind() {
        SystemKind::Sphere6 => {
            let s0 = sc.initial_reduced(&params)?;
            let traj = integrate_chaplygin(&params, &s0, span, opts).map_err(CliError::numerical)?;
            let states: Vec<ReducedState> =
                traj.states.iter().map(ReducedState::from_array).collect();
            let m0 = states[0].m.norm();
            push_series(&mut rows, "norm_M_squared", &states, |s| s.m.norm_squared(), 1e-9, 0.0);
            push_series(&mut rows, "M_dot_gamma", &states, |s| s.m.dot(&s.gamma), 1e-9, m0);
        }
        SystemKind::Revolution6 => {
            let s0 = sc.initial_reduced(&params)?;
            let traj =
                integrate_reduced_v0(&params, &s0, span, opts).map_err(CliError::numerical)?;
            let states: Vec<ReducedState> =
                traj.states.iter().map(ReducedState::from_array).collect();
            let variant = match sc.fields.w {
                SurfaceSpec::None => EnergyVariant::Translation,
                SurfaceSpec::CatsToy { .. } => EnergyVariant::Axisymmetric,
            };
            let energies: Result<Vec<f64>, _> = states
                .iter()
                .map(|s| moving_energy(&params, &embed_reduced(&params, s), variant))
                .collect();
            let energies = energies.map_err(CliError::numerical)?;
            rows.push(Row {
                name: "E_mov",
                initial: energies[0],
                drift: drift_against(&energies, 1.0),
                tolerance: 1e-8,
            });
            let profile = params.shape.profile().expect("revolution body").clone();
            let table = solve_yy(&profile, &params).map_err(CliError::numerical)?;
            for (idx, name) in [(0usize, "J1"), (1usize, "J2")] {
                let series: Result<Vec<f64>, _> = states
                    .iter()
                    .map(|s| j_integrals(&table, &params, s).map(|j| [j.0, j.1][idx]))
                    .collect();
                let series = series.map_err(CliError::numerical)?;
                rows.push(Row {
                    name,
                    initial: series[0],
                    drift: drift_against(&series, 1.0),
                    tolerance: 1e-6,
                });
            }
        }
        SystemKind::Homsphere9 => {
            let s0 = sc.initial_homsphere(&params)?;
            let traj =
                integrate_homsphere(&params, &s0, span, opts).map_err(CliError::numerical)?;
            let series: Result<Vec<(f64, f64, f64)>, _> = traj
                .states
                .iter()
                .map(|y| homsphere_integrals(&params, &SphereReducedState::from_array(y)))
                .collect();
            let series = series.map_err(CliError::numerical)?;
            let g2: Vec<f64> = series.iter().map(|v| v.0).collect();
            let f: Vec<f64> = series.iter().map(|v| v.1).collect();
            let e: Vec<f64> = series.iter().map(|v| v.2).collect();
            let m0 = g2[0].sqrt();
            rows.push(Row {
                name: "G_squared",
                initial: g2[0],
                drift: drift_against(&g2, 0.0),
                tolerance: 1e-9,
            });
            rows.push(Row {
                name: "M_dot_gamma",
                initial: f[0],
                drift: drift_against(&f, m0),
                tolerance: 1e-9,
            });
            rows.push(Row {
                name: "E_mov",
                initial: e[0],
                drift: drift_against(&e, 1.0),
                tolerance: 1e-8,
            });
        }
        SystemKind::Full15 => {
            let s0 = sc.initial_full(&params)?;
            let traj = integrate_full(&params, &s0, span, opts).map_err(CliError::numerical)?;
            let states: Vec<FullState> = traj.states.iter().map(FullState::from_array).collect();
            if params.shape.is_sphere() {
                let m0 = states[0].m.norm();
                for (w, name) in [
                    (Vec3::x(), "M_spatial_x"),
                    (Vec3::y(), "M_spatial_y"),
                    (Vec3::z(), "M_spatial_z"),
                ] {
                    push_series(&mut rows, name, &states, |s| spatial_momentum(s, &w), 1e-9, m0);
                }
            }
            if let Some(variant) = full_energy_variant(&sc) {
                let energies: Result<Vec<f64>, _> = states
                    .iter()
                    .map(|s| moving_energy(&params, s, variant))
                    .collect();
                let energies = energies.map_err(CliError::numerical)?;
                rows.push(Row {
                    name: "E_mov",
                    initial: energies[0],
                    drift: drift_against(&energies, 1.0),
                    tolerance: 1e-8,
                });
            }
        }
    }

    if rows.is_empty() {
        return Err(CliError::Config(
            "no first integrals are known for this body/field combination".into(),
        ));
    }
    let mut out = open_out(&ov.out)?;
    writeln!(out, "name,initial,drift,tolerance,pass")
        .map_err(|e| CliError::Config(format!("writing output: {e}")))?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.name,
            r.initial,
            r.drift,
            r.tolerance,
            if r.drift < r.tolerance { "pass" } else { "fail" }
        )
        .map_err(|e| CliError::Config(format!("writing output: {e}")))?;
    }
    Ok(())
}

fn push_series<S>(
    rows: &mut Vec<Row>,
    name: &'static str,
    states: &[S],
    f: impl Fn(&S) -> f64,
    tolerance: f64,
    scale: f64,
) {
    let values: Vec<f64> = states.iter().map(f).collect();
    rows.push(Row {
        name,
        initial: values[0],
        drift: drift_against(&values, scale),
        tolerance,
    });
}

/// Embeds a reduced `(M, gamma)` state into the full phase space (the moving
/// energies below depend on the extra coordinates only through `gamma`).
fn embed_reduced(params: &ScenarioParams, s: &ReducedState) -> FullState {
    let b = attitude_from_gamma(&s.gamma).expect("unit gamma");
    let u3 = affine_rolling::dynamics::holonomic_u3(&params.shape, &s.gamma);
    FullState {
        m: s.m,
        b,
        u: Vec3::new(0.0, 0.0, u3),
    }
}

fn full_energy_variant(sc: &Scenario) -> Option<EnergyVariant> {
    let axisym = match sc.body {
        crate::scenario::BodySpec::BalancedSphere { i1, i2, .. } => (i1 - i2).abs() < 1e-9,
        crate::scenario::BodySpec::HomogeneousSphere { .. } => true,
        crate::scenario::BodySpec::Revolution { .. } => true,
    };
    match (&sc.fields.v, &sc.fields.w) {
        (PlaneSpec::Rotating { .. }, SurfaceSpec::None) => Some(EnergyVariant::RotatingPlane),
        (PlaneSpec::Constant { .. }, SurfaceSpec::None) => Some(EnergyVariant::Translation),
        (PlaneSpec::Constant { .. }, SurfaceSpec::CatsToy { .. }) if axisym => {
            Some(EnergyVariant::Axisymmetric)
        }
        (PlaneSpec::Rotating { .. }, SurfaceSpec::CatsToy { .. }) if axisym => {
            Some(EnergyVariant::General)
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// poincare
// ---------------------------------------------------------------------------

struct SeedOutcome {
    label: String,
    /// `(x, y, t)` rows in crossing order.
    rows: Vec<(f64, f64, f64)>,
    summary: String,
    failed: bool,
}

pub fn poincare(sc: &Scenario, ov: &Overrides) -> Result<(), CliError> {
    let sc = ov.apply(sc);
    let params = sc.build_params()?;
    let n_seeds = sc.section.seeds.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ov.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;

    let (header, outcomes): (&[&str], Vec<SeedOutcome>) = match sc.system_kind() {
        SystemKind::Sphere6 => {
            let eps = sc.section.epsilon.ok_or_else(|| {
                CliError::Config("balanced-sphere sections need section.epsilon".into())
            })?;
            let grid = balanced_seed_grid(n_seeds);
            let outcomes = pool.install(|| {
                grid.par_iter()
                    .enumerate()
                    .map(|(k, (l, c))| run_balanced_seed(&sc, &params, eps, k, *l, *c))
                    .collect()
            });
            (&["l", "L_over_G", "t"], outcomes)
        }
        SystemKind::Homsphere9 => {
            let e_mov = sc.section.e_mov.ok_or_else(|| {
                CliError::Config("homogeneous-sphere sections need section.e_mov".into())
            })?;
            let big_g = 2.0;
            let grid = homsphere_seed_grid(n_seeds, big_g);
            let outcomes = pool.install(|| {
                grid.par_iter()
                    .enumerate()
                    .map(|(k, big_l)| run_homsphere_seed(&sc, &params, big_g, e_mov, k, *big_l))
                    .collect()
            });
            (&["s2", "L", "t"], outcomes)
        }
        _ => {
            return Err(CliError::Config(
                "no section chart is defined for this scenario".into(),
            ))
        }
    };

    for o in &outcomes {
        eprintln!("{}: {}", o.label, o.summary);
    }
    if outcomes.iter().all(|o| o.failed) {
        return Err(CliError::Numerical("every seed failed".into()));
    }

    let mut out = open_out(&ov.out)?;
    write_csv(
        &mut out,
        header,
        outcomes
            .iter()
            .flat_map(|o| o.rows.iter().map(|(x, y, t)| vec![*x, *y, *t])),
    )
    .map_err(|e| CliError::Config(format!("writing output: {e}")))?;
    drop(out);

    if ov.svg {
        let Some(csv_path) = &ov.out else {
            return Err(CliError::Config("--svg requires --out".into()));
        };
        let points: Vec<(f64, f64)> = outcomes
            .iter()
            .flat_map(|o| o.rows.iter().map(|(x, y, _)| (*x, *y)))
            .collect();
        write_scatter_svg(&csv_path.with_extension("svg"), &points, header[0], header[1])
            .map_err(|e| CliError::Config(format!("writing svg: {e}")))?;
    }
    Ok(())
}

fn run_balanced_seed(
    sc: &Scenario,
    params: &ScenarioParams,
    eps: f64,
    k: usize,
    l: f64,
    c: f64,
) -> SeedOutcome {
    let label = format!("seed {k:02}");
    let fail = |msg: String| SeedOutcome {
        label: label.clone(),
        rows: Vec::new(),
        summary: msg,
        failed: true,
    };
    let seed = match balanced_seed_from_levels(params, eps, l, c) {
        Ok(s) => s,
        Err(e) => return fail(format!("seeding failed: {e}")),
    };
    let run = match balanced_section_map(
        params,
        &SectionSpec::balanced_sphere(),
        &seed,
        sc.section.crossings,
        sc.section.t_max,
        sc.step_opts(),
    ) {
        Ok(r) => r,
        Err(e) => return fail(format!("section map failed: {e}")),
    };
    let g0 = seed.m.norm();
    let g_series: Vec<f64> = run
        .events
        .iter()
        .map(|e| ReducedState::from_array(&e.state).m.norm_squared())
        .collect();
    let f_series: Vec<f64> = run
        .events
        .iter()
        .map(|e| {
            let s = ReducedState::from_array(&e.state);
            s.m.dot(&s.gamma)
        })
        .collect();
    let g_drift = drift_against(&g_series, 0.0);
    let f_drift = drift_against(&f_series, g0);
    SeedOutcome {
        label,
        rows: run
            .events
            .iter()
            .map(|e| (e.coords.0, e.coords.1, e.time))
            .collect(),
        summary: format!(
            "{} crossings, G^2 drift {g_drift:.3e}, <M,gamma> drift {f_drift:.3e}",
            run.events.len()
        ),
        failed: false,
    }
}

fn run_homsphere_seed(
    sc: &Scenario,
    params: &ScenarioParams,
    big_g: f64,
    e_mov: f64,
    k: usize,
    big_l: f64,
) -> SeedOutcome {
    let label = format!("seed {k:02}");
    let fail = |msg: String| SeedOutcome {
        label: label.clone(),
        rows: Vec::new(),
        summary: msg,
        failed: true,
    };
    let seed = match homsphere_seed_from_levels(
        params,
        big_g,
        e_mov,
        big_l,
        0.0,
        std::f64::consts::FRAC_PI_4,
        0.0,
        (0.0, sc.section.s1_max),
    ) {
        Ok(s) => s,
        Err(e) => return fail(format!("seeding failed: {e}")),
    };
    let run = match homsphere_section_map(
        params,
        &SectionSpec::homogeneous_sphere(),
        &seed,
        sc.section.crossings,
        sc.section.t_max,
        sc.step_opts(),
    ) {
        Ok(r) => r,
        Err(e) => return fail(format!("section map failed: {e}")),
    };
    let series: Vec<(f64, f64, f64)> = run
        .events
        .iter()
        .filter_map(|e| {
            homsphere_integrals(params, &SphereReducedState::from_array(&e.state)).ok()
        })
        .collect();
    let g2: Vec<f64> = series.iter().map(|v| v.0).collect();
    let e_series: Vec<f64> = series.iter().map(|v| v.2).collect();
    let g_drift = drift_against(&g2, 0.0);
    let e_drift = drift_against(&e_series, 1.0);
    SeedOutcome {
        label,
        rows: run
            .events
            .iter()
            .map(|e| (e.coords.0, e.coords.1, e.time))
            .collect(),
        summary: format!(
            "{} crossings, G^2 drift {g_drift:.3e}, E_mov drift {e_drift:.3e}",
            run.events.len()
        ),
        failed: false,
    }
}

// ---------------------------------------------------------------------------
// selfcheck
// ---------------------------------------------------------------------------

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

pub fn selfcheck(sc: &Scenario, ov: &Overrides) -> Result<(), CliError> {
    let sc = ov.apply(sc);
    let mut checks: Vec<Check> = Vec::new();

    let params = match sc.build_params() {
        Ok(p) => Some(p),
        Err(e) => {
            let msg = e.to_string();
            if msg.contains("shape ODE") {
                // an inconsistent profile is a self-check finding, not a
                // malformed file
                checks.push(Check {
                    name: "shape_ode_residual",
                    pass: false,
                    detail: msg,
                });
                None
            } else {
                return Err(e);
            }
        }
    };

    if let Some(params) = &params {
        if let Some(profile) = params.shape.profile() {
            let worst = (0..=100)
                .map(|k| -1.0 + 0.02 * k as f64)
                .map(|g3| profile.shape_ode_residual(g3).abs())
                .fold(0.0_f64, f64::max);
            checks.push(Check {
                name: "shape_ode_residual",
                pass: worst < 1e-9,
                detail: format!("max residual {worst:.3e} on a 101-point grid"),
            });
        }
        if matches!(sc.fields.w, SurfaceSpec::CatsToy { .. }) {
            checks.push(tangency_check(params));
        }
        checks.push(inversion_check(params));
        match sc.system_kind() {
            SystemKind::Homsphere9 => checks.push(sphere_chart_check(params)),
            _ => checks.push(andoyer_chart_check()),
        }
        if let Some(check) = liouville_check(&sc, params) {
            checks.push(check);
        }
    }

    let mut failures = 0;
    for c in &checks {
        if c.pass {
            println!("{}: PASS ({})", c.name, c.detail);
        } else {
            println!("{}: FAIL ({})", c.name, c.detail);
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::SelfCheck(format!("{failures} check(s) failed")));
    }
    Ok(())
}

/// Deterministic low-discrepancy directions (spherical Fibonacci lattice).
fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
    (0..n)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (k as f64 / golden).fract();
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

fn tangency_check(params: &ScenarioParams) -> Check {
    let mut worst = 0.0_f64;
    for gamma in fibonacci_sphere(100) {
        let rho = params.shape.rho(&gamma);
        let w = params.surface.eval_body(&rho);
        let denom = (w.norm() * rho.norm()).max(1e-12);
        worst = worst.max(w.dot(&rho).abs() / denom);
    }
    Check {
        name: "cats_toy_tangency",
        pass: worst < 1e-10,
        detail: format!("max |<W, rho>| / (|W||rho|) = {worst:.3e}"),
    }
}

fn inversion_check(params: &ScenarioParams) -> Check {
    let mut worst = 0.0_f64;
    for (k, gamma) in fibonacci_sphere(200).into_iter().enumerate() {
        let b = match attitude_from_gamma(&gamma) {
            Ok(b) => b,
            Err(e) => {
                return Check {
                    name: "momentum_inversion",
                    pass: false,
                    detail: e.to_string(),
                }
            }
        };
        let t = k as f64;
        let u = Vec3::new((0.3 * t).sin(), (0.7 * t).cos(), 0.0);
        let omega = 3.0 * Vec3::new((1.1 * t).sin(), (2.3 * t).cos(), (3.7 * t).sin());
        let m = momentum_from_omega(params, &b, &u, &omega);
        match omega_from_momentum(params, &b, &u, &m) {
            Ok(back) => {
                worst = worst.max((back - omega).norm() / omega.norm().max(1.0));
            }
            Err(e) => {
                return Check {
                    name: "momentum_inversion",
                    pass: false,
                    detail: e.to_string(),
                }
            }
        }
    }
    Check {
        name: "momentum_inversion",
        pass: worst < 1e-12,
        detail: format!("max round-trip error {worst:.3e} over 200 states"),
    }
}

fn andoyer_chart_check() -> Check {
    let mut worst = 0.0_f64;
    for k in 0..200 {
        let t = k as f64;
        let big_g = 0.5 + 0.05 * t;
        let big_l = big_g * 0.95 * (0.9 * t).sin();
        let (l, g) = ((1.3 * t).sin() * 3.0, (0.7 * t).cos() * 3.0);
        let state = match andoyer_to_state(big_l, big_g, l, g) {
            Ok(s) => s,
            Err(e) => {
                return Check {
                    name: "chart_round_trip",
                    pass: false,
                    detail: e.to_string(),
                }
            }
        };
        match state_to_andoyer(&state) {
            Ok((l2, g2, al, ag)) => {
                worst = worst
                    .max((l2 - big_l).abs() / big_g)
                    .max((g2 - big_g).abs() / big_g)
                    .max((al - l).sin().abs())
                    .max((ag - g).sin().abs());
            }
            Err(e) => {
                return Check {
                    name: "chart_round_trip",
                    pass: false,
                    detail: e.to_string(),
                }
            }
        }
    }
    Check {
        name: "chart_round_trip",
        pass: worst < 1e-10,
        detail: format!("max Andoyer round-trip error {worst:.3e}"),
    }
}

fn sphere_chart_check(params: &ScenarioParams) -> Check {
    let radius = params.shape.radius().expect("spherical body");
    let mut worst = 0.0_f64;
    for k in 0..200 {
        let t = k as f64;
        let big_g = 0.5 + 0.01 * t;
        let big_l = big_g * 0.9 * (0.9 * t).sin();
        let g = 1.2 * (0.7 * t).cos();
        let (l, s1, s2) = ((1.3 * t).sin() * 3.0, 2.0 * (0.4 * t).sin(), 2.0 * (0.6 * t).cos());
        let state = match affine_rolling::poincare::homsphere_invariants_to_state(
            big_l, s1, s2, big_g, 0.0, g, l, radius,
        ) {
            Ok(s) => s,
            Err(_) => continue, // skip samples near the chart boundary
        };
        match affine_rolling::poincare::homsphere_state_to_invariants(&state) {
            Ok((l2, s1b, s2b, g2, f, ag)) => {
                worst = worst
                    .max((l2 - big_l).abs())
                    .max((s1b - s1).abs())
                    .max((s2b - s2).abs())
                    .max((g2 - big_g).abs())
                    .max(f.abs())
                    .max((ag - g).sin().abs());
            }
            Err(e) => {
                return Check {
                    name: "chart_round_trip",
                    pass: false,
                    detail: e.to_string(),
                }
            }
        }
    }
    Check {
        name: "chart_round_trip",
        pass: worst < 1e-10,
        detail: format!("max invariant-chart round-trip error {worst:.3e}"),
    }
}

/// Finite-difference Liouville check of the invariant-measure density that
/// applies to the scenario, if any.
fn liouville_check(sc: &Scenario, params: &ScenarioParams) -> Option<Check> {
    match (sc.system_kind(), &sc.fields.w) {
        (SystemKind::Sphere6, SurfaceSpec::CatsToy { sigma }) => {
            Some(mparallel_liouville(params, *sigma))
        }
        (SystemKind::Sphere6, SurfaceSpec::None) => Some(liouville6(
            params,
            "w0_measure_liouville",
            |p, y| chaplygin_rhs_array(p, y),
            |p, g| chaplygin_w0_measure_density(p, g).expect("sphere"),
        )),
        (SystemKind::Revolution6, _) => {
            let profile = params.shape.profile().expect("revolution body").clone();
            Some(liouville6(
                params,
                "revolution_measure_liouville",
                |p, y| reduced_rhs_v0_array(p, y),
                move |p, g| revolution_measure_density(&profile, p, g.z).recip(),
            ))
        }
        _ => None,
    }
}

/// Residual of `div(rho X) = 0` for the vertical-momentum sphere flow on
/// `S^2`, checked by central differences.
fn mparallel_liouville(params: &ScenarioParams, sigma: f64) -> Check {
    let name = "mparallel_measure_liouville";
    let radius = params.shape.radius().expect("spherical body");
    let mr2 = params.shape.mass() * radius * radius;
    // pick lambda well inside whichever regime the threshold allows
    let threshold = match mparallel_regime(params, 1.0) {
        Ok((_, th)) => th,
        Err(e) => {
            return Check {
                name,
                pass: false,
                detail: e.to_string(),
            }
        }
    };
    let lambda = mr2 * sigma.abs() * (2.0 * threshold).max(0.5);
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for gamma in fibonacci_sphere(60) {
        if gamma.z.abs() > 0.95 {
            continue;
        }
        let x = match mparallel_rhs(params, lambda, &gamma) {
            Ok(x) => x,
            Err(e) => {
                return Check {
                    name,
                    pass: false,
                    detail: e.to_string(),
                }
            }
        };
        let dens =
            |g: &Vec3| mparallel_measure_density(params, lambda, g).expect("sphere with cat's toy");
        let mut jac = [[0.0_f64; 3]; 3];
        let mut grad = Vec3::zeros();
        for j in 0..3 {
            let mut gp = gamma;
            let mut gm = gamma;
            gp[j] += h;
            gm[j] -= h;
            let fp = mparallel_rhs(params, lambda, &gp).expect("sphere");
            let fm = mparallel_rhs(params, lambda, &gm).expect("sphere");
            for i in 0..3 {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
            }
            grad[j] = (dens(&gp) - dens(&gm)) / (2.0 * h);
        }
        let mut tr = 0.0;
        let mut quad = 0.0;
        for i in 0..3 {
            tr += jac[i][i];
            for j in 0..3 {
                quad += gamma[i] * jac[i][j] * gamma[j];
            }
        }
        let rho = dens(&gamma);
        let residual = grad.dot(&x) + rho * (tr - quad);
        let scale = (rho * x.norm()).max(grad.norm() * x.norm()).max(1.0);
        worst = worst.max(residual.abs() / scale);
    }
    Check {
        name,
        pass: worst < 1e-5,
        detail: format!("max relative residual {worst:.3e}"),
    }
}

/// Finite-difference Liouville residual for a `(M, gamma)` flow with a
/// density depending on `gamma` only: plain divergence in the `M` block plus
/// the spherical divergence in the `gamma` block.
fn liouville6(
    params: &ScenarioParams,
    name: &'static str,
    rhs: impl Fn(&ScenarioParams, &[f64; 6]) -> Result<[f64; 6], affine_rolling::dynamics::DynamicsError>,
    density: impl Fn(&ScenarioParams, &Vec3) -> f64,
) -> Check {
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for (k, gamma) in fibonacci_sphere(40).into_iter().enumerate() {
        if gamma.z.abs() > 0.95 {
            continue;
        }
        let t = k as f64;
        let m = 2.0 * Vec3::new((1.1 * t).sin(), (2.3 * t).cos(), (3.7 * t).sin());
        let y0 = [m.x, m.y, m.z, gamma.x, gamma.y, gamma.z];
        let x = match rhs(params, &y0) {
            Ok(x) => x,
            Err(e) => {
                return Check {
                    name,
                    pass: false,
                    detail: e.to_string(),
                }
            }
        };
        let mut jac = [[0.0_f64; 6]; 6];
        let mut grad = [0.0_f64; 6];
        for j in 0..6 {
            let mut yp = y0;
            let mut ym = y0;
            yp[j] += h;
            ym[j] -= h;
            let fp = match rhs(params, &yp) {
                Ok(f) => f,
                Err(e) => {
                    return Check {
                        name,
                        pass: false,
                        detail: e.to_string(),
                    }
                }
            };
            let fm = rhs(params, &ym).expect("symmetric perturbation");
            for i in 0..6 {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
            }
            grad[j] = (density(params, &Vec3::new(yp[3], yp[4], yp[5]))
                - density(params, &Vec3::new(ym[3], ym[4], ym[5])))
                / (2.0 * h);
        }
        let mut div = jac[0][0] + jac[1][1] + jac[2][2];
        let mut tr = 0.0;
        let mut quad = 0.0;
        for i in 0..3 {
            tr += jac[3 + i][3 + i];
            for j in 0..3 {
                quad += y0[3 + i] * jac[3 + i][3 + j] * y0[3 + j];
            }
        }
        div += tr - quad;
        let rho = density(params, &gamma);
        let mut adv = 0.0;
        let mut xmax = 0.0_f64;
        for i in 0..6 {
            adv += grad[i] * x[i];
            xmax = xmax.max(x[i].abs());
        }
        let residual = adv + rho * div;
        let scale = (rho * xmax).max(1.0);
        worst = worst.max(residual.abs() / scale);
    }
    Check {
        name,
        pass: worst < 1e-5,
        detail: format!("max relative residual {worst:.3e}"),
    }
}
