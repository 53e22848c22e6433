//! The invariant suite behind `chemo verify`: a-priori bounds, homogeneous
//! reduction to the ODE model, mass conservation of pure diffusion, and the
//! adjoint gradient against finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use chemo_core::analysis::{check_bounds, mass};
use chemo_core::control::{gradient_adjoint, penalized_cost};
use chemo_core::linalg::CgOptions;
use chemo_core::presets::random_1d;
use chemo_core::{
    ode_integrate, simulate, KineticsMode, OdeState, OdeSystem, OdeTrajectory, Scenario64, Scheme,
    SimOptions, Species,
};

use crate::error::{CliResult, Context};
use crate::spec::ScenarioFile;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// The measured quantity compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
}

pub struct VerifyOutput {
    pub report: VerifyReport,
    /// Reference ODE trajectory of the reduction check, if it ran.
    pub ode: Option<OdeTrajectory<f64>>,
}

pub fn run_verify(
    file: &ScenarioFile,
    scenario: &Scenario64,
    seed: u64,
) -> CliResult<VerifyOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = vec![bounds_check(file, scenario, &mut rng)?];
    let (reduction, ode) = reduction_check(file, scenario)?;
    checks.push(reduction);
    checks.push(mass_check(file, scenario)?);
    checks.push(gradient_check(file, scenario, &mut rng)?);
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyOutput {
        report: VerifyReport { seed, pass, checks },
        ode,
    })
}

fn bounds_check(
    file: &ScenarioFile,
    scenario: &Scenario64,
    rng: &mut ChaCha8Rng,
) -> CliResult<Check> {
    let v = &file.verify;
    let mut runs = Vec::new();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let mut record =
        |label: String, sc: &Scenario64, t_end: f64, opts: &SimOptions<f64>| -> CliResult<()> {
            let traj = simulate(sc, t_end, opts).context(format!("bounds check on {label}"))?;
            let rep = check_bounds(&traj, sc);
            for s in &rep.species {
                worst = worst.max(s.max / s.c1);
            }
            pass &= rep.pass();
            runs.push(json!({ "scenario": label, "pass": rep.pass(), "species": rep.species }));
            Ok(())
        };
    record("input".into(), scenario, file.horizon, &file.sim_options())?;
    for k in 0..v.random_scenarios {
        let sc: Scenario64 = random_1d(rng, v.random_cells).context("random scenario")?;
        record(
            format!("random-{k}"),
            &sc,
            v.random_t_end,
            &SimOptions::default().every(v.random_t_end / 4.0),
        )?;
    }
    Ok(Check {
        name: "bounds".into(),
        pass,
        value: worst,
        threshold: 1.0 + chemo_core::analysis::C1_RELATIVE_SLACK,
        detail: json!(runs),
    })
}

fn reduction_check(
    file: &ScenarioFile,
    scenario: &Scenario64,
) -> CliResult<(Check, Option<OdeTrajectory<f64>>)> {
    let v = &file.verify;
    if scenario.kinetics == KineticsMode::Disabled {
        return Ok((
            Check {
                name: "ode_reduction".into(),
                pass: true,
                value: 0.0,
                threshold: v.reduction_tol,
                detail: json!("skipped: kinetics disabled"),
            },
            None,
        ));
    }
    let uniform = scenario.homogenized();
    let n = uniform.cells();
    let opts = SimOptions::default()
        .with_dt(v.reduction_dt)
        .every(v.reduction_dt * 10.0);
    let pde = simulate(&uniform, v.reduction_t_end, &opts).context("reduction check (grid)")?;
    let s_field = uniform.sources.s.clone();
    let v_field = uniform.sources.v.clone();
    let system = OdeSystem::new(
        uniform.params,
        move |t| s_field.mean_at(t, n),
        move |t| v_field.mean_at(t, n),
    )
    .with_cutoff(true);
    let ode = ode_integrate(
        OdeState::new(0.0, uniform.initial.point(0)),
        v.reduction_t_end,
        v.reduction_dt,
        &system,
    )
    .context("reduction check (ODE)")?;
    let mut worst: f64 = 0.0;
    for (t, st) in pde.times.iter().zip(&pde.states) {
        let r = ode.sample(*t);
        for sp in Species::ALL {
            for &x in &st[sp] {
                worst = worst.max((x - r[sp]).abs());
            }
        }
    }
    Ok((
        Check {
            name: "ode_reduction".into(),
            pass: worst < v.reduction_tol,
            value: worst,
            threshold: v.reduction_tol,
            detail: json!({ "dt": v.reduction_dt, "t_end": v.reduction_t_end }),
        },
        Some(ode),
    ))
}

fn mass_check(file: &ScenarioFile, scenario: &Scenario64) -> CliResult<Check> {
    let v = &file.verify;
    let pure = scenario.clone().with_kinetics(KineticsMode::Disabled);
    let opts = SimOptions {
        scheme: Scheme::Imex,
        dt: Some(v.mass_dt),
        cg: CgOptions {
            tol: 1e-12,
            max_iter: file.solver.cg_max_iter,
        },
        snapshot_every: Some(v.mass_dt * v.mass_steps as f64 / 10.0),
    };
    let t_end = v.mass_dt * v.mass_steps as f64;
    let traj = simulate(&pure, t_end, &opts).context("mass conservation check")?;
    let mut worst: f64 = 0.0;
    let mut drifts = Vec::new();
    for sp in Species::ALL {
        let m0 = mass(&pure.initial[sp], &pure.grid);
        let d = traj
            .mass_series(sp)
            .iter()
            .map(|m| {
                if m0 == 0.0 {
                    m.abs()
                } else {
                    ((m - m0) / m0).abs()
                }
            })
            .fold(0.0, f64::max);
        worst = worst.max(d);
        drifts.push(json!({ "species": sp, "relative_drift": d }));
    }
    Ok(Check {
        name: "mass_conservation".into(),
        pass: worst < v.mass_tol,
        value: worst,
        threshold: v.mass_tol,
        detail: json!({ "steps": traj.steps, "dt": v.mass_dt, "species": drifts }),
    })
}

fn gradient_check(
    file: &ScenarioFile,
    scenario: &Scenario64,
    rng: &mut ChaCha8Rng,
) -> CliResult<Check> {
    let v = &file.verify;
    let mut spec = file.clone();
    spec.control.slabs = v.gradient_slabs;
    let problem = spec.control_problem(scenario)?.with_cg(CgOptions {
        tol: 1e-14,
        max_iter: 5000,
    });
    let eps = *file.control.eps_schedule.last().unwrap_or(&1e-3);
    let base = file.control.initial_v.clamp(0.0, problem.v_max);
    let mut sched = problem.constant_schedule(base);
    for x in &mut sched.values {
        *x = (*x * rng.gen_range(0.5..1.5)).min(problem.v_max);
    }
    let grad = gradient_adjoint(&problem, &sched, eps).context("gradient check (adjoint)")?;
    let h = v.gradient_h;
    let mut worst: f64 = 0.0;
    let mut dirs = Vec::new();
    for _ in 0..v.gradient_directions {
        let dir: Vec<f64> = (0..sched.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shifted = |s: f64| -> CliResult<f64> {
            let mut w = sched.clone();
            w.values.iter_mut().zip(&dir).for_each(|(x, d)| *x += s * d);
            Ok(penalized_cost(&problem, &w, eps)
                .context("gradient check (differences)")?
                .total)
        };
        let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
        let ad: f64 = grad.values.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let rel = (fd - ad).abs() / ad.abs().max(1e-300);
        worst = worst.max(rel);
        dirs.push(json!({ "adjoint": ad, "difference": fd, "relative_error": rel }));
    }
    Ok(Check {
        name: "gradient".into(),
        pass: worst < v.gradient_tol,
        value: worst,
        threshold: v.gradient_tol,
        detail: json!({ "slabs": problem.slabs, "steps": problem.steps(), "eps": eps, "directions": dirs }),
    })
}
