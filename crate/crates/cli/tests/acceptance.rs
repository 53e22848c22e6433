//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL line;
//! the process exits non-zero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chemo_cli::{load_scenario, Overrides};
use chemo_core::analysis::{check_bounds, mass, tumor_extinction_experiment, ExtinctionOptions};
use chemo_core::control::{
    cost, gradient_adjoint, gradient_fd, optimize, penalized_cost, OptimizeOptions,
};
use chemo_core::linalg::CgOptions;
use chemo_core::pde::{steady_state, SteadyOptions, Stepper};
use chemo_core::presets::{
    canonical_control, canonical_diffusion, random_1d, tumor_free_control, uniform_1d,
};
use chemo_core::*;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn scenario_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    if took < limit {
        Ok(took)
    } else {
        Err(format!("took {took:.1?}, limit {limit:?}"))
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tight() -> CgOptions<f64> {
    CgOptions {
        tol: 1e-14,
        max_iter: 5000,
    }
}

/// Twenty seeded random 1D scenarios stay in `[-1e-9, C1 (1 + 1e-6)]` on `[0, 10]`.
fn positivity_and_bounds() -> Verdict {
    const SCENARIOS: usize = 20;
    const TOL_NEG: f64 = 1e-9;
    const REL_C1: f64 = 1e-6;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut worst_ratio, mut worst_min) = (0.0f64, f64::INFINITY);
    for k in 0..SCENARIOS {
        let sc: Scenario64 = random_1d(&mut rng, 64).map_err(|e| format!("scenario {k}: {e}"))?;
        let traj = simulate(&sc, 10.0, &SimOptions::default().every(0.5))
            .map_err(|e| format!("scenario {k}: {e}"))?;
        let report = check_bounds(&traj, &sc);
        for s in &report.species {
            worst_ratio = worst_ratio.max(s.max / s.c1);
            ensure(s.max <= s.c1 * (1.0 + REL_C1), || {
                format!(
                    "scenario {k}: {} max {} above C1 {}",
                    s.species, s.max, s.c1
                )
            })?;
        }
        for d in &traj.diagnostics {
            let m = d
                .min_before_clamp
                .iter()
                .chain(&d.min)
                .fold(f64::INFINITY, |a, &b| a.min(b));
            worst_min = worst_min.min(m);
            ensure(m >= -TOL_NEG, || {
                format!("scenario {k}: value {m} below zero")
            })?;
        }
    }
    let took = within(Duration::from_secs(60), started)?;
    Ok(format!(
        "max/C1 = {worst_ratio:.6}, min = {worst_min:.3e}, {took:.1?}"
    ))
}

/// Uniform data: the grid solution matches the ODE trajectory to 1e-3 at
/// `dt = 1e-3` and to 1e-4 at `dt = 1e-4` on `[0, 5]`.
fn homogeneous_reduction() -> Verdict {
    let sc: Scenario64 = uniform_1d(8).map_err(|e| e.to_string())?;
    let p = sc.params;
    let gap = |dt: f64| -> Result<f64, String> {
        let pde = simulate(&sc, 5.0, &SimOptions::default().with_dt(dt).every(0.05))
            .map_err(|e| e.to_string())?;
        let sys = OdeSystem::constant_sources(p, 0.2, 0.5).with_cutoff(true);
        let ode = ode_integrate(OdeState::new(0.0, sc.initial.point(0)), 5.0, dt, &sys)
            .map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for (t, st) in pde.times.iter().zip(&pde.states) {
            let r = ode.sample(*t);
            for sp in Species::ALL {
                worst = st[sp].iter().fold(worst, |m, x| m.max((x - r[sp]).abs()));
            }
        }
        Ok(worst)
    };
    let coarse = gap(1e-3)?;
    let fine = gap(1e-4)?;
    ensure(coarse < 1e-3, || {
        format!("dt 1e-3 discrepancy {coarse:.3e} >= 1e-3")
    })?;
    ensure(fine < 1e-4, || {
        format!("dt 1e-4 discrepancy {fine:.3e} >= 1e-4")
    })?;
    Ok(format!(
        "dt 1e-3: {coarse:.3e}, dt 1e-4: {fine:.3e}, ratio {:.2}",
        coarse / fine
    ))
}

/// Pure diffusion keeps every species' integral within 1e-8 relative over 1e4 steps.
fn mass_conservation() -> Verdict {
    const STEPS: usize = 10_000;
    let loaded = load_scenario(&scenario_path("pure_diffusion"), &Overrides::default())
        .map_err(|e| e.to_string())?;
    let sc = loaded.scenario;
    ensure(sc.kinetics == KineticsMode::Disabled, || {
        "scenario has kinetics".into()
    })?;
    let mut stepper = Stepper::new(&sc, Scheme::Imex, tight()).map_err(|e| e.to_string())?;
    let mut state = sc.initial.clone();
    let m0 = Species::ALL.map(|sp| mass(&state[sp], &sc.grid));
    let dt = 1e-3;
    let mut worst = 0.0f64;
    for k in 0..STEPS {
        stepper
            .step(&mut state, k as f64 * dt, dt)
            .map_err(|e| e.to_string())?;
        for sp in Species::ALL {
            let b = m0[sp.index()];
            worst = worst.max(((mass(&state[sp], &sc.grid) - b) / b).abs());
        }
    }
    ensure(worst < 1e-8, || format!("relative drift {worst:.3e}"))?;
    Ok(format!("max relative drift {worst:.3e} over {STEPS} steps"))
}

/// A cosine mode under pure diffusion decays at `(pi/L)^2 d` up to O(h^2).
/// The backward Euler factor is removed from the measured rate so that only the
/// spatial error remains.
fn diffusion_accuracy() -> Verdict {
    const D: f64 = 0.05;
    const L: f64 = 1.0;
    let exact = (PI / L).powi(2) * D;
    let rate = |cells: usize| -> Result<f64, String> {
        let grid = Grid::new_1d(cells, L).map_err(|e| e.to_string())?;
        let mode = grid.sample(|x, _| (PI * x / L).cos());
        let initial = State::from_fields(
            mode.iter().map(|c| 1.0 + 0.5 * c).collect(),
            vec![0.1; cells],
            vec![0.1; cells],
            vec![0.1; cells],
        );
        let sc = Scenario::new(
            grid,
            ModelParams::canonical(),
            fields::DiffusionCoeffs::per_species([D, D, D, D]),
            fields::SourceFields::uniform(0.0, 0.0),
            initial,
        )
        .map_err(|e| e.to_string())?
        .with_kinetics(KineticsMode::Disabled);
        let amplitude = |s: &State64| -> f64 {
            let num: f64 = s[Species::Normal]
                .iter()
                .zip(&mode)
                .map(|(u, c)| (u - 1.0) * c)
                .sum();
            num / mode.iter().map(|c| c * c).sum::<f64>()
        };
        let mut stepper = Stepper::new(&sc, Scheme::Imex, tight()).map_err(|e| e.to_string())?;
        let mut state = sc.initial.clone();
        let (dt, steps) = (1e-2, 100);
        let a0 = amplitude(&state);
        for k in 0..steps {
            stepper
                .step(&mut state, k as f64 * dt, dt)
                .map_err(|e| e.to_string())?;
        }
        let beta = (a0 / amplitude(&state)).ln() / (dt * steps as f64);
        Ok(((beta * dt).exp() - 1.0) / dt)
    };
    let errs: Vec<f64> = [16, 32, 64]
        .into_iter()
        .map(|n| rate(n).map(|r| (r - exact).abs()))
        .collect::<Result<_, _>>()?;
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    ensure(orders.iter().all(|&o| o >= 1.9), || {
        format!("orders {orders:?} from errors {errs:?}")
    })?;
    Ok(format!(
        "rate errors {:.3e} {:.3e} {:.3e}, orders {:.3} {:.3}",
        errs[0], errs[1], errs[2], orders[0], orders[1]
    ))
}

/// Steady states: source-free gives `(1/b1, 0, 0)`, constant drug gives `v0/k2`.
fn steady_states() -> Verdict {
    const TOL: f64 = 1e-8;
    let cells = 32;
    let grid: Grid64 = Grid::new_1d(cells, 1.0).map_err(|e| e.to_string())?;
    let p: Params64 = ModelParams::canonical();
    let d = canonical_diffusion();
    let opts = SteadyOptions::default();
    let free = steady_state(&grid, &p, &d, &vec![0.0; cells], &vec![0.0; cells], &opts)
        .map_err(|e| e.to_string())?;
    let mut e_free = 0.0f64;
    for c in 0..cells {
        e_free = e_free
            .max((free.n[c] - 1.0 / p.b1).abs())
            .max(free.i[c].abs())
            .max(free.u[c].abs());
    }
    ensure(e_free < TOL, || format!("source-free error {e_free:.3e}"))?;
    let v0 = 0.4;
    let drug = steady_state(&grid, &p, &d, &vec![0.2; cells], &vec![v0; cells], &opts)
        .map_err(|e| e.to_string())?;
    ensure(drug.n.iter().all(|&n| n > p.n_min + p.h_delta), || {
        "N* does not clear the cutoff".into()
    })?;
    let e_drug = drug
        .u
        .iter()
        .fold(0.0f64, |m, u| m.max((u - v0 / p.k2).abs()));
    ensure(e_drug < TOL, || {
        format!("drug steady-state error {e_drug:.3e}")
    })?;
    Ok(format!(
        "source-free error {e_free:.3e}, drug error {e_drug:.3e}"
    ))
}

/// Slow tumor growth is driven to extinction with a clean exponential fit;
/// fast growth is not mistaken for extinction.
fn tumor_extinction() -> Verdict {
    let started = Instant::now();
    let loaded = load_scenario(&scenario_path("canonical"), &Overrides::default())
        .map_err(|e| e.to_string())?;
    let opts = ExtinctionOptions {
        t_end: 40.0,
        sim: SimOptions::default().every(0.1),
        allow_degenerate: false,
    };
    let table = tumor_extinction_experiment(&loaded.scenario, &[0.01, 10.0], &opts)
        .map_err(|e| e.to_string())?;
    let (slow, fast) = (&table.rows[0], &table.rows[1]);
    ensure(slow.beta > 0.0 && slow.r_squared > 0.99, || {
        format!("r2 = 0.01: beta {} R^2 {}", slow.beta, slow.r_squared)
    })?;
    ensure(slow.final_sup_t < 1e-4 * slow.initial_sup_t, || {
        format!(
            "r2 = 0.01: final sup T {} vs initial {}",
            slow.final_sup_t, slow.initial_sup_t
        )
    })?;
    ensure(fast.beta <= 0.0, || {
        format!("r2 = 10: beta {} reports extinction", fast.beta)
    })?;
    let took = within(Duration::from_secs(120), started)?;
    Ok(format!(
        "r2 0.01: beta {:.4} R^2 {:.6} sup T {:.2e} -> {:.2e}; r2 10: beta {:.3e}; {took:.1?}",
        slow.beta, slow.r_squared, slow.initial_sup_t, slow.final_sup_t, fast.beta
    ))
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Adjoint gradients agree with central differences on an 8 x 8 control grid
/// and with the analytic dose gradient without tumor.
fn gradient_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = canonical_control::<f64>(8, 8)
        .map_err(|e| e.to_string())?
        .with_cg(tight());
    let mut v = p.constant_schedule(0.0);
    v.values
        .iter_mut()
        .for_each(|x| *x = rng.gen_range(0.2..1.8));
    let eps = 1e-3;
    let adj = gradient_adjoint(&p, &v, eps).map_err(|e| e.to_string())?;
    let fd = gradient_fd(&p, &v, eps, 1e-5).map_err(|e| e.to_string())?;
    let rel = rel_l2(&adj.values, &fd);
    ensure(rel < 1e-4, || {
        format!("canonical relative L2 error {rel:.3e}")
    })?;

    // Without tumor only the dose term remains, provided the floors are not touched.
    let q = tumor_free_control::<f64>(8, 8)
        .map_err(|e| e.to_string())?
        .with_cg(tight());
    let mut w = q.constant_schedule(0.0);
    w.values
        .iter_mut()
        .for_each(|x| *x = rng.gen_range(0.05..0.5));
    let exact: Vec<f64> = w.values.iter().map(|x| q.lambda * x * q.weight()).collect();
    let adj0 = gradient_adjoint(&q, &w, eps).map_err(|e| e.to_string())?;
    ensure(adj0.report.penalty == 0.0, || {
        format!("tumor-free schedule is penalized: {}", adj0.report.penalty)
    })?;
    let fd0 = gradient_fd(&q, &w, eps, 1e-4).map_err(|e| e.to_string())?;
    let e_adj = adj0
        .values
        .iter()
        .zip(&exact)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let e_fd = fd0
        .iter()
        .zip(&exact)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    ensure(e_adj < 1e-8 && e_fd < 1e-8, || {
        format!("tumor-free errors: adjoint {e_adj:.3e}, differences {e_fd:.3e}")
    })?;
    Ok(format!(
        "canonical rel L2 {rel:.3e}; tumor-free adjoint {e_adj:.2e}, differences {e_fd:.2e}"
    ))
}

/// The optimizer finds zero without tumor; on the canonical problem it decreases
/// the cost within each penalty stage, meets the floors and beats both constant policies.
fn optimizer_behaviour() -> Verdict {
    const MARGIN: f64 = -1e-3;
    let started = Instant::now();
    let opts = OptimizeOptions::default();
    let eps_final = *opts.eps_schedule.last().unwrap();
    ensure(eps_final == 1e-3, || {
        format!("final penalty weight {eps_final}")
    })?;

    let free = tumor_free_control::<f64>(32, 16).map_err(|e| e.to_string())?;
    let res0 = optimize(&free, &free.constant_schedule(1.0), &opts).map_err(|e| e.to_string())?;
    ensure(res0.schedule.sup() < 1e-6, || {
        format!("tumor-free sup {:.3e}", res0.schedule.sup())
    })?;

    let p = canonical_control::<f64>(32, 16).map_err(|e| e.to_string())?;
    let res = optimize(&p, &p.constant_schedule(0.5), &opts).map_err(|e| e.to_string())?;
    ensure(res.is_monotone(), || {
        "penalized cost increased within a stage".into()
    })?;
    let fin = res.final_cost();
    ensure(fin.margins.iter().all(|&m| m >= MARGIN), || {
        format!("margins {:?}", fin.margins)
    })?;
    let j0 = penalized_cost(&p, &p.constant_schedule(0.0), eps_final)
        .map_err(|e| e.to_string())?
        .total;
    let jmax = penalized_cost(&p, &p.constant_schedule(p.v_max), eps_final)
        .map_err(|e| e.to_string())?
        .total;
    ensure(fin.total <= j0.min(jmax), || {
        format!("J {} vs J(0) {j0} J(v_max) {jmax}", fin.total)
    })?;
    // The unpenalized cost of the answer is reported for context.
    let plain = cost(&p, &res.schedule).map_err(|e| e.to_string())?.total;
    let took = within(Duration::from_secs(300), started)?;
    Ok(format!(
        "tumor-free sup {:.1e}; J {:.5} (unpenalized {plain:.5}) vs J(0) {j0:.5}, J(v_max) {jmax:.5}; margins [{:.2e}, {:.2e}]; {:?}; {took:.1?}",
        res0.schedule.sup(),
        fin.total,
        fin.margins[0],
        fin.margins[1],
        res.termination
    ))
}

/// Two `verify` runs with the same seed write byte-identical manifests.
fn determinism() -> Verdict {
    let dir = std::env::temp_dir().join(format!("chemo-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let out = dir.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_chemo"))
            .args(["verify", "--seed", "42", "--scenario"])
            .arg(scenario_path("canonical"))
            .arg("--out")
            .arg(&out)
            // Fixes the manifest timestamps.
            .env("SOURCE_DATE_EPOCH", "1700000000")
            .stdout(Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("verify exited with {status}"))?;
        std::fs::read(out.join("manifest.json")).map_err(|e| e.to_string())
    };
    let a = run("a")?;
    let b = run("b")?;
    let _ = std::fs::remove_dir_all(&dir);
    ensure(a == b, || "manifests differ".into())?;
    Ok(format!("manifests identical ({} bytes)", a.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("positivity and a-priori bounds", positivity_and_bounds),
        ("homogeneous reduction to the ODE", homogeneous_reduction),
        ("mass conservation", mass_conservation),
        ("diffusion accuracy", diffusion_accuracy),
        ("steady states", steady_states),
        ("tumor extinction", tumor_extinction),
        ("gradient correctness", gradient_correctness),
        ("optimizer", optimizer_behaviour),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
