//! Subcommand orchestration: load, run, write artifacts, write the manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use chemo_core::analysis::{check_bounds, tumor_extinction_experiment, ExtinctionOptions};
use chemo_core::control::{optimize_from, penalized_cost, Checkpoint, IterateRecord};
use chemo_core::{simulate, SimOptions};

use crate::error::{CliError, CliResult, Context};
use crate::export::{
    diagnostics_csv, extinction_csv, jsonl, ode_csv, schedule_csv, snapshot_csv, steady_csv,
    write_atomic, write_json,
};
use crate::manifest::{file_entry, sha256_hex, timestamp, RunManifest, MANIFEST};
use crate::spec::{load_scenario, Loaded, Overrides};
use crate::verify::run_verify;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Steady,
    Extinction,
    Optimize,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Steady => "steady",
            Command::Extinction => "extinction",
            Command::Optimize => "optimize",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub force: bool,
    pub overrides: Overrides,
    /// Checkpoint to continue an optimization from.
    pub resume: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    /// False only when `verify` found a failing check.
    pub passed: bool,
}

/// Collects written artifacts relative to the output directory.
struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn text(&mut self, rel: &str, content: &str) -> CliResult<()> {
        write_atomic(&self.dir.join(rel), content.as_bytes())?;
        self.files.push(PathBuf::from(rel));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        write_json(&self.dir.join(rel), value)?;
        self.files.push(PathBuf::from(rel));
        Ok(())
    }
}

/// Refuses a non-empty output directory unless forced; when forced, removes the
/// artifacts listed by a previous manifest so that stale files do not linger.
fn prepare_out_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::Usage(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
        if let Ok(old) = RunManifest::read(dir) {
            for p in old.paths() {
                let _ = std::fs::remove_file(dir.join(p));
            }
            let _ = std::fs::remove_file(dir.join(MANIFEST));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn run(cmd: Command, opts: &RunOptions) -> CliResult<RunOutcome> {
    let started = timestamp();
    let loaded = load_scenario(&opts.scenario, &opts.overrides)?;
    let resume = match &opts.resume {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let ck: Checkpoint<f64> = serde_json::from_str(&text).map_err(|e| CliError::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?;
            Some(ck)
        }
        None => None,
    };
    prepare_out_dir(&opts.out, opts.force)?;
    let mut out = Out {
        dir: opts.out.clone(),
        files: Vec::new(),
    };
    let passed = match cmd {
        Command::Simulate => run_simulate(&loaded, &mut out)?,
        Command::Steady => run_steady(&loaded, &mut out)?,
        Command::Extinction => run_extinction(&loaded, &mut out)?,
        Command::Optimize => run_optimize(&loaded, resume, &mut out)?,
        Command::Verify => run_verify_cmd(&loaded, opts.seed, &mut out)?,
    };
    let mut files = out
        .files
        .iter()
        .map(|rel| file_entry(&out.dir, rel))
        .collect::<CliResult<Vec<_>>>()?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let mut overrides = Vec::new();
    if let Some(dt) = opts.overrides.dt {
        overrides.push(format!("dt={dt}"));
    }
    if let Some((nx, ny)) = opts.overrides.grid {
        overrides.push(format!("grid={nx}x{ny}"));
    }
    if let Some(p) = &opts.resume {
        overrides.push(format!("resume={}", p.display()));
    }
    let manifest = RunManifest {
        tool: "chemo".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cmd.name().into(),
        scenario_sha256: sha256_hex(&loaded.source),
        overrides,
        seed: opts.seed,
        started,
        finished: timestamp(),
        files,
    };
    manifest.write(&opts.out)?;
    Ok(RunOutcome { manifest, passed })
}

fn run_simulate(l: &Loaded, out: &mut Out) -> CliResult<bool> {
    let sc = &l.scenario;
    let traj = simulate(sc, l.file.horizon, &l.file.sim_options()).context("simulate")?;
    let bounds = check_bounds(&traj, sc);
    let mut snapshots = Vec::new();
    for (k, st) in traj.states.iter().enumerate() {
        let rel = format!("snapshots/snapshot_{k:04}.csv");
        out.text(&rel, &snapshot_csv(&sc.grid, st))?;
        snapshots.push(json!({ "index": k, "t": traj.times[k], "file": rel }));
    }
    out.text(
        "diagnostics.csv",
        &diagnostics_csv(&traj.times, &traj.diagnostics),
    )?;
    out.json(
        "trajectory.json",
        &json!({
            "grid": sc.grid,
            "dt": traj.dt,
            "steps": traj.steps,
            "cg_iterations": traj.cg_iterations,
            "snapshots": snapshots,
            "diagnostics": traj.diagnostics,
            "bounds": bounds,
        }),
    )?;
    Ok(true)
}

fn run_steady(l: &Loaded, out: &mut Out) -> CliResult<bool> {
    let opts = l.file.steady_options();
    let st = l.scenario.steady_state(&opts).context("steady")?;
    out.text("steady_state.csv", &steady_csv(&l.scenario.grid, &st))?;
    out.json(
        "steady.json",
        &json!({ "residual": st.residual, "iterations": st.iterations, "tol": opts.tol }),
    )?;
    Ok(true)
}

fn run_extinction(l: &Loaded, out: &mut Out) -> CliResult<bool> {
    let e = &l.file.extinction;
    let opts = ExtinctionOptions {
        t_end: e.t_end,
        sim: SimOptions {
            snapshot_every: Some(e.snapshot_every),
            ..l.file.sim_options()
        },
        allow_degenerate: e.allow_degenerate,
    };
    let table =
        tumor_extinction_experiment(&l.scenario, &e.r2_values, &opts).context("extinction")?;
    out.text("extinction.csv", &extinction_csv(&table))?;
    out.json("extinction.json", &table)?;
    Ok(true)
}

fn run_optimize(l: &Loaded, resume: Option<Checkpoint<f64>>, out: &mut Out) -> CliResult<bool> {
    let problem = l.file.control_problem(&l.scenario)?;
    let opts = l.file.optimize_options();
    let start = match resume {
        Some(ck) => ck,
        None => Checkpoint {
            schedule: problem.constant_schedule(l.file.control.initial_v.clamp(0.0, problem.v_max)),
            stage: 0,
            iter: 0,
            step: 1.0 / problem.lambda,
        },
    };
    let ck_path = out.dir.join("checkpoint.json");
    let mut log: Vec<IterateRecord<f64>> = Vec::new();
    let result = optimize_from(&problem, start, &opts, &mut |r| {
        log.push(r.clone());
        Ok(())
    })
    .context("optimize")?;
    let eps_final = *opts.eps_schedule.last().expect("validated schedule");
    let baseline = |v: f64| {
        penalized_cost(&problem, &problem.constant_schedule(v), eps_final).context("baseline cost")
    };
    let zero = baseline(0.0)?;
    let full = baseline(problem.v_max)?;
    out.text("optimize_log.jsonl", &jsonl(&log))?;
    out.text(
        "schedule.csv",
        &schedule_csv(&problem.scenario.grid, &result.schedule),
    )?;
    write_json(&ck_path, &result.checkpoint)?;
    out.files.push(PathBuf::from("checkpoint.json"));
    out.json(
        "optimize.json",
        &json!({
            "termination": result.termination,
            "iterations": result.checkpoint.iter,
            "monotone_within_stages": result.is_monotone(),
            "final": result.final_cost(),
            "schedule_sup": result.schedule.sup(),
            "baseline_zero": zero,
            "baseline_v_max": full,
            "horizon": problem.horizon,
            "slabs": problem.slabs,
            "steps_per_slab": problem.steps_per_slab,
            "lambda": problem.lambda,
            "v_max": problem.v_max,
        }),
    )?;
    Ok(true)
}

fn run_verify_cmd(l: &Loaded, seed: u64, out: &mut Out) -> CliResult<bool> {
    let res = run_verify(&l.file, &l.scenario, seed)?;
    if let Some(ode) = &res.ode {
        out.text("ode_reduction.csv", &ode_csv(ode))?;
    }
    out.json("verify_report.json", &res.report)?;
    Ok(res.report.pass)
}
