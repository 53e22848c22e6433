//! Artifact writers. Every file is written to a temporary sibling and renamed into place.
//!
//! Column orders:
//! - snapshot (1D): `cell,x,N,T,I,U`; (2D): `cell,i,j,x,y,N,T,I,U`
//! - diagnostics: `t`, then `mass_*`, `sup_*`, `min_*`, `min_before_clamp_*`, `clamp_max_*` per species
//! - ODE trajectory: `t,N,T,I,U`
//! - steady state (1D): `cell,x,N,I,U`; (2D): `cell,i,j,x,y,N,I,U`
//! - extinction: `r2,beta,r_squared,final_supT`
//! - schedule (1D): `slab,t_start,t_end,cell,x,v`; (2D): `slab,t_start,t_end,cell,i,j,x,y,v`

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use chemo_core::analysis::ExtinctionTable;
use chemo_core::control::ControlSchedule;
use chemo_core::pde::Diagnostics;
use chemo_core::{Grid64, OdeTrajectory, Species, State64, SteadyState64};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn cell_prefix(grid: &Grid64, c: usize) -> String {
    let [x, y] = grid.center(c);
    if grid.dim() == 1 {
        format!("{c},{x:?}")
    } else {
        let (i, j) = grid.coords(c);
        format!("{c},{i},{j},{x:?},{y:?}")
    }
}

fn cell_header(grid: &Grid64) -> &'static str {
    if grid.dim() == 1 {
        "cell,x"
    } else {
        "cell,i,j,x,y"
    }
}

pub fn snapshot_csv(grid: &Grid64, state: &State64) -> String {
    let mut out = format!("{},N,T,I,U\n", cell_header(grid));
    for c in 0..grid.len() {
        let p = state.point(c);
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?}",
            cell_prefix(grid, c),
            p.n,
            p.t,
            p.i,
            p.u
        );
    }
    out
}

pub fn diagnostics_csv(times: &[f64], diags: &[Diagnostics<f64>]) -> String {
    let mut out = String::from("t");
    for group in ["mass", "sup", "min", "min_before_clamp", "clamp_max"] {
        for sp in Species::ALL {
            let _ = write!(out, ",{group}_{}", sp.symbol());
        }
    }
    out.push('\n');
    for (t, d) in times.iter().zip(diags) {
        let _ = write!(out, "{t:?}");
        for group in [&d.mass, &d.sup, &d.min, &d.min_before_clamp, &d.clamp_max] {
            for x in group {
                let _ = write!(out, ",{x:?}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn ode_csv(traj: &OdeTrajectory<f64>) -> String {
    let mut out = String::from("t,N,T,I,U\n");
    for s in &traj.states {
        let _ = writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?}",
            s.time, s.x.n, s.x.t, s.x.i, s.x.u
        );
    }
    out
}

pub fn steady_csv(grid: &Grid64, st: &SteadyState64) -> String {
    let mut out = format!("{},N,I,U\n", cell_header(grid));
    for c in 0..grid.len() {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?}",
            cell_prefix(grid, c),
            st.n[c],
            st.i[c],
            st.u[c]
        );
    }
    out
}

pub fn extinction_csv(table: &ExtinctionTable<f64>) -> String {
    let mut out = String::from("r2,beta,r_squared,final_supT\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{:?},{:?},{:?},{:?}",
            r.r2, r.beta, r.r_squared, r.final_sup_t
        );
    }
    out
}

pub fn schedule_csv(grid: &Grid64, v: &ControlSchedule<f64>) -> String {
    let mut out = format!("slab,t_start,t_end,{},v\n", cell_header(grid));
    for k in 0..v.slabs {
        let t0 = v.slab_len * k as f64;
        let t1 = v.slab_len * (k + 1) as f64;
        for (c, x) in v.slab(k).iter().enumerate() {
            let _ = writeln!(out, "{k},{t0:?},{t1:?},{},{x:?}", cell_prefix(grid, c));
        }
    }
    out
}

/// Appends one JSON record per line.
pub fn jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}
