//! Flat CSV field files: a header line `nx=<cells>,ny=<cells>` followed by one value
//! per line in row-major cell order (`index = j * nx + i`).

use std::fmt::Write as _;
use std::path::Path;

use chemo_core::Grid64;

use crate::error::{CliError, CliResult};
use crate::export::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl FieldFile {
    pub fn shape(&self) -> String {
        format!("{}x{}", self.nx, self.ny)
    }
}

pub fn parse_field(path: &Path, text: &str) -> CliResult<FieldFile> {
    let err = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty field file".into()))?;
    let (mut nx, mut ny) = (None, None);
    for part in header.split(',') {
        let (key, value) = part.split_once('=').ok_or_else(|| {
            err(
                hline + 1,
                format!("expected `nx=<n>,ny=<n>`, found `{header}`"),
            )
        })?;
        let n: usize = value
            .trim()
            .parse()
            .map_err(|_| err(hline + 1, format!("bad cell count `{}`", value.trim())))?;
        match key.trim() {
            "nx" => nx = Some(n),
            "ny" => ny = Some(n),
            other => return Err(err(hline + 1, format!("unknown header key `{other}`"))),
        }
    }
    let nx = nx.ok_or_else(|| err(hline + 1, "header lacks nx".into()))?;
    let ny = ny.unwrap_or(1);
    let mut values = Vec::with_capacity(nx * ny);
    for (k, line) in lines {
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| err(k + 1, format!("not a number: `{}`", line.trim())))?;
        values.push(v);
    }
    if values.len() != nx * ny {
        return Err(err(
            hline + 1,
            format!(
                "header declares {nx}x{ny} = {} values but the file has {}",
                nx * ny,
                values.len()
            ),
        ));
    }
    Ok(FieldFile { nx, ny, values })
}

pub fn read_field(path: &Path) -> CliResult<FieldFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_field(path, &text)
}

/// Reads a field and checks its declared shape against the grid.
pub fn read_field_for(path: &Path, grid: &Grid64) -> CliResult<Vec<f64>> {
    let f = read_field(path)?;
    if f.nx != grid.nx() || f.ny != grid.ny() {
        return Err(CliError::Engine {
            context: format!("field file {}", path.display()),
            source: chemo_core::Error::Conformance {
                expected: format!("grid shape {}", grid.shape_string()),
                found: format!("file shape {}", f.shape()),
            },
        });
    }
    Ok(f.values)
}

pub fn format_field(grid: &Grid64, values: &[f64]) -> String {
    let mut out = format!("nx={},ny={}\n", grid.nx(), grid.ny());
    for v in values {
        let _ = writeln!(out, "{v:?}");
    }
    out
}

pub fn write_field(path: &Path, grid: &Grid64, values: &[f64]) -> CliResult<()> {
    write_atomic(path, format_field(grid, values).as_bytes())
}
