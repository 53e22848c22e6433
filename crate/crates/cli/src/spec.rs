//! The TOML scenario file and its translation into engine types.
//!
//! Paths to field files are resolved against the directory holding the scenario file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use chemo_core::control::{ConstraintForm, ConstraintSpec, ControlProblem, OptimizeOptions};
use chemo_core::linalg::CgOptions;
use chemo_core::pde::SteadyOptions;
use chemo_core::presets::bump;
use chemo_core::{
    Amplitude, DiffusionCoeffs, Grid64, KineticsMode, ModelParams, Params64, Scenario64, Scheme,
    SimOptions, SourceFields, SpaceTimeField, State,
};

use crate::error::{CliError, CliResult, Context};
use crate::field_file::read_field_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    /// End time of `simulate` and default control horizon.
    pub horizon: f64,
    pub grid: GridSpec,
    /// Overrides of the canonical rate constants, by name.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub kinetics: KineticsMode,
    pub diffusion: DiffusionSpec,
    pub sources: SourcesSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub steady: SteadySpec,
    #[serde(default)]
    pub extinction: ExtinctionSpec,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub verify: VerifySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// `[nx]` or `[nx, ny]`.
    pub cells: Vec<usize>,
    /// Side lengths, one per axis.
    pub extent: Vec<f64>,
}

/// A time-independent spatial profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `base + amplitude * exp(-|x - center|² / width²)`.
    Bump {
        #[serde(default)]
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    Constant {
        value: f64,
        #[serde(default = "default_d_lower")]
        lower: f64,
        #[serde(default = "default_d_upper")]
        upper: f64,
    },
    PerSpecies {
        /// `[d_N, d_T, d_I, d_U]`.
        values: [f64; 4],
        #[serde(default = "default_d_lower")]
        lower: f64,
        #[serde(default = "default_d_upper")]
        upper: f64,
    },
    Fields {
        n: FieldSpec,
        t: FieldSpec,
        i: FieldSpec,
        u: FieldSpec,
        #[serde(default = "default_d_lower")]
        lower: f64,
        #[serde(default = "default_d_upper")]
        upper: f64,
    },
}

fn default_d_lower() -> f64 {
    1e-4
}

fn default_d_upper() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Constant {
        value: f64,
    },
    Bump {
        #[serde(default)]
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    File {
        path: PathBuf,
    },
    /// `profile(x) * amplitude(t)`.
    Separable {
        profile: FieldSpec,
        amplitude: Amplitude<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesSpec {
    /// Immune cell influx.
    pub s: SourceSpec,
    /// Drug injection rate.
    pub v: SourceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub n: FieldSpec,
    pub t: FieldSpec,
    pub i: FieldSpec,
    pub u: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub scheme: Scheme,
    /// Fixed step; the stable step when absent.
    pub dt: Option<f64>,
    /// Time between stored snapshots.
    pub snapshot_every: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::Imex,
            dt: None,
            snapshot_every: 0.5,
            cg_tol: 1e-10,
            cg_max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadySpec {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SteadySpec {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtinctionSpec {
    pub r2_values: Vec<f64>,
    pub t_end: f64,
    pub snapshot_every: f64,
    /// Permits `r2 = 0`.
    pub allow_degenerate: bool,
}

impl Default for ExtinctionSpec {
    fn default() -> Self {
        Self {
            r2_values: vec![0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0],
            t_end: 40.0,
            snapshot_every: 0.1,
            allow_degenerate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSpec {
    /// Treatment horizon; the scenario horizon when absent.
    pub horizon: Option<f64>,
    pub slabs: usize,
    pub lambda: f64,
    pub v_max: f64,
    /// Allowed loss of normal cell mass; 6% of the baseline when absent.
    pub slack_n: Option<f64>,
    /// Allowed loss of immune cell mass; 10% of the baseline when absent.
    pub slack_i: Option<f64>,
    pub constraint_form: ConstraintForm,
    pub eps_schedule: Vec<f64>,
    pub max_iters: usize,
    pub tol_grad: f64,
    /// Uniform starting schedule, clipped to `[0, v_max]`.
    pub initial_v: f64,
    pub steps_per_slab: Option<usize>,
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            horizon: None,
            slabs: 16,
            lambda: 0.05,
            v_max: 2.0,
            slack_n: None,
            slack_i: None,
            constraint_form: ConstraintForm::TimeAveragedMass,
            eps_schedule: vec![1e-1, 1e-2, 1e-3],
            max_iters: 500,
            tol_grad: 1e-6,
            initial_v: 0.5,
            steps_per_slab: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    /// Extra seeded random scenarios for the bounds check.
    pub random_scenarios: usize,
    pub random_cells: usize,
    pub random_t_end: f64,
    pub reduction_t_end: f64,
    pub reduction_dt: f64,
    pub reduction_tol: f64,
    pub mass_steps: usize,
    pub mass_dt: f64,
    pub mass_tol: f64,
    pub gradient_directions: usize,
    pub gradient_h: f64,
    pub gradient_tol: f64,
    /// Control intervals used for the gradient check.
    pub gradient_slabs: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            random_scenarios: 4,
            random_cells: 32,
            random_t_end: 2.0,
            reduction_t_end: 5.0,
            reduction_dt: 1e-3,
            reduction_tol: 1e-3,
            mass_steps: 1000,
            mass_dt: 1e-3,
            mass_tol: 1e-8,
            gradient_directions: 5,
            gradient_h: 1e-5,
            gradient_tol: 1e-4,
            gradient_slabs: 4,
        }
    }
}

/// Command-line adjustments applied after parsing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub grid: Option<(usize, usize)>,
}

/// A parsed, validated scenario file.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub file: ScenarioFile,
    pub scenario: Scenario64,
    pub base_dir: PathBuf,
    /// Raw bytes of the scenario file, for the manifest hash.
    pub source: Vec<u8>,
}

/// `"64"` or `"64x32"`.
pub fn parse_grid_override(text: &str) -> Result<(usize, usize), String> {
    let mut parts = text.split(['x', 'X']);
    let nx = parts.next().unwrap_or("").trim().parse::<usize>();
    let ny = parts
        .next()
        .map(|p| p.trim().parse::<usize>())
        .unwrap_or(Ok(1));
    match (nx, ny, parts.next()) {
        (Ok(nx), Ok(ny), None) => Ok((nx, ny)),
        _ => Err(format!("expected NX or NXxNY, got `{text}`")),
    }
}

pub fn parse_scenario(path: &Path, text: &str) -> CliResult<ScenarioFile> {
    toml::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_scenario(path: &Path, overrides: &Overrides) -> CliResult<Loaded> {
    let source = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let text = String::from_utf8(source.clone()).map_err(|_| CliError::Parse {
        path: path.to_path_buf(),
        message: "scenario file is not UTF-8".into(),
    })?;
    let mut file = parse_scenario(path, &text)?;
    file.apply(overrides);
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let scenario = file.build(&base_dir)?;
    Ok(Loaded {
        file,
        scenario,
        base_dir,
        source,
    })
}

impl ScenarioFile {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            self.solver.dt = Some(dt);
        }
        if let Some((nx, ny)) = o.grid {
            let lx = self.grid.extent.first().copied().unwrap_or(1.0);
            if ny > 1 {
                let ly = self.grid.extent.get(1).copied().unwrap_or(lx);
                self.grid = GridSpec {
                    cells: vec![nx, ny],
                    extent: vec![lx, ly],
                };
            } else {
                self.grid = GridSpec {
                    cells: vec![nx],
                    extent: vec![lx],
                };
            }
        }
    }

    pub fn build_grid(&self) -> CliResult<Grid64> {
        let g = &self.grid;
        let grid = match (g.cells.as_slice(), g.extent.as_slice()) {
            ([nx], [lx]) => Grid64::new_1d(*nx, *lx),
            ([nx, ny], [lx, ly]) => Grid64::new_2d(*nx, *ny, *lx, *ly),
            _ => {
                return Err(CliError::Usage(format!(
                    "grid: cells {:?} and extent {:?} must both have one or two entries",
                    g.cells, g.extent
                )))
            }
        };
        grid.context("grid")
    }

    pub fn build_params(&self) -> CliResult<Params64> {
        let mut p = ModelParams::canonical();
        for (name, &value) in &self.params {
            let slot = match name.as_str() {
                "r1" => &mut p.r1,
                "r2" => &mut p.r2,
                "b1" => &mut p.b1,
                "b2" => &mut p.b2,
                "c1" => &mut p.c1,
                "c2" => &mut p.c2,
                "c3" => &mut p.c3,
                "c4" => &mut p.c4,
                "a1" => &mut p.a1,
                "a2" => &mut p.a2,
                "a3" => &mut p.a3,
                "k1" => &mut p.k1,
                "k2" => &mut p.k2,
                "rho" => &mut p.rho,
                "alpha" => &mut p.alpha,
                "n_min" => &mut p.n_min,
                "h_delta" => &mut p.h_delta,
                other => {
                    let known: Vec<&str> = p.fields().iter().map(|f| f.0).collect();
                    return Err(CliError::Usage(format!(
                        "params: unknown parameter `{other}` (known: {})",
                        known.join(", ")
                    )));
                }
            };
            *slot = value;
        }
        Ok(p)
    }

    /// Builds and validates the engine scenario.
    pub fn build(&self, base_dir: &Path) -> CliResult<Scenario64> {
        let grid = self.build_grid()?;
        let params = self.build_params()?;
        let field = |what: &str, spec: &FieldSpec| realize(what, spec, &grid, base_dir);
        let (fields, lower, upper) = match &self.diffusion {
            DiffusionSpec::Constant {
                value,
                lower,
                upper,
            } => ([*value; 4].map(SpaceTimeField::uniform), lower, upper),
            DiffusionSpec::PerSpecies {
                values,
                lower,
                upper,
            } => (values.map(SpaceTimeField::uniform), lower, upper),
            DiffusionSpec::Fields {
                n,
                t,
                i,
                u,
                lower,
                upper,
            } => (
                [
                    field("diffusion.n", n)?,
                    field("diffusion.t", t)?,
                    field("diffusion.i", i)?,
                    field("diffusion.u", u)?,
                ],
                lower,
                upper,
            ),
        };
        let diffusion = DiffusionCoeffs {
            fields,
            lower: *lower,
            upper: *upper,
        };
        let source = |what: &str, spec: &SourceSpec| -> CliResult<SpaceTimeField<f64>> {
            Ok(match spec {
                SourceSpec::Constant { value } => SpaceTimeField::uniform(*value),
                SourceSpec::Bump {
                    base,
                    amplitude,
                    center,
                    width,
                } => {
                    let as_field = FieldSpec::Bump {
                        base: *base,
                        amplitude: *amplitude,
                        center: center.clone(),
                        width: *width,
                    };
                    field(what, &as_field)?
                }
                SourceSpec::File { path } => field(what, &FieldSpec::File { path: path.clone() })?,
                SourceSpec::Separable { profile, amplitude } => SpaceTimeField::Separable {
                    profile: values_of(what, profile, &grid, base_dir)?,
                    amplitude: *amplitude,
                },
            })
        };
        let sources = SourceFields {
            s: source("sources.s", &self.sources.s)?,
            v: source("sources.v", &self.sources.v)?,
        };
        let init = |what: &str, spec: &FieldSpec| values_of(what, spec, &grid, base_dir);
        let initial = State::from_fields(
            init("initial.n", &self.initial.n)?,
            init("initial.t", &self.initial.t)?,
            init("initial.i", &self.initial.i)?,
            init("initial.u", &self.initial.u)?,
        );
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CliError::Usage(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        let scenario = Scenario64::new(grid, params, diffusion, sources, initial).context(
            if self.name.is_empty() {
                "scenario".to_string()
            } else {
                format!("scenario `{}`", self.name)
            },
        )?;
        Ok(scenario.with_kinetics(self.kinetics))
    }

    pub fn cg(&self) -> CgOptions<f64> {
        CgOptions {
            tol: self.solver.cg_tol,
            max_iter: self.solver.cg_max_iter,
        }
    }

    pub fn sim_options(&self) -> SimOptions<f64> {
        SimOptions {
            scheme: self.solver.scheme,
            dt: self.solver.dt,
            cg: self.cg(),
            snapshot_every: Some(self.solver.snapshot_every),
        }
    }

    pub fn steady_options(&self) -> SteadyOptions<f64> {
        SteadyOptions {
            tol: self.steady.tol,
            max_iter: self.steady.max_iter,
            ..SteadyOptions::default()
        }
    }

    pub fn control_problem(&self, scenario: &Scenario64) -> CliResult<ControlProblem<f64>> {
        let c = &self.control;
        let grid = &scenario.grid;
        let a0 = chemo_core::analysis::mass(&scenario.initial[chemo_core::Species::Normal], grid);
        let b0 = chemo_core::analysis::mass(&scenario.initial[chemo_core::Species::Immune], grid);
        let constraint = ConstraintSpec::from_initial(
            scenario,
            c.slack_n.unwrap_or(0.06 * a0),
            c.slack_i.unwrap_or(0.1 * b0),
            c.constraint_form,
        )
        .context("control constraints")?;
        let problem = ControlProblem::new(
            scenario.clone(),
            c.horizon.unwrap_or(self.horizon),
            c.slabs,
            c.lambda,
            c.v_max,
            constraint,
        )
        .context("control problem")?
        .with_cg(CgOptions {
            tol: self.solver.cg_tol.min(1e-12),
            max_iter: self.solver.cg_max_iter,
        });
        Ok(match c.steps_per_slab {
            Some(m) => problem.with_steps_per_slab(m),
            None => problem,
        })
    }

    pub fn optimize_options(&self) -> OptimizeOptions<f64> {
        OptimizeOptions {
            eps_schedule: self.control.eps_schedule.clone(),
            max_iters: self.control.max_iters,
            tol_grad: self.control.tol_grad,
            ..OptimizeOptions::default()
        }
    }
}

fn realize(
    what: &str,
    spec: &FieldSpec,
    grid: &Grid64,
    base_dir: &Path,
) -> CliResult<SpaceTimeField<f64>> {
    Ok(match spec {
        FieldSpec::Constant { value } => SpaceTimeField::uniform(*value),
        other => SpaceTimeField::from_values(values_of(what, other, grid, base_dir)?),
    })
}

fn values_of(what: &str, spec: &FieldSpec, grid: &Grid64, base_dir: &Path) -> CliResult<Vec<f64>> {
    match spec {
        FieldSpec::Constant { value } => Ok(vec![*value; grid.len()]),
        FieldSpec::Bump {
            base,
            amplitude,
            center,
            width,
        } => {
            let c = [
                center.first().copied().unwrap_or(0.0),
                center.get(1).copied().unwrap_or(0.0),
            ];
            if !(*width > 0.0) {
                return Err(CliError::Usage(format!(
                    "{what}: bump width must be positive, got {width}"
                )));
            }
            Ok(bump(grid, c, *width, *amplitude)
                .into_iter()
                .map(|b| b + base)
                .collect())
        }
        FieldSpec::File { path } => read_field_for(&base_dir.join(path), grid),
    }
}
