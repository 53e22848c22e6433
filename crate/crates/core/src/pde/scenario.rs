use serde::{Deserialize, Serialize};

use crate::error::{Hypothesis, Result, Violations};
use crate::fields::{DiffusionCoeffs, SourceFields, State};
use crate::grid::Grid;
use crate::model::{ModelParams, Species};
use crate::scalar::Real;

/// Whether the kinetics are active. `Disabled` leaves pure diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticsMode {
    #[default]
    Full,
    Disabled,
}

/// A fully resolved initial-boundary value problem on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<S> {
    pub grid: Grid<S>,
    pub params: ModelParams<S>,
    pub diffusion: DiffusionCoeffs<S>,
    pub sources: SourceFields<S>,
    pub initial: State<S>,
    #[serde(default)]
    pub kinetics: KineticsMode,
}

impl<S: Real> Scenario<S> {
    /// Builds and validates a scenario, returning every violation on failure.
    pub fn new(
        grid: Grid<S>,
        params: ModelParams<S>,
        diffusion: DiffusionCoeffs<S>,
        sources: SourceFields<S>,
        initial: State<S>,
    ) -> Result<Self> {
        let scenario = Self::unchecked(grid, params, diffusion, sources, initial);
        scenario.validate().into_result()?;
        Ok(scenario)
    }

    /// Builds a scenario without validation, for deliberate excursions outside
    /// the admissible parameter set (for example a zero tumor growth rate).
    pub fn unchecked(
        grid: Grid<S>,
        params: ModelParams<S>,
        diffusion: DiffusionCoeffs<S>,
        sources: SourceFields<S>,
        initial: State<S>,
    ) -> Self {
        Self {
            grid,
            params,
            diffusion,
            sources,
            initial,
            kinetics: KineticsMode::Full,
        }
    }

    pub fn with_kinetics(mut self, mode: KineticsMode) -> Self {
        self.kinetics = mode;
        self
    }

    pub fn validate(&self) -> Violations {
        validate(
            &self.grid,
            &self.params,
            &self.diffusion,
            &self.sources,
            &self.initial,
        )
    }

    pub fn cells(&self) -> usize {
        self.grid.len()
    }
}

fn cell_label<S: Real>(grid: &Grid<S>, cell: usize) -> String {
    let (i, j) = grid.coords(cell);
    if grid.dim() == 1 {
        format!("({i})")
    } else {
        format!("({i},{j})")
    }
}

/// Checks positivity of parameters, the diffusion band, nonnegative bounded
/// sources and nonnegative initial data.
pub fn validate<S: Real>(
    grid: &Grid<S>,
    params: &ModelParams<S>,
    diffusion: &DiffusionCoeffs<S>,
    sources: &SourceFields<S>,
    initial: &State<S>,
) -> Violations {
    let mut out = params.violations();
    let n = grid.len();

    let (lo, hi) = (diffusion.lower, diffusion.upper);
    if !(lo > S::zero()) || !(lo <= hi) || !hi.is_finite() {
        out.push(
            Hypothesis::DiffusionBounds,
            format!("diffusion band must satisfy 0 < A0 <= A1, got A0 = {lo}, A1 = {hi}"),
        );
    }
    for (k, field) in diffusion.fields.iter().enumerate() {
        let name = format!("d{}", k + 1);
        if let Err(e) = field.check_conforms(&name, n) {
            out.push(Hypothesis::Conformance, e.to_string());
            continue;
        }
        for (cell, value) in field.cells_outside(lo, hi) {
            let side = if value < lo || value.is_nan() {
                "below A0"
            } else {
                "above A1"
            };
            out.push(
                Hypothesis::DiffusionBounds,
                format!(
                    "{name} {side} at cell {} (value {value})",
                    cell_label(grid, cell)
                ),
            );
        }
    }

    for (name, field) in [("s", &sources.s), ("v", &sources.v)] {
        if let Err(e) = field.check_conforms(name, n) {
            out.push(Hypothesis::Conformance, e.to_string());
            continue;
        }
        for (cell, value) in field.cells_outside(S::zero(), S::max_value()) {
            out.push(
                Hypothesis::Sources,
                format!(
                    "{name} negative or unbounded at cell {} (value {value})",
                    cell_label(grid, cell)
                ),
            );
        }
    }

    if let Err(e) = initial.check_conforms(n) {
        out.push(Hypothesis::Conformance, e.to_string());
    } else {
        for sp in Species::ALL {
            if let Some((cell, &value)) = initial[sp]
                .iter()
                .enumerate()
                .find(|(_, &x)| !(x >= S::zero()) || !x.is_finite())
            {
                out.push(
                    Hypothesis::InitialData,
                    format!(
                        "initial {sp} negative or non-finite at cell {} (value {value})",
                        cell_label(grid, cell)
                    ),
                );
            }
        }
    }
    out
}
