//! Named desk-scale scenarios. All values are synthetic and dimensionless.

use rand::Rng;

use crate::analysis::mass;
use crate::control::{ConstraintForm, ConstraintSpec, ControlProblem};
use crate::error::Result;
use crate::fields::{DiffusionCoeffs, SourceFields, SpaceTimeField, State};
use crate::grid::Grid;
use crate::model::{Densities, ModelParams, Species};
use crate::pde::Scenario;
use crate::scalar::Real;

/// Gaussian bump `amplitude * exp(-|x - center|^2 / width^2)`.
pub fn bump<S: Real>(grid: &Grid<S>, center: [S; 2], width: S, amplitude: S) -> Vec<S> {
    let two_d = grid.dim() == 2;
    grid.sample(|x, y| {
        let dx = x - center[0];
        let dy = if two_d { y - center[1] } else { S::zero() };
        amplitude * (-(dx * dx + dy * dy) / (width * width)).exp()
    })
}

pub fn canonical_diffusion<S: Real>() -> DiffusionCoeffs<S> {
    let mut d = DiffusionCoeffs::per_species([S::of(0.01), S::of(0.005), S::of(0.02), S::of(0.05)]);
    d.lower = S::of(1e-4);
    d.upper = S::of(10.0);
    d
}

/// Tumor bump in the middle of a healthy tissue, constant immune influx and drug injection.
pub fn canonical_1d<S: Real>(cells: usize) -> Result<Scenario<S>> {
    let grid = Grid::new_1d(cells, S::one())?;
    canonical_on(grid)
}

pub fn canonical_2d<S: Real>(nx: usize, ny: usize) -> Result<Scenario<S>> {
    let grid = Grid::new_2d(nx, ny, S::one(), S::one())?;
    canonical_on(grid)
}

fn canonical_on<S: Real>(grid: Grid<S>) -> Result<Scenario<S>> {
    let n = grid.len();
    let center = [S::of(0.5), S::of(0.5)];
    let tumor = bump(&grid, center, S::of(0.15), S::of(0.4));
    let normal: Vec<S> = bump(&grid, center, S::of(0.15), S::of(0.3))
        .into_iter()
        .map(|b| S::one() - b)
        .collect();
    let initial = State::from_fields(normal, tumor, vec![S::of(0.2); n], vec![S::zero(); n]);
    Scenario::new(
        grid,
        ModelParams::canonical(),
        canonical_diffusion(),
        SourceFields::uniform(S::of(0.2), S::of(0.5)),
        initial,
    )
}

/// Spatially uniform data on a small grid, for comparison with the ODE engine.
pub fn uniform_1d<S: Real>(cells: usize) -> Result<Scenario<S>> {
    let grid = Grid::new_1d(cells, S::one())?;
    let n = grid.len();
    Scenario::new(
        grid,
        ModelParams::canonical(),
        canonical_diffusion(),
        SourceFields::uniform(S::of(0.2), S::of(0.5)),
        State::uniform(
            n,
            Densities::new(S::of(0.8), S::of(0.3), S::of(0.2), S::of(0.1)),
        ),
    )
}

/// No tumor anywhere.
pub fn tumor_free_1d<S: Real>(cells: usize) -> Result<Scenario<S>> {
    let mut sc = canonical_1d(cells)?;
    sc.initial.fields[1].iter_mut().for_each(|t| *t = S::zero());
    sc.initial.fields[0].iter_mut().for_each(|x| *x = S::one());
    Ok(sc)
}

/// Varying immune influx profile used by the steady-state tests.
pub fn immune_bump_source<S: Real>(grid: &Grid<S>) -> SpaceTimeField<S> {
    let c = [S::of(0.3), S::of(0.5)];
    let mut b = bump(grid, c, S::of(0.1), S::of(0.5));
    b.iter_mut().for_each(|x| *x += S::of(0.05));
    SpaceTimeField::from_values(b)
}

/// Dosing problem on [`canonical_1d`]: horizon 2, `lambda = 0.05`, `v_max = 2`,
/// time-averaged floors at 94% of the normal and 90% of the immune baseline.
pub fn canonical_control<S: Real>(cells: usize, slabs: usize) -> Result<ControlProblem<S>> {
    control_on(canonical_1d(cells)?, slabs)
}

/// As [`canonical_control`] without any tumor: the optimal schedule is zero.
pub fn tumor_free_control<S: Real>(cells: usize, slabs: usize) -> Result<ControlProblem<S>> {
    control_on(tumor_free_1d(cells)?, slabs)
}

fn control_on<S: Real>(scenario: Scenario<S>, slabs: usize) -> Result<ControlProblem<S>> {
    let a0 = mass(&scenario.initial[Species::Normal], &scenario.grid);
    let b0 = mass(&scenario.initial[Species::Immune], &scenario.grid);
    let constraint = ConstraintSpec::from_initial(
        &scenario,
        S::of(0.06) * a0,
        S::of(0.1) * b0,
        ConstraintForm::TimeAveragedMass,
    )?;
    ControlProblem::new(
        scenario,
        S::of(2.0),
        slabs,
        S::of(0.05),
        S::of(2.0),
        constraint,
    )
}

/// A validated 1D scenario with parameters, coefficients, sources and initial
/// bumps drawn from moderate ranges, for property checks.
pub fn random_1d<S: Real, R: Rng + ?Sized>(rng: &mut R, cells: usize) -> Result<Scenario<S>> {
    let grid = Grid::new_1d(cells, S::of(rng.gen_range(0.5..2.0)))?;
    let mut u = |lo: f64, hi: f64| S::of(rng.gen_range(lo..hi));
    let params = ModelParams {
        r1: u(0.5, 1.5),
        r2: u(0.1, 2.0),
        b1: u(0.5, 1.5),
        b2: u(0.5, 1.5),
        c1: u(0.2, 1.5),
        c2: u(0.2, 1.5),
        c3: u(0.2, 1.5),
        c4: u(0.2, 1.5),
        a1: u(0.1, 1.0),
        a2: u(0.1, 1.0),
        a3: u(0.1, 1.0),
        k1: u(0.5, 1.5),
        k2: u(0.5, 1.5),
        rho: u(0.1, 1.0),
        alpha: u(0.3, 1.5),
        n_min: u(0.1, 0.5),
        h_delta: u(0.05, 0.2),
    };
    let d = [u(1e-3, 5e-2), u(1e-3, 5e-2), u(1e-3, 5e-2), u(1e-3, 5e-2)];
    let mut diffusion = DiffusionCoeffs::per_species(d);
    diffusion.lower = S::of(1e-4);
    diffusion.upper = S::one();
    let s = u(0.0, 0.5);
    let v = u(0.0, 1.0);
    let ext = grid.extent()[0];
    let mut bumpy = |base: S, amp: S| -> Vec<S> {
        let c = ext * S::of(rng.gen_range(0.2..0.8));
        let w = ext * S::of(rng.gen_range(0.05..0.3));
        bump(&grid, [c, S::zero()], w, amp)
            .into_iter()
            .map(|b| base + b)
            .collect()
    };
    let normal = bumpy(S::of(0.3), S::of(0.8));
    let tumor = bumpy(S::zero(), S::of(1.2));
    let immune = bumpy(S::of(0.05), S::of(0.5));
    let drug = bumpy(S::zero(), S::of(0.5));
    let initial = State::from_fields(normal, tumor, immune, drug);
    Scenario::new(
        grid.clone(),
        params,
        diffusion,
        SourceFields::uniform(s, v),
        initial,
    )
}
