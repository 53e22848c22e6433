//! Tumor-free steady state by pseudo-time marching.
//!
//! With `T = 0` the kinetics reduce to
//! `F_N = r1 N (1 - b1 N) - a3 (1 - e^-U) N`, `F_I = s0 - k1 I - a1 (1 - e^-U) I`,
//! `F_U = v0 H(N - n_min) - k2 U`, and the steady state solves
//! `div(d grad u) + F(u) = 0` with zero-flux boundaries for `u = (N, I, U)`.
//! A fixed point of the IMEX step is exactly a zero of this residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{DiffusionCoeffs, SourceFields, SpaceTimeField, State};
use crate::grid::{FaceCoeffs, Grid};
use crate::linalg::CgOptions;
use crate::model::{ModelParams, Species};
use crate::pde::{kinetics_field, Scenario, Scheme, Stepper};
use crate::scalar::{sup_norm, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState<S> {
    pub n: Vec<S>,
    pub i: Vec<S>,
    pub u: Vec<S>,
    /// Sup norm of the elliptic residual at exit.
    pub residual: S,
    pub iterations: usize,
}

impl<S: Real> SteadyState<S> {
    /// Full state with zero tumor.
    pub fn to_state(&self) -> State<S> {
        State::from_fields(
            self.n.clone(),
            vec![S::zero(); self.n.len()],
            self.i.clone(),
            self.u.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyOptions<S> {
    pub tol: S,
    pub max_iter: usize,
    /// Pseudo-time step; defaults to the kinetics limit of the stable step.
    pub dt: Option<S>,
    /// Starting fields; defaults to `(1/b1, s0/k1, v0/k2)` pointwise.
    pub initial_guess: Option<State<S>>,
    pub cg: CgOptions<S>,
}

impl<S: Real> Default for SteadyOptions<S> {
    fn default() -> Self {
        Self {
            tol: S::of(1e-10),
            max_iter: 200_000,
            dt: None,
            initial_guess: None,
            cg: CgOptions {
                tol: S::of(1e-13),
                max_iter: 5000,
            },
        }
    }
}

/// Sup norm over `N, I, U` of `div(d grad u) + F(u)` at `T = 0`.
pub fn steady_residual<S: Real>(
    scenario: &Scenario<S>,
    faces: &[FaceCoeffs<S>; 4],
    state: &State<S>,
    s0: &[S],
    v0: &[S],
) -> S {
    let f = kinetics_field(state, scenario, s0, v0);
    let mut work = vec![S::zero(); state.len()];
    let mut worst = S::zero();
    for sp in [Species::Normal, Species::Immune, Species::Drug] {
        faces[sp.index()].apply(&state[sp], &mut work);
        for (w, &r) in work.iter_mut().zip(&f[sp]) {
            *w += r;
        }
        worst = worst.max(sup_norm(&work));
    }
    worst
}

/// Marches the tumor-free subsystem in pseudo-time until the residual drops below `opts.tol`.
pub fn steady_state<S: Real>(
    grid: &Grid<S>,
    params: &ModelParams<S>,
    diffusion: &DiffusionCoeffs<S>,
    s0: &[S],
    v0: &[S],
    opts: &SteadyOptions<S>,
) -> Result<SteadyState<S>> {
    if !(opts.tol > S::zero()) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("tolerance must be positive, got {}", opts.tol),
        });
    }
    if !diffusion.is_time_independent() {
        return Err(Error::InvalidParameter {
            name: "diffusion",
            reason: "steady state needs time-independent diffusion".into(),
        });
    }
    let n = grid.len();
    grid.check_conforms("s0", s0)?;
    grid.check_conforms("v0", v0)?;
    let guess = match &opts.initial_guess {
        Some(g) => {
            g.check_conforms(n)?;
            let mut g = g.clone();
            g[Species::Tumor].iter_mut().for_each(|x| *x = S::zero());
            g
        }
        None => State::from_fields(
            vec![S::one() / params.b1; n],
            vec![S::zero(); n],
            s0.iter().map(|&s| s / params.k1).collect(),
            v0.iter().map(|&v| v / params.k2).collect(),
        ),
    };
    let scenario = Scenario::new(
        grid.clone(),
        *params,
        diffusion.clone(),
        SourceFields {
            s: SpaceTimeField::from_values(s0.to_vec()),
            v: SpaceTimeField::from_values(v0.to_vec()),
        },
        guess,
    )?;
    let dt = match opts.dt {
        Some(dt) => dt,
        None => scenario.stable_dt(S::one()).reaction_cap,
    };
    let mut stepper = Stepper::new(&scenario, Scheme::Imex, opts.cg)?;
    let faces = stepper.faces_for_step(S::zero())?;
    let mut state = scenario.initial.clone();
    let mut residual = steady_residual(&scenario, &faces, &state, s0, v0);
    let mut iterations = 0;
    while !(residual < opts.tol) {
        if iterations == opts.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: residual.to_f64_lossy(),
            });
        }
        stepper.step_with_sources(&mut state, S::zero(), dt, s0, v0)?;
        residual = steady_residual(&scenario, &faces, &state, s0, v0);
        iterations += 1;
    }
    let [n_f, _, i_f, u_f] = state.fields;
    Ok(SteadyState {
        n: n_f,
        i: i_f,
        u: u_f,
        residual,
        iterations,
    })
}

impl<S: Real> Scenario<S> {
    /// Steady state for the `t -> inf` limits of this scenario's sources.
    pub fn steady_state(&self, opts: &SteadyOptions<S>) -> Result<SteadyState<S>> {
        let n = self.cells();
        steady_state(
            &self.grid,
            &self.params,
            &self.diffusion,
            &self.sources.s.limit(n),
            &self.sources.v.limit(n),
            opts,
        )
    }
}
