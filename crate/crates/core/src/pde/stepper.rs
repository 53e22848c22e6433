//! One time step of the reaction-diffusion system.
//!
//! IMEX (default): `(I - dt A_s(t + dt)) x_s^{n+1} = x_s^n + dt F_s(x^n)` per species,
//! where `A_s` is the zero-flux diffusion operator. Explicit: `x^{n+1} = x^n + dt (A x^n + F(x^n))`.
//! Negative values left by either update are clamped to zero and reported.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::State;
use crate::grid::FaceCoeffs;
use crate::linalg::{conjugate_gradient, CgOptions, CgWorkspace};
use crate::model::{reaction_rates, Densities, Species};
use crate::pde::{KineticsMode, Scenario};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Imex,
    Explicit,
}

/// What happened during one step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport<S> {
    /// Per-species minimum of the update before clamping.
    pub min_before_clamp: [S; 4],
    /// Per-species largest magnitude removed by clamping.
    pub clamp_max: [S; 4],
    /// Clamped `(species, cell)` pairs, recorded only when requested.
    pub clamped: Vec<(Species, usize)>,
    pub cg_iterations: usize,
}

/// Reusable stepping machinery for one scenario.
pub struct Stepper<'a, S> {
    scenario: &'a Scenario<S>,
    scheme: Scheme,
    cg: CgOptions<S>,
    cached_faces: Option<[FaceCoeffs<S>; 4]>,
    rhs: State<S>,
    work: Vec<S>,
    ws: CgWorkspace<S>,
    s_buf: Vec<S>,
    v_buf: Vec<S>,
    d_buf: Vec<S>,
    pub record_clamped: bool,
}

impl<'a, S: Real> Stepper<'a, S> {
    pub fn new(scenario: &'a Scenario<S>, scheme: Scheme, cg: CgOptions<S>) -> Result<Self> {
        let n = scenario.cells();
        let cached_faces = if scenario.diffusion.is_time_independent() {
            Some(faces_at(scenario, S::zero(), &mut vec![S::zero(); n])?)
        } else {
            None
        };
        Ok(Self {
            scenario,
            scheme,
            cg,
            cached_faces,
            rhs: State::zeros(n),
            work: vec![S::zero(); n],
            ws: CgWorkspace::new(n),
            s_buf: vec![S::zero(); n],
            v_buf: vec![S::zero(); n],
            d_buf: vec![S::zero(); n],
            record_clamped: false,
        })
    }

    pub fn scenario(&self) -> &Scenario<S> {
        self.scenario
    }

    /// Advances `state` from `t` to `t + dt` with sources sampled at the step midpoint.
    pub fn step(&mut self, state: &mut State<S>, t: S, dt: S) -> Result<StepReport<S>> {
        let mid = t + S::of(0.5) * dt;
        let mut s = std::mem::take(&mut self.s_buf);
        let mut v = std::mem::take(&mut self.v_buf);
        self.scenario.sources.s.fill(mid, &mut s);
        self.scenario.sources.v.fill(mid, &mut v);
        let out = self.step_with_sources(state, t, dt, &s, &v);
        self.s_buf = s;
        self.v_buf = v;
        out
    }

    /// Advances with caller-supplied immune influx `s` and injection `v`.
    pub fn step_with_sources(
        &mut self,
        state: &mut State<S>,
        t: S,
        dt: S,
        s: &[S],
        v: &[S],
    ) -> Result<StepReport<S>> {
        if !(dt > S::zero()) || !dt.is_finite() {
            return Err(Error::InvalidStep(format!("dt must be positive, got {dt}")));
        }
        let n = self.scenario.cells();
        let params = &self.scenario.params;
        let kinetics_on = self.scenario.kinetics == KineticsMode::Full;

        // Explicit reaction part into rhs.
        for c in 0..n {
            let x = state.point(c);
            let y = if kinetics_on {
                let f = reaction_rates(x, params, s[c], v[c]);
                x.zip_with(f, |a, r| a + dt * r)
            } else {
                x
            };
            self.rhs.set_point(c, y);
        }

        let mut report = StepReport {
            min_before_clamp: [S::infinity(); 4],
            clamp_max: [S::zero(); 4],
            clamped: Vec::new(),
            cg_iterations: 0,
        };
        let fresh;
        let faces: &[FaceCoeffs<S>; 4] = match &self.cached_faces {
            Some(f) => f,
            None => {
                let at = match self.scheme {
                    Scheme::Imex => t + dt,
                    Scheme::Explicit => t,
                };
                fresh = faces_at(self.scenario, at, &mut self.d_buf)?;
                &fresh
            }
        };

        for sp in Species::ALL {
            let k = sp.index();
            match self.scheme {
                Scheme::Imex => {
                    state.fields[k].copy_from_slice(&self.rhs.fields[k]);
                    let stats = conjugate_gradient(
                        |u, o| faces[k].apply_implicit(dt, u, o),
                        &self.rhs.fields[k],
                        &mut state.fields[k],
                        self.cg,
                        &mut self.ws,
                    )?;
                    report.cg_iterations += stats.iterations;
                }
                Scheme::Explicit => {
                    faces[k].apply(&state.fields[k], &mut self.work);
                    for c in 0..n {
                        state.fields[k][c] = self.rhs.fields[k][c] + dt * self.work[c];
                    }
                }
            }
            for (c, x) in state.fields[k].iter_mut().enumerate() {
                if !x.is_finite() {
                    return Err(Error::Divergence {
                        species: sp,
                        time: (t + dt).to_f64_lossy(),
                        cell: c,
                    });
                }
                report.min_before_clamp[k] = report.min_before_clamp[k].min(*x);
                if *x < S::zero() {
                    report.clamp_max[k] = report.clamp_max[k].max(-*x);
                    *x = S::zero();
                    if self.record_clamped {
                        report.clamped.push((sp, c));
                    }
                }
            }
        }
        Ok(report)
    }

    /// Face coefficients in effect for the implicit solve of a step ending at `t_end`.
    pub fn faces_for_step(&mut self, t_end: S) -> Result<[FaceCoeffs<S>; 4]> {
        match &self.cached_faces {
            Some(f) => Ok(f.clone()),
            None => faces_at(self.scenario, t_end, &mut self.d_buf),
        }
    }

    pub fn cg_options(&self) -> CgOptions<S> {
        self.cg
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
}

pub(crate) fn faces_at<S: Real>(
    scenario: &Scenario<S>,
    t: S,
    buf: &mut Vec<S>,
) -> Result<[FaceCoeffs<S>; 4]> {
    let n = scenario.cells();
    buf.resize(n, S::zero());
    let mut make = |sp: Species| -> Result<FaceCoeffs<S>> {
        scenario.diffusion.field(sp).fill(t, buf);
        FaceCoeffs::new(&scenario.grid, buf)
    };
    Ok([
        make(Species::Normal)?,
        make(Species::Tumor)?,
        make(Species::Immune)?,
        make(Species::Drug)?,
    ])
}

/// One IMEX step from `t` to `t + dt` on a fresh copy of `state`.
pub fn step<S: Real>(state: &State<S>, t: S, dt: S, scenario: &Scenario<S>) -> Result<State<S>> {
    let mut stepper = Stepper::new(scenario, Scheme::Imex, CgOptions::default())?;
    let mut next = state.clone();
    stepper.step(&mut next, t, dt)?;
    Ok(next)
}

/// Pointwise kinetics of the whole state, for diagnostics and residuals.
pub fn kinetics_field<S: Real>(
    state: &State<S>,
    scenario: &Scenario<S>,
    s: &[S],
    v: &[S],
) -> State<S> {
    let n = state.len();
    let mut out = State::zeros(n);
    for c in 0..n {
        let f = match scenario.kinetics {
            KineticsMode::Full => reaction_rates(state.point(c), &scenario.params, s[c], v[c]),
            KineticsMode::Disabled => Densities::splat(S::zero()),
        };
        out.set_point(c, f);
    }
    out
}
