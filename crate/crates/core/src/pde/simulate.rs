use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::State;
use crate::grid::Grid;
use crate::linalg::CgOptions;
use crate::model::Species;
use crate::ode::step_count;
use crate::pde::{Scenario, Scheme, Stepper};
use crate::scalar::{max_of, min_of, sup_norm, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions<S> {
    pub scheme: Scheme,
    /// Fixed step; defaults to the scenario's stable step.
    pub dt: Option<S>,
    pub cg: CgOptions<S>,
    /// Time between snapshots; every step when `None`.
    pub snapshot_every: Option<S>,
}

impl<S: Real> Default for SimOptions<S> {
    fn default() -> Self {
        Self {
            scheme: Scheme::Imex,
            dt: None,
            cg: CgOptions::default(),
            snapshot_every: None,
        }
    }
}

impl<S: Real> SimOptions<S> {
    pub fn with_dt(mut self, dt: S) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn every(mut self, interval: S) -> Self {
        self.snapshot_every = Some(interval);
        self
    }

    pub fn scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }
}

/// Per-snapshot summary of the stored fields plus clamp activity since the previous snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<S> {
    /// Spatial integral per species.
    pub mass: [S; 4],
    pub sup: [S; 4],
    pub min: [S; 4],
    /// Minimum over the steps since the previous snapshot, before clamping.
    pub min_before_clamp: [S; 4],
    pub clamp_max: [S; 4],
}

impl<S: Real> Diagnostics<S> {
    pub fn of_state(state: &State<S>, grid: &Grid<S>) -> Self {
        let vol = grid.cell_volume();
        let per = |f: &dyn Fn(&[S]) -> S| Species::ALL.map(|sp| f(&state[sp]));
        let min = per(&|x| min_of(x));
        Self {
            mass: per(&|x| x.iter().copied().sum::<S>() * vol),
            sup: per(&|x| sup_norm(x)),
            min,
            min_before_clamp: min,
            clamp_max: [S::zero(); 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub grid: Grid<S>,
    pub times: Vec<S>,
    pub states: Vec<State<S>>,
    pub diagnostics: Vec<Diagnostics<S>>,
    pub dt: S,
    pub steps: usize,
    pub cg_iterations: usize,
}

impl<S: Real> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &State<S> {
        self.states
            .last()
            .expect("trajectory holds the initial snapshot")
    }

    pub fn sup_series(&self, sp: Species) -> Vec<S> {
        self.diagnostics.iter().map(|d| d.sup[sp.index()]).collect()
    }

    pub fn mass_series(&self, sp: Species) -> Vec<S> {
        self.diagnostics
            .iter()
            .map(|d| d.mass[sp.index()])
            .collect()
    }

    /// Largest clamp magnitude over the run, per species.
    pub fn max_clamp(&self) -> [S; 4] {
        let mut out = [S::zero(); 4];
        for d in &self.diagnostics {
            for (o, c) in out.iter_mut().zip(d.clamp_max) {
                *o = o.max(c);
            }
        }
        out
    }

    /// Checks that times increase and stored diagnostics match the stored fields.
    pub fn is_consistent(&self) -> bool {
        let increasing = self.times.windows(2).all(|w| w[0] < w[1]);
        let same_len =
            self.times.len() == self.states.len() && self.states.len() == self.diagnostics.len();
        let recomputed = self.states.iter().zip(&self.diagnostics).all(|(st, d)| {
            let fresh = Diagnostics::of_state(st, &self.grid);
            (0..4).all(|k| {
                let tol = S::of(1e-12) * (S::one() + fresh.mass[k].abs());
                (fresh.mass[k] - d.mass[k]).abs() <= tol
                    && fresh.sup[k] == d.sup[k]
                    && fresh.min[k] == d.min[k]
            })
        });
        increasing && same_len && recomputed
    }
}

/// Integrates the scenario from its initial fields to `t_end`, recording
/// snapshots (always including the initial and final states).
pub fn simulate<S: Real>(
    scenario: &Scenario<S>,
    t_end: S,
    opts: &SimOptions<S>,
) -> Result<Trajectory<S>> {
    if !(t_end > S::zero()) || !t_end.is_finite() {
        return Err(Error::InvalidStep(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    let stable = scenario.stable_dt(t_end);
    let dt = match opts.dt {
        Some(dt) => {
            if !(dt > S::zero()) {
                return Err(Error::InvalidStep(format!("dt must be positive, got {dt}")));
            }
            if opts.scheme == Scheme::Explicit && dt > stable.diffusion_cap {
                return Err(Error::InvalidStep(format!(
                    "explicit scheme needs dt <= {} (diffusion limit), got {dt}",
                    stable.diffusion_cap
                )));
            }
            dt
        }
        None => stable.dt,
    };
    let steps = step_count(t_end, dt);
    let mut stepper = Stepper::new(scenario, opts.scheme, opts.cg)?;
    let mut state = scenario.initial.clone();

    let mut times = vec![S::zero()];
    let mut states = vec![state.clone()];
    let mut diagnostics = vec![Diagnostics::of_state(&state, &scenario.grid)];
    let mut pending_min = [S::infinity(); 4];
    let mut pending_clamp = [S::zero(); 4];
    let mut next_snapshot = opts.snapshot_every;
    let mut cg_iterations = 0;
    let mut t = S::zero();

    for k in 1..=steps {
        let t_next = if k == steps {
            t_end
        } else {
            S::of_usize(k) * dt
        };
        let report = stepper.step(&mut state, t, t_next - t)?;
        cg_iterations += report.cg_iterations;
        for q in 0..4 {
            pending_min[q] = pending_min[q].min(report.min_before_clamp[q]);
            pending_clamp[q] = pending_clamp[q].max(report.clamp_max[q]);
        }
        t = t_next;

        let take = match (opts.snapshot_every, next_snapshot) {
            (Some(h), Some(at)) => {
                if t >= at - S::of(1e-9) * dt || k == steps {
                    let mut nxt = at;
                    while nxt <= t + S::of(1e-9) * dt {
                        nxt += h;
                    }
                    next_snapshot = Some(nxt);
                    true
                } else {
                    false
                }
            }
            _ => true,
        };
        if take {
            let mut d = Diagnostics::of_state(&state, &scenario.grid);
            d.min_before_clamp = pending_min;
            d.clamp_max = pending_clamp;
            pending_min = [S::infinity(); 4];
            pending_clamp = [S::zero(); 4];
            times.push(t);
            states.push(state.clone());
            diagnostics.push(d);
        }
    }
    Ok(Trajectory {
        grid: scenario.grid.clone(),
        times,
        states,
        diagnostics,
        dt,
        steps,
        cg_iterations,
    })
}

impl<S: Real> Scenario<S> {
    /// Spatially uniform counterpart: initial data and sources replaced by their spatial means.
    pub fn homogenized(&self) -> Scenario<S> {
        let n = self.cells();
        let mut out = self.clone();
        for sp in Species::ALL {
            let mean = self.initial[sp].iter().copied().sum::<S>() / S::of_usize(n);
            out.initial[sp] = vec![mean; n];
        }
        out.sources.s = self.sources.s.spatial_mean();
        out.sources.v = self.sources.v.spatial_mean();
        out
    }

    /// Largest value of each initial field.
    pub fn initial_sup(&self) -> [S; 4] {
        Species::ALL.map(|sp| max_of(&self.initial[sp]))
    }
}
