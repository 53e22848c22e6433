//! Spatially homogeneous model: fixed-step integration of the four coupled ODEs.
//!
//! Used on its own and as the reference the PDE engine must reproduce on
//! spatially uniform data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ramp, reaction_rates, Densities, ModelParams, Species};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeState<S> {
    pub time: S,
    pub x: Densities<S>,
}

impl<S: Real> OdeState<S> {
    pub fn new(time: S, x: Densities<S>) -> Self {
        Self { time, x }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OdeMethod {
    /// Classical fourth-order Runge-Kutta.
    #[default]
    Rk4,
    /// Forward Euler, for step-by-step comparison with the IMEX PDE stepper.
    Euler,
}

type RateFn<'a, S> = Box<dyn Fn(S) -> S + Send + Sync + 'a>;

/// Right-hand side of the homogeneous system with time-dependent influx rates.
pub struct OdeSystem<'a, S> {
    pub params: ModelParams<S>,
    s_of_t: RateFn<'a, S>,
    v_of_t: RateFn<'a, S>,
    /// Multiply the injection by the normal-cell cutoff ramp, as in the PDE kinetics.
    pub drug_cutoff: bool,
    pub method: OdeMethod,
}

impl<'a, S: Real> OdeSystem<'a, S> {
    pub fn new(
        params: ModelParams<S>,
        s_of_t: impl Fn(S) -> S + Send + Sync + 'a,
        v_of_t: impl Fn(S) -> S + Send + Sync + 'a,
    ) -> Self {
        Self {
            params,
            s_of_t: Box::new(s_of_t),
            v_of_t: Box::new(v_of_t),
            drug_cutoff: false,
            method: OdeMethod::Rk4,
        }
    }

    pub fn constant_sources(params: ModelParams<S>, s: S, v: S) -> Self {
        Self::new(params, move |_| s, move |_| v)
    }

    pub fn with_cutoff(mut self, on: bool) -> Self {
        self.drug_cutoff = on;
        self
    }

    pub fn with_method(mut self, method: OdeMethod) -> Self {
        self.method = method;
        self
    }

    pub fn rhs(&self, time: S, x: Densities<S>) -> Densities<S> {
        let s = (self.s_of_t)(time);
        let v = (self.v_of_t)(time);
        let mut f = reaction_rates(x, &self.params, s, v);
        if !self.drug_cutoff {
            f.u = v - self.params.k2 * x.u;
        } else {
            debug_assert_eq!(
                f.u,
                v * ramp(x.n - self.params.n_min, self.params.h_delta) - self.params.k2 * x.u
            );
        }
        f
    }
}

/// Result of one step: the clamped state and the largest magnitude removed by clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeStep<S> {
    pub state: OdeState<S>,
    pub clamp: S,
}

/// Advances one step of size `dt`, clamping any negative component to zero.
pub fn ode_step<S: Real>(
    state: OdeState<S>,
    dt: S,
    system: &OdeSystem<'_, S>,
) -> Result<OdeStep<S>> {
    if !(dt > S::zero()) || !dt.is_finite() {
        return Err(Error::InvalidStep(format!("dt must be positive, got {dt}")));
    }
    let t = state.time;
    let x = state.x;
    let next = match system.method {
        OdeMethod::Euler => x.zip_with(system.rhs(t, x), |a, k| a + dt * k),
        OdeMethod::Rk4 => {
            let half = S::of(0.5) * dt;
            let axpy = |a: Densities<S>, k: Densities<S>, h: S| a.zip_with(k, |p, q| p + h * q);
            let k1 = system.rhs(t, x);
            let k2 = system.rhs(t + half, axpy(x, k1, half));
            let k3 = system.rhs(t + half, axpy(x, k2, half));
            let k4 = system.rhs(t + dt, axpy(x, k3, dt));
            let sixth = dt / S::of(6.0);
            let two = S::of(2.0);
            Densities::from_array(std::array::from_fn(|a| {
                let sp = Species::ALL[a];
                x[sp] + sixth * (k1[sp] + two * k2[sp] + two * k3[sp] + k4[sp])
            }))
        }
    };
    let clamp = next.to_array().iter().fold(S::zero(), |m, &v| m.max(-v));
    let clamped = next.map(|v| v.max(S::zero()));
    Ok(OdeStep {
        state: OdeState::new(t + dt, clamped),
        clamp,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeTrajectory<S> {
    pub states: Vec<OdeState<S>>,
    /// Largest clamp magnitude over the run.
    pub max_clamp: S,
}

impl<S: Real> OdeTrajectory<S> {
    pub fn last(&self) -> &OdeState<S> {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    /// Linear interpolation at time `t` inside the trajectory.
    pub fn sample(&self, t: S) -> Densities<S> {
        let k = self.states.partition_point(|s| s.time < t);
        if k == 0 {
            return self.states[0].x;
        }
        if k >= self.states.len() {
            return self.last().x;
        }
        let (a, b) = (&self.states[k - 1], &self.states[k]);
        let w = (t - a.time) / (b.time - a.time);
        a.x.zip_with(b.x, |p, q| p + w * (q - p))
    }
}

/// Fixed-step trajectory over `[initial.time, initial.time + t_end]`, sampled at every step,
/// ending exactly at the final time (the last step may be shorter).
pub fn ode_integrate<S: Real>(
    initial: OdeState<S>,
    t_end: S,
    dt: S,
    system: &OdeSystem<'_, S>,
) -> Result<OdeTrajectory<S>> {
    if !(t_end > S::zero()) {
        return Err(Error::InvalidStep(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if !(dt > S::zero()) {
        return Err(Error::InvalidStep(format!("dt must be positive, got {dt}")));
    }
    let steps = step_count(t_end, dt);
    let t0 = initial.time;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(initial);
    let mut current = initial;
    let mut max_clamp = S::zero();
    for k in 1..=steps {
        let target = if k == steps {
            t0 + t_end
        } else {
            t0 + S::of_usize(k) * dt
        };
        let h = target - current.time;
        let out = ode_step(current, h, system)?;
        current = out.state;
        current.time = target;
        max_clamp = max_clamp.max(out.clamp);
        for sp in Species::ALL {
            if !current.x[sp].is_finite() {
                return Err(Error::Divergence {
                    species: sp,
                    time: target.to_f64_lossy(),
                    cell: 0,
                });
            }
        }
        states.push(current);
    }
    Ok(OdeTrajectory { states, max_clamp })
}

/// Number of steps of size `dt` needed to reach `t_end`, ignoring a sliver
/// below `1e-9 dt` left by rounding.
pub fn step_count<S: Real>(t_end: S, dt: S) -> usize {
    let ratio = t_end / dt;
    let n = (ratio - S::of(1e-9)).ceil();
    n.to_usize().unwrap_or(1).max(1)
}
