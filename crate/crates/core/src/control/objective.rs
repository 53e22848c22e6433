//! Tracking cost, constraint penalty and their gradients with respect to the schedule.
//!
//! The forward model is the IMEX step with the control held constant on each slab.
//! The adjoint is the exact transpose of that discrete map: for the step
//! `x^{n+1} = clamp(M^{-1}(x^n + dt F(x^n, v)))` it runs
//! `q = M^{-1}(D p^{n+1})`, `p^n = ∂L/∂x^n + q + dt J_F(x^n)^T q`,
//! where `D` zeroes the cells the clamp touched.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ConstraintForm, ControlProblem, ControlSchedule};
use crate::error::{Error, Result};
use crate::fields::State;
use crate::grid::FaceCoeffs;
use crate::linalg::{conjugate_gradient, CgWorkspace};
use crate::model::{ramp, reaction_jacobian, Species};
use crate::pde::{faces_at, KineticsMode, Scheme, Stepper};
use crate::scalar::Real;

/// Parts of the objective for one schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport<S> {
    /// `∫ T(x, t0)² dx`.
    pub terminal: S,
    /// `(λ/2) ∬ v²`.
    pub regularization: S,
    /// Zero unless a penalty parameter was supplied.
    pub penalty: S,
    pub total: S,
    /// Achieved constraint integrals for `N` and `I`.
    pub achieved: [S; 2],
    pub floors: [S; 2],
    /// `achieved - floors`; negative means violated.
    pub margins: [S; 2],
    pub eps: Option<S>,
}

impl<S: Real> CostReport<S> {
    pub fn unpenalized(&self) -> S {
        self.terminal + self.regularization
    }

    pub fn min_margin(&self) -> S {
        self.margins[0].min(self.margins[1])
    }
}

/// Quadratic hinge `Σ_{m<0} (m / floor)² / (2 eps)` over both constraints.
pub fn penalty<S: Real>(margins: [S; 2], floors: [S; 2], eps: S) -> Result<S> {
    check_eps(eps)?;
    Ok(margins
        .iter()
        .zip(&floors)
        .filter(|(m, _)| **m < S::zero())
        .fold(S::zero(), |acc, (&m, &f)| {
            let r = m / f;
            acc + r * r / (S::of(2.0) * eps)
        }))
}

fn check_eps<S: Real>(eps: S) -> Result<()> {
    if eps > S::zero() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("penalty parameter must be positive, got {eps}"),
        })
    }
}

/// `d penalty / d margin` per constraint.
fn penalty_slope<S: Real>(margins: [S; 2], floors: [S; 2], eps: S) -> [S; 2] {
    [0, 1].map(|k| {
        if margins[k] < S::zero() {
            margins[k] / (floors[k] * floors[k] * eps)
        } else {
            S::zero()
        }
    })
}

/// Stored forward solve: every step's state and the cells clamped in it.
pub struct ForwardRecord<S> {
    pub states: Vec<State<S>>,
    pub clamped: Vec<Vec<(Species, usize)>>,
}

/// Runs the controlled forward model over `[0, t0]`, keeping every step.
pub fn forward<S: Real>(
    problem: &ControlProblem<S>,
    v: &ControlSchedule<S>,
) -> Result<ForwardRecord<S>> {
    let sc = &problem.scenario;
    let n = sc.cells();
    let dt = problem.dt();
    let m = problem.steps_per_slab;
    let mut stepper = Stepper::new(sc, Scheme::Imex, problem.cg)?;
    stepper.record_clamped = true;
    let mut s_buf = vec![S::zero(); n];
    let mut state = sc.initial.clone();
    let mut states = Vec::with_capacity(problem.steps() + 1);
    let mut clamped = Vec::with_capacity(problem.steps());
    states.push(state.clone());
    for step in 0..problem.steps() {
        let t = S::of_usize(step) * dt;
        sc.sources.s.fill(t + S::of(0.5) * dt, &mut s_buf);
        let report = stepper.step_with_sources(&mut state, t, dt, &s_buf, v.slab(step / m))?;
        clamped.push(report.clamped);
        states.push(state.clone());
    }
    Ok(ForwardRecord { states, clamped })
}

/// Trapezoid weight of time level `n` out of `steps`.
fn time_weight<S: Real>(n: usize, steps: usize, dt: S) -> S {
    if n == 0 || n == steps {
        S::of(0.5) * dt
    } else {
        dt
    }
}

fn evaluate<S: Real>(
    problem: &ControlProblem<S>,
    v: &ControlSchedule<S>,
    record: &ForwardRecord<S>,
    eps: Option<S>,
) -> Result<CostReport<S>> {
    let vol = problem.scenario.grid.cell_volume();
    let steps = problem.steps();
    let dt = problem.dt();
    let last = &record.states[steps];
    let terminal = last[Species::Tumor].iter().map(|&t| t * t).sum::<S>() * vol;
    let regularization =
        S::of(0.5) * problem.lambda * v.values.iter().map(|&x| x * x).sum::<S>() * problem.weight();

    let mut achieved = [S::zero(); 2];
    for (lvl, st) in record.states.iter().enumerate() {
        let w = time_weight(lvl, steps, dt) * vol;
        for (k, sp) in [Species::Normal, Species::Immune].into_iter().enumerate() {
            let sum: S = match problem.constraint.form {
                ConstraintForm::TimeAveragedMass => st[sp].iter().copied().sum(),
                ConstraintForm::SquaredIntegral => st[sp].iter().map(|&x| x * x).sum(),
            };
            achieved[k] += w * sum;
        }
    }
    if problem.constraint.form == ConstraintForm::TimeAveragedMass {
        achieved = achieved.map(|a| a / problem.horizon);
    }
    let floors = problem.constraint.floors();
    let margins = [achieved[0] - floors[0], achieved[1] - floors[1]];
    let pen = match eps {
        Some(e) => penalty(margins, floors, e)?,
        None => S::zero(),
    };
    Ok(CostReport {
        terminal,
        regularization,
        penalty: pen,
        total: terminal + regularization + pen,
        achieved,
        floors,
        margins,
        eps,
    })
}

/// Tracking cost and regularization, with constraint margins from the same solve.
pub fn cost<S: Real>(problem: &ControlProblem<S>, v: &ControlSchedule<S>) -> Result<CostReport<S>> {
    problem.check_admissible(v)?;
    let record = forward(problem, v)?;
    evaluate(problem, v, &record, None)
}

/// Cost plus the constraint penalty at `eps`.
pub fn penalized_cost<S: Real>(
    problem: &ControlProblem<S>,
    v: &ControlSchedule<S>,
    eps: S,
) -> Result<CostReport<S>> {
    check_eps(eps)?;
    let record = forward(problem, v)?;
    evaluate(problem, v, &record, Some(eps))
}

/// Central differences of the penalized cost, one pair of solves per control cell.
///
/// The schedule is not projected, so `v - h` may leave the box; the forward model accepts it.
pub fn gradient_fd<S: Real>(
    problem: &ControlProblem<S>,
    v: &ControlSchedule<S>,
    eps: S,
    h: S,
) -> Result<Vec<S>> {
    if !(h > S::zero()) {
        return Err(Error::InvalidParameter {
            name: "h",
            reason: format!("difference step must be positive, got {h}"),
        });
    }
    (0..v.len())
        .into_par_iter()
        .map(|j| {
            let mut plus = v.clone();
            plus.values[j] += h;
            let mut minus = v.clone();
            minus.values[j] -= h;
            let jp = penalized_cost(problem, &plus, eps)?.total;
            let jm = penalized_cost(problem, &minus, eps)?.total;
            Ok((jp - jm) / (S::of(2.0) * h))
        })
        .collect()
}

/// Penalized cost and its exact discrete gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<S> {
    pub report: CostReport<S>,
    pub values: Vec<S>,
}

/// Gradient of the penalized cost by one backward sweep of the discrete adjoint.
pub fn gradient_adjoint<S: Real>(
    problem: &ControlProblem<S>,
    v: &ControlSchedule<S>,
    eps: S,
) -> Result<Gradient<S>> {
    check_eps(eps)?;
    let record = forward(problem, v)?;
    let report = evaluate(problem, v, &record, Some(eps))?;
    let reg = problem.lambda * problem.weight();
    let mut grad: Vec<S> = v.values.iter().map(|&x| reg * x).collect();
    let sc = &problem.scenario;
    let n = sc.cells();
    let steps = problem.steps();
    let dt = problem.dt();
    let m = problem.steps_per_slab;
    let vol = sc.grid.cell_volume();
    if sc.kinetics == KineticsMode::Disabled {
        // The control only enters through the kinetics.
        return Ok(Gradient {
            report,
            values: grad,
        });
    }

    // Sensitivity of the penalty to each time level through the constraint integrals.
    let slope = penalty_slope(report.margins, report.floors, eps);
    let direct = |lvl: usize, p: &mut State<S>| {
        let w = time_weight(lvl, steps, dt) * vol;
        for (k, sp) in [Species::Normal, Species::Immune].into_iter().enumerate() {
            if slope[k] == S::zero() {
                continue;
            }
            let x = &record.states[lvl][sp];
            let out = &mut p.fields[sp.index()];
            match problem.constraint.form {
                ConstraintForm::TimeAveragedMass => {
                    let c = slope[k] * w / problem.horizon;
                    out.iter_mut().for_each(|o| *o += c);
                }
                ConstraintForm::SquaredIntegral => {
                    let c = slope[k] * w * S::of(2.0);
                    out.iter_mut().zip(x).for_each(|(o, &xi)| *o += c * xi);
                }
            }
        }
    };

    let mut p = State::zeros(n);
    for (o, &t) in p.fields[Species::Tumor.index()]
        .iter_mut()
        .zip(&record.states[steps][Species::Tumor])
    {
        *o = S::of(2.0) * t * vol;
    }
    direct(steps, &mut p);

    let cached = if sc.diffusion.is_time_independent() {
        Some(faces_at(sc, S::zero(), &mut Vec::new())?)
    } else {
        None
    };
    let mut d_buf = Vec::new();
    let mut q = State::zeros(n);
    let mut rhs = vec![S::zero(); n];
    let mut ws = CgWorkspace::new(n);
    let cutoff_width = sc.params.h_delta;
    let n_min = sc.params.n_min;

    for step in (0..steps).rev() {
        let fresh;
        let faces: &[FaceCoeffs<S>; 4] = match &cached {
            Some(f) => f,
            None => {
                fresh = faces_at(sc, S::of_usize(step + 1) * dt, &mut d_buf)?;
                &fresh
            }
        };
        for (k, face) in faces.iter().enumerate() {
            rhs.copy_from_slice(&p.fields[k]);
            for &(sp, c) in &record.clamped[step] {
                if sp.index() == k {
                    rhs[c] = S::zero();
                }
            }
            q.fields[k].copy_from_slice(&rhs);
            conjugate_gradient(
                |u, o| face.apply_implicit(dt, u, o),
                &rhs,
                &mut q.fields[k],
                problem.cg,
                &mut ws,
            )?;
        }
        let slab = step / m;
        let vs = v.slab(slab);
        let x = &record.states[step];
        let g = &mut grad[slab * n..(slab + 1) * n];
        for c in 0..n {
            let qc = q.point(c);
            let xc = x.point(c);
            g[c] += dt * ramp(xc.n - n_min, cutoff_width) * qc.u;
            let jac = reaction_jacobian(xc, &sc.params, vs[c]);
            let mut pc = qc;
            for (b, sb) in Species::ALL.into_iter().enumerate() {
                let jt: S = (0..4).map(|a| jac[a][b] * qc[Species::ALL[a]]).sum();
                pc[sb] += dt * jt;
            }
            p.set_point(c, pc);
        }
        direct(step, &mut p);
    }

    Ok(Gradient {
        report,
        values: grad,
    })
}
