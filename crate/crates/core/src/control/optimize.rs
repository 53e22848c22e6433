//! Projected gradient descent in the `L²(Q_t0)` metric with backtracking and
//! continuation in the penalty parameter.

use serde::{Deserialize, Serialize};

use crate::control::{
    gradient_adjoint, penalized_cost, ControlProblem, ControlSchedule, CostReport,
};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions<S> {
    /// Decreasing penalty parameters; each stage runs until the projected gradient is small.
    pub eps_schedule: Vec<S>,
    /// Cap on accepted iterates over all stages.
    pub max_iters: usize,
    /// `L²` norm of the projected gradient step that ends a stage.
    pub tol_grad: S,
    /// Sufficient-decrease factor.
    pub armijo: S,
    /// Backtracking gives up below `min_step_ratio / lambda`.
    pub min_step_ratio: S,
}

impl<S: Real> Default for OptimizeOptions<S> {
    fn default() -> Self {
        Self {
            eps_schedule: vec![S::of(1e-1), S::of(1e-2), S::of(1e-3)],
            max_iters: 500,
            tol_grad: S::of(1e-6),
            armijo: S::of(1e-4),
            min_step_ratio: S::of(1e-12),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Projected gradient below tolerance at the last penalty stage.
    Converged,
    MaxIterations,
    /// No sufficient decrease down to the minimum step; the last iterate is kept.
    Stalled,
}

/// One entry of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord<S> {
    pub iter: usize,
    pub stage: usize,
    pub eps: S,
    pub cost: CostReport<S>,
    /// `L²` norm of `P(v - ∇J) - v`.
    pub grad_norm: S,
    /// Step length that produced this iterate (zero at a stage start).
    pub step: S,
    pub backtracks: usize,
}

/// Enough state to continue an interrupted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<S> {
    pub schedule: ControlSchedule<S>,
    pub stage: usize,
    pub iter: usize,
    pub step: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeResult<S> {
    pub schedule: ControlSchedule<S>,
    pub history: Vec<IterateRecord<S>>,
    pub termination: Termination,
    pub checkpoint: Checkpoint<S>,
}

impl<S: Real> OptimizeResult<S> {
    pub fn final_cost(&self) -> &CostReport<S> {
        &self
            .history
            .last()
            .expect("history starts with the initial iterate")
            .cost
    }

    /// Penalized cost never increases between accepted iterates of the same stage.
    pub fn is_monotone(&self) -> bool {
        self.history
            .windows(2)
            .filter(|w| w[0].stage == w[1].stage)
            .all(|w| w[1].cost.total <= w[0].cost.total)
    }
}

pub fn optimize<S: Real>(
    problem: &ControlProblem<S>,
    initial: &ControlSchedule<S>,
    opts: &OptimizeOptions<S>,
) -> Result<OptimizeResult<S>> {
    let start = Checkpoint {
        schedule: initial.clone(),
        stage: 0,
        iter: 0,
        step: S::one() / problem.lambda,
    };
    optimize_from(problem, start, opts, &mut |_| Ok(()))
}

/// Runs from a checkpoint, handing every recorded iterate to `observe` (for logging
/// and checkpointing) before continuing.
pub fn optimize_from<S: Real>(
    problem: &ControlProblem<S>,
    start: Checkpoint<S>,
    opts: &OptimizeOptions<S>,
    observe: &mut dyn FnMut(&IterateRecord<S>) -> Result<()>,
) -> Result<OptimizeResult<S>> {
    if opts.eps_schedule.is_empty() || opts.eps_schedule.iter().any(|&e| !(e > S::zero())) {
        return Err(Error::InvalidParameter {
            name: "eps_schedule",
            reason: "need at least one positive penalty parameter".into(),
        });
    }
    if start.stage >= opts.eps_schedule.len() {
        return Err(Error::InvalidParameter {
            name: "stage",
            reason: format!("checkpoint stage {} beyond the schedule", start.stage),
        });
    }
    problem.check_admissible(&start.schedule)?;

    let w = problem.weight();
    let min_step = opts.min_step_ratio / problem.lambda;
    let mut v = start.schedule;
    let mut stage = start.stage;
    let mut iter = start.iter;
    let mut step = if start.step > S::zero() {
        start.step
    } else {
        S::one() / problem.lambda
    };
    let mut history = Vec::new();

    let mut current = gradient_adjoint(problem, &v, opts.eps_schedule[stage])?;
    let mut record = |history: &mut Vec<IterateRecord<S>>, r: IterateRecord<S>| -> Result<()> {
        observe(&r)?;
        history.push(r);
        Ok(())
    };
    record(
        &mut history,
        IterateRecord {
            iter,
            stage,
            eps: opts.eps_schedule[stage],
            cost: current.report,
            grad_norm: projected_gradient_norm(&v, &current.values, w, problem.v_max),
            step: S::zero(),
            backtracks: 0,
        },
    )?;

    let termination = loop {
        let eps = opts.eps_schedule[stage];
        let pg = history.last().map_or(S::infinity(), |r| r.grad_norm);
        if pg < opts.tol_grad {
            if stage + 1 == opts.eps_schedule.len() {
                break Termination::Converged;
            }
            stage += 1;
            current = gradient_adjoint(problem, &v, opts.eps_schedule[stage])?;
            record(
                &mut history,
                IterateRecord {
                    iter,
                    stage,
                    eps: opts.eps_schedule[stage],
                    cost: current.report,
                    grad_norm: projected_gradient_norm(&v, &current.values, w, problem.v_max),
                    step: S::zero(),
                    backtracks: 0,
                },
            )?;
            continue;
        }
        if iter >= opts.max_iters {
            break Termination::MaxIterations;
        }

        let mut backtracks = 0;
        let accepted = loop {
            let cand = projected_step(&v, &current.values, step / w, problem.v_max);
            let decrease: S = current
                .values
                .iter()
                .zip(cand.values.iter().zip(&v.values))
                .map(|(&g, (&a, &b))| g * (a - b))
                .sum();
            let trial = penalized_cost(problem, &cand, eps)?;
            if trial.total <= current.report.total + opts.armijo * decrease {
                break Some(cand);
            }
            step *= S::of(0.5);
            backtracks += 1;
            if step < min_step {
                break None;
            }
        };
        let Some(cand) = accepted else {
            break Termination::Stalled;
        };
        v = cand;
        iter += 1;
        current = gradient_adjoint(problem, &v, eps)?;
        record(
            &mut history,
            IterateRecord {
                iter,
                stage,
                eps,
                cost: current.report,
                grad_norm: projected_gradient_norm(&v, &current.values, w, problem.v_max),
                step,
                backtracks,
            },
        )?;
        step *= S::of(2.0);
    };

    let checkpoint = Checkpoint {
        schedule: v.clone(),
        stage,
        iter,
        step,
    };
    Ok(OptimizeResult {
        schedule: v,
        history,
        termination,
        checkpoint,
    })
}

/// `P(v - scale * g)`, the gradient first converted to the `L²` Riesz representative.
fn projected_step<S: Real>(
    v: &ControlSchedule<S>,
    g: &[S],
    scale: S,
    v_max: S,
) -> ControlSchedule<S> {
    let mut out = v.clone();
    for (o, &gi) in out.values.iter_mut().zip(g) {
        *o -= scale * gi;
    }
    out.project(v_max);
    out
}

fn projected_gradient_norm<S: Real>(v: &ControlSchedule<S>, g: &[S], w: S, v_max: S) -> S {
    let p = projected_step(v, g, S::one() / w, v_max);
    let sq: S = p
        .values
        .iter()
        .zip(&v.values)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    (sq * w).sqrt()
}
