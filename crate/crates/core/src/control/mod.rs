//! Optimal drug dosing: minimize the terminal tumor burden plus a quadratic dose
//! penalty, subject to floors on normal and immune cell populations.

mod objective;
mod optimize;
mod problem;

pub use objective::{
    cost, forward, gradient_adjoint, gradient_fd, penalized_cost, penalty, CostReport,
    ForwardRecord, Gradient,
};
pub use optimize::{
    optimize, optimize_from, Checkpoint, IterateRecord, OptimizeOptions, OptimizeResult,
    Termination,
};
pub use problem::{ConstraintForm, ConstraintSpec, ControlProblem, ControlSchedule};

#[cfg(test)]
mod tests;
