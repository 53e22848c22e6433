use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::Species;

/// Which modelling hypothesis a validation failure violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Hypothesis {
    /// Diffusion coefficients bounded between two positive constants.
    #[serde(rename = "H(2.1)")]
    DiffusionBounds,
    /// Nonnegative bounded sources and a C1 cutoff ramp.
    #[serde(rename = "H(2.2)")]
    Sources,
    /// Bounded nonnegative initial data.
    #[serde(rename = "H(2.3)")]
    InitialData,
    /// Positive rate parameters.
    #[serde(rename = "H(2.4)")]
    PositiveParameters,
    /// Constraint slacks below the baseline masses.
    #[serde(rename = "H(4.1)")]
    ConstraintSlack,
    /// Fields that do not match the grid.
    #[serde(rename = "conformance")]
    Conformance,
}

impl Hypothesis {
    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::DiffusionBounds => "H(2.1)",
            Hypothesis::Sources => "H(2.2)",
            Hypothesis::InitialData => "H(2.3)",
            Hypothesis::PositiveParameters => "H(2.4)",
            Hypothesis::ConstraintSlack => "H(4.1)",
            Hypothesis::Conformance => "conformance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub hypothesis: Hypothesis,
    pub message: String,
}

impl Violation {
    pub fn new(hypothesis: Hypothesis, message: impl Into<String>) -> Self {
        Self {
            hypothesis,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.hypothesis.label(), self.message)
    }
}

/// Every violation found while validating a scenario, not just the first.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Violations(pub Vec<Violation>);

impl Violations {
    pub fn push(&mut self, hypothesis: Hypothesis, message: impl Into<String>) {
        self.0.push(Violation::new(hypothesis, message));
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Violation> {
        self.0.iter()
    }

    pub fn has(&self, hypothesis: Hypothesis) -> bool {
        self.0.iter().any(|v| v.hypothesis == hypothesis)
    }

    pub fn into_result(self) -> Result<(), Error> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("scenario validation failed:\n{0}")]
    Validation(Violations),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Conformance { expected: String, found: String },

    #[error("non-finite {species} at t = {time}, cell {cell}")]
    Divergence {
        species: Species,
        time: f64,
        cell: usize,
    },

    #[error(
        "conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})"
    )]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid time step: {0}")]
    InvalidStep(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
