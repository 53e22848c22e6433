//! Simulation and optimal dosing for a reaction-diffusion model of normal,
//! tumor and immune cells under a chemotherapeutic drug.
//!
//! All numerics are generic over [`Real`]; the `*64` aliases below fix `f64`.

// `!(x > 0)` is the idiom for "not positive, or NaN" throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod control;
pub mod error;
pub mod fields;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod pde;
pub mod presets;
pub mod scalar;

pub use error::{Error, Hypothesis, Result, Violation, Violations};
pub use fields::{Amplitude, DiffusionCoeffs, SourceFields, SpaceTimeField, State};
pub use grid::{div_d_grad, Grid};
pub use model::{
    kill_fraction, reaction_jacobian, reaction_rates, smooth_heaviside, Densities, ModelParams,
    Species,
};
pub use ode::{ode_integrate, ode_step, OdeMethod, OdeState, OdeSystem, OdeTrajectory};
pub use pde::{
    simulate, steady_state, KineticsMode, Scenario, Scheme, SimOptions, SteadyState, Trajectory,
};
pub use scalar::Real;

pub type Params64 = ModelParams<f64>;
pub type Grid64 = Grid<f64>;
pub type State64 = State<f64>;
pub type Scenario64 = Scenario<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type SteadyState64 = SteadyState<f64>;

pub type Params32 = ModelParams<f32>;
pub type Scenario32 = Scenario<f32>;
