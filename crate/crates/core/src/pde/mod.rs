//! Reaction-diffusion engine on uniform grids with zero-flux boundaries.

mod bounds;
mod scenario;
mod simulate;
mod steady;
mod stepper;

pub use bounds::{comparison_bounds, comparison_bounds_with, diffusion_cap, stable_dt, StableDt};
pub use scenario::{validate, KineticsMode, Scenario};
pub use simulate::{simulate, Diagnostics, SimOptions, Trajectory};
pub use steady::{steady_residual, steady_state, SteadyOptions, SteadyState};
pub(crate) use stepper::faces_at;
pub use stepper::{kinetics_field, step, Scheme, StepReport, Stepper};
