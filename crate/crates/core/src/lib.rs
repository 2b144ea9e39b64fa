pub mod compare;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod model;
pub mod presets;
pub mod quadrature;
pub mod regularization;
pub mod state;
pub mod strong_galerkin;
pub mod weak_stepper;

pub use error::{Result, SimError};
