//! Backstepping boundary observers for 1-D reaction-advection-diffusion
//! equations with space- and time-varying coefficients.
//!
//! The toolkit covers the full estimation pipeline:
//!
//! * [`coeffs`]: problem data (diffusion, advection, reaction, boundary
//!   input) from analytic families with exact partials, plus the derived
//!   quantities of the advection-free form and the admissible range of the
//!   target decay coefficient;
//! * [`xform`]: gauge, coordinate, and Volterra transformations;
//! * [`kernel`]: the output-injection kernel, solved by successive
//!   approximation in characteristic coordinates, with an independent direct
//!   Goursat marcher and residual checks as cross-validation;
//! * [`gains`]: injection gain extraction from a solved kernel;
//! * [`sim`]: Crank-Nicolson co-simulation of plant, observer, error, and
//!   target systems with norm and decay diagnostics;
//! * [`config`]: declarative scenario descriptions (JSON-friendly).

pub mod coeffs;
pub mod config;
pub mod error;
pub mod gains;
pub mod grid;
pub mod kernel;
pub mod quad;
pub mod sim;
pub mod xform;

pub use error::{Error, Result};
