//! Differentiable frequency-sampling toolkit for linear audio systems.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Tape values have `add`/`mul`/... methods that take the tape lifetime.
#![allow(clippy::should_implement_trait)]

pub mod antialias;
pub mod apps;
pub mod autodiff;
pub mod error;
pub mod filters;
pub mod grid;
pub mod modules;
pub mod shell;
pub mod system;
pub mod train;

pub use error::{Error, Result};
