//! Reverse-mode differentiation over complex arrays.

mod array;
mod gradcheck;
mod tape;

pub use array::{broadcast_shape, Array, C64};
pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use tape::{CustomFn, Gradients, Tape, UnaryFn, Var, DEFAULT_COND_LIMIT};
