//! Minimal reverse-mode automatic differentiation.
//!
//! Computation is recorded define-by-run on a [`Tape`]: every operation
//! appends a node holding its forward value and enough bookkeeping to run
//! its vector-Jacobian product. [`Tape::backward`] walks nodes in reverse
//! creation order (a valid reverse topological order, since inputs always
//! precede their consumers) and accumulates gradients with sum semantics:
//! a value used twice receives the sum of both paths' contributions.
//!
//! Gradients land in the [`ParamSet`], which owns named parameter tensors,
//! their gradient buffers, and per-parameter trainability flags. Frozen
//! parameters enter the tape as constants, so backward never touches them;
//! this is what makes adapter-only training cheap and provably isolated.
//!
//! [`grad_check`] validates any scalar-valued graph against central finite
//! differences and is the oracle used throughout the test suite.

mod gradcheck;
mod param;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use param::{Param, ParamId, ParamSet};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
