//! Tape-based reverse-mode differentiation for dense `f64` matrices.
//!
//! Every tensor is a 2-D matrix (scalars are 1x1). The backward pass is itself
//! recorded as tape operations, so gradients can be differentiated again; this
//! is what makes the gradient penalty trainable. Argmax indices and activation
//! masks are treated as constants under re-differentiation (their derivative is
//! zero almost everywhere).
//!
//! Reductions over rows/columns accumulate in a canonical (sorted) order, so
//! pooling a permuted point set reproduces bit-identical values.

mod penalty;
mod tape;

pub use penalty::gradient_penalty_with;
pub use tape::{BatchNormOut, Tape, Tensor, TensorId, BN_EPS};
