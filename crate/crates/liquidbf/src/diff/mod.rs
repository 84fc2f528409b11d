//! Scalar reverse-mode automatic differentiation and the differentiable
//! precoding pipeline.
//!
//! The training loss runs through dense network layers, the row-space
//! projection, the power normalization, and the determinant-based rates.
//! All of that math is written once, generic over an evaluation context
//! ([`Ctx`]): [`F64Ctx`] executes it directly on `f64` for fast inference,
//! while [`Tape`] records every operation and replays it backward for exact
//! gradients. Both contexts share the same scalar kernels, so a taped forward
//! pass reproduces the plain value bit for bit.

mod cx;
mod pipeline;
mod tape;

pub use cx::{cx_add, cx_mat_values, cx_mul, cx_mul_conj, CxMat, CxS};
pub use pipeline::{lift_matrix, log_loss_g, per_user_rates_g, project_and_normalize_g, sum_g};
pub use tape::{sigmoid_f64, softplus_f64, Ctx, F64Ctx, Gradients, NodeId, Tape};
