//! Dense linear algebra, softmax/loss primitives, and analytic reverse-mode
//! gradients for the fixed layer-stack architecture family.
//!
//! Everything here is generic over [`crate::num::Scalar`]; the estimators use
//! the concrete [`crate::Real`] alias. All functions are pure over immutable
//! parameter snapshots and safe to call concurrently.

mod fd;
mod loss;
mod stack;

pub use fd::finite_diff_grad;
pub use loss::{cross_entropy, log_softmax_t, softmax_rows_t, softmax_t, PROB_CLAMP};
pub use stack::{
    backward_stack, forward_batch, forward_stack, Activation, DenseLayer, LayerGrad, StackCache,
};
