//! Dense `f32` tensors, the operation set, reverse-mode differentiation and
//! the loss primitives of the distillation objective.

pub mod func;
pub mod gradcheck;
pub mod kernels;
pub mod loss;
mod ops;
mod tape;
mod tensor;

pub use func::{matmul, softmax_t};
pub use gradcheck::{finite_diff_check, finite_diff_check_with, op_suite, Coords, GradCheckReport};
pub use loss::{cosine_embedding_loss, cross_entropy_soft, entropy, mlm_cross_entropy};
pub use ops::{Eager, Ops};
pub use tape::{Tape, Var};
pub use tensor::{alloc_stats, reset_peak, AllocStats, Tensor};
