//! Dense f64 tensors, a define-by-run reverse-mode tape, Adam, and a
//! central-difference gradient checker.
//!
//! All reductions accumulate sequentially in a fixed index order so that two
//! runs of the same build produce bit-identical values.

mod adam;
pub mod conv;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{adam_step, Adam, AdamConfig, AdamMoments};
pub use gradcheck::grad_check;
pub use graph::{Graph, Var};
pub use tensor::{log_softmax_row, matmul, relu, softmax, Tensor};
