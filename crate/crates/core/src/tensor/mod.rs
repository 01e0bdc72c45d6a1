//! Dense matrices, a reverse-mode tape over them, and the Adam update.

mod adam;
pub mod check;
mod dense;
mod tape;

pub use adam::Adam;
pub use dense::Tensor;
pub use tape::{softmax_rows, BackwardFn, Gradients, Tape, Var};
