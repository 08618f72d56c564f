//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Only the operations the attention models need are provided: matrix
//! products, elementwise nonlinearities, row gathers, per-head edge dot
//! products, neighborhood aggregation, segment softmax, dropout and the
//! fused loss kernels. Broadcasting is limited to scalar operands.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{analytic_gradients, central_difference, grad_check, relative_error};
pub(crate) use tape::segment_softmax_values;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Negative slope used for every LeakyReLU unless configured otherwise.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
