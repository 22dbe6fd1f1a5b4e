//! Dense f64 tensors with reverse-mode differentiation.

mod composite;
mod tape;
mod tensor;

pub use composite::{cosine_sim_values, NORM_EPS};
pub use tape::{Gradients, Tape, Unary, Var};
pub use tensor::Tensor;

pub(crate) use tape::sigmoid;

/// Fixed negative slope standing in for the randomized RReLU: the midpoint of
/// its default sampling range [1/8, 1/3].
pub const RRELU_SLOPE: f64 = (1.0 / 8.0 + 1.0 / 3.0) / 2.0;
