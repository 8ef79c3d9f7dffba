//! Dense `f64` matrices, forward kernels, a reverse-mode tape and a
//! finite-difference gradient checker.

mod gradcheck;
mod kernels;
mod matrix;
mod tape;

pub use gradcheck::{all_coordinates, grad_check, grad_check_coordinates, Coordinate};
pub use kernels::{gelu, gelu_derivative, gelu_scalar, layer_norm, normal_cdf, softmax_rows, LAYER_NORM_EPS};
pub use matrix::Matrix;
pub use tape::{DualValue, Gradients, Tape, Var};
