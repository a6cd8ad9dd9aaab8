//! Dense CPU tensors with higher-order reverse-mode differentiation.
//!
//! Sized for small 2-D and 3-D convolutional generators and discriminators:
//! same-padded convolutions, 2× resampling, broadcasting arithmetic and a
//! unitary DFT, all differentiable any number of times.

pub mod check;
pub mod fft;
mod float;
pub mod kernels;
mod tensor;
mod var;

pub use float::Float;
pub use tensor::{broadcast_shape, Tensor};
pub use var::{grad, grad_values, no_grad, Var};
