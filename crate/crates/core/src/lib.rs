// `!(x > y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod harness;
pub mod imaging;
pub mod nets;
pub mod object_models;
pub mod observer;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use field::{ObjectField, ReconImage};
