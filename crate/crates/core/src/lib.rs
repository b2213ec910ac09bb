// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod design;
mod eig;
pub mod engine;
pub mod error;
pub mod harness;
pub mod lifted;
pub mod linalg;
pub mod railc;
