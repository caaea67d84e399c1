//! Correlation kernels of biorthogonal ensembles of derivative type, evaluated
//! by double contour quadrature, with limit kernels, verification checks and a
//! random-matrix sampler.

// parameter guards are written as `!(x > 0.0)` so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
mod double;
pub mod kernels;
pub mod limits;
pub mod quadrature;
pub mod sampler;
pub mod specfun;
pub mod verify;
pub mod wcatalog;

pub use quadrature::C64;
