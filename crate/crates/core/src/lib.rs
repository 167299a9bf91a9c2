// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;

pub use error::{MeibError, Result};
pub use linalg::{hadamard, spectral_power, sym_eig, sym_eigvals, DenseMatrix, SymEig};
pub mod kernel;
pub mod model;
pub mod nn;
pub mod data_io;
pub mod synth;
pub mod harness;
