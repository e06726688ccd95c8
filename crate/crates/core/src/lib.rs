//! Noisy quantum kernel toolkit.
//!
//! Statevector simulation of a ZZ-style data-encoding circuit, ideal /
//! depolarized / shot-sampled kernel matrices, spectral calibration of
//! indefinite kernels, kernel ridge classification and the generalization
//! bound diagnostics that go with them.
//!
//! The crate is `no_std` and only needs `alloc`; float functions come from
//! `num_traits::Float` backed by `libm` when std is absent. File formats,
//! the sweep harness and the command line live in the `qkernel` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bounds;
pub mod calibrate;
pub mod check;
pub mod datasets;
pub mod error;
pub mod kernels;
pub mod learner;
pub mod linalg;
pub mod qsim;
pub mod rng;

pub use check::{CheckReport, CheckStatus};
pub use error::{Error, Result};
pub use linalg::{EigenDecomposition, Matrix, SymMatrix};
