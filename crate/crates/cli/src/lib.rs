//! File formats, experiment sweeps and verification routines built on
//! `qkernel-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod io;
pub mod real;
pub mod record;
pub mod sweep;
