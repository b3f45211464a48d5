//! Cohort files, tabular outputs, parallel drivers and the command line
//! around `backproc-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod io;
pub mod output;
pub mod parallel;

pub use backproc_core as core;
