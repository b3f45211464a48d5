//! Estimation for recurrent marked processes observed backward from a
//! terminal event, under left truncation and right censoring.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and parallel drivers live in the `backproc` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod backward;
pub mod bands;
pub mod dist;
pub mod error;
pub mod forward;
pub mod model;
pub mod normal;
pub mod rate;
pub mod rng;
pub mod simulate;
pub mod survival;

pub use backward::{BackwardCurve, BackwardEstimator, Influence, Interval, IntervalKind};
pub use bands::{BandKind, BandResult, CriticalValues, MultiplierBootstrap};
pub use error::{Error, Result};
pub use model::{
    apply_prevalent_shift, validate_cohort, Cohort, EstimandWindow, ProcessEvent, SubjectRecord,
};
pub use survival::{product_limit, SurvivalCurve};
