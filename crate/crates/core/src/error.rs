use alloc::string::String;
use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cohort is empty")]
    EmptyCohort,

    #[error("subject {id}: truncation exceeds observation time (w = {w}, x = {x})")]
    TruncationExceedsObservation { id: String, w: f64, x: f64 },

    #[error("subject {id}: negative truncation time (w = {w})")]
    NegativeTruncation { id: String, w: f64 },

    #[error("subject {id}: {field} is not finite")]
    NonFinite { id: String, field: &'static str },

    #[error("subject {id}: event time {time} outside observation interval [{from}, {x}]")]
    EventOutsideObservation {
        id: String,
        time: f64,
        from: f64,
        x: f64,
    },

    #[error("subject {id}: non-finite mark at time {time}")]
    NonFiniteMark { id: String, time: f64 },

    #[error("duplicate subject id {id}")]
    DuplicateId { id: String },

    #[error("subject {id}: backward value undefined for censored subject")]
    CensoredSubject { id: String },

    #[error("no subjects remain after prevalent shift")]
    NoSubjectsRemain,

    #[error("no uncensored failures in cohort")]
    NoFailures,

    #[error("empty risk set at event time {time}")]
    EmptyRiskSet { time: f64 },

    #[error("invalid window: need 0 < tau0 <= t1 < t2 (t1 = {t1}, t2 = {t2}, tau0 = {tau0})")]
    InvalidWindow { t1: f64, t2: f64, tau0: f64 },

    #[error("no identifiable failure mass in window [{t1}, {t2})")]
    DegenerateWindow { t1: f64, t2: f64 },

    #[error("{name} = {value} is outside {expected}")]
    InvalidArgument {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("log-transformed interval undefined where mu <= 0 (u = {u})")]
    NonPositiveMean { u: f64 },

    #[error("sigma is zero at every grid point")]
    ZeroSigma,

    #[error("degenerate correlation: zero variance in {0}")]
    DegenerateCorrelation(&'static str),

    #[error("need at least {needed} contributing subjects, found {found}")]
    TooFewSubjects { needed: usize, found: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("no qualifying subjects in {0} arm")]
    EmptyArm(&'static str),

    #[error("{failed} of {total} replicates failed (first error: {first})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
}

pub(crate) fn check_finite_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    expected: &'static str,
) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name,
            value,
            expected,
        })
    }
}
