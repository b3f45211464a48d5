//! Observational data model: subjects, cohorts and estimand windows.
//!
//! Time runs forward from the initial event (diagnosis, infection, ...).
//! A subject is recruited at truncation time `w`, followed until
//! `x = min(T, C)`, and carries the increments of its cumulative process
//! as a list of `(time, mark)` atoms. Backward time `u` is measured from
//! the failure time and is only meaningful for uncensored subjects.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One atom of the cumulative process: an increment `mark` at forward `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessEvent {
    pub time: f64,
    pub mark: f64,
}

impl ProcessEvent {
    pub fn new(time: f64, mark: f64) -> Self {
        ProcessEvent { time, mark }
    }
}

/// Truncation, censoring and failure data for one subject together with
/// the process increments observed while the subject was under follow-up.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    /// Truncation time (time from the initial event to recruitment).
    pub w: f64,
    /// Observation time `min(T, C)`.
    pub x: f64,
    /// `true` when the failure was observed.
    pub delta: bool,
    pub events: Vec<ProcessEvent>,
    /// Start of process observation. Equals `w` unless the truncation time
    /// was moved later by [`apply_prevalent_shift`], in which case events
    /// recorded since the original recruitment are kept.
    entry: f64,
}

impl SubjectRecord {
    pub fn new(
        id: impl Into<String>,
        w: f64,
        x: f64,
        delta: bool,
        events: Vec<ProcessEvent>,
    ) -> Self {
        SubjectRecord {
            id: id.into(),
            w,
            x,
            delta,
            events,
            entry: w,
        }
    }

    /// Time from which the process was observed.
    pub fn entry(&self) -> f64 {
        self.entry
    }

    /// Backward value `V(u)`: the total increment over the last `u` time
    /// units before failure.
    ///
    /// The window is closed, so an event exactly `u` before failure counts,
    /// and an event at the failure instant counts for every `u >= 0`.
    pub fn backward_value(&self, u: f64) -> Result<f64> {
        if !self.delta {
            return Err(Error::CensoredSubject {
                id: self.id.clone(),
            });
        }
        if !(u >= 0.0) || u.is_infinite() {
            return Err(Error::InvalidArgument {
                name: "u",
                value: u,
                expected: "[0, inf)",
            });
        }
        Ok(self
            .backward_offsets()
            .take_while(|(v, _)| *v <= u)
            .map(|(_, m)| m)
            .sum())
    }

    /// `(offset, mark)` pairs in backward time, offsets ascending.
    pub fn backward_offsets(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        // events are stored ascending in forward time
        self.events
            .iter()
            .rev()
            .map(move |e| (self.x - e.time, e.mark))
    }

    fn validate(&mut self) -> Result<()> {
        let id = || self.id.clone();
        for (field, v) in [("w", self.w), ("x", self.x), ("entry", self.entry)] {
            if !v.is_finite() {
                return Err(Error::NonFinite { id: id(), field });
            }
        }
        if self.w < 0.0 {
            return Err(Error::NegativeTruncation {
                id: id(),
                w: self.w,
            });
        }
        if self.w > self.x {
            return Err(Error::TruncationExceedsObservation {
                id: id(),
                w: self.w,
                x: self.x,
            });
        }
        if self.entry < 0.0 || self.entry > self.w {
            return Err(Error::InvalidArgument {
                name: "entry",
                value: self.entry,
                expected: "[0, w]",
            });
        }
        for e in &self.events {
            if !e.time.is_finite() || e.time < self.entry || e.time > self.x {
                return Err(Error::EventOutsideObservation {
                    id: id(),
                    time: e.time,
                    from: self.entry,
                    x: self.x,
                });
            }
            if !e.mark.is_finite() {
                return Err(Error::NonFiniteMark {
                    id: id(),
                    time: e.time,
                });
            }
        }
        self.events.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(())
    }
}

/// A validated, immutable collection of subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    subjects: Vec<SubjectRecord>,
    event_times: Vec<f64>,
}

impl Cohort {
    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    /// Sorted distinct uncensored observation times.
    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn into_subjects(self) -> Vec<SubjectRecord> {
        self.subjects
    }

    pub fn max_observation(&self) -> f64 {
        self.subjects
            .iter()
            .map(|s| s.x)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Checks every subject and builds the event-time index.
///
/// Events within a subject are sorted by time (stable, so tied events keep
/// their input order).
pub fn validate_cohort(raw: Vec<SubjectRecord>) -> Result<Cohort> {
    if raw.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let mut subjects = raw;
    let mut seen = BTreeSet::new();
    for s in subjects.iter_mut() {
        s.validate()?;
        if !seen.insert(s.id.clone()) {
            return Err(Error::DuplicateId { id: s.id.clone() });
        }
    }
    let mut event_times: Vec<f64> = subjects.iter().filter(|s| s.delta).map(|s| s.x).collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    Ok(Cohort {
        subjects,
        event_times,
    })
}

/// Moves the truncation time of every prevalent subject (`w > 0`) to
/// `w + tau0` and drops those no longer under observation.
///
/// Incident subjects (`w = 0`) are untouched. Applying the shift twice moves
/// prevalent truncation times by `2 * tau0`; a shift of zero is the identity.
pub fn apply_prevalent_shift(cohort: &Cohort, tau0: f64) -> Result<Cohort> {
    if !(tau0 >= 0.0) || !tau0.is_finite() {
        return Err(Error::InvalidArgument {
            name: "tau0",
            value: tau0,
            expected: "[0, inf)",
        });
    }
    let shifted: Vec<SubjectRecord> = cohort
        .subjects
        .iter()
        .filter_map(|s| {
            if s.w > 0.0 {
                let w = s.w + tau0;
                (s.x >= w).then(|| SubjectRecord {
                    w,
                    entry: s.entry,
                    ..s.clone()
                })
            } else {
                Some(s.clone())
            }
        })
        .collect();
    if shifted.is_empty() {
        return Err(Error::NoSubjectsRemain);
    }
    validate_cohort(shifted)
}

/// Conditioning window `t1 <= T < t2` and backward horizon `tau0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimandWindow {
    pub t1: f64,
    pub t2: f64,
    pub tau0: f64,
}

impl EstimandWindow {
    pub fn new(t1: f64, t2: f64, tau0: f64) -> Result<Self> {
        let ok = tau0.is_finite()
            && t1.is_finite()
            && !t2.is_nan()
            && tau0 > 0.0
            && tau0 <= t1
            && t1 < t2;
        if ok {
            Ok(EstimandWindow { t1, t2, tau0 })
        } else {
            Err(Error::InvalidWindow { t1, t2, tau0 })
        }
    }

    /// Membership `t1 <= x < t2`.
    pub fn contains(&self, x: f64) -> bool {
        self.t1 <= x && x < self.t2
    }

    pub(crate) fn check_backward_time(&self, u: f64) -> Result<()> {
        crate::error::check_finite_range("u", u, 0.0, self.tau0, "[0, tau0]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn subj(id: &str, w: f64, x: f64, delta: bool) -> SubjectRecord {
        SubjectRecord::new(id, w, x, delta, vec![])
    }

    #[test]
    fn single_valid_subject() {
        let c = validate_cohort(vec![subj("a", 0.0, 2.0, true)]).unwrap();
        assert_eq!(c.n(), 1);
        assert_eq!(c.event_times(), &[2.0]);
    }

    #[test]
    fn rejects_truncation_after_observation() {
        let err = validate_cohort(vec![subj("a", 3.0, 2.0, true)]).unwrap_err();
        assert!(matches!(err, Error::TruncationExceedsObservation { .. }));
        assert!(alloc::format!("{err}").contains("truncation exceeds observation time"));
        assert!(alloc::format!("{err}").contains("subject a"));
    }

    #[test]
    fn event_index_sorted_and_filtered() {
        let c = validate_cohort(vec![
            subj("a", 0.0, 2.0, true),
            subj("b", 0.0, 3.0, false),
            subj("c", 0.0, 1.5, true),
        ])
        .unwrap();
        assert_eq!(c.event_times(), &[1.5, 2.0]);
    }

    #[test]
    fn rejects_bad_records() {
        assert_eq!(validate_cohort(vec![]).unwrap_err(), Error::EmptyCohort);
        assert!(matches!(
            validate_cohort(vec![subj("a", -1.0, 2.0, true)]).unwrap_err(),
            Error::NegativeTruncation { .. }
        ));
        assert!(matches!(
            validate_cohort(vec![subj("a", 0.0, f64::NAN, true)]).unwrap_err(),
            Error::NonFinite { field: "x", .. }
        ));
        let outside = SubjectRecord::new("a", 1.0, 2.0, true, vec![ProcessEvent::new(0.5, 1.0)]);
        assert!(matches!(
            validate_cohort(vec![outside]).unwrap_err(),
            Error::EventOutsideObservation { .. }
        ));
        let after = SubjectRecord::new("a", 1.0, 2.0, true, vec![ProcessEvent::new(2.5, 1.0)]);
        assert!(validate_cohort(vec![after]).is_err());
        let nan_mark = SubjectRecord::new(
            "a",
            0.0,
            2.0,
            true,
            vec![ProcessEvent::new(1.0, f64::INFINITY)],
        );
        assert!(matches!(
            validate_cohort(vec![nan_mark]).unwrap_err(),
            Error::NonFiniteMark { .. }
        ));
        let dup = validate_cohort(vec![subj("a", 0.0, 2.0, true), subj("a", 0.0, 1.0, true)])
            .unwrap_err();
        assert_eq!(dup, Error::DuplicateId { id: "a".into() });
    }

    #[test]
    fn backward_value_closed_window() {
        let s = SubjectRecord::new("a", 0.0, 2.0, true, vec![ProcessEvent::new(1.5, 5.0)]);
        assert_eq!(s.backward_value(1.0).unwrap(), 5.0);
        assert_eq!(s.backward_value(0.3).unwrap(), 0.0);
        assert_eq!(s.backward_value(0.5).unwrap(), 5.0);
        assert_eq!(s.backward_value(0.0).unwrap(), 0.0);
        let at_failure = SubjectRecord::new("b", 0.0, 2.0, true, vec![ProcessEvent::new(2.0, 1.5)]);
        assert_eq!(at_failure.backward_value(0.0).unwrap(), 1.5);
    }

    #[test]
    fn backward_value_needs_failure() {
        let s = subj("a", 0.0, 2.0, false);
        assert_eq!(
            s.backward_value(1.0).unwrap_err(),
            Error::CensoredSubject { id: "a".into() }
        );
    }

    #[test]
    fn tied_events_accumulate() {
        let s = SubjectRecord::new(
            "a",
            0.0,
            2.0,
            true,
            vec![ProcessEvent::new(1.5, 1.0), ProcessEvent::new(1.5, 2.0)],
        );
        assert_eq!(s.backward_value(1.0).unwrap(), 3.0);
    }

    #[test]
    fn prevalent_shift() {
        let c =
            validate_cohort(vec![subj("i", 0.0, 5.0, true), subj("p", 2.0, 4.0, true)]).unwrap();
        let s = apply_prevalent_shift(&c, 1.0).unwrap();
        assert_eq!(s.n(), 2);
        assert_eq!(s.subjects()[0].w, 0.0);
        assert_eq!(s.subjects()[1].w, 3.0);
        assert_eq!(s.subjects()[1].x, 4.0);
        assert_eq!(s.subjects()[1].entry(), 2.0);

        let twice = apply_prevalent_shift(&s, 1.0).unwrap();
        assert_eq!(twice.subjects()[1].w, 4.0);
        assert_eq!(apply_prevalent_shift(&s, 0.0).unwrap(), s);
    }

    #[test]
    fn prevalent_shift_incident_only_is_identity() {
        let c =
            validate_cohort(vec![subj("a", 0.0, 5.0, true), subj("b", 0.0, 1.0, false)]).unwrap();
        assert_eq!(apply_prevalent_shift(&c, 1.0).unwrap(), c);
    }

    #[test]
    fn prevalent_shift_can_empty_cohort() {
        let c = validate_cohort(vec![subj("a", 2.0, 2.5, true)]).unwrap();
        assert_eq!(
            apply_prevalent_shift(&c, 1.0).unwrap_err(),
            Error::NoSubjectsRemain
        );
    }

    #[test]
    fn shifted_subject_keeps_pre_shift_events() {
        let s = SubjectRecord::new("p", 2.0, 4.0, true, vec![ProcessEvent::new(2.5, 7.0)]);
        let c = validate_cohort(vec![s]).unwrap();
        let shifted = apply_prevalent_shift(&c, 1.0).unwrap();
        assert_eq!(shifted.subjects()[0].backward_value(1.5).unwrap(), 7.0);
    }

    #[test]
    fn window_validation() {
        assert!(EstimandWindow::new(1.0, 20.0, 1.0).is_ok());
        assert!(EstimandWindow::new(1.0, 20.0, 1.5).is_err());
        assert!(EstimandWindow::new(2.0, 2.0, 1.0).is_err());
        assert!(EstimandWindow::new(1.0, 2.0, 0.0).is_err());
        assert!(EstimandWindow::new(1.0, f64::INFINITY, 1.0).is_ok());
    }
}
