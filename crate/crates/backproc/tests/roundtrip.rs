use backproc::io::{read_cohort, write_cohort};
use backproc_core::{validate_cohort, ProcessEvent, SubjectRecord};
use proptest::prelude::*;

fn subject() -> impl Strategy<Value = (f64, f64, bool, Vec<(f64, f64)>)> {
    (
        prop_oneof![Just(0.0), 0.0..50.0f64],
        0.0..30.0f64,
        any::<bool>(),
        prop::collection::vec((0.0..=1.0f64, -1e6..1e6f64), 0..5),
    )
}

proptest! {
    #[test]
    fn write_then_read_is_identity(raw in prop::collection::vec(subject(), 1..20)) {
        let subjects = raw
            .iter()
            .enumerate()
            .map(|(i, (w, len, delta, events))| {
                let x = w + len;
                let events = events.iter().map(|&(p, m)| ProcessEvent::new((w + p * len).min(x), m)).collect();
                SubjectRecord::new(format!("id-{i}"), *w, x, *delta, events)
            })
            .collect();
        let cohort = validate_cohort(subjects).unwrap();
        let (mut s, mut e) = (Vec::new(), Vec::new());
        write_cohort(&cohort, &mut s, &mut e).unwrap();
        let back = read_cohort(s.as_slice(), e.as_slice()).unwrap();
        prop_assert_eq!(back, cohort);
    }
}
