//! Cohort files.
//!
//! A cohort lives in two CSV files with fixed headers:
//!
//! ```text
//! subjects.csv   id,w,x,delta
//! events.csv     id,time,mark
//! ```
//!
//! Times are in forward time; `delta` is `1` for an observed failure and
//! `0` for a censored one. Events are attached to subjects by `id`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use backproc_core::{validate_cohort, Cohort, ProcessEvent, SubjectRecord};
use thiserror::Error;

pub const SUBJECT_HEADER: [&str; 4] = ["id", "w", "x", "delta"];
pub const EVENT_HEADER: [&str; 3] = ["id", "time", "mark"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: cannot read: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: expected header {expected}, found {found}")]
    Header {
        file: String,
        expected: String,
        found: String,
    },
    #[error("{file}, line {line}: {message}")]
    Row {
        file: String,
        line: u64,
        message: String,
    },
    #[error(transparent)]
    Invalid(#[from] backproc_core::Error),
    #[error("cohort has a prevalent-shifted subject {id}; only unshifted cohorts can be written")]
    Shifted { id: String },
}

type Result<T> = std::result::Result<T, IngestError>;

fn row_error(file: &str, line: u64, message: impl Into<String>) -> IngestError {
    IngestError::Row {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn open_csv<R: Read>(file: &str, reader: R, header: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| row_error(file, 1, e.to_string()))?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(IngestError::Header {
            file: file.to_string(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(rdr)
}

fn number(file: &str, line: u64, field: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| row_error(file, line, format!("{field} is not a number: {raw:?}")))
}

/// Reads a cohort from subject and event CSV sources.
pub fn read_cohort<S: Read, E: Read>(subjects: S, events: E) -> Result<Cohort> {
    const SUBJECTS: &str = "subjects.csv";
    const EVENTS: &str = "events.csv";

    let mut records = Vec::new();
    let mut index = HashMap::new();
    for row in open_csv(SUBJECTS, subjects, &SUBJECT_HEADER)?.records() {
        let row = row.map_err(|e| {
            row_error(
                SUBJECTS,
                e.position().map_or(0, |p| p.line()),
                e.to_string(),
            )
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row[0].to_string();
        let w = number(SUBJECTS, line, "w", &row[1])?;
        let x = number(SUBJECTS, line, "x", &row[2])?;
        let delta = match row[3].trim() {
            "0" => false,
            "1" => true,
            _ => return Err(row_error(SUBJECTS, line, "delta must be 0 or 1")),
        };
        if index.insert(id.clone(), records.len()).is_some() {
            return Err(row_error(
                SUBJECTS,
                line,
                format!("duplicate subject id {id}"),
            ));
        }
        records.push(SubjectRecord::new(id, w, x, delta, Vec::new()));
    }

    for row in open_csv(EVENTS, events, &EVENT_HEADER)?.records() {
        let row = row
            .map_err(|e| row_error(EVENTS, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let Some(&k) = index.get(&row[0]) else {
            return Err(row_error(
                EVENTS,
                line,
                format!("unknown subject id {}", &row[0]),
            ));
        };
        let time = number(EVENTS, line, "time", &row[1])?;
        let mark = number(EVENTS, line, "mark", &row[2])?;
        records[k].events.push(ProcessEvent::new(time, mark));
    }
    Ok(validate_cohort(records)?)
}

/// Reads `subjects` and `events` from disk.
pub fn read_cohort_files(subjects: &Path, events: &Path) -> Result<Cohort> {
    let open = |p: &Path| {
        File::open(p).map_err(|source| IngestError::Io {
            file: p.display().to_string(),
            source,
        })
    };
    read_cohort(open(subjects)?, open(events)?)
}

/// Writes a cohort in the two-file layout read by [`read_cohort`].
pub fn write_cohort<S: Write, E: Write>(cohort: &Cohort, subjects: S, events: E) -> Result<()> {
    let io = |file: &str| {
        let file = file.to_string();
        move |e: csv::Error| IngestError::Io {
            file: file.clone(),
            source: e.into(),
        }
    };
    let mut s = csv::Writer::from_writer(subjects);
    let mut e = csv::Writer::from_writer(events);
    s.write_record(SUBJECT_HEADER).map_err(io("subjects.csv"))?;
    e.write_record(EVENT_HEADER).map_err(io("events.csv"))?;
    for subject in cohort.subjects() {
        if subject.entry() != subject.w {
            return Err(IngestError::Shifted {
                id: subject.id.clone(),
            });
        }
        let delta = if subject.delta { "1" } else { "0" };
        s.write_record([
            subject.id.as_str(),
            &subject.w.to_string(),
            &subject.x.to_string(),
            delta,
        ])
        .map_err(io("subjects.csv"))?;
        for ev in &subject.events {
            e.write_record([
                subject.id.as_str(),
                &ev.time.to_string(),
                &ev.mark.to_string(),
            ])
            .map_err(io("events.csv"))?;
        }
    }
    s.flush().map_err(|source| IngestError::Io {
        file: "subjects.csv".into(),
        source,
    })?;
    e.flush().map_err(|source| IngestError::Io {
        file: "events.csv".into(),
        source,
    })?;
    Ok(())
}
