//! Tabular outputs and their provenance sidecars.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use backproc_core::EstimandWindow;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// One output cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

/// A header plus rows; column order is fixed by the header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Array of objects keyed by column name; non-finite numbers become `null`.
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj = self
                    .header
                    .iter()
                    .zip(row)
                    .map(|(h, c)| (h.to_string(), c.json()))
                    .collect::<serde_json::Map<_, _>>();
                Value::Object(obj)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rows).expect("serializable");
        s.push('\n');
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowRecord {
    pub t1: f64,
    /// `null` when unbounded.
    pub t2: Option<f64>,
    pub tau0: f64,
}

impl From<EstimandWindow> for WindowRecord {
    fn from(w: EstimandWindow) -> Self {
        WindowRecord {
            t1: w.t1,
            t2: w.t2.is_finite().then_some(w.t2),
            tau0: w.tau0,
        }
    }
}

/// Provenance written next to every output.
#[derive(Debug, Clone, Serialize)]
pub struct Sidecar {
    pub command: String,
    pub version: &'static str,
    pub config: Value,
    /// SHA-256 of the compact JSON encoding of `config`.
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub window: Option<WindowRecord>,
    pub output: String,
    pub results: Value,
}

pub fn config_hash(config: &Value) -> String {
    let bytes = serde_json::to_vec(config).expect("serializable");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Sidecar {
    pub fn new(command: &str, config: Value) -> Self {
        Sidecar {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: config_hash(&config),
            config,
            seed: None,
            n: None,
            window: None,
            output: String::new(),
            results: Value::Null,
        }
    }
}

/// `<out>.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the table to `out` and the sidecar next to it.
pub fn write_outputs(
    out: &Path,
    table: &Table,
    format: Format,
    mut sidecar: Sidecar,
) -> io::Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, table.render(format))?;
    sidecar.output = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut meta = serde_json::to_string_pretty(&sidecar).expect("serializable");
    meta.push('\n');
    fs::write(sidecar_path(out), meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        let mut t = Table::new(&["u", "mu", "note"]);
        t.push(vec![0.1.into(), 2.5.into(), "a".into()]);
        t.push(vec![1.0.into(), f64::INFINITY.into(), "b,c".into()]);
        t
    }

    #[test]
    fn csv_rendering() {
        assert_eq!(table().to_csv(), "u,mu,note\n0.1,2.5,a\n1,inf,\"b,c\"\n");
    }

    #[test]
    fn json_rendering() {
        let v: Value = serde_json::from_str(&table().to_json()).unwrap();
        assert_eq!(v[0]["mu"], json!(2.5));
        assert_eq!(v[1]["mu"], Value::Null);
        assert_eq!(v[1]["note"], json!("b,c"));
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&json!({"alpha": 0.05, "seed": 7}));
        assert_eq!(a, config_hash(&json!({"alpha": 0.05, "seed": 7})));
        assert_ne!(a, config_hash(&json!({"alpha": 0.05, "seed": 8})));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn sidecar_next_to_output() {
        assert_eq!(
            sidecar_path(Path::new("out/mean.csv")),
            PathBuf::from("out/mean.csv.meta.json")
        );
    }
}
