//! Report documents and their CSV / JSON encodings.

use std::io::Write;

use nlx_core::scalar::format_sig17;
use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A table cell or echoed value.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    /// Written with 17 significant digits in both formats; non-finite values
    /// become `null` in JSON and `NaN` / `inf` in CSV.
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    List(Vec<Cell>),
    /// A value that does not apply: `null` in JSON, empty in CSV.
    Null,
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Self::Text(s.into())
    }

    fn csv_field(&self) -> String {
        match self {
            Self::Num(x) => format_sig17(*x),
            Self::Int(n) => n.to_string(),
            Self::Text(s) => s.clone(),
            Self::Bool(b) => b.to_string(),
            Self::List(items) => items
                .iter()
                .map(Cell::csv_field)
                .collect::<Vec<_>>()
                .join(";"),
            Self::Null => String::new(),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Num(x) if x.is_finite() => {
                let raw =
                    RawValue::from_string(format_sig17(*x)).map_err(serde::ser::Error::custom)?;
                raw.serialize(ser)
            }
            Self::Num(_) | Self::Null => ser.serialize_none(),
            Self::Int(n) => ser.serialize_u64(*n),
            Self::Text(s) => ser.serialize_str(s),
            Self::Bool(b) => ser.serialize_bool(*b),
            Self::List(items) => {
                let mut seq = ser.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
        }
    }
}

/// Key-value pairs serialised as a JSON object in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fields(pub Vec<(String, Cell)>);

impl Fields {
    pub fn push(&mut self, key: &str, value: Cell) -> &mut Self {
        self.0.push((key.to_string(), value));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Cell> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }
}

impl Serialize for Fields {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let mut map = ser.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "N/A")]
    NotApplicable,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::NotApplicable => "N/A",
        }
    }

    pub fn check(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }

    /// FAIL if any is FAIL, otherwise PASS if any is PASS.
    pub fn combine(all: impl IntoIterator<Item = Verdict>) -> Self {
        all.into_iter()
            .fold(Self::NotApplicable, |acc, v| match (acc, v) {
                (Self::Fail, _) | (_, Self::Fail) => Self::Fail,
                (Self::Pass, _) | (_, Self::Pass) => Self::Pass,
                _ => Self::NotApplicable,
            })
    }
}

/// Declared tolerances, echoed in every report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub version: u32,
    /// Lattice or Choquet value against a closed-form oracle.
    pub oracle: f64,
    /// `|g_gap|` must exceed this multiple of its Richardson estimate.
    pub gap_sigmas: f64,
    /// `|g_gap|` bound for drivers linear in `z`.
    pub linear_gap: f64,
    pub pde_lattice: f64,
    pub slope: f64,
    pub classify: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    version: 1,
    oracle: 2e-3,
    gap_sigmas: 5.0,
    linear_gap: 1e-12,
    pde_lattice: 5e-3,
    slope: 5e-3,
    classify: 1e-9,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub command: String,
    pub inputs: Fields,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Fields,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl Serialize for Report {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let tol = TOLERANCES;
        let mut map = ser.serialize_map(Some(9))?;
        map.serialize_entry("schema_version", &SCHEMA_VERSION)?;
        map.serialize_entry("command", &self.command)?;
        map.serialize_entry("inputs", &self.inputs)?;
        let mut t = Fields::default();
        t.push("version", Cell::Int(tol.version as u64))
            .push("oracle", Cell::Num(tol.oracle))
            .push("gap_sigmas", Cell::Num(tol.gap_sigmas))
            .push("linear_gap", Cell::Num(tol.linear_gap))
            .push("pde_lattice", Cell::Num(tol.pde_lattice))
            .push("slope", Cell::Num(tol.slope))
            .push("classify", Cell::Num(tol.classify));
        map.serialize_entry("tolerances", &t)?;
        map.serialize_entry("columns", &self.columns)?;
        map.serialize_entry("rows", &self.rows)?;
        map.serialize_entry("summary", &self.summary)?;
        map.serialize_entry("verdict", &self.verdict)?;
        map.serialize_entry("notes", &self.notes)?;
        map.end()
    }
}

impl Report {
    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// The row table, header first.
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.columns).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv_field))
                .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn render(&self, format: crate::config::Format) -> Result<String, CliError> {
        match format {
            crate::config::Format::Csv => self.to_csv(),
            crate::config::Format::Json => self.to_json(),
        }
    }
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(text: &str, path: Option<&std::path::Path>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}
