//! CSV and JSON output of homogeneous records.
//!
//! Floats are written in scientific notation with 17 significant digits
//! (`{:.16e}`), which round-trips every `f64`. JSON output is an array of
//! objects whose keys are the column names; non-finite floats become `null`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Value {
    fn csv_field(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format_float(*v),
            Value::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Float(v) if v.is_finite() => format_float(*v),
            Value::Float(_) => "null".to_string(),
            Value::Text(s) => serde_json::to_string(s).expect("strings serialize"),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as u64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v)
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv|json)")),
        }
    }
}

/// Records sharing one column layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "record does not match the column layout");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            writer
                .write_record(row.iter().map(Value::csv_field))
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_json(&self) -> String {
        let mut out = String::from("[");
        for (n, row) in self.rows.iter().enumerate() {
            out.push_str(if n == 0 { "\n  {" } else { ",\n  {" });
            for (c, (name, value)) in self.columns.iter().zip(row).enumerate() {
                if c > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{}: {}", serde_json::to_string(name).expect("strings serialize"), value.json());
            }
            out.push('}');
        }
        out.push_str(if self.rows.is_empty() { "]\n" } else { "\n]\n" });
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

/// Writes `text` to `path`, or to `stdout` when no path is given.
pub fn write_output(text: &str, path: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => stdout.write_all(text.as_bytes()).map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

pub fn emit(table: &Table, format: Format, path: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    write_output(&table.render(format), path, stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(vec!["p", "value", "label"]);
        t.push(vec![3usize.into(), 0.1f64.into(), "a,b".into()]);
        t.push(vec![4usize.into(), (-1.0f64 / 3.0).into(), "q\"x".into()]);
        t
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_float(0.5), "5.0000000000000000e-1");
        assert_eq!(format_float(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn empty_csv_has_header_only() {
        assert_eq!(Table::new(vec!["a", "b"]).to_csv(), "a,b\n");
        assert_eq!(Table::new(vec!["a"]).to_json(), "[]\n");
    }

    #[test]
    fn csv_round_trip() {
        let t = sample();
        let text = t.to_csv();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(reader.headers().unwrap(), vec!["p", "value", "label"]);
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1][1].parse::<f64>().unwrap(), -1.0 / 3.0);
        assert_eq!(&rows[0][2], "a,b");
        assert_eq!(&rows[1][2], "q\"x");
    }

    #[test]
    fn json_round_trip() {
        let parsed: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        let arr = parsed.as_array().unwrap();
        assert_eq!(arr[1]["value"].as_f64().unwrap(), -1.0 / 3.0);
        assert_eq!(arr[0]["p"].as_u64().unwrap(), 3);
        assert_eq!(arr[1]["label"].as_str().unwrap(), "q\"x");
    }

    #[test]
    #[should_panic]
    fn ragged_records_are_rejected() {
        Table::new(vec!["a", "b"]).push(vec![1usize.into()]);
    }
}
