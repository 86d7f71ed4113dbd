//! Tables and their CSV / JSON renderings.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::Num(x)
    }
}

impl From<Option<f64>> for Field {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Field::Empty, Field::Num)
    }
}

impl From<i64> for Field {
    fn from(x: i64) -> Self {
        Field::Int(x)
    }
}

impl From<usize> for Field {
    fn from(x: usize) -> Self {
        Field::Int(x as i64)
    }
}

impl From<u32> for Field {
    fn from(x: u32) -> Self {
        Field::Int(i64::from(x))
    }
}

impl From<&str> for Field {
    fn from(x: &str) -> Self {
        Field::Text(x.to_string())
    }
}

impl From<String> for Field {
    fn from(x: String) -> Self {
        Field::Text(x)
    }
}

/// Shortest text that parses back to exactly `x`; `inf`, `-inf` and `NaN`
/// for non-finite values.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if !x.is_finite() || x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// JSON has no infinities, so non-finite numbers become strings.
pub fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(format_f64(x))
    }
}

pub fn json_opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, json_f64)
}

impl Field {
    fn csv(&self) -> String {
        match self {
            Field::Num(x) => format_f64(*x),
            Field::Int(i) => i.to_string(),
            Field::Text(s) => s.clone(),
            Field::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Field::Num(x) => json_f64(*x),
            Field::Int(i) => json!(i),
            Field::Text(s) => Value::String(s.clone()),
            Field::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    fn csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Field::csv))?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }

    fn json_rows(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .headers
                    .iter()
                    .cloned()
                    .zip(row.iter().map(Field::json))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        Value::Array(rows)
    }
}

pub struct Output {
    pub table: Table,
    pub diagnostics: Value,
}

/// Writes the result once, to `out` or stdout. In CSV mode the diagnostics
/// go to stderr as a single JSON line.
pub fn emit(output: &Output, config: Value, format: Format, out: Option<&Path>) -> io::Result<()> {
    let bytes = match format {
        Format::Csv => output.table.csv()?,
        Format::Json => {
            let doc = json!({
                "config": config,
                "results": output.table.json_rows(),
                "diagnostics": output.diagnostics,
            });
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            s.into_bytes()
        }
    };
    match out {
        Some(path) => fs::write(path, &bytes)?,
        None => io::stdout().lock().write_all(&bytes)?,
    }
    if format == Format::Csv && !output.diagnostics.is_null() {
        eprintln!("diagnostics: {}", output.diagnostics);
    }
    Ok(())
}
