//! Records and their CSV / JSON rendering.

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// A cell of output: exact integers and strings pass through, reals are
/// printed in scientific notation.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    /// A grid coordinate such as alpha, printed as given.
    Param(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

pub fn sci(x: f64, digits: usize) -> String {
    if x.is_finite() {
        format!("{:.*E}", digits.max(1) - 1, x)
    } else {
        x.to_string()
    }
}

impl Cell {
    fn text(&self, digits: usize) -> String {
        match self {
            Cell::Real(x) => sci(*x, digits),
            Cell::Param(x) => x.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self, digits: usize) -> Value {
        match self {
            // Reals stay strings so the printed digits are exactly those chosen.
            Cell::Real(_) => Value::String(self.text(digits)),
            Cell::Param(x) => serde_json::json!(x),
            Cell::Int(v) => serde_json::json!(v),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Bool(b) => Value::Bool(*b),
        }
    }
}

pub type Row = Vec<(&'static str, Cell)>;

#[derive(Debug, Serialize)]
pub struct Header {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub parameters: Value,
}

pub fn render(format: Format, digits: usize, header: &Header, rows: &[Row]) -> String {
    match format {
        Format::Csv => {
            let mut out = String::new();
            if let Some(first) = rows.first() {
                let names: Vec<&str> = first.iter().map(|(n, _)| *n).collect();
                out.push_str(&names.join(","));
                out.push('\n');
            }
            for row in rows {
                let cells: Vec<String> = row.iter().map(|(_, c)| csv_escape(&c.text(digits))).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        }
        Format::Json => {
            let records: Vec<Value> = rows
                .iter()
                .map(|row| {
                    let mut m = Map::new();
                    for (name, cell) in row {
                        m.insert((*name).to_string(), cell.json(digits));
                    }
                    Value::Object(m)
                })
                .collect();
            let mut top = serde_json::to_value(header).expect("header serializes");
            top["records"] = Value::Array(records);
            let mut s = serde_json::to_string_pretty(&top).expect("json serializes");
            s.push('\n');
            s
        }
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
