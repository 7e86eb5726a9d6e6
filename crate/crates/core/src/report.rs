//! Tabular and JSON output of experiment runs.
//!
//! Both formats carry the scenario hash and seed. Output depends only on the
//! run's values, so identical runs produce identical bytes.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// One table cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(_) | Cell::Empty => Value::Null,
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<u64>> for Cell {
    fn from(v: Option<u64>) -> Self {
        v.map_or(Cell::Empty, Cell::Int)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    fn rows_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let m: Map<String, Value> =
                        self.columns.iter().cloned().zip(r.iter().map(Cell::to_json)).collect();
                    Value::Object(m)
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Invariant {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Invariant {
    pub fn check(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

/// Result of one scenario run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub scenario_name: String,
    pub experiment: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub mode: String,
    pub table: Table,
    pub summary: Value,
    pub invariants: Vec<Invariant>,
}

impl RunOutput {
    pub fn invariants_hold(&self) -> bool {
        self.invariants.iter().all(|i| i.passed)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# scenario: {}", self.scenario_name)?;
        writeln!(w, "# experiment: {}", self.experiment)?;
        writeln!(w, "# scenario_hash: {}", self.scenario_hash)?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# mode: {}", self.mode)?;
        writeln!(w, "# summary: {}", self.summary)?;
        let mut csv = csv::Writer::from_writer(&mut w);
        csv.write_record(&self.table.columns)?;
        for row in &self.table.rows {
            csv.write_record(row.iter().map(Cell::render))?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "scenario": self.scenario_name,
            "experiment": self.experiment,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "mode": self.mode,
            "summary": self.summary,
            "invariants": self.invariants,
            "rows": self.table.rows_json(),
        })
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_json()).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }
}
