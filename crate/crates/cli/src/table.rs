//! CSV tables with `#` metadata lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Flag(bool),
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

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
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

/// 17 significant digits: every finite value parses back to the same bits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn render_cell(c: &Cell) -> String {
    match c {
        Cell::Num(v) => fmt_num(*v),
        Cell::Int(v) => v.to_string(),
        Cell::Flag(b) => if *b { "true" } else { "false" }.to_string(),
        Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Text(s) => s.clone(),
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    /// File stem when written to a directory.
    pub name: String,
    pub notes: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            notes: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Two-column quantity/value table.
    pub fn summary(name: impl Into<String>) -> Self {
        Table::new(name, &["quantity", "value"])
    }

    pub fn note(&mut self, line: impl Into<String>) -> &mut Self {
        self.notes.push(line.into());
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn kv(&mut self, key: &str, value: impl Into<Cell>) {
        self.push(vec![Cell::Text(key.to_string()), value.into()]);
    }

    pub fn render(&self, header: &[String]) -> String {
        let mut out = String::new();
        for line in header.iter().chain(&self.notes) {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(render_cell).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Writes each table to `<dir>/<name>.csv`, or to stdout when `dir` is None.
pub fn emit(tables: &[Table], header: &[String], dir: Option<&Path>) -> Result<()> {
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for t in tables {
                let path = dir.join(format!("{}.csv", t.name));
                fs::write(&path, t.render(header)).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        None => {
            let parts: Vec<String> = tables.iter().map(|t| format!("## {}\n{}", t.name, t.render(header))).collect();
            print!("{}", parts.join("\n"));
        }
    }
    Ok(())
}
