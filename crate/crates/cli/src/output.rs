//! Run artifacts: fixed-format CSV tables, JSON summaries and their digests.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Scientific notation with `digits` significant digits.
pub fn sci(x: f64, digits: usize) -> String {
    format!("{:.*e}", digits - 1, x)
}

pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
    digits: usize,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new(), digits: 10 }
    }

    pub fn with_digits(mut self, digits: usize) -> Self {
        self.digits = digits;
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn render(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            let fields: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(x) => sci(*x, self.digits),
                    Cell::Int(n) => n.to_string(),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            w.write_record(&fields).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

#[derive(Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn table(&mut self, name: &str, t: &Table) {
        self.files.push((name.to_string(), t.render()));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, v: &T) {
        let mut s = serde_json::to_string_pretty(v).expect("serializable summary");
        s.push('\n');
        self.files.push((name.to_string(), s.into_bytes()));
    }

    pub fn text(&mut self, name: &str, s: String) {
        self.files.push((name.to_string(), s.into_bytes()));
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_all(dir: &Path, a: &Artifacts) -> std::io::Result<Vec<OutputDigest>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::with_capacity(a.files.len());
    for (name, bytes) in &a.files {
        std::fs::write(dir.join(name), bytes)?;
        out.push(OutputDigest { path: name.clone(), sha256: sha256(bytes), bytes: bytes.len() });
    }
    Ok(out)
}
