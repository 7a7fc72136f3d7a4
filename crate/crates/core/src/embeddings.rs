//! Embedding tables for users, words, and entities.
//!
//! Tables are frozen after load: lookups of unknown ids return a zero vector,
//! which makes the corresponding bilinear score term vanish instead of
//! failing.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::MentionCandidate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    User,
    Word,
    Entity,
}

impl TableKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TableKind::User => "user",
            TableKind::Word => "word",
            TableKind::Entity => "entity",
        }
    }

    pub fn parse(s: &str) -> Result<TableKind> {
        match s {
            "user" => Ok(TableKind::User),
            "word" => Ok(TableKind::Word),
            "entity" => Ok(TableKind::Entity),
            other => Err(Error::Config(format!("unknown table kind {other:?}"))),
        }
    }
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fixed-dimension id -> vector table. Insertion order is preserved so that
/// saving a table is byte-deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    kind: TableKind,
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    zero: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(kind: TableKind, dim: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        EmbeddingTable {
            kind,
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            zero: vec![0.0; dim],
        }
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn push(&mut self, id: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension(format!(
                "{} table: vector for {id:?} has length {}, expected {}",
                self.kind,
                vector.len(),
                self.dim
            )));
        }
        if !vector.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation(format!(
                "{} table: non-finite value in vector for {id:?}",
                self.kind
            )));
        }
        if self.index.contains_key(id) {
            return Err(Error::Validation(format!(
                "{} table: duplicate id {id:?}",
                self.kind
            )));
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.data.extend(vector);
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&row| self.row(row))
    }

    /// Row for known ids, the zero vector otherwise. The zero vector turns
    /// any bilinear term using it into an exact 0.
    pub fn vector(&self, id: &str) -> &[f64] {
        self.get(id).unwrap_or(&self.zero)
    }

    /// Loads the text format: header `<count> <dim>`, then one `<id> <f...>`
    /// line per row.
    pub fn load(path: &Path, kind: TableKind) -> Result<EmbeddingTable> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "missing header line"))?;
        let header = header.map_err(|e| Error::io(path, e))?;
        let mut parts = header.split_whitespace();
        let count: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(path, 1, "bad count in header"))?;
        let dim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(path, 1, "bad dim in header"))?;
        if dim == 0 {
            return Err(Error::parse(path, 1, "dim must be positive"));
        }
        let mut table = EmbeddingTable::new(kind, dim);
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let id = fields
                .next()
                .ok_or_else(|| Error::parse(path, lineno, "missing id"))?;
            let values: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(path, lineno, format!("bad float {f:?}")))
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("row has {} values, expected {dim}", values.len()),
                ));
            }
            table
                .push(id, values)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        }
        if table.len() != count {
            return Err(Error::Validation(format!(
                "{}: header promised {count} rows, found {}",
                path.display(),
                table.len()
            )));
        }
        Ok(table)
    }

    /// Writes the text format. Floats use Rust's shortest round-trip
    /// formatting, so load(save(t)) reproduces every value exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{} {}", self.len(), self.dim).map_err(|e| Error::io(path, e))?;
        for (row, id) in self.ids.iter().enumerate() {
            write!(w, "{id}").map_err(|e| Error::io(path, e))?;
            for v in self.row(row) {
                write!(w, " {v}").map_err(|e| Error::io(path, e))?;
            }
            writeln!(w).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Mention vector: average of the word vectors of the mention's tokens.
/// Out-of-vocabulary words contribute a zero vector but still count in the
/// denominator.
pub fn mention_vector(candidate: &MentionCandidate, words: &EmbeddingTable) -> Vec<f64> {
    assert_eq!(
        words.kind(),
        TableKind::Word,
        "mention_vector needs a word table"
    );
    let mut acc = vec![0.0; words.dim()];
    if candidate.words.is_empty() {
        return acc;
    }
    for w in &candidate.words {
        if let Some(v) = words.get(w) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
    }
    let inv = 1.0 / candidate.words.len() as f64;
    for a in acc.iter_mut() {
        *a *= inv;
    }
    acc
}
