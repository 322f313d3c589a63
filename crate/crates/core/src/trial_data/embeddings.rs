use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::{open, parse_real, split_line, valid_token, DataError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub segment_id: String,
    /// Speaker (or video) label; `-` in files when absent.
    pub speaker: Option<String>,
    pub vector: Vec<f64>,
}

/// Fixed-dimension vectors keyed by segment id, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: Vec<EmbeddingRow>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, rows: Vec<EmbeddingRow>) -> Result<Self> {
        if dim == 0 {
            return Err(DataError::Degenerate("embedding dimension must be >= 1".into()));
        }
        let mut index = HashMap::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.vector.len() != dim {
                return Err(DataError::ColumnCount {
                    line: i + 2,
                    expected: dim,
                    found: row.vector.len(),
                });
            }
            if let Some(j) = row.vector.iter().position(|v| !v.is_finite()) {
                return Err(DataError::Field {
                    line: i + 2,
                    field: "coordinate",
                    value: row.vector[j].to_string(),
                });
            }
            if index.insert(row.segment_id.clone(), i).is_some() {
                return Err(DataError::DuplicateSegment {
                    line: i + 2,
                    segment_id: row.segment_id.clone(),
                });
            }
        }
        Ok(EmbeddingTable { dim, rows, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[EmbeddingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, segment_id: &str) -> Option<&EmbeddingRow> {
        self.index.get(segment_id).map(|&i| &self.rows[i])
    }

    /// Row indices grouped by speaker label, in order of first appearance of
    /// each label. Returns `None` if any row is unlabeled.
    pub fn speaker_groups(&self) -> Option<Vec<(String, Vec<usize>)>> {
        let mut order: Vec<(String, Vec<usize>)> = Vec::new();
        let mut pos: HashMap<&str, usize> = HashMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            let spk = row.speaker.as_deref()?;
            match pos.get(spk) {
                Some(&p) => order[p].1.push(i),
                None => {
                    pos.insert(spk, order.len());
                    order.push((spk.to_string(), vec![i]));
                }
            }
        }
        Some(order)
    }

    /// New table with every vector replaced by `f(vector)`. The output
    /// dimension is taken from the first row.
    pub fn map_vectors(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<EmbeddingTable> {
        let rows: Vec<EmbeddingRow> = self
            .rows
            .iter()
            .map(|r| EmbeddingRow {
                segment_id: r.segment_id.clone(),
                speaker: r.speaker.clone(),
                vector: f(&r.vector),
            })
            .collect();
        let dim = rows.first().map_or(self.dim, |r| r.vector.len());
        EmbeddingTable::new(dim, rows)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    read_embeddings(open(path.as_ref())?)
}

pub fn read_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingTable> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        None => return Err(DataError::Empty),
        Some(h) => h?,
    };
    let header = header.trim_end_matches('\r');
    let bad_header = || DataError::Header {
        line: 1,
        expected: "segmentid\\tspeaker\\tdim=<d>".into(),
        found: header.to_string(),
    };
    let hcols = split_line(header);
    if hcols.len() != 3 || hcols[0] != "segmentid" || hcols[1] != "speaker" {
        return Err(bad_header());
    }
    let dim: usize = hcols[2]
        .strip_prefix("dim=")
        .and_then(|d| d.parse().ok())
        .filter(|&d| d >= 1)
        .ok_or_else(bad_header)?;

    let mut rows = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols = split_line(&line);
        if cols.len() != dim + 2 {
            return Err(DataError::ColumnCount {
                line: lineno,
                expected: dim + 2,
                found: cols.len(),
            });
        }
        if !valid_token(cols[0]) {
            return Err(DataError::Field {
                line: lineno,
                field: "segmentid",
                value: cols[0].to_string(),
            });
        }
        if !valid_token(cols[1]) {
            return Err(DataError::Field {
                line: lineno,
                field: "speaker",
                value: cols[1].to_string(),
            });
        }
        let vector = cols[2..]
            .iter()
            .map(|c| {
                parse_real(c).map_err(|_| DataError::Field {
                    line: lineno,
                    field: "coordinate",
                    value: c.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if seen.insert(cols[0].to_string(), lineno).is_some() {
            return Err(DataError::DuplicateSegment {
                line: lineno,
                segment_id: cols[0].to_string(),
            });
        }
        rows.push(EmbeddingRow {
            segment_id: cols[0].to_string(),
            speaker: (cols[1] != "-").then(|| cols[1].to_string()),
            vector,
        });
    }
    EmbeddingTable::new(dim, rows)
}

pub fn write_embeddings<W: Write>(table: &EmbeddingTable, mut out: W) -> std::io::Result<()> {
    writeln!(out, "segmentid\tspeaker\tdim={}", table.dim())?;
    for row in table.rows() {
        write!(out, "{}\t{}", row.segment_id, row.speaker.as_deref().unwrap_or("-"))?;
        for v in &row.vector {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
