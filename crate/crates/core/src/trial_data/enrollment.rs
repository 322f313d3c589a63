use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use super::{open, split_line, valid_token, DataError, Result};

pub const ENROLLMENT_HEADER: &str = "modelid\tsegmentid";

/// Enrollment segments of every model, one `modelid\tsegmentid` line per
/// segment. Segment order within a model follows the file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Enrollment {
    models: BTreeMap<String, Vec<String>>,
}

impl Enrollment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a segment to a model. Returns `false` if the pair was already
    /// present.
    pub fn add(&mut self, model_id: &str, segment_id: &str) -> bool {
        let segs = self.models.entry(model_id.to_string()).or_default();
        if segs.iter().any(|s| s == segment_id) {
            return false;
        }
        segs.push(segment_id.to_string());
        true
    }

    pub fn segments(&self, model_id: &str) -> Option<&[String]> {
        self.models.get(model_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.models.iter().map(|(m, s)| (m.as_str(), s.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn max_segments(&self) -> usize {
        self.models.values().map(Vec::len).max().unwrap_or(0)
    }
}

pub fn load_enrollment(path: impl AsRef<Path>) -> Result<Enrollment> {
    read_enrollment(open(path.as_ref())?)
}

pub fn read_enrollment<R: BufRead>(reader: R) -> Result<Enrollment> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        None => return Err(DataError::Empty),
        Some(h) => h?,
    };
    let header = header.trim_end_matches('\r');
    if header != ENROLLMENT_HEADER {
        return Err(DataError::Header {
            line: 1,
            expected: ENROLLMENT_HEADER.to_string(),
            found: header.to_string(),
        });
    }
    let mut enrollment = Enrollment::new();
    let mut seen = HashSet::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols = split_line(&line);
        if cols.len() != 2 {
            return Err(DataError::ColumnCount {
                line: lineno,
                expected: 2,
                found: cols.len(),
            });
        }
        for (idx, name) in [(0, "modelid"), (1, "segmentid")] {
            if !valid_token(cols[idx]) {
                return Err(DataError::Field {
                    line: lineno,
                    field: name,
                    value: cols[idx].to_string(),
                });
            }
        }
        if !seen.insert((cols[0].to_string(), cols[1].to_string())) {
            return Err(DataError::Invariant {
                line: lineno,
                message: format!("segment {} listed twice for model {}", cols[1], cols[0]),
            });
        }
        enrollment.add(cols[0], cols[1]);
    }
    if enrollment.is_empty() {
        return Err(DataError::Degenerate("enrollment file lists no models".into()));
    }
    Ok(enrollment)
}

pub fn write_enrollment<W: Write>(enrollment: &Enrollment, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{ENROLLMENT_HEADER}")?;
    for (model, segs) in enrollment.iter() {
        for s in segs {
            writeln!(out, "{model}\t{s}")?;
        }
    }
    Ok(())
}
