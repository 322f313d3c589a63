use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::{
    open, parse_real, split_line, valid_token, DataError, Result, ScoreInsertError, ScoreSet, TrialId,
};

pub const SCORE_HEADER: &str = "modelid\tsegmentid\tLLR";

/// Reads a score file, failing on the first bad line.
pub fn parse_scores(path: impl AsRef<Path>) -> Result<ScoreSet> {
    read_scores(open(path.as_ref())?)
}

fn read_header<R: BufRead>(lines: &mut std::io::Lines<R>) -> Result<()> {
    let header = match lines.next() {
        None => return Err(DataError::Empty),
        Some(h) => h?,
    };
    let header = header.trim_end_matches('\r');
    if header != SCORE_HEADER {
        return Err(DataError::Header {
            line: 1,
            expected: SCORE_HEADER.to_string(),
            found: header.to_string(),
        });
    }
    Ok(())
}

fn parse_row(lineno: usize, line: &str) -> Result<(TrialId, f64)> {
    let cols = split_line(line);
    if cols.len() != 3 {
        return Err(DataError::ColumnCount {
            line: lineno,
            expected: 3,
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
    let llr = parse_real(cols[2]).map_err(|nonfinite| {
        if nonfinite {
            DataError::NonFinite {
                line: lineno,
                value: cols[2].to_string(),
            }
        } else {
            DataError::Field {
                line: lineno,
                field: "LLR",
                value: cols[2].to_string(),
            }
        }
    })?;
    Ok((
        TrialId {
            model_id: cols[0].to_string(),
            segment_id: cols[1].to_string(),
        },
        llr,
    ))
}

pub fn read_scores<R: BufRead>(reader: R) -> Result<ScoreSet> {
    let mut lines = reader.lines();
    read_header(&mut lines)?;
    let mut set = ScoreSet::new();
    let mut seen: HashMap<TrialId, usize> = HashMap::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, llr) = parse_row(lineno, &line)?;
        if seen.insert(id.clone(), lineno).is_some() {
            return Err(DataError::DuplicateTrial {
                line: lineno,
                model_id: id.model_id,
                segment_id: id.segment_id,
            });
        }
        set.insert(id, llr).expect("checked finite and unique");
    }
    Ok(set)
}

/// Result of a lenient pass over a score file: every well-formed line is
/// kept and every problem line is recorded instead of aborting.
#[derive(Debug, Clone, Default)]
pub struct ScoreScan {
    pub scores: ScoreSet,
    /// Lines that could not be parsed (wrong column count, bad token,
    /// non-numeric LLR, duplicate trial).
    pub malformed_lines: Vec<usize>,
    /// Lines carrying NaN or infinite LLRs.
    pub nonfinite_lines: Vec<usize>,
}

/// Lenient score reader used for submission validation. Only an I/O
/// failure or a bad header aborts the scan.
pub fn scan_scores<R: BufRead>(reader: R) -> Result<ScoreScan> {
    let mut lines = reader.lines();
    read_header(&mut lines)?;
    let mut scan = ScoreScan::default();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_row(lineno, &line) {
            Ok((id, llr)) => match scan.scores.insert(id, llr) {
                Ok(()) => {}
                Err(ScoreInsertError::Duplicate) => scan.malformed_lines.push(lineno),
                Err(ScoreInsertError::NonFinite) => scan.nonfinite_lines.push(lineno),
            },
            Err(DataError::NonFinite { .. }) => scan.nonfinite_lines.push(lineno),
            Err(_) => scan.malformed_lines.push(lineno),
        }
    }
    Ok(scan)
}

pub fn write_scores<W: Write>(scores: &ScoreSet, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SCORE_HEADER}")?;
    for (id, llr) in scores.iter() {
        writeln!(out, "{}\t{}\t{}", id.model_id, id.segment_id, llr)?;
    }
    Ok(())
}
