use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::{
    open, split_line, valid_token, DataError, Gender, Label, Match, PhoneMatch, Result, Track, TrialId, TrialKey,
    TrialRecord,
};

pub const KEY_HEADER: &str =
    "modelid\tsegmentid\ttargettype\tgender\tsource_match\tlanguage_match\tphone_match\tnum_enroll\ttrack";

const KEY_FIELDS: [&str; 9] = [
    "modelid",
    "segmentid",
    "targettype",
    "gender",
    "source_match",
    "language_match",
    "phone_match",
    "num_enroll",
    "track",
];

/// Reads a trial key file.
pub fn parse_key(path: impl AsRef<Path>) -> Result<TrialKey> {
    read_key(open(path.as_ref())?)
}

fn field<T>(line: usize, idx: usize, raw: &str, parsed: Option<T>) -> Result<T> {
    parsed.ok_or_else(|| DataError::Field {
        line,
        field: KEY_FIELDS[idx],
        value: raw.to_string(),
    })
}

pub fn read_key<R: BufRead>(reader: R) -> Result<TrialKey> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        None => return Err(DataError::Empty),
        Some(h) => h?,
    };
    let header = header.trim_end_matches('\r');
    if header != KEY_HEADER {
        return Err(DataError::Header {
            line: 1,
            expected: KEY_HEADER.to_string(),
            found: header.to_string(),
        });
    }

    let mut records = Vec::new();
    let mut seen: HashMap<TrialId, usize> = HashMap::new();
    let mut track: Option<Track> = None;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols = split_line(&line);
        if cols.len() != KEY_FIELDS.len() {
            return Err(DataError::ColumnCount {
                line: lineno,
                expected: KEY_FIELDS.len(),
                found: cols.len(),
            });
        }
        let model_id = field(lineno, 0, cols[0], valid_token(cols[0]).then_some(cols[0]))?;
        let segment_id = field(lineno, 1, cols[1], valid_token(cols[1]).then_some(cols[1]))?;
        let id = TrialId {
            model_id: model_id.to_string(),
            segment_id: segment_id.to_string(),
        };
        let label = field(lineno, 2, cols[2], Label::parse(cols[2]))?;
        let gender = field(lineno, 3, cols[3], Gender::parse(cols[3]))?;
        let source_match = field(lineno, 4, cols[4], Match::parse(cols[4]))?;
        let language_match = field(lineno, 5, cols[5], Match::parse(cols[5]))?;
        let phone_match = field(lineno, 6, cols[6], PhoneMatch::parse(cols[6]))?;
        let num_enroll_segments = field(
            lineno,
            7,
            cols[7],
            match cols[7] {
                "1" => Some(1u8),
                "3" => Some(3u8),
                _ => None,
            },
        )?;
        let row_track = field(lineno, 8, cols[8], Track::parse(cols[8]))?;
        match track {
            None => track = Some(row_track),
            Some(t) if t != row_track => {
                return Err(DataError::Invariant {
                    line: lineno,
                    message: format!("track {row_track} differs from earlier rows ({t})"),
                })
            }
            _ => {}
        }
        let record = TrialRecord {
            id,
            label,
            gender,
            source_match,
            language_match,
            phone_match,
            num_enroll_segments,
            track: row_track,
        };
        record
            .check()
            .map_err(|message| DataError::Invariant { line: lineno, message })?;
        if seen.insert(record.id.clone(), lineno).is_some() {
            return Err(DataError::DuplicateTrial {
                line: lineno,
                model_id: record.id.model_id,
                segment_id: record.id.segment_id,
            });
        }
        records.push(record);
    }
    let track = track.ok_or_else(|| DataError::Degenerate("key has no trials".into()))?;
    TrialKey::new(track, records)
}

pub fn write_key<W: Write>(key: &TrialKey, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{KEY_HEADER}")?;
    for r in key.records() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.id.model_id,
            r.id.segment_id,
            r.label,
            r.gender,
            r.source_match,
            r.language_match,
            r.phone_match,
            r.num_enroll_segments,
            r.track
        )?;
    }
    Ok(())
}
