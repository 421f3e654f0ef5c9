//! CTM time-marked conversation files, one token per line.
//!
//! Each line is `utterance channel start duration word` with whitespace
//! separation. Times are in seconds. A single file typically covers a whole
//! corpus, so the result is keyed by utterance id.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{AlignedToken, AlignmentError, UtteranceAlignment, ALIGN_EPS};

/// Parses a CTM file into per-utterance alignments.
///
/// Blank lines and `;;` comment lines are skipped. Tokens are sorted by start
/// time within each utterance (the sort is stable, so equal starts keep file
/// order); overlaps beyond [`ALIGN_EPS`] after sorting are rejected.
pub fn parse_ctm(path: &Path) -> Result<BTreeMap<String, UtteranceAlignment>, AlignmentError> {
    let contents = fs::read_to_string(path).map_err(|source| AlignmentError::Io {
        path: path.to_path_buf(),
        source,
    })?;

    let mut spans: BTreeMap<String, Vec<(f64, f64, String, usize)>> = BTreeMap::new();
    for (i, raw_line) in contents.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with(";;") {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(AlignmentError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let t_begin: f64 = fields[2].parse().map_err(|_| AlignmentError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("bad start time {:?}", fields[2]),
        })?;
        let duration: f64 = fields[3].parse().map_err(|_| AlignmentError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("bad duration {:?}", fields[3]),
        })?;
        if duration.is_nan() || t_begin.is_nan() || duration <= 0.0 || t_begin < 0.0 {
            return Err(AlignmentError::NegativeDuration {
                path: path.to_path_buf(),
                line: line_no,
            });
        }
        spans.entry(fields[0].to_string()).or_default().push((
            t_begin,
            duration,
            fields[4].to_string(),
            line_no,
        ));
    }

    let mut alignments = BTreeMap::new();
    for (utterance_id, mut utt_spans) in spans {
        utt_spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut tokens = Vec::with_capacity(utt_spans.len());
        let mut prev_end = f64::NEG_INFINITY;
        for (t_begin, duration, surface, line_no) in utt_spans {
            if t_begin < prev_end - ALIGN_EPS {
                return Err(AlignmentError::NonMonotonicIntervals {
                    path: path.to_path_buf(),
                    line: line_no,
                });
            }
            prev_end = t_begin + duration;
            tokens.push(AlignedToken {
                surface,
                t_start: t_begin,
                t_end: t_begin + duration,
            });
        }
        alignments.insert(
            utterance_id.clone(),
            UtteranceAlignment {
                utterance_id,
                tokens,
                has_unknown: false,
            },
        );
    }
    Ok(alignments)
}
