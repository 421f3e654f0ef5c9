//! Forced-alignment ingestion and validation.
//!
//! Aligners emit token-level time spans in either Praat TextGrid files (one
//! per utterance) or a single CTM file covering many utterances. Before an
//! alignment is used it is validated against the normalized transcript:
//! utterances whose aligner output is missing or empty are discarded, as are
//! utterances where the aligner produced a different token count than the
//! transcript. Unknown-word markers in the aligner output are tolerated as
//! long as counts line up, in which case every aligned surface is replaced
//! positionally by the transcript token so downstream stages only ever see
//! transcript vocabulary.

mod ctm;
mod textgrid;

pub use ctm::parse_ctm;
pub use textgrid::parse_textgrid;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;

/// Tolerance when comparing interval boundaries, in seconds.
pub const ALIGN_EPS: f64 = 1e-6;

/// Surfaces an aligner may emit for words it could not recognize.
pub const DEFAULT_UNKNOWN_MARKERS: &[&str] = &["<unk>", "spn"];

#[derive(Debug, thiserror::Error)]
pub enum AlignmentError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: no interval tier named {tier:?}")]
    MissingTier { path: PathBuf, tier: String },
    #[error("{path}:{line}: {message}")]
    MalformedTextGrid {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: intervals overlap or run backwards")]
    NonMonotonicIntervals { path: PathBuf, line: usize },
    #[error("{path}:{line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: token duration is not positive")]
    NegativeDuration { path: PathBuf, line: usize },
}

/// One aligned token: a surface form and its time span in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedToken {
    pub surface: String,
    pub t_start: f64,
    pub t_end: f64,
}

/// All aligned tokens for one utterance, in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceAlignment {
    pub utterance_id: String,
    pub tokens: Vec<AlignedToken>,
    /// Whether any aligner surface was an unknown-word marker.
    pub has_unknown: bool,
}

/// Why an utterance was dropped during alignment validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscardReason {
    /// The aligner produced no output for the utterance.
    NoAlignment,
    /// The aligner produced a different number of tokens than the transcript.
    CountMismatch,
}

/// Outcome of validating one utterance's alignment against its transcript.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationVerdict {
    Keep(UtteranceAlignment),
    Discard(DiscardReason),
}

impl ValidationVerdict {
    pub fn kept(&self) -> Option<&UtteranceAlignment> {
        match self {
            ValidationVerdict::Keep(a) => Some(a),
            ValidationVerdict::Discard(_) => None,
        }
    }
}

/// Validates an alignment against the utterance transcript.
///
/// A missing or empty alignment is a [`DiscardReason::NoAlignment`]; a token
/// count that differs from the transcript is a
/// [`DiscardReason::CountMismatch`]. When counts match, the kept alignment
/// carries the transcript tokens as surfaces, so unknown-word markers from
/// the aligner never leak past this point.
pub fn validate_alignment(
    utt: &Utterance,
    alignment: Option<&UtteranceAlignment>,
) -> ValidationVerdict {
    let alignment = match alignment {
        Some(a) if !a.tokens.is_empty() => a,
        _ => return ValidationVerdict::Discard(DiscardReason::NoAlignment),
    };
    if alignment.tokens.len() != utt.transcript.len() {
        return ValidationVerdict::Discard(DiscardReason::CountMismatch);
    }
    let has_unknown = alignment
        .tokens
        .iter()
        .any(|t| DEFAULT_UNKNOWN_MARKERS.contains(&t.surface.as_str()));
    let tokens = alignment
        .tokens
        .iter()
        .zip(&utt.transcript)
        .map(|(token, word)| AlignedToken {
            surface: word.clone(),
            t_start: token.t_start,
            t_end: token.t_end,
        })
        .collect();
    ValidationVerdict::Keep(UtteranceAlignment {
        utterance_id: utt.id.clone(),
        tokens,
        has_unknown,
    })
}

#[cfg(test)]
pub(crate) fn alignment_from_spans(id: &str, spans: &[(&str, f64, f64)]) -> UtteranceAlignment {
    UtteranceAlignment {
        utterance_id: id.to_string(),
        tokens: spans
            .iter()
            .map(|(s, t0, t1)| AlignedToken {
                surface: s.to_string(),
                t_start: *t0,
                t_end: *t1,
            })
            .collect(),
        has_unknown: false,
    }
}
