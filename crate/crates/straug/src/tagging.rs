//! Part-of-speech ingestion and pivot identification.
//!
//! Tags arrive as CoNLL-U: sentences separated by blank lines, each preceded
//! by a `# sent_id = <utterance id>` comment, ten tab-separated columns per
//! token row. Only ID, FORM, and UPOS are consumed. Multiword-token ranges
//! (`3-4`) and empty nodes (`8.1`) are skipped since they do not correspond
//! to aligned audio tokens.
//!
//! A pivot is a main verb with at least one token after it; the tokens before
//! it form the prefix that is kept, the tokens after it form the suffix that
//! gets swapped out.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;

#[derive(Debug, thiserror::Error)]
pub enum TaggingError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: sentence has no sent_id comment")]
    MissingSentId { path: PathBuf, line: usize },
}

/// Universal POS tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Upos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl Upos {
    fn parse(raw: &str) -> Option<Option<Upos>> {
        Some(Some(match raw {
            "ADJ" => Upos::Adj,
            "ADP" => Upos::Adp,
            "ADV" => Upos::Adv,
            "AUX" => Upos::Aux,
            "CCONJ" => Upos::Cconj,
            "DET" => Upos::Det,
            "INTJ" => Upos::Intj,
            "NOUN" => Upos::Noun,
            "NUM" => Upos::Num,
            "PART" => Upos::Part,
            "PRON" => Upos::Pron,
            "PROPN" => Upos::Propn,
            "PUNCT" => Upos::Punct,
            "SCONJ" => Upos::Sconj,
            "SYM" => Upos::Sym,
            "VERB" => Upos::Verb,
            "X" => Upos::X,
            "_" => return Some(None),
            _ => return None,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub form: String,
    pub upos: Option<Upos>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub utterance_id: String,
    pub tokens: Vec<TaggedToken>,
}

/// A swap point: token `pivot_index` is a main verb, and everything after it
/// can be replaced by a suffix drawn from another utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotPoint {
    pub utterance_id: String,
    pub pivot_index: usize,
    pub pivot_surface: String,
    pub sentence_len: usize,
}

impl PivotPoint {
    /// Token positions kept verbatim, up to but excluding the pivot.
    pub fn prefix_range(&self) -> Range<usize> {
        0..self.pivot_index
    }

    /// Token positions replaced by the sampled suffix.
    pub fn suffix_range(&self) -> Range<usize> {
        self.pivot_index + 1..self.sentence_len
    }
}

/// Parses a CoNLL-U file into tagged sentences, in file order.
pub fn parse_conllu(path: &Path) -> Result<Vec<TaggedSentence>, TaggingError> {
    let contents = fs::read_to_string(path).map_err(|source| TaggingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut sentences = Vec::new();
    let mut sent_id: Option<String> = None;
    let mut tokens: Vec<TaggedToken> = Vec::new();
    let mut block_start = 0usize;

    let mut flush = |sent_id: &mut Option<String>,
                     tokens: &mut Vec<TaggedToken>,
                     block_start: usize|
     -> Result<(), TaggingError> {
        if tokens.is_empty() {
            *sent_id = None;
            return Ok(());
        }
        let id = sent_id.take().ok_or(TaggingError::MissingSentId {
            path: path.to_path_buf(),
            line: block_start,
        })?;
        sentences.push(TaggedSentence {
            utterance_id: id,
            tokens: std::mem::take(tokens),
        });
        Ok(())
    };

    for (i, raw_line) in contents.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.is_empty() {
            flush(&mut sent_id, &mut tokens, block_start)?;
            continue;
        }
        if tokens.is_empty() && sent_id.is_none() {
            block_start = line_no;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    sent_id = Some(value.trim().to_string());
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 10 {
            return Err(TaggingError::MalformedRow {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 10 columns, found {}", fields.len()),
            });
        }
        let id_col = fields[0];
        if id_col.contains('-') || id_col.contains('.') {
            continue;
        }
        if id_col.parse::<u64>().is_err() {
            return Err(TaggingError::MalformedRow {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("bad token id {id_col:?}"),
            });
        }
        let upos = Upos::parse(fields[3]).ok_or_else(|| TaggingError::MalformedRow {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("unknown UPOS tag {:?}", fields[3]),
        })?;
        tokens.push(TaggedToken {
            form: fields[1].to_string(),
            upos,
        });
    }
    flush(&mut sent_id, &mut tokens, block_start)?;
    Ok(sentences)
}

/// Parses a CoNLL-U file and keys sentences by utterance id.
///
/// Later duplicates are dropped; their ids are returned so callers can warn.
pub fn parse_conllu_map(
    path: &Path,
) -> Result<(BTreeMap<String, TaggedSentence>, Vec<String>), TaggingError> {
    let sentences = parse_conllu(path)?;
    let mut map = BTreeMap::new();
    let mut duplicates = Vec::new();
    for sentence in sentences {
        if map.contains_key(&sentence.utterance_id) {
            duplicates.push(sentence.utterance_id);
        } else {
            map.insert(sentence.utterance_id.clone(), sentence);
        }
    }
    Ok((map, duplicates))
}

/// All pivot points in a sentence: main verbs with a nonempty suffix.
///
/// Auxiliaries are not pivots. Swapping after an auxiliary would split verb
/// groups mid-construction far more often than it would produce a clean
/// clause boundary, so only `VERB` qualifies.
pub fn find_pivots(sentence: &TaggedSentence) -> Vec<PivotPoint> {
    let len = sentence.tokens.len();
    sentence
        .tokens
        .iter()
        .enumerate()
        .filter(|(i, token)| token.upos == Some(Upos::Verb) && i + 1 < len)
        .map(|(i, token)| PivotPoint {
            utterance_id: sentence.utterance_id.clone(),
            pivot_index: i,
            pivot_surface: token.form.clone(),
            sentence_len: len,
        })
        .collect()
}

/// Outcome of reconciling a tagged sentence with an utterance transcript.
#[derive(Debug, Clone, PartialEq)]
pub enum TagMerge {
    /// Token counts differ, so tags cannot be trusted positionally.
    Mismatch { tagged: usize, transcript: usize },
    /// Pivots found after forms were replaced by transcript tokens.
    Pivots(Vec<PivotPoint>),
}

/// Reconciles tags with the transcript and extracts pivots.
///
/// The tagger may have seen unnormalized text, so forms are replaced
/// positionally by transcript tokens when counts match. Pivot surfaces then
/// always come from transcript vocabulary.
pub fn merge_tags(utt: &Utterance, sentence: &TaggedSentence) -> TagMerge {
    if sentence.tokens.len() != utt.transcript.len() {
        return TagMerge::Mismatch {
            tagged: sentence.tokens.len(),
            transcript: utt.transcript.len(),
        };
    }
    let merged = TaggedSentence {
        utterance_id: utt.id.clone(),
        tokens: sentence
            .tokens
            .iter()
            .zip(&utt.transcript)
            .map(|(token, word)| TaggedToken {
                form: word.clone(),
                upos: token.upos,
            })
            .collect(),
    };
    TagMerge::Pivots(find_pivots(&merged))
}
