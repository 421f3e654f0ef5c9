//! Corpus manifests and transcript normalization.
//!
//! A corpus is described by a tab-separated manifest with one utterance per
//! row. Audio paths are resolved relative to the manifest's directory unless
//! absolute. Source transcripts are normalized once at load time: lowercased,
//! Unicode punctuation stripped, whitespace-tokenized.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Expected first line of every manifest.
pub const MANIFEST_HEADER: &str = "id\taudio\tn_frames\tsrc_text\ttgt_text\tspeaker";

const N_COLUMNS: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad manifest header: expected {MANIFEST_HEADER:?}, found {found:?}")]
    BadHeader { found: String },
    #[error("line {line}: expected {N_COLUMNS} tab-separated columns, found {found}")]
    MissingColumn { line: usize, found: usize },
    #[error("line {line}: invalid {field}: {message}")]
    InvalidField {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: duplicate utterance id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("manifest contains no utterances")]
    EmptyManifest,
    #[error("utterance {id:?}: field {field} contains a tab or newline")]
    WriteError { id: String, field: &'static str },
}

/// One corpus row: an audio file plus its transcript and optional translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub audio_path: PathBuf,
    /// Length of the audio in samples, when the manifest records it.
    pub n_samples: Option<u64>,
    /// Source text exactly as it appeared in the manifest.
    pub raw_text: String,
    /// Normalized source tokens: lowercased, punctuation removed.
    pub transcript: Vec<String>,
    pub translation: Option<String>,
    pub speaker: String,
}

/// An in-memory corpus with utterances in manifest order.
#[derive(Debug, Clone)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    pub source_language: String,
    pub target_language: String,
    base_dir: Option<PathBuf>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus from utterances already in the desired order.
    ///
    /// Returns an error when two utterances share an id.
    pub fn from_utterances(
        utterances: Vec<Utterance>,
        source_language: &str,
        target_language: &str,
    ) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(utterances.len());
        for (i, utt) in utterances.iter().enumerate() {
            if index.insert(utt.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    line: i + 2,
                    id: utt.id.clone(),
                });
            }
        }
        Ok(Corpus {
            utterances,
            source_language: source_language.to_string(),
            target_language: target_language.to_string(),
            base_dir: None,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.index.get(id).map(|&i| &self.utterances[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter()
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    /// The audio path for an utterance, resolved against the manifest
    /// directory when relative.
    pub fn resolve_audio(&self, utt: &Utterance) -> PathBuf {
        if utt.audio_path.is_absolute() {
            return utt.audio_path.clone();
        }
        match &self.base_dir {
            Some(dir) => dir.join(&utt.audio_path),
            None => utt.audio_path.clone(),
        }
    }
}

/// Lowercases, strips Unicode punctuation, and splits on whitespace.
///
/// This is the canonical transcript form used for suffix-memory keys and
/// file-table lookups, so every text that participates in matching must pass
/// through here exactly once.
pub fn normalize_transcript(text: &str) -> Vec<String> {
    static PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").unwrap());
    let lowered = text.to_lowercase();
    let stripped = PUNCT.replace_all(&lowered, "");
    stripped.split_whitespace().map(str::to_string).collect()
}

/// Parses a manifest file into a corpus, with languages defaulting to en/de.
pub fn parse_manifest(path: &Path) -> Result<Corpus, CorpusError> {
    parse_manifest_with_languages(path, "en", "de")
}

pub fn parse_manifest_with_languages(
    path: &Path,
    source_language: &str,
    target_language: &str,
) -> Result<Corpus, CorpusError> {
    let contents = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = contents.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line.trim_end_matches('\r'),
        None => return Err(CorpusError::EmptyManifest),
    };
    if header != MANIFEST_HEADER {
        return Err(CorpusError::BadHeader {
            found: header.to_string(),
        });
    }

    let mut utterances = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, raw_line) in lines {
        let line_no = i + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != N_COLUMNS {
            return Err(CorpusError::MissingColumn {
                line: line_no,
                found: fields.len(),
            });
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(CorpusError::InvalidField {
                line: line_no,
                field: "id",
                message: "empty".to_string(),
            });
        }
        if fields[1].is_empty() {
            return Err(CorpusError::InvalidField {
                line: line_no,
                field: "audio",
                message: "empty".to_string(),
            });
        }
        let n_samples = if fields[2].is_empty() {
            None
        } else {
            Some(
                fields[2]
                    .parse::<u64>()
                    .map_err(|e| CorpusError::InvalidField {
                        line: line_no,
                        field: "n_frames",
                        message: e.to_string(),
                    })?,
            )
        };
        let raw_text = fields[3].to_string();
        let translation = if fields[4].is_empty() {
            None
        } else {
            Some(fields[4].to_string())
        };
        let utt = Utterance {
            id: id.to_string(),
            audio_path: PathBuf::from(fields[1]),
            n_samples,
            transcript: normalize_transcript(&raw_text),
            raw_text,
            translation,
            speaker: fields[5].to_string(),
        };
        if index.insert(utt.id.clone(), utterances.len()).is_some() {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: utt.id.clone(),
            });
        }
        utterances.push(utt);
    }

    if utterances.is_empty() {
        return Err(CorpusError::EmptyManifest);
    }

    Ok(Corpus {
        utterances,
        source_language: source_language.to_string(),
        target_language: target_language.to_string(),
        base_dir: path.parent().map(Path::to_path_buf),
        index,
    })
}

/// Writes a corpus back out as a manifest with Unix newlines.
pub fn write_manifest(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyManifest);
    }
    let mut out = String::with_capacity(corpus.len() * 80);
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for utt in corpus.iter() {
        let audio = utt.audio_path.to_string_lossy();
        let n_samples = utt.n_samples.map(|n| n.to_string()).unwrap_or_default();
        let translation = utt.translation.as_deref().unwrap_or("");
        for (field, value) in [
            ("id", utt.id.as_str()),
            ("audio", audio.as_ref()),
            ("src_text", utt.raw_text.as_str()),
            ("tgt_text", translation),
            ("speaker", utt.speaker.as_str()),
        ] {
            if value.contains('\t') || value.contains('\n') || value.contains('\r') {
                return Err(CorpusError::WriteError {
                    id: utt.id.clone(),
                    field,
                });
            }
        }
        out.push_str(&utt.id);
        out.push('\t');
        out.push_str(&audio);
        out.push('\t');
        out.push_str(&n_samples);
        out.push('\t');
        out.push_str(&utt.raw_text);
        out.push('\t');
        out.push_str(translation);
        out.push('\t');
        out.push_str(&utt.speaker);
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(out.as_bytes()).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}
