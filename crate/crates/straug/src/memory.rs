//! The pivot-keyed suffix memory.
//!
//! For every pivot in every validated utterance, the memory records the
//! suffix that follows the pivot: its text tokens, its time span in the
//! source audio, and the speaker. Entries are references into the original
//! recordings; no audio is copied at build time.
//!
//! On disk the memory is JSON Lines, one pivot key per line, keys in sorted
//! order so rebuilding from identical inputs is byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::UtteranceAlignment;
use crate::corpus::Corpus;
use crate::tagging::PivotPoint;

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    MalformedEntry {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("utterance {utterance_id:?}: {message}")]
    InconsistentInputs {
        utterance_id: String,
        message: String,
    },
}

/// One suffix: the tokens after a pivot and where they live in the audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffixEntry {
    pub utterance_id: String,
    pub text_suffix: Vec<String>,
    pub t_start: f64,
    pub t_end: f64,
    pub speaker: String,
}

/// Aggregate shape of a memory, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryStats {
    pub n_keys: usize,
    pub n_entries: usize,
    pub bytes_estimate: usize,
}

/// A key-value table from pivot surface to the suffixes that followed it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuffixMemory {
    table: BTreeMap<String, Vec<SuffixEntry>>,
}

#[derive(Serialize, Deserialize)]
struct WireEntry {
    utt: String,
    suffix: Vec<String>,
    t0: f64,
    t1: f64,
    speaker: String,
}

#[derive(Serialize, Deserialize)]
struct WireKey {
    pivot: String,
    entries: Vec<WireEntry>,
}

impl SuffixMemory {
    pub fn lookup(&self, surface: &str) -> &[SuffixEntry] {
        self.table.get(surface).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }

    pub fn n_keys(&self) -> usize {
        self.table.len()
    }

    pub fn n_entries(&self) -> usize {
        self.table.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Estimates the table's in-memory footprint from its text payload.
    ///
    /// The estimate grows with transcripts, never with audio length: entries
    /// are spans, so a ten-minute recording costs the same as a one-second
    /// one.
    pub fn stats(&self) -> MemoryStats {
        let mut bytes = 0usize;
        for (key, entries) in &self.table {
            bytes += key.len();
            for entry in entries {
                bytes += entry.utterance_id.len()
                    + entry.speaker.len()
                    + entry.text_suffix.iter().map(String::len).sum::<usize>()
                    + 16;
            }
        }
        MemoryStats {
            n_keys: self.table.len(),
            n_entries: self.n_entries(),
            bytes_estimate: bytes,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        let io_err = |source| MemoryError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = Vec::new();
        for (pivot, entries) in &self.table {
            let wire = WireKey {
                pivot: pivot.clone(),
                entries: entries
                    .iter()
                    .map(|e| WireEntry {
                        utt: e.utterance_id.clone(),
                        suffix: e.text_suffix.clone(),
                        t0: e.t_start,
                        t1: e.t_end,
                        speaker: e.speaker.clone(),
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut out, &wire).expect("serializing to memory cannot fail");
            out.push(b'\n');
        }
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(&out).map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let file = fs::File::open(path).map_err(|source| MemoryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let reader = BufReader::new(file);
        let mut table = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| MemoryError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let wire: WireKey =
                serde_json::from_str(&line).map_err(|source| MemoryError::MalformedEntry {
                    path: path.to_path_buf(),
                    line: i + 1,
                    source,
                })?;
            let entries = wire
                .entries
                .into_iter()
                .map(|e| SuffixEntry {
                    utterance_id: e.utt,
                    text_suffix: e.suffix,
                    t_start: e.t0,
                    t_end: e.t1,
                    speaker: e.speaker,
                })
                .collect();
            table.insert(wire.pivot, entries);
        }
        Ok(SuffixMemory { table })
    }
}

/// Builds the suffix memory from validated alignments and pivots.
///
/// Utterances are visited in corpus order, so entries under each key are in
/// corpus order too. Every pivot must belong to an utterance present in both
/// maps, point inside the transcript, and agree with the transcript token at
/// its index; anything else means the inputs were not produced from the same
/// corpus pass.
pub fn build_memory(
    corpus: &Corpus,
    alignments: &BTreeMap<String, UtteranceAlignment>,
    pivots: &BTreeMap<String, Vec<PivotPoint>>,
) -> Result<SuffixMemory, MemoryError> {
    for id in pivots.keys() {
        if corpus.get(id).is_none() {
            return Err(MemoryError::InconsistentInputs {
                utterance_id: id.clone(),
                message: "pivots refer to an utterance missing from the corpus".to_string(),
            });
        }
    }

    let mut table: BTreeMap<String, Vec<SuffixEntry>> = BTreeMap::new();
    for utt in corpus.iter() {
        let Some(utt_pivots) = pivots.get(&utt.id) else {
            continue;
        };
        if utt_pivots.is_empty() {
            continue;
        }
        let alignment = alignments
            .get(&utt.id)
            .ok_or_else(|| MemoryError::InconsistentInputs {
                utterance_id: utt.id.clone(),
                message: "pivots present but no validated alignment".to_string(),
            })?;
        for pivot in utt_pivots {
            let i = pivot.pivot_index;
            if i + 1 >= alignment.tokens.len() || pivot.sentence_len != alignment.tokens.len() {
                return Err(MemoryError::InconsistentInputs {
                    utterance_id: utt.id.clone(),
                    message: format!(
                        "pivot at {} does not fit an alignment of {} tokens",
                        i,
                        alignment.tokens.len()
                    ),
                });
            }
            if alignment.tokens[i].surface != pivot.pivot_surface {
                return Err(MemoryError::InconsistentInputs {
                    utterance_id: utt.id.clone(),
                    message: format!(
                        "pivot surface {:?} disagrees with aligned token {:?}",
                        pivot.pivot_surface, alignment.tokens[i].surface
                    ),
                });
            }
            let suffix_tokens: Vec<String> = alignment.tokens[i + 1..]
                .iter()
                .map(|t| t.surface.clone())
                .collect();
            table
                .entry(pivot.pivot_surface.clone())
                .or_default()
                .push(SuffixEntry {
                    utterance_id: utt.id.clone(),
                    text_suffix: suffix_tokens,
                    t_start: alignment.tokens[i + 1].t_start,
                    t_end: alignment.tokens.last().unwrap().t_end,
                    speaker: utt.speaker.clone(),
                });
        }
    }
    Ok(SuffixMemory { table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::alignment_from_spans;
    use crate::corpus::{normalize_transcript, Utterance};

    fn utt(id: &str, text: &str, speaker: &str) -> Utterance {
        Utterance {
            id: id.to_string(),
            audio_path: PathBuf::from(format!("{id}.wav")),
            n_samples: None,
            raw_text: text.to_string(),
            transcript: normalize_transcript(text),
            translation: None,
            speaker: speaker.to_string(),
        }
    }

    fn pivot(id: &str, index: usize, surface: &str, len: usize) -> PivotPoint {
        PivotPoint {
            utterance_id: id.to_string(),
            pivot_index: index,
            pivot_surface: surface.to_string(),
            sentence_len: len,
        }
    }

    fn fixture() -> (Corpus, BTreeMap<String, UtteranceAlignment>, BTreeMap<String, Vec<PivotPoint>>) {
        let corpus = Corpus::from_utterances(
            vec![
                utt("u1", "the dog ran home quickly", "spk_a"),
                utt("u2", "cats ran away", "spk_b"),
                utt("u3", "nothing to index here", "spk_c"),
            ],
            "en",
            "de",
        )
        .unwrap();
        let mut alignments = BTreeMap::new();
        alignments.insert(
            "u1".to_string(),
            alignment_from_spans(
                "u1",
                &[
                    ("the", 0.0, 0.2),
                    ("dog", 0.2, 0.5),
                    ("ran", 0.5, 0.8),
                    ("home", 0.8, 1.2),
                    ("quickly", 1.2, 1.9),
                ],
            ),
        );
        alignments.insert(
            "u2".to_string(),
            alignment_from_spans(
                "u2",
                &[("cats", 0.1, 0.6), ("ran", 0.6, 0.9), ("away", 0.9, 1.4)],
            ),
        );
        let mut pivots = BTreeMap::new();
        pivots.insert("u1".to_string(), vec![pivot("u1", 2, "ran", 5)]);
        pivots.insert("u2".to_string(), vec![pivot("u2", 1, "ran", 3)]);
        (corpus, alignments, pivots)
    }

    #[test]
    fn builds_entries_with_suffix_spans() {
        let (corpus, alignments, pivots) = fixture();
        let memory = build_memory(&corpus, &alignments, &pivots).unwrap();
        assert_eq!(memory.n_keys(), 1);
        assert_eq!(memory.n_entries(), 2);
        let entries = memory.lookup("ran");
        assert_eq!(entries[0].utterance_id, "u1");
        assert_eq!(entries[0].text_suffix, vec!["home", "quickly"]);
        assert_eq!(entries[0].t_start, 0.8);
        assert_eq!(entries[0].t_end, 1.9);
        assert_eq!(entries[0].speaker, "spk_a");
        assert_eq!(entries[1].utterance_id, "u2");
        assert_eq!(entries[1].text_suffix, vec!["away"]);
        assert!(memory.lookup("home").is_empty());
    }

    #[test]
    fn rejects_pivot_without_alignment() {
        let (corpus, mut alignments, pivots) = fixture();
        alignments.remove("u2");
        assert!(matches!(
            build_memory(&corpus, &alignments, &pivots),
            Err(MemoryError::InconsistentInputs { utterance_id, .. }) if utterance_id == "u2"
        ));
    }

    #[test]
    fn rejects_pivot_for_unknown_utterance() {
        let (corpus, alignments, mut pivots) = fixture();
        pivots.insert("ghost".to_string(), vec![pivot("ghost", 0, "ran", 2)]);
        assert!(matches!(
            build_memory(&corpus, &alignments, &pivots),
            Err(MemoryError::InconsistentInputs { utterance_id, .. }) if utterance_id == "ghost"
        ));
    }

    #[test]
    fn rejects_out_of_range_pivot() {
        let (corpus, alignments, mut pivots) = fixture();
        pivots.insert("u2".to_string(), vec![pivot("u2", 2, "away", 3)]);
        assert!(matches!(
            build_memory(&corpus, &alignments, &pivots),
            Err(MemoryError::InconsistentInputs { .. })
        ));
    }

    #[test]
    fn rejects_surface_disagreement() {
        let (corpus, alignments, mut pivots) = fixture();
        pivots.insert("u2".to_string(), vec![pivot("u2", 1, "walked", 3)]);
        assert!(matches!(
            build_memory(&corpus, &alignments, &pivots),
            Err(MemoryError::InconsistentInputs { .. })
        ));
    }

    #[test]
    fn save_load_roundtrip_and_key_order() {
        let (corpus, alignments, pivots) = fixture();
        let memory = build_memory(&corpus, &alignments, &pivots).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.jsonl");
        memory.save(&path).unwrap();
        let reread = SuffixMemory::load(&path).unwrap();
        assert_eq!(reread, memory);

        let text = fs::read_to_string(&path).unwrap();
        let line = text.lines().next().unwrap();
        assert!(line.starts_with("{\"pivot\":\"ran\""));
        assert!(line.contains("\"utt\":\"u1\""));
        assert!(line.contains("\"t0\":0.8"));
        memory.save(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), text);
    }

    #[test]
    fn load_reports_malformed_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.jsonl");
        fs::write(&path, "{\"pivot\":\"ran\",\"entries\":[]}\nnot json\n").unwrap();
        assert!(matches!(
            SuffixMemory::load(&path),
            Err(MemoryError::MalformedEntry { line: 2, .. })
        ));
    }

    #[test]
    fn stats_count_text_not_audio_duration() {
        let (corpus, mut alignments, pivots) = fixture();
        let memory_short = build_memory(&corpus, &alignments, &pivots).unwrap();

        for alignment in alignments.values_mut() {
            for token in &mut alignment.tokens {
                token.t_start *= 1000.0;
                token.t_end *= 1000.0;
            }
        }
        let memory_long = build_memory(&corpus, &alignments, &pivots).unwrap();
        assert_eq!(
            memory_short.stats().bytes_estimate,
            memory_long.stats().bytes_estimate
        );
        assert_eq!(memory_short.stats().n_keys, 1);
        assert_eq!(memory_short.stats().n_entries, 2);
    }
}
