//! Sampling and recombination.
//!
//! For each eligible utterance: pick one of its pivots uniformly, sample a
//! donor suffix stored under that pivot's surface, and emit a recombined
//! example whose transcript is `prefix + pivot + donor suffix` and whose
//! audio is described by two spans, one into each source recording.
//!
//! Randomness is deterministic per utterance: the generator is seeded from
//! the global seed and the utterance id, so results do not depend on worker
//! count or corpus ordering, and adding utterances never perturbs the draws
//! made for existing ones.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{DiscardReason, UtteranceAlignment, ValidationVerdict};
use crate::corpus::{Corpus, Utterance};
use crate::memory::{SuffixEntry, SuffixMemory};
use crate::stats::RunStats;
use crate::tagging::{PivotPoint, TagMerge};

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    MalformedExample {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("fraction must be in [0, 1], got {0}")]
    BadFraction(f64),
}

/// A span of one source recording, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioSpan {
    #[serde(rename = "utt")]
    pub utterance_id: String,
    #[serde(rename = "t0")]
    pub t_start: f64,
    #[serde(rename = "t1")]
    pub t_end: f64,
}

/// Where an augmented example came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub src_a: String,
    pub src_b: String,
    pub pivot: String,
    pub pivot_index: usize,
}

/// One recombined utterance: transcript, audio recipe, and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedExample {
    pub id: String,
    pub segments: Vec<AudioSpan>,
    pub transcript: Vec<String>,
    pub translation: Option<String>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct WireExample {
    id: String,
    segments: Vec<AudioSpan>,
    src_text: String,
    tgt_text: Option<String>,
    provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOptions {
    /// Global seed mixed into every per-utterance generator.
    pub seed: u64,
    /// Keep this fraction of emitted examples, truncating from the end.
    pub fraction: f64,
    /// How many examples to attempt per eligible utterance.
    pub per_utterance: usize,
    /// Allow a donor suffix whose text equals the original suffix.
    pub allow_identical_suffix: bool,
    /// Worker threads; results are identical regardless.
    pub workers: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            seed: 0,
            fraction: 1.0,
            per_utterance: 1,
            allow_identical_suffix: false,
            workers: 1,
        }
    }
}

/// FNV-1a over the global seed's little-endian bytes followed by the id.
///
/// This keeps per-utterance seeding stable across platforms and releases,
/// which the default hasher does not guarantee.
fn utterance_seed(seed: u64, utterance_id: &str) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut hash = OFFSET;
    for byte in seed.to_le_bytes().into_iter().chain(utterance_id.bytes()) {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// The deterministic generator for one utterance within one run.
pub fn utterance_rng(seed: u64, utterance_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(utterance_seed(seed, utterance_id))
}

/// Picks one pivot uniformly.
pub fn choose_pivot<'a, R: Rng>(pivots: &'a [PivotPoint], rng: &mut R) -> &'a PivotPoint {
    &pivots[rng.random_range(0..pivots.len())]
}

/// Samples a donor suffix for a pivot, or `None` when no entry qualifies.
///
/// The utterance's own entries never qualify. Donors whose text equals the
/// original suffix are excluded unless `allow_identical` is set, since they
/// would recreate the source sentence.
pub fn sample_suffix<'a, R: Rng>(
    memory: &'a SuffixMemory,
    pivot: &PivotPoint,
    original_suffix: &[String],
    allow_identical: bool,
    rng: &mut R,
) -> Option<&'a SuffixEntry> {
    let candidates: Vec<&SuffixEntry> = memory
        .lookup(&pivot.pivot_surface)
        .iter()
        .filter(|e| e.utterance_id != pivot.utterance_id)
        .filter(|e| allow_identical || e.text_suffix != original_suffix)
        .collect();
    if candidates.is_empty() {
        return None;
    }
    Some(candidates[rng.random_range(0..candidates.len())])
}

/// Builds the recombined example for one (utterance, pivot, donor) choice.
///
/// `ordinal` is the 1-based index of this example among those produced from
/// the same source utterance.
pub fn recombine(
    utt: &Utterance,
    alignment: &UtteranceAlignment,
    pivot: &PivotPoint,
    donor: &SuffixEntry,
    ordinal: usize,
) -> AugmentedExample {
    let mut transcript: Vec<String> = utt.transcript[..=pivot.pivot_index].to_vec();
    transcript.extend(donor.text_suffix.iter().cloned());
    AugmentedExample {
        id: format!("{}-str-{}", utt.id, ordinal),
        segments: vec![
            AudioSpan {
                utterance_id: utt.id.clone(),
                t_start: 0.0,
                t_end: alignment.tokens[pivot.pivot_index].t_end,
            },
            AudioSpan {
                utterance_id: donor.utterance_id.clone(),
                t_start: donor.t_start,
                t_end: donor.t_end,
            },
        ],
        transcript,
        translation: None,
        provenance: Provenance {
            src_a: utt.id.clone(),
            src_b: donor.utterance_id.clone(),
            pivot: pivot.pivot_surface.clone(),
            pivot_index: pivot.pivot_index,
        },
    }
}

enum UttOutcome {
    Discarded(DiscardReason),
    TagMismatch,
    NoPivot,
    NoCandidate,
    Emitted(Vec<AugmentedExample>),
}

fn process_utterance(
    utt: &Utterance,
    memory: &SuffixMemory,
    verdicts: &BTreeMap<String, ValidationVerdict>,
    tags: &BTreeMap<String, TagMerge>,
    options: &AugmentOptions,
) -> UttOutcome {
    let alignment = match verdicts.get(&utt.id) {
        Some(ValidationVerdict::Keep(a)) => a,
        Some(ValidationVerdict::Discard(reason)) => return UttOutcome::Discarded(*reason),
        None => return UttOutcome::Discarded(DiscardReason::NoAlignment),
    };
    let pivots = match tags.get(&utt.id) {
        Some(TagMerge::Pivots(pivots)) => pivots,
        Some(TagMerge::Mismatch { .. }) | None => return UttOutcome::TagMismatch,
    };
    if pivots.is_empty() {
        return UttOutcome::NoPivot;
    }

    let mut rng = utterance_rng(options.seed, &utt.id);
    let mut examples = Vec::new();
    for _ in 0..options.per_utterance {
        let pivot = choose_pivot(pivots, &mut rng);
        let original_suffix = &utt.transcript[pivot.suffix_range()];
        if let Some(donor) = sample_suffix(
            memory,
            pivot,
            original_suffix,
            options.allow_identical_suffix,
            &mut rng,
        ) {
            examples.push(recombine(utt, alignment, pivot, donor, examples.len() + 1));
        }
    }
    if examples.is_empty() {
        UttOutcome::NoCandidate
    } else {
        UttOutcome::Emitted(examples)
    }
}

/// Runs augmentation over a whole corpus.
///
/// Output order follows corpus order. The returned stats satisfy the
/// accounting identity; with the default one example per utterance, emitted
/// plus the per-reason counters equals the corpus size exactly.
pub fn augment_corpus(
    corpus: &Corpus,
    memory: &SuffixMemory,
    verdicts: &BTreeMap<String, ValidationVerdict>,
    tags: &BTreeMap<String, TagMerge>,
    options: &AugmentOptions,
) -> Result<(Vec<AugmentedExample>, RunStats), AugmentError> {
    if !(0.0..=1.0).contains(&options.fraction) || options.fraction.is_nan() {
        return Err(AugmentError::BadFraction(options.fraction));
    }

    let run = |stats: &mut RunStats| -> Vec<AugmentedExample> {
        let outcomes: Vec<UttOutcome> = if options.workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers)
                .build()
                .expect("thread pool construction");
            pool.install(|| {
                corpus
                    .utterances()
                    .par_iter()
                    .map(|utt| process_utterance(utt, memory, verdicts, tags, options))
                    .collect()
            })
        } else {
            corpus
                .iter()
                .map(|utt| process_utterance(utt, memory, verdicts, tags, options))
                .collect()
        };

        let mut examples = Vec::new();
        for outcome in outcomes {
            stats.total += 1;
            match outcome {
                UttOutcome::Discarded(DiscardReason::NoAlignment) => {
                    stats.discarded_no_alignment += 1
                }
                UttOutcome::Discarded(DiscardReason::CountMismatch) => {
                    stats.discarded_count_mismatch += 1
                }
                UttOutcome::TagMismatch => stats.skipped_tag_mismatch += 1,
                UttOutcome::NoPivot => stats.skipped_no_pivot += 1,
                UttOutcome::NoCandidate => stats.skipped_no_candidate += 1,
                UttOutcome::Emitted(mut new) => {
                    stats.emitted += new.len() as u64;
                    examples.append(&mut new);
                }
            }
        }
        examples
    };

    let mut stats = RunStats::default();
    let mut examples = run(&mut stats);

    if options.fraction < 1.0 {
        let kept = fraction_count(examples.len(), options.fraction);
        let dropped = examples.len() - kept;
        examples.truncate(kept);
        stats.skipped_fraction += dropped as u64;
        stats.emitted -= dropped as u64;
    }

    Ok((examples, stats))
}

/// How many of `n` examples a fraction keeps: the ceiling of `f * n`, with a
/// tiny haircut first so exact products like 0.2 * 5 do not round up from
/// float noise.
pub fn fraction_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) * (1.0 - 1e-12)).ceil() as usize
}

/// Serializes examples as JSON Lines.
pub fn save_examples(examples: &[AugmentedExample], path: &Path) -> Result<(), AugmentError> {
    let io_err = |source| AugmentError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for example in examples {
        let wire = WireExample {
            id: example.id.clone(),
            segments: example.segments.clone(),
            src_text: example.transcript.join(" "),
            tgt_text: example.translation.clone(),
            provenance: example.provenance.clone(),
        };
        serde_json::to_writer(&mut out, &wire).expect("example serialize cannot fail");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)
}

pub fn load_examples(path: &Path) -> Result<Vec<AugmentedExample>, AugmentError> {
    let file = fs::File::open(path).map_err(|source| AugmentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| AugmentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireExample =
            serde_json::from_str(&line).map_err(|source| AugmentError::MalformedExample {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?;
        examples.push(AugmentedExample {
            id: wire.id,
            segments: wire.segments,
            transcript: wire.src_text.split_whitespace().map(str::to_string).collect(),
            translation: wire.tgt_text,
            provenance: wire.provenance,
        });
    }
    Ok(examples)
}
