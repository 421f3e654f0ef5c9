//! Corpus augmentation for end-to-end speech translation.
//!
//! The pipeline recombines forced-aligned speech corpora around verb pivots:
//! it indexes audio-text suffixes in a key-value memory, samples replacement
//! suffixes per utterance, translates the recombined transcripts through a
//! pluggable MT backend, and materializes new audio-translation pairs by
//! slicing and concatenating the original recordings.
//!
//! Modules follow the pipeline stages:
//!
//! - [`corpus`]: TSV manifest parsing, transcript normalization, writing
//! - [`alignment`]: TextGrid/CTM ingestion and alignment validation
//! - [`tagging`]: CoNLL-U POS ingestion and pivot identification
//! - [`memory`]: the pivot-keyed suffix memory (build, query, serialize)
//! - [`augment`]: sampling, recombination, and run accounting
//! - [`audio`]: WAV I/O, sample-exact slicing and concatenation
//! - [`features`]: log-Mel filterbanks and per-instance CMVN
//! - [`mt`]: batched translation backends (HTTP, file table, identity)
//! - [`pipeline`]: glue for loading and validating the three input kinds

pub mod alignment;
pub mod audio;
pub mod augment;
pub mod corpus;
pub mod features;
pub mod memory;
pub mod mt;
pub mod pipeline;
pub mod stats;
pub mod tagging;

pub use alignment::{AlignedToken, DiscardReason, UtteranceAlignment, ValidationVerdict};
pub use augment::{AugmentOptions, AugmentedExample, AudioSpan, Provenance};
pub use corpus::{normalize_transcript, Corpus, Utterance};
pub use memory::{SuffixEntry, SuffixMemory};
pub use stats::RunStats;
pub use tagging::{PivotPoint, TaggedSentence};
