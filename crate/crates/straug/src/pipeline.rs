//! Loading and validating the three inputs as one coherent pass.
//!
//! Alignments may arrive as a directory of per-utterance TextGrids or as one
//! CTM file. Either way the result is a verdict per corpus utterance; an
//! utterance with no aligner output, or whose TextGrid fails to parse, gets
//! a no-alignment discard verdict rather than aborting the run, since a few
//! damaged files are normal at corpus scale. A broken CTM or CoNLL-U file is
//! fatal, because one file covers the whole corpus.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::alignment::{
    parse_ctm, parse_textgrid, validate_alignment, AlignmentError, UtteranceAlignment,
    ValidationVerdict,
};
use crate::corpus::Corpus;
use crate::tagging::{merge_tags, parse_conllu_map, TagMerge, TaggingError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Tagging(#[from] TaggingError),
}

/// Where alignments come from.
#[derive(Debug, Clone, PartialEq)]
pub enum AlignmentSource {
    /// A directory of `<utterance id>.TextGrid` files.
    TextGridDir { dir: PathBuf, tier: String },
    /// One CTM file covering the corpus.
    CtmFile(PathBuf),
}

fn textgrid_path(dir: &Path, utterance_id: &str) -> Option<PathBuf> {
    for extension in ["TextGrid", "textgrid"] {
        let path = dir.join(format!("{utterance_id}.{extension}"));
        if path.is_file() {
            return Some(path);
        }
    }
    None
}

/// Loads and validates alignments for every corpus utterance.
///
/// Returns one verdict per utterance plus human-readable warnings for
/// per-file problems that were turned into discards.
pub fn load_verdicts(
    corpus: &Corpus,
    source: &AlignmentSource,
    workers: usize,
) -> Result<(BTreeMap<String, ValidationVerdict>, Vec<String>), PipelineError> {
    let mut warnings = Vec::new();
    let raw: BTreeMap<String, UtteranceAlignment> = match source {
        AlignmentSource::CtmFile(path) => parse_ctm(path)?,
        AlignmentSource::TextGridDir { dir, tier } => {
            let parse_one = |utt: &crate::corpus::Utterance| match textgrid_path(dir, &utt.id) {
                None => (utt.id.clone(), Ok(None)),
                Some(path) => (utt.id.clone(), parse_textgrid(&path, tier).map(Some)),
            };
            let parsed: Vec<(String, Result<Option<UtteranceAlignment>, AlignmentError>)> =
                if workers > 1 {
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(workers)
                        .build()
                        .expect("thread pool construction");
                    pool.install(|| corpus.utterances().par_iter().map(parse_one).collect())
                } else {
                    corpus.iter().map(parse_one).collect()
                };
            let mut map = BTreeMap::new();
            for (id, result) in parsed {
                match result {
                    Ok(Some(alignment)) => {
                        map.insert(id, alignment);
                    }
                    Ok(None) => {}
                    Err(error) => {
                        warnings.push(format!("alignment for {id} unusable: {error}"));
                    }
                }
            }
            map
        }
    };

    let mut verdicts = BTreeMap::new();
    for utt in corpus.iter() {
        verdicts.insert(utt.id.clone(), validate_alignment(utt, raw.get(&utt.id)));
    }
    for id in raw.keys() {
        if corpus.get(id).is_none() {
            warnings.push(format!("alignment for unknown utterance {id} ignored"));
        }
    }
    Ok((verdicts, warnings))
}

/// Loads tags and reconciles them with every corpus utterance.
///
/// Utterances absent from the tag file get no entry; duplicates and unknown
/// ids become warnings.
pub fn load_tag_merges(
    corpus: &Corpus,
    conllu_path: &Path,
) -> Result<(BTreeMap<String, TagMerge>, Vec<String>), PipelineError> {
    let (sentences, duplicates) = parse_conllu_map(conllu_path)?;
    let mut warnings: Vec<String> = duplicates
        .iter()
        .map(|id| format!("duplicate tags for {id}: keeping the first"))
        .collect();
    let mut merges = BTreeMap::new();
    for (id, sentence) in &sentences {
        match corpus.get(id) {
            Some(utt) => {
                merges.insert(id.clone(), merge_tags(utt, sentence));
            }
            None => warnings.push(format!("tags for unknown utterance {id} ignored")),
        }
    }
    Ok((merges, warnings))
}

/// Strips verdicts down to the kept alignments, keyed by utterance.
pub fn validated_map(
    verdicts: &BTreeMap<String, ValidationVerdict>,
) -> BTreeMap<String, UtteranceAlignment> {
    verdicts
        .iter()
        .filter_map(|(id, verdict)| verdict.kept().map(|a| (id.clone(), a.clone())))
        .collect()
}

/// Extracts the pivot lists from successful tag merges.
pub fn pivots_map(
    merges: &BTreeMap<String, TagMerge>,
) -> BTreeMap<String, Vec<crate::tagging::PivotPoint>> {
    merges
        .iter()
        .filter_map(|(id, merge)| match merge {
            TagMerge::Pivots(pivots) if !pivots.is_empty() => {
                Some((id.clone(), pivots.clone()))
            }
            _ => None,
        })
        .collect()
}
