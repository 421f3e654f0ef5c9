//! Subcommand implementations.
//!
//! Failures split into two kinds: problems a user can fix on the command
//! line (missing files, contradictory flags) abort before any work starts,
//! and runtime failures (unparseable inputs, unreachable services) abort the
//! run itself. `main` maps the two onto different exit codes.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use straug::alignment::{DiscardReason, ValidationVerdict};
use straug::audio::{materialize_with_silence, read_wav, write_wav};
use straug::augment::{augment_corpus, load_examples, save_examples, AugmentOptions};
use straug::corpus::{parse_manifest_with_languages, write_manifest, Corpus, Utterance};
use straug::features::{cmvn, logmel, write_features, write_index, FeatureConfig, IndexEntry};
use straug::memory::{build_memory, SuffixMemory};
use straug::mt::{fill_translations, FileTable, HttpConfig, TranslatorBackend, ENDPOINT_ENV};
use straug::pipeline::{
    load_tag_merges, load_verdicts, pivots_map, validated_map, AlignmentSource,
};
use straug::stats::RunStats;
use straug::tagging::TagMerge;

use crate::cli::{
    AugmentArgs, BuildMemoryArgs, FeaturizeArgs, MaterializeArgs, StatsArgs, TranslateArgs,
    ValidateArgs,
};
use crate::config::RunConfig;

/// A failure the user fixes by changing the invocation, not the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(message.into()))
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{what} {} is not a file", path.display())));
    }
    Ok(())
}

fn require_exists(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.exists() {
        return Err(usage(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

fn resolve<T>(flag: Option<T>, config_value: Option<T>, what: &str) -> anyhow::Result<T> {
    flag.or(config_value)
        .ok_or_else(|| usage(format!("missing {what}: pass the flag or set it in the config")))
}

fn languages(
    flag_src: Option<String>,
    flag_tgt: Option<String>,
    config: &RunConfig,
) -> (String, String) {
    let source = flag_src
        .or_else(|| config.corpus.source_lang.clone())
        .unwrap_or_else(|| "en".to_string());
    let target = flag_tgt
        .or_else(|| config.corpus.target_lang.clone())
        .unwrap_or_else(|| "de".to_string());
    (source, target)
}

fn alignment_source(
    path: PathBuf,
    tier: Option<String>,
    config: &RunConfig,
) -> anyhow::Result<AlignmentSource> {
    require_exists(&path, "alignments path")?;
    if path.is_dir() {
        let tier = tier
            .or_else(|| config.alignment.tier.clone())
            .unwrap_or_else(|| "words".to_string());
        Ok(AlignmentSource::TextGridDir { dir: path, tier })
    } else {
        Ok(AlignmentSource::CtmFile(path))
    }
}

fn print_warnings(warnings: &[String]) {
    for warning in warnings {
        eprintln!("warning: {warning}");
    }
}

fn load_corpus(
    manifest: &Path,
    source_lang: &str,
    target_lang: &str,
) -> anyhow::Result<Corpus> {
    require_file(manifest, "manifest")?;
    Ok(parse_manifest_with_languages(manifest, source_lang, target_lang)?)
}

/// What `build-memory` did, in numbers.
#[derive(Debug, Serialize)]
struct BuildReport {
    total: u64,
    discarded_no_alignment: u64,
    discarded_count_mismatch: u64,
    skipped_tag_mismatch: u64,
    utterances_indexed: u64,
    n_keys: usize,
    n_entries: usize,
    bytes_estimate: usize,
}

pub fn build_memory_cmd(args: BuildMemoryArgs, config: &RunConfig) -> anyhow::Result<()> {
    let manifest = resolve(args.manifest, config.paths.manifest.clone(), "--manifest")?;
    let alignments_path = resolve(args.alignments, config.paths.alignments.clone(), "--alignments")?;
    let conllu = resolve(args.conllu, config.paths.conllu.clone(), "--conllu")?;
    require_file(&conllu, "tags file")?;
    let (source_lang, target_lang) = languages(None, None, config);
    let corpus = load_corpus(&manifest, &source_lang, &target_lang)?;
    let source = alignment_source(alignments_path, args.tier, config)?;
    let workers = args.workers.or(config.augment.workers).unwrap_or(1);

    let (verdicts, warnings) = load_verdicts(&corpus, &source, workers)?;
    print_warnings(&warnings);
    let (merges, warnings) = load_tag_merges(&corpus, &conllu)?;
    print_warnings(&warnings);

    let alignments = validated_map(&verdicts);
    let mut pivots = pivots_map(&merges);
    pivots.retain(|id, _| alignments.contains_key(id));

    let memory = build_memory(&corpus, &alignments, &pivots)?;
    memory.save(&args.out)?;

    let mut report = BuildReport {
        total: corpus.len() as u64,
        discarded_no_alignment: 0,
        discarded_count_mismatch: 0,
        skipped_tag_mismatch: 0,
        utterances_indexed: pivots.len() as u64,
        n_keys: memory.stats().n_keys,
        n_entries: memory.stats().n_entries,
        bytes_estimate: memory.stats().bytes_estimate,
    };
    for verdict in verdicts.values() {
        match verdict {
            ValidationVerdict::Discard(DiscardReason::NoAlignment) => {
                report.discarded_no_alignment += 1
            }
            ValidationVerdict::Discard(DiscardReason::CountMismatch) => {
                report.discarded_count_mismatch += 1
            }
            ValidationVerdict::Keep(_) => {}
        }
    }
    for utt in corpus.iter() {
        if !alignments.contains_key(&utt.id) {
            continue;
        }
        match merges.get(&utt.id) {
            Some(TagMerge::Pivots(_)) => {}
            Some(TagMerge::Mismatch { .. }) | None => report.skipped_tag_mismatch += 1,
        }
    }

    eprintln!(
        "indexed {} utterances into {} keys / {} entries (~{} bytes of text)",
        report.utterances_indexed, report.n_keys, report.n_entries, report.bytes_estimate
    );
    eprintln!(
        "discarded {} (no alignment) + {} (count mismatch), tag mismatches {}",
        report.discarded_no_alignment, report.discarded_count_mismatch, report.skipped_tag_mismatch
    );
    if let Some(stats_out) = args.stats_out {
        let json = serde_json::to_string_pretty(&report)?;
        std::fs::write(&stats_out, json + "\n")?;
    }
    Ok(())
}

pub fn augment_cmd(args: AugmentArgs, config: &RunConfig) -> anyhow::Result<()> {
    let manifest = resolve(args.manifest, config.paths.manifest.clone(), "--manifest")?;
    let alignments_path = resolve(args.alignments, config.paths.alignments.clone(), "--alignments")?;
    let conllu = resolve(args.conllu, config.paths.conllu.clone(), "--conllu")?;
    let memory_path = resolve(args.memory, config.paths.memory.clone(), "--memory")?;
    require_file(&conllu, "tags file")?;
    require_file(&memory_path, "memory file")?;
    let (source_lang, target_lang) = languages(None, None, config);
    let corpus = load_corpus(&manifest, &source_lang, &target_lang)?;
    let source = alignment_source(alignments_path, args.tier, config)?;

    let options = AugmentOptions {
        seed: args.seed.or(config.augment.seed).unwrap_or(0),
        fraction: args.fraction.or(config.augment.fraction).unwrap_or(1.0),
        per_utterance: args
            .per_utterance
            .or(config.augment.per_utterance)
            .unwrap_or(1),
        allow_identical_suffix: args.allow_identical_suffix
            || config.augment.allow_identical_suffix.unwrap_or(false),
        workers: args.workers.or(config.augment.workers).unwrap_or(1),
    };
    if options.per_utterance == 0 {
        return Err(usage("--per-utterance must be at least 1"));
    }

    let (verdicts, warnings) = load_verdicts(&corpus, &source, options.workers)?;
    print_warnings(&warnings);
    let (merges, warnings) = load_tag_merges(&corpus, &conllu)?;
    print_warnings(&warnings);
    let memory = SuffixMemory::load(&memory_path)?;

    let (examples, stats) = augment_corpus(&corpus, &memory, &verdicts, &merges, &options)?;
    save_examples(&examples, &args.out)?;

    eprint!("{}", stats.render_report());
    if let Some(stats_out) = args.stats_out {
        stats.save(&stats_out)?;
    }
    Ok(())
}

/// Batch size, retries, backoff, parallelism, and timeout flag values, in
/// that order.
type HttpTuning = (Option<usize>, Option<u32>, Option<u64>, Option<usize>, Option<u64>);

fn backend_from(
    backend: Option<String>,
    endpoint: Option<String>,
    table: Option<PathBuf>,
    args_like: HttpTuning,
    config: &RunConfig,
) -> anyhow::Result<TranslatorBackend> {
    let (max_batch, retries, backoff_ms, max_inflight, timeout_s) = args_like;
    let kind = backend
        .or_else(|| config.mt.backend.clone())
        .unwrap_or_else(|| "http".to_string());
    match kind.as_str() {
        "identity" => Ok(TranslatorBackend::Identity),
        "file" => {
            let table =
                resolve(table, config.mt.table.clone(), "--table for the file backend")?;
            require_file(&table, "translation table")?;
            Ok(TranslatorBackend::FileTable(FileTable::load(&table)?))
        }
        "http" => {
            let endpoint = endpoint
                .or_else(|| config.mt.endpoint.clone())
                .or_else(|| std::env::var(ENDPOINT_ENV).ok())
                .ok_or_else(|| {
                    usage(format!(
                        "no endpoint: pass --endpoint, set [mt].endpoint, or export {ENDPOINT_ENV}"
                    ))
                })?;
            let defaults = HttpConfig::default();
            Ok(TranslatorBackend::Http(HttpConfig {
                endpoint,
                timeout: Duration::from_secs(
                    timeout_s.or(config.mt.timeout_s).unwrap_or(defaults.timeout.as_secs()),
                ),
                max_batch: max_batch.or(config.mt.max_batch).unwrap_or(defaults.max_batch),
                retries: retries.or(config.mt.retries).unwrap_or(defaults.retries),
                backoff_base: Duration::from_millis(
                    backoff_ms
                        .or(config.mt.backoff_ms)
                        .unwrap_or(defaults.backoff_base.as_millis() as u64),
                ),
                max_inflight: max_inflight
                    .or(config.mt.max_inflight)
                    .unwrap_or(defaults.max_inflight),
            }))
        }
        other => Err(usage(format!(
            "unknown backend {other:?}: expected http, file, or identity"
        ))),
    }
}

pub fn translate_cmd(args: TranslateArgs, config: &RunConfig) -> anyhow::Result<()> {
    require_file(&args.input, "compositions file")?;
    let backend = backend_from(
        args.backend,
        args.endpoint,
        args.table,
        (
            args.max_batch,
            args.retries,
            args.backoff_ms,
            args.max_inflight,
            args.timeout_s,
        ),
        config,
    )?;
    let (source_lang, target_lang) = languages(args.source_lang, args.target_lang, config);

    let examples = load_examples(&args.input)?;
    let mut stats = match &args.stats_in {
        Some(path) => RunStats::load(path)?,
        None => RunStats {
            total: examples.len() as u64,
            emitted: examples.len() as u64,
            ..RunStats::default()
        },
    };
    let n_in = examples.len();
    let translated = fill_translations(examples, &backend, &source_lang, &target_lang, &mut stats)?;
    save_examples(&translated, &args.out)?;

    eprintln!(
        "translated {} examples, dropped {}",
        translated.len(),
        stats.skipped_translation
    );
    if let Some(stats_out) = args.stats_out {
        stats.save(&stats_out)?;
    }
    if n_in > 0 && translated.is_empty() {
        anyhow::bail!("the backend dropped all {n_in} examples; nothing was translated");
    }
    Ok(())
}

fn speaker_label(example_segments: &[straug::augment::AudioSpan], corpus: &Corpus) -> String {
    let mut speakers: Vec<&str> = Vec::new();
    for segment in example_segments {
        if let Some(utt) = corpus.get(&segment.utterance_id) {
            if !speakers.contains(&utt.speaker.as_str()) {
                speakers.push(&utt.speaker);
            }
        }
    }
    speakers.join("+")
}

pub fn materialize_cmd(args: MaterializeArgs, config: &RunConfig) -> anyhow::Result<()> {
    let manifest = resolve(args.manifest, config.paths.manifest.clone(), "--manifest")?;
    require_file(&args.input, "compositions file")?;
    let (source_lang, target_lang) = languages(None, None, config);
    let corpus = load_corpus(&manifest, &source_lang, &target_lang)?;
    let junction_ms = args
        .junction_silence_ms
        .or(config.audio.junction_silence_ms)
        .unwrap_or(0.0);
    if junction_ms < 0.0 {
        return Err(usage("--junction-silence-ms must not be negative"));
    }

    let examples = load_examples(&args.input)?;
    if examples.is_empty() {
        eprintln!("warning: no compositions in {}; nothing to do", args.input.display());
        return Ok(());
    }
    std::fs::create_dir_all(&args.out_dir)?;

    let mut rows = Vec::with_capacity(examples.len());
    for example in &examples {
        let waveform = materialize_with_silence(example, &corpus, junction_ms)?;
        let file_name = format!("{}.wav", example.id);
        write_wav(&waveform, &args.out_dir.join(&file_name))?;
        rows.push(Utterance {
            id: example.id.clone(),
            audio_path: PathBuf::from(&file_name),
            n_samples: Some(waveform.samples.len() as u64),
            raw_text: example.transcript.join(" "),
            transcript: example.transcript.clone(),
            translation: example.translation.clone(),
            speaker: speaker_label(&example.segments, &corpus),
        });
    }

    let manifest_out = args
        .manifest_out
        .unwrap_or_else(|| args.out_dir.join("manifest.tsv"));
    let out_corpus = Corpus::from_utterances(rows, &source_lang, &target_lang)?;
    write_manifest(&out_corpus, &manifest_out)?;
    eprintln!(
        "wrote {} waveforms to {} and a manifest to {}",
        examples.len(),
        args.out_dir.display(),
        manifest_out.display()
    );
    Ok(())
}

pub fn featurize_cmd(args: FeaturizeArgs, config: &RunConfig) -> anyhow::Result<()> {
    let manifest = resolve(args.manifest, config.paths.manifest.clone(), "--manifest")?;
    let (source_lang, target_lang) = languages(None, None, config);
    let corpus = load_corpus(&manifest, &source_lang, &target_lang)?;
    let defaults = FeatureConfig::default();
    let feature_config = FeatureConfig {
        frame_shift_ms: args
            .frame_shift_ms
            .or(config.features.frame_shift_ms)
            .unwrap_or(defaults.frame_shift_ms),
        frame_length_ms: args
            .frame_length_ms
            .or(config.features.frame_length_ms)
            .unwrap_or(defaults.frame_length_ms),
        n_mels: args.n_mels.or(config.features.n_mels).unwrap_or(defaults.n_mels),
        n_fft: args.n_fft.or(config.features.n_fft).unwrap_or(defaults.n_fft),
        fmin: args.fmin.or(config.features.fmin).unwrap_or(defaults.fmin),
        fmax: args.fmax.or(config.features.fmax),
        energy_floor: defaults.energy_floor,
    };
    std::fs::create_dir_all(&args.out_dir)?;

    let mut entries = Vec::with_capacity(corpus.len());
    for utt in corpus.iter() {
        let wave = read_wav(&corpus.resolve_audio(utt))?;
        let features = logmel(&wave.samples, wave.sample_rate, &feature_config)?;
        let features = if args.raw { features } else { cmvn(&features) };
        let file_name = format!("{}.fbank", utt.id);
        write_features(&features, &args.out_dir.join(&file_name))?;
        entries.push(IndexEntry {
            utterance_id: utt.id.clone(),
            path: PathBuf::from(&file_name),
            n_frames: features.n_frames,
        });
    }
    let index_out = args
        .index_out
        .unwrap_or_else(|| args.out_dir.join("index.tsv"));
    write_index(&entries, &index_out)?;
    eprintln!(
        "featurized {} utterances ({} mel channels) into {}",
        entries.len(),
        feature_config.n_mels,
        args.out_dir.display()
    );
    Ok(())
}

pub fn stats_cmd(args: StatsArgs) -> anyhow::Result<()> {
    require_file(&args.input, "stats file")?;
    let stats = RunStats::load(&args.input)?;
    print!("{}", stats.render_report());
    if args.check && !stats.identity_holds() {
        anyhow::bail!("accounting identity violated");
    }
    Ok(())
}

pub fn validate_cmd(args: ValidateArgs, config: &RunConfig) -> anyhow::Result<()> {
    let manifest = resolve(args.manifest, config.paths.manifest.clone(), "--manifest")?;
    let alignments_path = resolve(args.alignments, config.paths.alignments.clone(), "--alignments")?;
    let (source_lang, target_lang) = languages(None, None, config);
    let corpus = load_corpus(&manifest, &source_lang, &target_lang)?;
    let source = alignment_source(alignments_path, args.tier, config)?;
    let workers = args.workers.or(config.augment.workers).unwrap_or(1);

    let (verdicts, warnings) = load_verdicts(&corpus, &source, workers)?;
    print_warnings(&warnings);
    let mut kept = 0u64;
    let mut no_alignment = 0u64;
    let mut count_mismatch = 0u64;
    for verdict in verdicts.values() {
        match verdict {
            ValidationVerdict::Keep(_) => kept += 1,
            ValidationVerdict::Discard(DiscardReason::NoAlignment) => no_alignment += 1,
            ValidationVerdict::Discard(DiscardReason::CountMismatch) => count_mismatch += 1,
        }
    }
    println!("utterances      {}", corpus.len());
    println!("kept            {kept}");
    println!("no alignment    {no_alignment}");
    println!("count mismatch  {count_mismatch}");

    if let Some(conllu) = args.conllu.or_else(|| config.paths.conllu.clone()) {
        require_file(&conllu, "tags file")?;
        let (merges, warnings) = load_tag_merges(&corpus, &conllu)?;
        print_warnings(&warnings);
        let mut with_pivots = 0u64;
        let mut without_pivots = 0u64;
        let mut mismatched = 0u64;
        let mut untagged = 0u64;
        for utt in corpus.iter() {
            match merges.get(&utt.id) {
                Some(TagMerge::Pivots(pivots)) if !pivots.is_empty() => with_pivots += 1,
                Some(TagMerge::Pivots(_)) => without_pivots += 1,
                Some(TagMerge::Mismatch { .. }) => mismatched += 1,
                None => untagged += 1,
            }
        }
        println!("with pivots     {with_pivots}");
        println!("without pivots  {without_pivots}");
        println!("tag mismatch    {mismatched}");
        println!("untagged        {untagged}");
    }
    Ok(())
}
