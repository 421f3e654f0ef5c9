//! Command line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "straug",
    version,
    about = "Corpus augmentation for speech translation: index suffixes, recombine around verb pivots, translate, and render audio"
)]
pub struct Cli {
    /// TOML config file; explicit flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print progress detail to stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Index audio-text suffixes from aligned utterances into a key-value memory.
    BuildMemory(BuildMemoryArgs),
    /// Sample donor suffixes and emit recombined examples.
    Augment(AugmentArgs),
    /// Fill translations on recombined examples.
    Translate(TranslateArgs),
    /// Render example audio by slicing and concatenating source recordings.
    Materialize(MaterializeArgs),
    /// Compute normalized log-Mel features for a manifest.
    Featurize(FeaturizeArgs),
    /// Print a run's accounting report.
    Stats(StatsArgs),
    /// Check alignments (and optionally tags) against a manifest.
    Validate(ValidateArgs),
}

#[derive(Args)]
pub struct BuildMemoryArgs {
    /// Corpus manifest TSV.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// TextGrid directory or CTM file.
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    /// TextGrid tier holding word intervals.
    #[arg(long)]
    pub tier: Option<String>,
    /// CoNLL-U tags for the manifest's utterances.
    #[arg(long)]
    pub conllu: Option<PathBuf>,
    /// Where to write the memory (JSON Lines).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write the build report as JSON to this file.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    #[arg(long)]
    pub tier: Option<String>,
    #[arg(long)]
    pub conllu: Option<PathBuf>,
    /// Suffix memory produced by build-memory.
    #[arg(long)]
    pub memory: Option<PathBuf>,
    /// Where to write recombined examples (JSON Lines).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep this fraction of the emitted examples.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Examples to attempt per eligible utterance.
    #[arg(long)]
    pub per_utterance: Option<usize>,
    /// Permit donor suffixes textually identical to the original.
    #[arg(long)]
    pub allow_identical_suffix: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write run stats as JSON to this file.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TranslateArgs {
    /// Recombined examples to translate (JSON Lines).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// http, file, or identity.
    #[arg(long)]
    pub backend: Option<String>,
    /// Translation service URL for the http backend.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Source-target TSV for the file backend.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub source_lang: Option<String>,
    #[arg(long)]
    pub target_lang: Option<String>,
    #[arg(long)]
    pub max_batch: Option<usize>,
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub backoff_ms: Option<u64>,
    #[arg(long)]
    pub max_inflight: Option<usize>,
    #[arg(long)]
    pub timeout_s: Option<u64>,
    /// Prior run stats to carry forward.
    #[arg(long)]
    pub stats_in: Option<PathBuf>,
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct MaterializeArgs {
    /// Manifest of the original corpus the examples reference.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Recombined examples (JSON Lines).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory for the rendered waveforms.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Silence inserted at segment junctions.
    #[arg(long)]
    pub junction_silence_ms: Option<f64>,
    /// Where to write the augmented manifest (default: out dir).
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory for feature files and the index.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Skip per-instance normalization.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub frame_shift_ms: Option<f64>,
    #[arg(long)]
    pub frame_length_ms: Option<f64>,
    #[arg(long)]
    pub n_mels: Option<usize>,
    #[arg(long)]
    pub n_fft: Option<usize>,
    #[arg(long)]
    pub fmin: Option<f64>,
    #[arg(long)]
    pub fmax: Option<f64>,
    /// Where to write the index (default: out dir).
    #[arg(long)]
    pub index_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct StatsArgs {
    /// Stats JSON produced by augment or translate.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Fail when the accounting identity does not hold.
    #[arg(long)]
    pub check: bool,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    #[arg(long)]
    pub tier: Option<String>,
    /// Also reconcile CoNLL-U tags and report pivot coverage.
    #[arg(long)]
    pub conllu: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}
