//! Optional TOML run configuration.
//!
//! Every value a flag can set may also live in a config file; flags win.
//! Sections mirror the pipeline stages so one file can drive a whole run.

use std::path::{Path, PathBuf};

use anyhow::Context as _;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub alignment: AlignmentConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub mt: MtConfig,
    #[serde(default)]
    pub audio: AudioConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: Option<PathBuf>,
    pub alignments: Option<PathBuf>,
    pub conllu: Option<PathBuf>,
    pub memory: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub source_lang: Option<String>,
    pub target_lang: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentConfig {
    pub tier: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub seed: Option<u64>,
    pub fraction: Option<f64>,
    pub per_utterance: Option<usize>,
    pub allow_identical_suffix: Option<bool>,
    pub workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtConfig {
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub table: Option<PathBuf>,
    pub max_batch: Option<usize>,
    pub retries: Option<u32>,
    pub backoff_ms: Option<u64>,
    pub max_inflight: Option<usize>,
    pub timeout_s: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioConfig {
    pub junction_silence_ms: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesConfig {
    pub frame_shift_ms: Option<f64>,
    pub frame_length_ms: Option<f64>,
    pub n_mels: Option<usize>,
    pub n_fft: Option<usize>,
    pub fmin: Option<f64>,
    pub fmax: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let contents = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&contents).with_context(|| format!("parsing config {}", path.display()))
    }
}
