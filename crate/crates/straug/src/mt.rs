//! Batched translation backends.
//!
//! Three backends share one request shape: an HTTP service speaking a small
//! JSON protocol, a file-backed lookup table for offline and test runs, and
//! an identity echo for plumbing checks. Requests are chunked to the
//! configured batch size; chunks are retried with exponential backoff and
//! may be issued concurrently, with responses reassembled in request order.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentedExample;
use crate::corpus::normalize_transcript;
use crate::stats::RunStats;

/// Environment variable consulted for the service endpoint when no explicit
/// endpoint is configured.
pub const ENDPOINT_ENV: &str = "STR_MT_ENDPOINT";

#[derive(Debug, thiserror::Error)]
pub enum MtError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    MalformedTable {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no translation for {0:?}")]
    MissingTranslation(String),
    #[error("sent {sent} texts but received {received} translations")]
    LengthMismatch { sent: usize, received: usize },
    #[error("translation service unavailable after {attempts} attempts: {message}")]
    BackendUnavailable { attempts: u32, message: String },
}

/// A batch of texts to translate between a fixed language pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationRequest {
    pub texts: Vec<String>,
    pub source_lang: String,
    pub target_lang: String,
}

impl TranslationRequest {
    pub fn validate(&self) -> Result<(), MtError> {
        if self.texts.is_empty() {
            return Err(MtError::InvalidRequest("no texts".to_string()));
        }
        if let Some(i) = self.texts.iter().position(|t| t.trim().is_empty()) {
            return Err(MtError::InvalidRequest(format!("text {i} is empty")));
        }
        if self.source_lang.is_empty() || self.target_lang.is_empty() {
            return Err(MtError::InvalidRequest("empty language code".to_string()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    src: &'a str,
    tgt: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct WireResponse {
    translations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub endpoint: String,
    pub timeout: Duration,
    pub max_batch: usize,
    pub retries: u32,
    pub backoff_base: Duration,
    pub max_inflight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: String::new(),
            timeout: Duration::from_secs(30),
            max_batch: 64,
            retries: 3,
            backoff_base: Duration::from_millis(500),
            max_inflight: 4,
        }
    }
}

/// An exact-match lookup table keyed by normalized source text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileTable {
    map: HashMap<String, String>,
}

impl FileTable {
    /// Loads a two-column TSV of source and target text.
    ///
    /// Keys are normalized the same way transcripts are, so lookups survive
    /// casing and punctuation differences in the table file.
    pub fn load(path: &Path) -> Result<Self, MtError> {
        let contents = fs::read_to_string(path).map_err(|source| MtError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut map = HashMap::new();
        for (i, raw_line) in contents.lines().enumerate() {
            let line = raw_line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let Some((source, target)) = line.split_once('\t') else {
                return Err(MtError::MalformedTable {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected two tab-separated columns".to_string(),
                });
            };
            map.insert(Self::key(source), target.to_string());
        }
        Ok(FileTable { map })
    }

    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        FileTable {
            map: pairs
                .iter()
                .map(|(s, t)| (Self::key(s), t.to_string()))
                .collect(),
        }
    }

    fn key(text: &str) -> String {
        normalize_transcript(text).join(" ")
    }

    pub fn get(&self, text: &str) -> Option<&str> {
        self.map.get(&Self::key(text)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone)]
pub enum TranslatorBackend {
    Http(HttpConfig),
    FileTable(FileTable),
    /// Echoes the source text; useful for pipeline smoke tests.
    Identity,
}

fn chunk_ranges(n: usize, max_batch: usize) -> Vec<std::ops::Range<usize>> {
    let size = max_batch.max(1);
    (0..n.div_ceil(size))
        .map(|i| i * size..((i + 1) * size).min(n))
        .collect()
}

fn post_chunk(
    client: &reqwest::blocking::Client,
    config: &HttpConfig,
    request: &TranslationRequest,
    texts: &[String],
) -> Result<Vec<String>, MtError> {
    let wire = WireRequest {
        src: &request.source_lang,
        tgt: &request.target_lang,
        texts,
    };
    let attempts = 1 + config.retries;
    let mut last = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(config.backoff_base * 2u32.pow(attempt - 1));
        }
        let outcome = client
            .post(&config.endpoint)
            .json(&wire)
            .send()
            .map_err(|e| e.to_string())
            .and_then(|response| {
                let status = response.status();
                if !status.is_success() {
                    return Err(format!("status {status}"));
                }
                response
                    .json::<WireResponse>()
                    .map_err(|e| format!("bad response body: {e}"))
            });
        match outcome {
            Ok(body) => {
                if body.translations.len() != texts.len() {
                    return Err(MtError::LengthMismatch {
                        sent: texts.len(),
                        received: body.translations.len(),
                    });
                }
                return Ok(body.translations);
            }
            Err(message) => last = message,
        }
    }
    Err(MtError::BackendUnavailable {
        attempts,
        message: last,
    })
}

/// Issues every chunk over up to `max_inflight` threads and returns one
/// result per chunk, in chunk order.
fn run_chunks(
    config: &HttpConfig,
    request: &TranslationRequest,
    ranges: &[std::ops::Range<usize>],
) -> Result<Vec<Result<Vec<String>, MtError>>, MtError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| MtError::BackendUnavailable {
            attempts: 0,
            message: e.to_string(),
        })?;
    let results = Mutex::new(Vec::from_iter((0..ranges.len()).map(|_| None)));
    let next = AtomicUsize::new(0);
    let n_threads = config.max_inflight.max(1).min(ranges.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..n_threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= ranges.len() {
                    break;
                }
                let chunk = &request.texts[ranges[i].clone()];
                let result = post_chunk(&client, config, request, chunk);
                results.lock().unwrap()[i] = Some(result);
            });
        }
    });

    Ok(results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every chunk is processed"))
        .collect())
}

fn translate_http(
    config: &HttpConfig,
    request: &TranslationRequest,
) -> Result<Vec<String>, MtError> {
    let ranges = chunk_ranges(request.texts.len(), config.max_batch);
    let mut out = Vec::with_capacity(request.texts.len());
    for chunk in run_chunks(config, request, &ranges)? {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Translates a batch, preserving order and length.
pub fn translate_batch(
    backend: &TranslatorBackend,
    request: &TranslationRequest,
) -> Result<Vec<String>, MtError> {
    request.validate()?;
    match backend {
        TranslatorBackend::Identity => Ok(request.texts.clone()),
        TranslatorBackend::FileTable(table) => request
            .texts
            .iter()
            .map(|text| {
                table
                    .get(text)
                    .map(str::to_string)
                    .ok_or_else(|| MtError::MissingTranslation(text.clone()))
            })
            .collect(),
        TranslatorBackend::Http(config) => translate_http(config, request),
    }
}

/// Fills `translation` on each example, dropping the ones that fail.
///
/// The file table drops per text; the HTTP backend drops per failed chunk.
/// Drops are charged to `skipped_translation` and removed from `emitted`, so
/// the accounting identity keeps holding.
pub fn fill_translations(
    examples: Vec<AugmentedExample>,
    backend: &TranslatorBackend,
    source_lang: &str,
    target_lang: &str,
    stats: &mut RunStats,
) -> Result<Vec<AugmentedExample>, MtError> {
    if examples.is_empty() {
        return Ok(examples);
    }
    let texts: Vec<String> = examples.iter().map(|e| e.transcript.join(" ")).collect();

    let drop_count = |stats: &mut RunStats, n: u64| {
        stats.skipped_translation += n;
        stats.emitted -= n;
    };

    match backend {
        TranslatorBackend::Identity => Ok(examples
            .into_iter()
            .zip(texts)
            .map(|(mut example, text)| {
                example.translation = Some(text);
                example
            })
            .collect()),
        TranslatorBackend::FileTable(table) => {
            let mut kept = Vec::with_capacity(examples.len());
            for (mut example, text) in examples.into_iter().zip(texts) {
                match table.get(&text) {
                    Some(translation) => {
                        example.translation = Some(translation.to_string());
                        kept.push(example);
                    }
                    None => drop_count(stats, 1),
                }
            }
            Ok(kept)
        }
        TranslatorBackend::Http(config) => {
            let request = TranslationRequest {
                texts,
                source_lang: source_lang.to_string(),
                target_lang: target_lang.to_string(),
            };
            request.validate()?;
            let ranges = chunk_ranges(request.texts.len(), config.max_batch);
            let chunks = run_chunks(config, &request, &ranges)?;

            let mut kept = Vec::with_capacity(examples.len());
            let mut examples = examples.into_iter();
            for (range, chunk) in ranges.into_iter().zip(chunks) {
                let chunk_examples: Vec<AugmentedExample> =
                    examples.by_ref().take(range.len()).collect();
                match chunk {
                    Ok(translations) => {
                        for (mut example, translation) in
                            chunk_examples.into_iter().zip(translations)
                        {
                            example.translation = Some(translation);
                            kept.push(example);
                        }
                    }
                    Err(_) => drop_count(stats, range.len() as u64),
                }
            }
            Ok(kept)
        }
    }
}
