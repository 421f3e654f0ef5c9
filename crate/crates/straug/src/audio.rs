//! WAV I/O and sample-exact splicing.
//!
//! Only 16-bit mono PCM is supported, which is what forced-alignment corpora
//! ship. Splicing never resamples or crossfades: a recombined waveform is the
//! source samples of each span, butted together, so the output is exactly
//! predictable from the inputs. Time-to-sample conversion happens in one
//! place so both span endpoints of a junction round the same way.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::augment::AugmentedExample;
use crate::corpus::Corpus;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    CorruptHeader { path: PathBuf, message: String },
    #[error("{path}: only 16-bit mono PCM is supported ({message})")]
    UnsupportedFormat { path: PathBuf, message: String },
    #[error("segment rates disagree: {first} Hz vs {second} Hz")]
    RateMismatch { first: u32, second: u32 },
    #[error("utterance {utterance_id:?}: span {t_start}..{t_end}s exceeds {n_samples} samples")]
    SegmentOutOfBounds {
        utterance_id: String,
        t_start: f64,
        t_end: f64,
        n_samples: usize,
    },
    #[error("segment refers to unknown utterance {0:?}")]
    UnknownUtterance(String),
}

/// A mono 16-bit waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Converts a time in seconds to a sample index, rounding half away from
/// zero. Every span boundary in the crate goes through this function.
pub fn seconds_to_samples(t: f64, sample_rate: u32) -> usize {
    (t * sample_rate as f64).round() as usize
}

fn read_u16(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Reads a PCM16 mono WAV file.
pub fn read_wav(path: &Path) -> Result<Waveform, AudioError> {
    let bytes = fs::read(path).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corrupt = |message: &str| AudioError::CorruptHeader {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let unsupported = |message: String| AudioError::UnsupportedFormat {
        path: path.to_path_buf(),
        message,
    };

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(corrupt("not a RIFF/WAVE file"));
    }

    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let chunk_id = &bytes[pos..pos + 4];
        let chunk_len = read_u32(&bytes, pos + 4) as usize;
        let body_start = pos + 8;
        if body_start + chunk_len > bytes.len() {
            return Err(corrupt("chunk extends past end of file"));
        }
        let body = &bytes[body_start..body_start + chunk_len];
        match chunk_id {
            b"fmt " => {
                if chunk_len < 16 {
                    return Err(corrupt("fmt chunk too small"));
                }
                format = Some((
                    read_u16(body, 0),
                    read_u16(body, 2),
                    read_u32(body, 4),
                    read_u16(body, 14),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned; odd sizes carry a pad byte.
        pos = body_start + chunk_len + (chunk_len & 1);
    }

    let (audio_format, channels, sample_rate, bits) =
        format.ok_or_else(|| corrupt("missing fmt chunk"))?;
    let data = data.ok_or_else(|| corrupt("missing data chunk"))?;
    if audio_format != 1 {
        return Err(unsupported(format!("format tag {audio_format}")));
    }
    if channels != 1 {
        return Err(unsupported(format!("{channels} channels")));
    }
    if bits != 16 {
        return Err(unsupported(format!("{bits} bits per sample")));
    }
    if sample_rate == 0 {
        return Err(corrupt("zero sample rate"));
    }
    if data.len() % 2 != 0 {
        return Err(corrupt("odd data chunk size"));
    }

    let samples = data
        .chunks_exact(2)
        .map(|pair| i16::from_le_bytes([pair[0], pair[1]]))
        .collect();
    Ok(Waveform {
        samples,
        sample_rate,
    })
}

/// Writes a PCM16 mono WAV file with the standard 44-byte header.
pub fn write_wav(wave: &Waveform, path: &Path) -> Result<(), AudioError> {
    let io_err = |source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    };
    let data_len = wave.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&wave.sample_rate.to_le_bytes());
    out.extend_from_slice(&(wave.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for sample in &wave.samples {
        out.extend_from_slice(&sample.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)
}

/// Cuts one span out of a waveform.
pub fn slice_span(
    wave: &Waveform,
    utterance_id: &str,
    t_start: f64,
    t_end: f64,
) -> Result<Vec<i16>, AudioError> {
    let start = seconds_to_samples(t_start, wave.sample_rate);
    let end = seconds_to_samples(t_end, wave.sample_rate);
    if start > end || end > wave.samples.len() {
        return Err(AudioError::SegmentOutOfBounds {
            utterance_id: utterance_id.to_string(),
            t_start,
            t_end,
            n_samples: wave.samples.len(),
        });
    }
    Ok(wave.samples[start..end].to_vec())
}

/// Materializes an example's audio by slicing each span from its source
/// recording and concatenating, with optional silence at the junctions.
pub fn materialize_with_silence(
    example: &AugmentedExample,
    corpus: &Corpus,
    junction_silence_ms: f64,
) -> Result<Waveform, AudioError> {
    let mut out: Option<Waveform> = None;
    for span in &example.segments {
        let utt = corpus
            .get(&span.utterance_id)
            .ok_or_else(|| AudioError::UnknownUtterance(span.utterance_id.clone()))?;
        let wave = read_wav(&corpus.resolve_audio(utt))?;
        let samples = slice_span(&wave, &span.utterance_id, span.t_start, span.t_end)?;
        match out.as_mut() {
            None => {
                out = Some(Waveform {
                    samples,
                    sample_rate: wave.sample_rate,
                })
            }
            Some(acc) => {
                if acc.sample_rate != wave.sample_rate {
                    return Err(AudioError::RateMismatch {
                        first: acc.sample_rate,
                        second: wave.sample_rate,
                    });
                }
                if junction_silence_ms > 0.0 {
                    let n = seconds_to_samples(junction_silence_ms / 1000.0, acc.sample_rate);
                    acc.samples.extend(std::iter::repeat_n(0i16, n));
                }
                acc.samples.extend_from_slice(&samples);
            }
        }
    }
    Ok(out.unwrap_or(Waveform {
        samples: Vec::new(),
        sample_rate: 16000,
    }))
}

/// Materializes with no junction silence, the default.
pub fn materialize(example: &AugmentedExample, corpus: &Corpus) -> Result<Waveform, AudioError> {
    materialize_with_silence(example, corpus, 0.0)
}
