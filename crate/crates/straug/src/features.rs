//! Log-Mel filterbank features and per-instance normalization.
//!
//! Frames are 25ms every 10ms by default, windowed with a periodic Hann,
//! zero-padded to the FFT size. Filterbanks are HTK-style triangles on the
//! mel scale, applied to the power spectrum, followed by a natural log with
//! an energy floor. Normalization is per instance and per channel: each
//! utterance's features are shifted and scaled by their own moments.
//!
//! Feature matrices are stored as little-endian f32 with an 8-byte magic and
//! two u32 dimensions, plus a TSV index mapping utterance ids to files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub const FEATURE_MAGIC: &[u8; 8] = b"FBANKF32";

pub const INDEX_HEADER: &str = "id\tpath\tn_frames";

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("waveform has {n_samples} samples but one window needs {window}")]
    TooShort { n_samples: usize, window: usize },
    #[error("window of {window} samples exceeds FFT size {n_fft}")]
    WindowExceedsFft { window: usize, n_fft: usize },
    #[error("bad feature config: {0}")]
    BadConfig(String),
    #[error("{path}: {message}")]
    CorruptFeatureFile { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub frame_shift_ms: f64,
    pub frame_length_ms: f64,
    pub n_mels: usize,
    pub n_fft: usize,
    pub fmin: f64,
    /// Upper band edge; `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
    pub energy_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            frame_shift_ms: 10.0,
            frame_length_ms: 25.0,
            n_mels: 80,
            n_fft: 512,
            fmin: 20.0,
            fmax: None,
            energy_floor: 1e-10,
        }
    }
}

/// A row-major feature matrix, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Vec<f64>,
    pub n_frames: usize,
    pub dim: usize,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Frames that fit: 1 + (n - window) / hop, or 0 when n < window.
pub fn frame_count(n_samples: usize, window: usize, hop: usize) -> usize {
    if n_samples < window {
        0
    } else {
        1 + (n_samples - window) / hop
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangle weights per mel channel over the FFT bins.
fn mel_filterbank(
    n_mels: usize,
    n_fft: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Vec<Vec<(usize, f64)>> {
    let mel_lo = hz_to_mel(fmin);
    let mel_hi = hz_to_mel(fmax);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let n_bins = n_fft / 2 + 1;
    (0..n_mels)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut weights = Vec::new();
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f <= left || f >= right {
                    0.0
                } else if f <= center {
                    (f - left) / (center - left)
                } else {
                    (right - f) / (right - center)
                };
                if w > 0.0 {
                    weights.push((k, w));
                }
            }
            weights
        })
        .collect()
}

/// Computes log-Mel filterbank features from a 16-bit waveform.
///
/// Samples are used at their integer amplitudes; absolute scale only shifts
/// the log features, and per-instance normalization removes the shift.
pub fn logmel(
    samples: &[i16],
    sample_rate: u32,
    cfg: &FeatureConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let nyquist = sample_rate as f64 / 2.0;
    let fmax = cfg.fmax.unwrap_or(nyquist);
    if cfg.n_mels == 0 || cfg.n_fft == 0 {
        return Err(FeatureError::BadConfig(
            "n_mels and n_fft must be positive".to_string(),
        ));
    }
    if !(0.0 <= cfg.fmin && cfg.fmin < fmax && fmax <= nyquist) {
        return Err(FeatureError::BadConfig(format!(
            "band {}..{} Hz does not fit under Nyquist {} Hz",
            cfg.fmin, fmax, nyquist
        )));
    }
    let window = (cfg.frame_length_ms / 1000.0 * sample_rate as f64).round() as usize;
    let hop = (cfg.frame_shift_ms / 1000.0 * sample_rate as f64).round() as usize;
    if window == 0 || hop == 0 {
        return Err(FeatureError::BadConfig(
            "frame length and shift must round to at least one sample".to_string(),
        ));
    }
    if window > cfg.n_fft {
        return Err(FeatureError::WindowExceedsFft {
            window,
            n_fft: cfg.n_fft,
        });
    }
    if samples.len() < window {
        return Err(FeatureError::TooShort {
            n_samples: samples.len(),
            window,
        });
    }

    let hann: Vec<f64> = (0..window)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / window as f64).cos())
        .collect();
    let filters = mel_filterbank(cfg.n_mels, cfg.n_fft, sample_rate, cfg.fmin, fmax);

    let n_frames = frame_count(samples.len(), window, hop);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.n_fft);
    let n_bins = cfg.n_fft / 2 + 1;

    let mut data = Vec::with_capacity(n_frames * cfg.n_mels);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut power = vec![0.0f64; n_bins];
    for t in 0..n_frames {
        let start = t * hop;
        for (i, w) in hann.iter().enumerate() {
            buf[i] = Complex::new(samples[start + i] as f64 * w, 0.0);
        }
        for slot in buf.iter_mut().skip(window) {
            *slot = Complex::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].re * buf[k].re + buf[k].im * buf[k].im;
        }
        for weights in &filters {
            let energy: f64 = weights.iter().map(|&(k, w)| power[k] * w).sum();
            data.push(energy.max(cfg.energy_floor).ln());
        }
    }

    Ok(FeatureMatrix {
        data,
        n_frames,
        dim: cfg.n_mels,
    })
}

/// Per-instance, per-channel mean and variance normalization.
///
/// Variance is the population variance over the utterance's frames. Channels
/// whose variance is at most 1e-8 are only mean-shifted, so constant
/// channels do not blow up.
pub fn cmvn(features: &FeatureMatrix) -> FeatureMatrix {
    const VARIANCE_FLOOR: f64 = 1e-8;
    let (n, d) = (features.n_frames, features.dim);
    if n == 0 {
        return features.clone();
    }
    let mut mean = vec![0.0f64; d];
    for t in 0..n {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += features.row(t)[j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0f64; d];
    for t in 0..n {
        for (j, v) in var.iter_mut().enumerate() {
            let delta = features.row(t)[j] - mean[j];
            *v += delta * delta;
        }
    }
    for v in &mut var {
        *v /= n as f64;
    }
    let mut data = Vec::with_capacity(n * d);
    for t in 0..n {
        for j in 0..d {
            let centered = features.row(t)[j] - mean[j];
            data.push(if var[j] > VARIANCE_FLOOR {
                centered / var[j].sqrt()
            } else {
                centered
            });
        }
    }
    FeatureMatrix {
        data,
        n_frames: n,
        dim: d,
    }
}

/// Writes a feature matrix in the binary container format.
pub fn write_features(features: &FeatureMatrix, path: &Path) -> Result<(), FeatureError> {
    let io_err = |source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = Vec::with_capacity(16 + features.data.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(features.n_frames as u32).to_le_bytes());
    out.extend_from_slice(&(features.dim as u32).to_le_bytes());
    for &x in &features.data {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)
}

/// Reads a feature matrix written by [`write_features`].
pub fn read_features(path: &Path) -> Result<FeatureMatrix, FeatureError> {
    let bytes = fs::read(path).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corrupt = |message: &str| FeatureError::CorruptFeatureFile {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if bytes.len() < 16 {
        return Err(corrupt("file too small for header"));
    }
    if &bytes[0..8] != FEATURE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let n_frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = n_frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    if bytes.len() - 16 != expected {
        return Err(corrupt("payload size disagrees with header"));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(FeatureMatrix {
        data,
        n_frames,
        dim,
    })
}

/// One row of the feature index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub utterance_id: String,
    pub path: PathBuf,
    pub n_frames: usize,
}

pub fn write_index(entries: &[IndexEntry], path: &Path) -> Result<(), FeatureError> {
    let mut out = String::from(INDEX_HEADER);
    out.push('\n');
    for entry in entries {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            entry.utterance_id,
            entry.path.display(),
            entry.n_frames
        ));
    }
    fs::write(path, out).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_index(path: &Path) -> Result<Vec<IndexEntry>, FeatureError> {
    let contents = fs::read_to_string(path).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corrupt = |message: String| FeatureError::CorruptFeatureFile {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = contents.lines();
    match lines.next() {
        Some(header) if header.trim_end_matches('\r') == INDEX_HEADER => {}
        other => return Err(corrupt(format!("bad index header {other:?}"))),
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(corrupt(format!("line {}: expected 3 columns", i + 2)));
        }
        entries.push(IndexEntry {
            utterance_id: fields[0].to_string(),
            path: PathBuf::from(fields[1]),
            n_frames: fields[2]
                .parse()
                .map_err(|_| corrupt(format!("line {}: bad frame count", i + 2)))?,
        });
    }
    Ok(entries)
}
