//! Praat TextGrid parsing, long and short formats.
//!
//! Only interval tiers are read; point tiers are skipped. The utterance id is
//! the file stem. Files may be UTF-8 (with or without BOM) or UTF-16 with a
//! BOM, which Praat emits by default on some platforms.

use std::fs;
use std::path::Path;

use super::{AlignedToken, AlignmentError, UtteranceAlignment, ALIGN_EPS};

/// Parses one TextGrid file, reading intervals from the named tier.
///
/// Empty-text intervals (silence) are skipped. A zero-length interval with
/// text is malformed, and intervals must not overlap. When several tiers
/// share the requested name the first one wins.
pub fn parse_textgrid(path: &Path, tier_name: &str) -> Result<UtteranceAlignment, AlignmentError> {
    let bytes = fs::read(path).map_err(|source| AlignmentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = decode(&bytes, path)?;
    let lines: Vec<&str> = text.lines().collect();

    let long_format = lines
        .iter()
        .any(|l| l.trim_start().starts_with("xmin") || l.trim_start().starts_with("item ["));

    let tokens = if long_format {
        parse_long(&lines, tier_name, path)?
    } else {
        parse_short(&lines, tier_name, path)?
    };

    let utterance_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(UtteranceAlignment {
        utterance_id,
        tokens,
        has_unknown: false,
    })
}

fn decode(bytes: &[u8], path: &Path) -> Result<String, AlignmentError> {
    let malformed = |message: &str| AlignmentError::MalformedTextGrid {
        path: path.to_path_buf(),
        line: 0,
        message: message.to_string(),
    };
    if bytes.starts_with(&[0xFF, 0xFE]) || bytes.starts_with(&[0xFE, 0xFF]) {
        let little_endian = bytes[0] == 0xFF;
        let body = &bytes[2..];
        if !body.len().is_multiple_of(2) {
            return Err(malformed("odd byte count in UTF-16 file"));
        }
        let units: Vec<u16> = body
            .chunks_exact(2)
            .map(|pair| {
                if little_endian {
                    u16::from_le_bytes([pair[0], pair[1]])
                } else {
                    u16::from_be_bytes([pair[0], pair[1]])
                }
            })
            .collect();
        String::from_utf16(&units).map_err(|_| malformed("invalid UTF-16"))
    } else {
        let body = bytes.strip_prefix(&[0xEF, 0xBB, 0xBF]).unwrap_or(bytes);
        String::from_utf8(body.to_vec()).map_err(|_| malformed("invalid UTF-8"))
    }
}

/// Praat quotes strings and escapes embedded quotes by doubling them.
fn unquote(raw: &str) -> String {
    let trimmed = raw.trim();
    let inner = trimmed
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(trimmed);
    inner.replace("\"\"", "\"")
}

fn parse_number(raw: &str, path: &Path, line: usize) -> Result<f64, AlignmentError> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| AlignmentError::MalformedTextGrid {
            path: path.to_path_buf(),
            line,
            message: format!("expected a number, found {raw:?}"),
        })
}

struct RawInterval {
    xmin: f64,
    xmax: f64,
    text: String,
    line: usize,
}

fn intervals_to_tokens(
    intervals: Vec<RawInterval>,
    path: &Path,
) -> Result<Vec<AlignedToken>, AlignmentError> {
    let mut tokens: Vec<AlignedToken> = Vec::new();
    let mut prev_end = f64::NEG_INFINITY;
    for iv in intervals {
        if iv.text.is_empty() {
            prev_end = prev_end.max(iv.xmax);
            continue;
        }
        if iv.xmax - iv.xmin <= 0.0 {
            return Err(AlignmentError::MalformedTextGrid {
                path: path.to_path_buf(),
                line: iv.line,
                message: format!("interval for {:?} has no duration", iv.text),
            });
        }
        if iv.xmin < prev_end - ALIGN_EPS {
            return Err(AlignmentError::NonMonotonicIntervals {
                path: path.to_path_buf(),
                line: iv.line,
            });
        }
        prev_end = iv.xmax;
        tokens.push(AlignedToken {
            surface: iv.text,
            t_start: iv.xmin,
            t_end: iv.xmax,
        });
    }
    Ok(tokens)
}

fn parse_long(
    lines: &[&str],
    tier_name: &str,
    path: &Path,
) -> Result<Vec<AlignedToken>, AlignmentError> {
    let mut i = 0;
    while i < lines.len() {
        let trimmed = lines[i].trim();
        if let Some(rest) = trimmed.strip_prefix("class") {
            let class = unquote(rest.trim_start_matches(['=', ' ']));
            let mut name = None;
            let mut j = i + 1;
            while j < lines.len() {
                let t = lines[j].trim();
                if let Some(n) = t.strip_prefix("name") {
                    name = Some(unquote(n.trim_start_matches(['=', ' '])));
                    break;
                }
                if t.starts_with("class") || t.starts_with("item [") {
                    break;
                }
                j += 1;
            }
            if class == "IntervalTier" && name.as_deref() == Some(tier_name) {
                return parse_long_tier(lines, j + 1, path);
            }
        }
        i += 1;
    }
    Err(AlignmentError::MissingTier {
        path: path.to_path_buf(),
        tier: tier_name.to_string(),
    })
}

fn parse_long_tier(
    lines: &[&str],
    start: usize,
    path: &Path,
) -> Result<Vec<AlignedToken>, AlignmentError> {
    let mut intervals = Vec::new();
    let mut current: Option<RawInterval> = None;
    let mut i = start;
    while i < lines.len() {
        let trimmed = lines[i].trim();
        let line_no = i + 1;
        if trimmed.starts_with("item [") || trimmed.starts_with("class") {
            break;
        }
        if trimmed.starts_with("intervals [") {
            if let Some(iv) = current.take() {
                intervals.push(check_complete(iv, path)?);
            }
            current = Some(RawInterval {
                xmin: f64::NAN,
                xmax: f64::NAN,
                text: String::new(),
                line: line_no,
            });
        } else if let Some(rest) = trimmed.strip_prefix("xmin") {
            if let Some(iv) = current.as_mut() {
                iv.xmin = parse_number(rest.trim_start_matches(['=', ' ']), path, line_no)?;
            }
        } else if let Some(rest) = trimmed.strip_prefix("xmax") {
            if let Some(iv) = current.as_mut() {
                iv.xmax = parse_number(rest.trim_start_matches(['=', ' ']), path, line_no)?;
            }
        } else if let Some(rest) = trimmed.strip_prefix("text") {
            if let Some(iv) = current.as_mut() {
                iv.text = unquote(rest.trim_start_matches(['=', ' ']));
            }
        }
        i += 1;
    }
    if let Some(iv) = current.take() {
        intervals.push(check_complete(iv, path)?);
    }
    intervals_to_tokens(intervals, path)
}

fn check_complete(iv: RawInterval, path: &Path) -> Result<RawInterval, AlignmentError> {
    if iv.xmin.is_nan() || iv.xmax.is_nan() {
        return Err(AlignmentError::MalformedTextGrid {
            path: path.to_path_buf(),
            line: iv.line,
            message: "interval is missing xmin or xmax".to_string(),
        });
    }
    Ok(iv)
}

/// Short format: bare values in a fixed order, no key prefixes.
///
/// After the file header (two type lines, xmin, xmax, "<exists>", tier
/// count), each tier is: class, name, xmin, xmax, interval count, then
/// per-interval xmin/xmax/text triples.
fn parse_short(
    lines: &[&str],
    tier_name: &str,
    path: &Path,
) -> Result<Vec<AlignedToken>, AlignmentError> {
    let malformed = |line: usize, message: String| AlignmentError::MalformedTextGrid {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut values: Vec<(usize, &str)> = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let t = line.trim();
        if !t.is_empty() {
            values.push((i + 1, t));
        }
    }
    // Skip file type, object class, xmin, xmax, tiers? flag.
    let mut pos = 5;
    let n_tiers: usize = values
        .get(pos)
        .ok_or_else(|| malformed(0, "truncated header".to_string()))?
        .1
        .parse()
        .map_err(|_| malformed(values[pos].0, "bad tier count".to_string()))?;
    pos += 1;

    for _ in 0..n_tiers {
        let (class_line, class_raw) = *values
            .get(pos)
            .ok_or_else(|| malformed(0, "truncated tier header".to_string()))?;
        let class = unquote(class_raw);
        let name = unquote(
            values
                .get(pos + 1)
                .ok_or_else(|| malformed(class_line, "truncated tier header".to_string()))?
                .1,
        );
        let count_pos = pos + 4;
        let (count_line, count_raw) = *values
            .get(count_pos)
            .ok_or_else(|| malformed(class_line, "truncated tier header".to_string()))?;
        let n_items: usize = count_raw
            .parse()
            .map_err(|_| malformed(count_line, "bad interval count".to_string()))?;
        pos = count_pos + 1;

        let is_interval_tier = class == "IntervalTier";
        let per_item = if is_interval_tier { 3 } else { 2 };
        if is_interval_tier && name == tier_name {
            let mut intervals = Vec::with_capacity(n_items);
            for k in 0..n_items {
                let base = pos + k * 3;
                let entry = |off: usize| {
                    values
                        .get(base + off)
                        .copied()
                        .ok_or_else(|| malformed(0, "truncated interval list".to_string()))
                };
                let (l0, xmin_raw) = entry(0)?;
                let (l1, xmax_raw) = entry(1)?;
                let (_, text_raw) = entry(2)?;
                intervals.push(RawInterval {
                    xmin: parse_number(xmin_raw, path, l0)?,
                    xmax: parse_number(xmax_raw, path, l1)?,
                    text: unquote(text_raw),
                    line: l0,
                });
            }
            return intervals_to_tokens(intervals, path);
        }
        pos += n_items * per_item;
    }
    Err(AlignmentError::MissingTier {
        path: path.to_path_buf(),
        tier: tier_name.to_string(),
    })
}
