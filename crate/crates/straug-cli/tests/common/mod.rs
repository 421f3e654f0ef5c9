//! Shared fixtures for the integration suites.

#![allow(dead_code)]

use std::fs;
use std::io::{Read as _, Write as _};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// xorshift64*: small, seedable, and independent of the crate's own RNG.
pub struct TestRng(pub u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    pub fn chance(&mut self, percent: u64) -> bool {
        self.below(100) < percent
    }
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_straug"))
}

pub fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("spawning straug");
    assert!(
        output.status.success(),
        "command failed ({}):\nstdout: {}\nstderr: {}",
        output.status,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
    output
}

pub fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("spawning straug").status.code().unwrap_or(-1)
}

/// One utterance of a synthetic corpus.
pub struct Utt {
    pub id: String,
    pub words: Vec<String>,
    pub speaker: String,
    /// Token time spans in seconds.
    pub spans: Vec<(f64, f64)>,
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

impl Utt {
    /// Evenly spaced words, half a second each, with a deterministic ramp
    /// waveform long enough to cover the last span.
    pub fn uniform(id: &str, text: &str, speaker: &str) -> Self {
        let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        let spans: Vec<(f64, f64)> = (0..words.len())
            .map(|i| (i as f64 * 0.5, (i + 1) as f64 * 0.5))
            .collect();
        let sample_rate = 16000;
        let n = (words.len() as f64 * 0.5 * sample_rate as f64) as usize;
        let offset = id.bytes().map(u64::from).sum::<u64>() as usize;
        let samples = (0..n)
            .map(|i| (((i * 13 + offset * 97) % 6000) as i32 - 3000) as i16)
            .collect();
        Utt {
            id: id.to_string(),
            words,
            speaker: speaker.to_string(),
            spans,
            samples,
            sample_rate,
        }
    }
}

pub fn write_manifest(dir: &Path, utts: &[Utt]) -> PathBuf {
    let mut out = String::from("id\taudio\tn_frames\tsrc_text\ttgt_text\tspeaker\n");
    for utt in utts {
        out.push_str(&format!(
            "{}\t{}.wav\t{}\t{}\t\t{}\n",
            utt.id,
            utt.id,
            utt.samples.len(),
            utt.words.join(" "),
            utt.speaker
        ));
    }
    let path = dir.join("train.tsv");
    fs::write(&path, out).unwrap();
    path
}

pub fn write_wavs(dir: &Path, utts: &[Utt]) {
    for utt in utts {
        let wave = straug::audio::Waveform {
            samples: utt.samples.clone(),
            sample_rate: utt.sample_rate,
        };
        straug::audio::write_wav(&wave, &dir.join(format!("{}.wav", utt.id))).unwrap();
    }
}

pub fn long_textgrid(words: &[(String, f64, f64)], file_end: f64) -> String {
    let mut intervals = String::new();
    let mut cursor = 0.0;
    let mut index = 0;
    let mut push = |xmin: f64, xmax: f64, text: &str, index: &mut usize| {
        *index += 1;
        intervals.push_str(&format!(
            "        intervals [{index}]:\n            xmin = {xmin}\n            xmax = {xmax}\n            text = \"{text}\"\n"
        ));
    };
    for (word, t0, t1) in words {
        if *t0 > cursor {
            push(cursor, *t0, "", &mut index);
        }
        push(*t0, *t1, word, &mut index);
        cursor = *t1;
    }
    if file_end > cursor {
        push(cursor, file_end, "", &mut index);
    }
    format!(
        "File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\nxmin = 0\nxmax = {file_end}\ntiers? <exists>\nsize = 1\nitem []:\n    item [1]:\n        class = \"IntervalTier\"\n        name = \"words\"\n        xmin = 0\n        xmax = {file_end}\n        intervals: size = {index}\n{intervals}"
    )
}

pub fn short_textgrid(words: &[(String, f64, f64)], file_end: f64) -> String {
    let mut triples = String::new();
    let mut cursor = 0.0;
    let mut count = 0;
    let mut push = |xmin: f64, xmax: f64, text: &str, count: &mut usize| {
        *count += 1;
        triples.push_str(&format!("{xmin}\n{xmax}\n\"{text}\"\n"));
    };
    for (word, t0, t1) in words {
        if *t0 > cursor {
            push(cursor, *t0, "", &mut count);
        }
        push(*t0, *t1, word, &mut count);
        cursor = *t1;
    }
    if file_end > cursor {
        push(cursor, file_end, "", &mut count);
    }
    format!(
        "File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\n0\n{file_end}\n<exists>\n1\n\"IntervalTier\"\n\"words\"\n0\n{file_end}\n{count}\n{triples}"
    )
}

pub fn utf16le(text: &str) -> Vec<u8> {
    let mut bytes = vec![0xFF, 0xFE];
    for unit in text.encode_utf16() {
        bytes.extend_from_slice(&unit.to_le_bytes());
    }
    bytes
}

pub fn write_textgrids(dir: &Path, utts: &[Utt]) {
    let align = dir.join("align");
    fs::create_dir_all(&align).unwrap();
    for utt in utts {
        let words: Vec<(String, f64, f64)> = utt
            .words
            .iter()
            .zip(&utt.spans)
            .map(|(w, (t0, t1))| (w.clone(), *t0, *t1))
            .collect();
        let end = utt.spans.last().map(|s| s.1).unwrap_or(0.5);
        fs::write(
            align.join(format!("{}.TextGrid", utt.id)),
            long_textgrid(&words, end),
        )
        .unwrap();
    }
}

/// CoNLL-U rows tagging the named words as VERB and everything else NOUN.
pub fn write_conllu(dir: &Path, utts: &[Utt], verbs: &[&str]) -> PathBuf {
    let mut out = String::new();
    for utt in utts {
        out.push_str(&format!("# sent_id = {}\n", utt.id));
        for (i, word) in utt.words.iter().enumerate() {
            let upos = if verbs.contains(&word.as_str()) {
                "VERB"
            } else {
                "NOUN"
            };
            out.push_str(&format!("{}\t{}\t_\t{}\t_\t_\t0\t_\t_\t_\n", i + 1, word, upos));
        }
        out.push('\n');
    }
    let path = dir.join("tags.conllu");
    fs::write(&path, out).unwrap();
    path
}

pub fn read_jsonl(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn read_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

/// A blocking HTTP translation stub. The handler sees the request count and
/// the batch of texts; returning `None` sends a 503.
pub fn serve_translations(
    listener: TcpListener,
    handler: impl Fn(usize, &[String]) -> Option<Vec<String>> + Send + 'static,
) {
    std::thread::spawn(move || {
        let mut hits = 0;
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut buf = Vec::new();
            let mut tmp = [0u8; 8192];
            let body_start = loop {
                match stream.read(&mut tmp) {
                    Ok(0) => break None,
                    Ok(n) => {
                        buf.extend_from_slice(&tmp[..n]);
                        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                            break Some(pos + 4);
                        }
                    }
                    Err(_) => break None,
                }
            };
            let Some(body_start) = body_start else { continue };
            let header = String::from_utf8_lossy(&buf[..body_start]).to_string();
            let content_length: usize = header
                .lines()
                .find_map(|l| {
                    l.to_ascii_lowercase()
                        .strip_prefix("content-length:")
                        .map(|v| v.trim().parse().unwrap())
                })
                .unwrap_or(0);
            while buf.len() < body_start + content_length {
                match stream.read(&mut tmp) {
                    Ok(0) => break,
                    Ok(n) => buf.extend_from_slice(&tmp[..n]),
                    Err(_) => break,
                }
            }
            let body: serde_json::Value = match serde_json::from_slice(&buf[body_start..]) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let texts: Vec<String> = body["texts"]
                .as_array()
                .map(|a| {
                    a.iter()
                        .filter_map(|t| t.as_str().map(str::to_string))
                        .collect()
                })
                .unwrap_or_default();
            let response = match handler(hits, &texts) {
                Some(translations) => {
                    let body = serde_json::json!({ "translations": translations }).to_string();
                    format!(
                        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                        body.len(),
                        body
                    )
                }
                None => {
                    "HTTP/1.1 503 Service Unavailable\r\ncontent-length: 0\r\n\r\n".to_string()
                }
            };
            hits += 1;
            let _ = stream.write_all(response.as_bytes());
        }
    });
}
