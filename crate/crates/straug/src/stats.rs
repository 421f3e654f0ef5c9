//! Run accounting.
//!
//! Every utterance that enters an augmentation run is counted exactly once:
//! it is either emitted or attributed to a single discard or skip reason, so
//! the counters always sum back to the total. Reports surface the same
//! numbers as percentages for quick corpus health checks.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a valid stats file: {source}")]
    MalformedStats {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Counters for one augmentation run.
///
/// The invariant `total == emitted + discarded + skipped` holds after every
/// run and after merging runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    /// Utterances considered.
    pub total: u64,
    /// Aligner produced no output.
    pub discarded_no_alignment: u64,
    /// Aligner token count disagreed with the transcript.
    pub discarded_count_mismatch: u64,
    /// Tagged token count disagreed with the transcript, or no tags existed.
    pub skipped_tag_mismatch: u64,
    /// No main verb with a following suffix.
    pub skipped_no_pivot: u64,
    /// Pivots existed but every sampled key had no usable donor suffix.
    pub skipped_no_candidate: u64,
    /// Recombined but dropped because translation failed.
    pub skipped_translation: u64,
    /// Recombined but cut by fraction subsetting.
    pub skipped_fraction: u64,
    /// Augmented examples produced.
    pub emitted: u64,
}

impl RunStats {
    pub fn discarded(&self) -> u64 {
        self.discarded_no_alignment + self.discarded_count_mismatch
    }

    pub fn skipped(&self) -> u64 {
        self.skipped_tag_mismatch
            + self.skipped_no_pivot
            + self.skipped_no_candidate
            + self.skipped_translation
            + self.skipped_fraction
    }

    /// Whether the accounting identity holds.
    pub fn identity_holds(&self) -> bool {
        self.total == self.emitted + self.discarded() + self.skipped()
    }

    pub fn discard_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.discarded() as f64 / self.total as f64
        }
    }

    pub fn merge(&mut self, other: &RunStats) {
        self.total += other.total;
        self.discarded_no_alignment += other.discarded_no_alignment;
        self.discarded_count_mismatch += other.discarded_count_mismatch;
        self.skipped_tag_mismatch += other.skipped_tag_mismatch;
        self.skipped_no_pivot += other.skipped_no_pivot;
        self.skipped_no_candidate += other.skipped_no_candidate;
        self.skipped_translation += other.skipped_translation;
        self.skipped_fraction += other.skipped_fraction;
        self.emitted += other.emitted;
    }

    pub fn save(&self, path: &Path) -> Result<(), StatsError> {
        let json = serde_json::to_string_pretty(self).expect("stats serialize cannot fail");
        fs::write(path, json + "\n").map_err(|source| StatsError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, StatsError> {
        let contents = fs::read_to_string(path).map_err(|source| StatsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&contents).map_err(|source| StatsError::MalformedStats {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Human-readable report with per-reason percentages of the total.
    pub fn render_report(&self) -> String {
        let pct = |n: u64| {
            if self.total == 0 {
                "0.0%".to_string()
            } else {
                format!("{:.1}%", 100.0 * n as f64 / self.total as f64)
            }
        };
        let mut out = String::new();
        out.push_str(&format!("utterances considered  {}\n", self.total));
        out.push_str(&format!(
            "emitted                {} ({})\n",
            self.emitted,
            pct(self.emitted)
        ));
        out.push_str(&format!(
            "discarded              {} ({})\n",
            self.discarded(),
            pct(self.discarded())
        ));
        for (label, n) in [
            ("no alignment", self.discarded_no_alignment),
            ("count mismatch", self.discarded_count_mismatch),
        ] {
            out.push_str(&format!("  {label:<20} {} ({})\n", n, pct(n)));
        }
        out.push_str(&format!(
            "skipped                {} ({})\n",
            self.skipped(),
            pct(self.skipped())
        ));
        for (label, n) in [
            ("tag mismatch", self.skipped_tag_mismatch),
            ("no pivot", self.skipped_no_pivot),
            ("no candidate", self.skipped_no_candidate),
            ("translation", self.skipped_translation),
            ("fraction cut", self.skipped_fraction),
        ] {
            out.push_str(&format!("  {label:<20} {} ({})\n", n, pct(n)));
        }
        out.push_str(&format!(
            "identity               {}\n",
            if self.identity_holds() { "ok" } else { "VIOLATED" }
        ));
        out
    }
}
