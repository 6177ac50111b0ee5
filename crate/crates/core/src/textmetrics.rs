//! Word counting, dash-family counting, and per-1,000-word rates.
//!
//! These are pure functions of the text. Position-aware questions (is this
//! dash a list marker or a clause joint?) belong to [`crate::dashcontext`].

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::corpus::TextSample;
use crate::error::{Error, Result};
use crate::mdfeatures::{detect_features, md_per_1k, FeatureCounts};

/// Tallies for the dash family.
///
/// `em` is U+2014 and `en` is U+2013, counted per character. ASCII hyphens
/// are grouped into maximal runs: a run of exactly two is a `double_hyphen`
/// (the classic em-dash surrogate), three or more is a `long_hyphen_run`
/// (usually a ruler or separator), and single hyphens are ordinary word
/// punctuation and are not tracked. The horizontal bar U+2015 is out of
/// scope.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DashCounts {
    pub em: u64,
    pub en: u64,
    pub double_hyphen: u64,
    pub long_hyphen_run: u64,
}

impl DashCounts {
    pub fn total(&self) -> u64 {
        self.em + self.en + self.double_hyphen + self.long_hyphen_run
    }

    fn close_hyphen_run(&mut self, len: u64) {
        match len {
            0 | 1 => {}
            2 => self.double_hyphen += 1,
            _ => self.long_hyphen_run += 1,
        }
    }
}

impl Add for DashCounts {
    type Output = DashCounts;

    fn add(self, rhs: DashCounts) -> DashCounts {
        DashCounts {
            em: self.em + rhs.em,
            en: self.en + rhs.en,
            double_hyphen: self.double_hyphen + rhs.double_hyphen,
            long_hyphen_run: self.long_hyphen_run + rhs.long_hyphen_run,
        }
    }
}

impl AddAssign for DashCounts {
    fn add_assign(&mut self, rhs: DashCounts) {
        *self = *self + rhs;
    }
}

/// Counts words: maximal whitespace-delimited tokens that contain at least
/// one alphanumeric character. A bare dash between spaces is not a word, so
/// spacing an em dash does not change the denominator.
pub fn count_words(text: &str) -> u64 {
    text.split_whitespace()
        .filter(|token| token.chars().any(char::is_alphanumeric))
        .count() as u64
}

/// Counts every dash-family occurrence in a single pass.
pub fn count_dashes(text: &str) -> DashCounts {
    let mut counts = DashCounts::default();
    let mut run = 0u64;
    for ch in text.chars() {
        if ch == '-' {
            run += 1;
            continue;
        }
        counts.close_hyphen_run(run);
        run = 0;
        match ch {
            '\u{2014}' => counts.em += 1,
            '\u{2013}' => counts.en += 1,
            _ => {}
        }
    }
    counts.close_hyphen_run(run);
    counts
}

/// Normalizes a raw count to a per-1,000-word rate. Zero words means the
/// rate is undefined, not zero.
pub fn per_1k(count: u64, words: u64) -> Result<f64> {
    if words == 0 {
        return Err(Error::UndefinedRate { sample_id: None });
    }
    Ok(1000.0 * count as f64 / words as f64)
}

/// Rounds half-up (away from zero) to two decimals. Rates keep full
/// precision internally; this belongs at report boundaries only.
pub fn round2(value: f64) -> f64 {
    (value * 100.0).round() / 100.0
}

/// Everything measured about one sample, keyed by its id so records can sit
/// in JSONL stores next to the samples themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sample_id: String,
    pub words: u64,
    pub dash: DashCounts,
    pub md_features: FeatureCounts,
    pub em_per_1k: f64,
    pub md_per_1k: f64,
}

/// Runs the full per-sample measurement pass. Fails with an undefined-rate
/// error when the sample has no countable words.
pub fn analyze_sample(sample: &TextSample) -> Result<MetricsRecord> {
    let words = count_words(&sample.text);
    if words == 0 {
        return Err(Error::UndefinedRate {
            sample_id: Some(sample.id.clone()),
        });
    }
    let dash = count_dashes(&sample.text);
    let md_features = detect_features(&sample.text);
    let em_per_1k = per_1k(dash.em, words)?;
    let md_per_1k = md_per_1k(&md_features, words)?;
    Ok(MetricsRecord {
        sample_id: sample.id.clone(),
        words,
        dash,
        md_features,
        em_per_1k,
        md_per_1k,
    })
}
