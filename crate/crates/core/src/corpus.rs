//! Sample records, JSONL persistence, and plaintext ingestion.
//!
//! A corpus is a JSON-Lines file with one [`TextSample`] per line, so runs
//! can append incrementally and resume after a crash. Readers are free to
//! share a file; writing goes through a single [`SampleWriter`].

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Model,
    Human,
}

/// The prompt condition a sample was collected under. Human text and any
/// model text gathered outside the suppression protocol use `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleCondition {
    Unconstrained,
    MdSuppressed,
    EmSuppressed,
    None,
}

impl SampleCondition {
    /// Stable lowercase name, matching the serialized form.
    pub fn name(self) -> &'static str {
        match self {
            SampleCondition::Unconstrained => "unconstrained",
            SampleCondition::MdSuppressed => "md_suppressed",
            SampleCondition::EmSuppressed => "em_suppressed",
            SampleCondition::None => "none",
        }
    }
}

/// One piece of text plus the metadata needed to analyze it honestly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSample {
    pub id: String,
    pub text: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    pub condition: SampleCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_words: Option<u32>,
    pub collected_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_params: Option<BTreeMap<String, serde_json::Value>>,
}

impl TextSample {
    /// A human-authored sample with the minimal metadata that implies.
    pub fn human(id: impl Into<String>, text: impl Into<String>) -> Self {
        TextSample {
            id: id.into(),
            text: text.into(),
            source: Source::Human,
            provider: None,
            model_name: None,
            condition: SampleCondition::None,
            topic: None,
            target_words: None,
            collected_at: Utc::now(),
            generation_params: None,
        }
    }
}

/// Checks every documented invariant and reports the violations as
/// human-readable strings. An empty vector means the sample is valid.
pub fn validate_sample(sample: &TextSample) -> Vec<String> {
    let mut issues = Vec::new();
    if sample.id.trim().is_empty() {
        issues.push("empty id".to_owned());
    }
    if sample.text.is_empty() {
        issues.push("empty text".to_owned());
    }
    match sample.source {
        Source::Model => {
            if sample.provider.as_deref().map_or(true, |p| p.trim().is_empty()) {
                issues.push("missing provider".to_owned());
            }
            if sample
                .model_name
                .as_deref()
                .map_or(true, |m| m.trim().is_empty())
            {
                issues.push("missing model_name".to_owned());
            }
            if sample.topic.as_deref().map_or(true, |t| t.trim().is_empty()) {
                issues.push("missing topic".to_owned());
            }
            if sample.condition == SampleCondition::None {
                issues.push("model sample must carry an experimental condition".to_owned());
            }
        }
        Source::Human => {
            if sample.provider.is_some() {
                issues.push("human sample must not set provider".to_owned());
            }
            if sample.model_name.is_some() {
                issues.push("human sample must not set model_name".to_owned());
            }
            if sample.condition != SampleCondition::None {
                issues.push("human sample condition must be 'none'".to_owned());
            }
        }
    }
    if sample.target_words == Some(0) {
        issues.push("target_words must be positive when present".to_owned());
    }
    issues
}

/// An in-memory corpus: samples with unique ids plus a note of where they
/// came from (file path, directory, or run store).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    samples: Vec<TextSample>,
    provenance: String,
}

impl SampleSet {
    /// Builds a set, rejecting duplicate ids.
    pub fn new(samples: Vec<TextSample>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for sample in &samples {
            if !seen.insert(sample.id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate sample id '{}'",
                    sample.id
                )));
            }
        }
        Ok(SampleSet {
            samples,
            provenance: provenance.into(),
        })
    }

    pub fn samples(&self) -> &[TextSample] {
        &self.samples
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TextSample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

/// What a lenient load produced: the usable samples plus a count of lines
/// that were dropped (unparseable, invariant-breaking, or duplicate ids).
#[derive(Debug)]
pub struct LoadedSamples {
    pub set: SampleSet,
    pub skipped: usize,
}

/// Reads a JSONL corpus, skipping bad lines instead of failing the load.
/// Blank lines are ignored outright; anything else that does not yield a
/// valid, novel sample counts toward `skipped`. A file with no usable
/// samples at all is an error.
pub fn load_samples(path: impl AsRef<Path>) -> Result<LoadedSamples> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut samples = Vec::new();
    let mut seen = BTreeSet::new();
    let mut skipped = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: TextSample = match serde_json::from_str(&line) {
            Ok(s) => s,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if !validate_sample(&sample).is_empty() || !seen.insert(sample.id.clone()) {
            skipped += 1;
            continue;
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::EmptySet(path.display().to_string()));
    }
    Ok(LoadedSamples {
        set: SampleSet {
            samples,
            provenance: path.display().to_string(),
        },
        skipped,
    })
}

/// Serializes a whole set to a JSONL file, one sample per line.
pub fn write_samples(path: impl AsRef<Path>, set: &SampleSet) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for sample in &set.samples {
        let line = serde_json::to_string(sample).map_err(|e| Error::Malformed {
            what: "sample".to_owned(),
            detail: e.to_string(),
        })?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// The single appender for a JSONL store. Each append is flushed so a
/// crash loses at most the line being written.
pub struct SampleWriter {
    out: BufWriter<fs::File>,
    path: PathBuf,
}

impl SampleWriter {
    /// Opens `path` for appending, creating it if needed.
    pub fn append_to(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(&path, e))?;
            }
        }
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(SampleWriter {
            out: BufWriter::new(file),
            path,
        })
    }

    pub fn append(&mut self, sample: &TextSample) -> Result<()> {
        let line = serde_json::to_string(sample).map_err(|e| Error::Malformed {
            what: "sample".to_owned(),
            detail: e.to_string(),
        })?;
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Metadata applied to every file picked up by [`ingest_plaintext`].
/// Ingestion covers found text (essays, scraped pages), so claiming model
/// provenance here is rejected: model samples come from the run harness.
#[derive(Debug, Clone, Default)]
pub struct IngestMetadata {
    pub source: Option<Source>,
    pub condition: Option<SampleCondition>,
    pub topic: Option<String>,
}

/// Walks a directory (non-recursive) for `.txt` and `.md` files and turns
/// each non-empty file into a human sample. Ids come from file stems,
/// deduplicated with `-2`, `-3`, ... suffixes in sorted-name order.
pub fn ingest_plaintext(dir: impl AsRef<Path>, meta: &IngestMetadata) -> Result<SampleSet> {
    let dir = dir.as_ref();
    if meta.source == Some(Source::Model) {
        return Err(Error::Validation(
            "plaintext ingestion only produces human samples; collect model text through a run"
                .to_owned(),
        ));
    }
    if matches!(
        meta.condition,
        Some(SampleCondition::Unconstrained)
            | Some(SampleCondition::MdSuppressed)
            | Some(SampleCondition::EmSuppressed)
    ) {
        return Err(Error::Validation(
            "ingested text cannot claim an experimental condition".to_owned(),
        ));
    }

    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("txt") | Some("md")
                )
        })
        .collect();
    paths.sort();

    let mut samples = Vec::new();
    let mut used_ids = BTreeSet::new();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        if text.is_empty() {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("sample")
            .to_owned();
        let mut id = stem.clone();
        let mut n = 1usize;
        while !used_ids.insert(id.clone()) {
            n += 1;
            id = format!("{stem}-{n}");
        }
        let mut sample = TextSample::human(id, text);
        sample.topic = meta.topic.clone();
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::EmptySet(dir.display().to_string()));
    }
    SampleSet::new(samples, dir.display().to_string())
}
