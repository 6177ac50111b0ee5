//! The collection harness: plans a grid of generation calls, drives
//! provider clients from per-provider worker pools, and checkpoints
//! progress so an interrupted run resumes without re-spending calls.
//!
//! Work is plain threads over a shared queue — call latencies are seconds,
//! so an async runtime would buy nothing. Appends to the sample store and
//! saves of the run ledger happen under one lock, in that order, so the
//! ledger never claims a sample the store does not have.

pub mod client;
pub mod http;
pub mod mock;
pub mod ratelimit;

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{SampleCondition, SampleSet, SampleWriter, Source, TextSample};
use crate::error::{Error, Result};
use crate::suppression::{build_prompt, Condition};
use client::{GenerateError, Generation, GenerationParams, ProviderClient};
use ratelimit::TokenBucket;

/// One model to collect from, addressed by the provider that hosts it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub provider: String,
    pub model_name: String,
}

/// The JSON run configuration as users write it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub models: Vec<ModelSpec>,
    pub topics: Vec<String>,
    pub conditions: Vec<String>,
    #[serde(default = "default_target_words")]
    pub target_words: u32,
    #[serde(default = "default_samples_per_cell")]
    pub samples_per_cell: u32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    pub store_path: String,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
}

fn default_target_words() -> u32 {
    1000
}

fn default_samples_per_cell() -> u32 {
    1
}

fn default_max_tokens() -> u32 {
    2048
}

fn default_concurrency() -> usize {
    4
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&data).map_err(|e| Error::Malformed {
            what: format!("run config {}", path.display()),
            detail: e.to_string(),
        })
    }
}

/// A validated experimental plan. The full grid is
/// models x topics x conditions x samples_per_cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub models: Vec<ModelSpec>,
    pub topics: Vec<String>,
    pub conditions: Vec<Condition>,
    pub target_words: u32,
    pub samples_per_cell: u32,
    pub max_tokens: u32,
    pub concurrency: usize,
    pub store_path: String,
    pub requests_per_minute: Option<u32>,
}

/// Validates a config into a plan.
pub fn plan_run(config: &RunConfig) -> Result<RunPlan> {
    if config.models.is_empty() {
        return Err(Error::Validation("config lists no models".to_owned()));
    }
    for model in &config.models {
        if model.provider.trim().is_empty() || model.model_name.trim().is_empty() {
            return Err(Error::Validation(
                "every model needs a provider and a model_name".to_owned(),
            ));
        }
    }
    if config.topics.is_empty() {
        return Err(Error::Validation("config lists no topics".to_owned()));
    }
    if config.topics.iter().any(|t| t.trim().is_empty()) {
        return Err(Error::Validation("blank topic in config".to_owned()));
    }
    if config.conditions.is_empty() {
        return Err(Error::Validation("config lists no conditions".to_owned()));
    }
    let mut conditions = Vec::with_capacity(config.conditions.len());
    for raw in &config.conditions {
        let condition: Condition = raw.parse()?;
        if conditions.contains(&condition) {
            return Err(Error::Validation(format!(
                "condition {} listed twice",
                condition.code()
            )));
        }
        conditions.push(condition);
    }
    if config.target_words == 0 {
        return Err(Error::Validation("target_words must be positive".to_owned()));
    }
    if config.samples_per_cell == 0 {
        return Err(Error::Validation(
            "samples_per_cell must be positive".to_owned(),
        ));
    }
    if config.max_tokens == 0 {
        return Err(Error::Validation("max_tokens must be positive".to_owned()));
    }
    if config.concurrency == 0 {
        return Err(Error::Validation("concurrency must be positive".to_owned()));
    }
    if config.store_path.trim().is_empty() {
        return Err(Error::Validation("store_path must be set".to_owned()));
    }
    Ok(RunPlan {
        models: config.models.clone(),
        topics: config.topics.clone(),
        conditions,
        target_words: config.target_words,
        samples_per_cell: config.samples_per_cell,
        max_tokens: config.max_tokens,
        concurrency: config.concurrency,
        store_path: config.store_path.clone(),
        requests_per_minute: config.requests_per_minute,
    })
}

/// One grid cell: a single generation call to make.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub model_index: usize,
    pub provider: String,
    pub model_name: String,
    pub topic_index: usize,
    pub topic: String,
    pub condition: Condition,
    pub rep: u32,
}

impl Cell {
    /// The stable ledger key for this cell.
    pub fn key(&self) -> String {
        format!(
            "m{:03}|t{:03}|{}|s{:03}",
            self.model_index,
            self.topic_index,
            self.condition.code(),
            self.rep
        )
    }

    fn sample_id(&self) -> String {
        format!(
            "m{:02}-{}-t{:02}-{}-s{:02}",
            self.model_index,
            slug(&self.model_name),
            self.topic_index,
            self.condition.code(),
            self.rep
        )
    }
}

fn slug(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut last_dash = true;
    for ch in name.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
            last_dash = false;
        } else if !last_dash {
            out.push('-');
            last_dash = true;
        }
    }
    out.trim_end_matches('-').to_owned()
}

impl RunPlan {
    /// Every cell in deterministic order: model, then topic, then
    /// condition, then repetition.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for (model_index, model) in self.models.iter().enumerate() {
            for (topic_index, topic) in self.topics.iter().enumerate() {
                for condition in &self.conditions {
                    for rep in 0..self.samples_per_cell {
                        cells.push(Cell {
                            model_index,
                            provider: model.provider.clone(),
                            model_name: model.model_name.clone(),
                            topic_index,
                            topic: topic.clone(),
                            condition: *condition,
                            rep,
                        });
                    }
                }
            }
        }
        cells
    }

    /// Hash of the experimental design — models, topics, conditions,
    /// target, repetitions, token ceiling. Operational knobs (concurrency,
    /// pacing, store path) are excluded so tuning them never orphans a
    /// resumable run.
    pub fn design_hash(&self) -> String {
        #[derive(Serialize)]
        struct Design<'a> {
            models: &'a [ModelSpec],
            topics: &'a [String],
            conditions: &'a [Condition],
            target_words: u32,
            samples_per_cell: u32,
            max_tokens: u32,
        }
        let design = Design {
            models: &self.models,
            topics: &self.topics,
            conditions: &self.conditions,
            target_words: self.target_words,
            samples_per_cell: self.samples_per_cell,
            max_tokens: self.max_tokens,
        };
        let json = serde_json::to_string(&design).expect("plan serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The ledger persisted beside the store after every completed cell.
/// `completed` maps cell keys to sample ids; `failed` maps cell keys to
/// reasons and is retried on the next execute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub plan_hash: String,
    pub completed: BTreeMap<String, String>,
    pub failed: BTreeMap<String, String>,
}

impl RunState {
    pub fn for_plan(plan: &RunPlan) -> RunState {
        RunState {
            plan_hash: plan.design_hash(),
            completed: BTreeMap::new(),
            failed: BTreeMap::new(),
        }
    }

    /// Loads the ledger if present, verifying it belongs to this plan;
    /// starts a fresh one otherwise.
    pub fn load_or_create(path: &Path, plan: &RunPlan) -> Result<RunState> {
        if !path.exists() {
            return Ok(RunState::for_plan(plan));
        }
        let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let state: RunState = serde_json::from_str(&data).map_err(|e| Error::Malformed {
            what: format!("run state {}", path.display()),
            detail: e.to_string(),
        })?;
        if state.plan_hash != plan.design_hash() {
            return Err(Error::PlanMismatch {
                path: path.to_path_buf(),
            });
        }
        Ok(state)
    }

    /// Writes the ledger atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("state serializes");
        let mut tmp = path.as_os_str().to_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

/// Where a store's run ledger lives: the store path plus `.state.json`.
pub fn run_state_path(store_path: &Path) -> PathBuf {
    let mut os = store_path.as_os_str().to_os_string();
    os.push(".state.json");
    PathBuf::from(os)
}

/// Retry and pacing knobs, separated from the plan so tests can run with
/// zero backoff.
#[derive(Debug, Clone)]
pub struct ExecuteOptions {
    /// Total generate attempts per cell (first try included).
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        ExecuteOptions {
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
            backoff_cap: Duration::from_secs(8),
        }
    }
}

impl ExecuteOptions {
    /// No waiting between retries; for tests.
    pub fn immediate() -> Self {
        ExecuteOptions {
            max_attempts: 3,
            backoff_base: Duration::ZERO,
            backoff_cap: Duration::ZERO,
        }
    }
}

/// What one execute call did.
#[derive(Debug)]
pub struct RunOutcome {
    /// Samples collected by this call (resumed cells are not re-collected).
    pub collected: SampleSet,
    pub completed_cells: usize,
    /// Cells already completed in the ledger and skipped here.
    pub skipped_cells: usize,
    /// Cell key and reason for every cell that exhausted its attempts.
    pub failed: Vec<(String, String)>,
}

/// Clients by provider name.
pub type ClientMap<'a> = BTreeMap<String, &'a dyn ProviderClient>;

struct SharedProgress {
    writer: SampleWriter,
    state: RunState,
    collected: Vec<TextSample>,
    failed: Vec<(String, String)>,
    io_error: Option<Error>,
}

/// Runs every pending cell of the plan. Completed cells recorded in the
/// ledger are skipped; previously failed cells are retried. Each provider
/// gets its own worker pool (at most `plan.concurrency` workers) and its
/// own rate limit, so one slow or broken provider cannot stall the others.
pub fn execute(plan: &RunPlan, clients: &ClientMap, opts: &ExecuteOptions) -> Result<RunOutcome> {
    for model in &plan.models {
        if !clients.contains_key(&model.provider) {
            return Err(Error::Validation(format!(
                "no client for provider '{}'",
                model.provider
            )));
        }
    }
    let store_path = PathBuf::from(&plan.store_path);
    let state_path = run_state_path(&store_path);
    let mut state = RunState::load_or_create(&state_path, plan)?;

    let all_cells = plan.cells();
    let total = all_cells.len();
    let pending: Vec<Cell> = all_cells
        .into_iter()
        .filter(|c| !state.completed.contains_key(&c.key()))
        .collect();
    for cell in &pending {
        state.failed.remove(&cell.key());
    }
    let skipped_cells = total - pending.len();

    let mut queues: BTreeMap<String, Mutex<VecDeque<Cell>>> = BTreeMap::new();
    for cell in pending {
        queues
            .entry(cell.provider.clone())
            .or_insert_with(|| Mutex::new(VecDeque::new()))
            .get_mut()
            .expect("fresh queue lock")
            .push_back(cell);
    }
    let buckets: BTreeMap<String, TokenBucket> = match plan.requests_per_minute {
        Some(rpm) => queues
            .keys()
            .map(|p| (p.clone(), TokenBucket::per_minute(rpm)))
            .collect(),
        None => BTreeMap::new(),
    };

    let writer = SampleWriter::append_to(&store_path)?;
    let shared = Mutex::new(SharedProgress {
        writer,
        state,
        collected: Vec::new(),
        failed: Vec::new(),
        io_error: None,
    });

    std::thread::scope(|scope| {
        for (provider, queue) in &queues {
            let client = *clients.get(provider).expect("checked above");
            let bucket = buckets.get(provider);
            let workers = plan
                .concurrency
                .min(queue.lock().expect("queue lock").len())
                .max(1);
            for _ in 0..workers {
                let shared = &shared;
                let state_path = &state_path;
                scope.spawn(move || {
                    run_worker(queue, client, bucket, shared, plan, opts, state_path)
                });
            }
        }
    });

    let progress = shared.into_inner().expect("workers exited");
    if let Some(err) = progress.io_error {
        return Err(err);
    }
    let completed_cells = progress.collected.len();
    let collected = SampleSet::new(progress.collected, plan.store_path.clone())?;
    Ok(RunOutcome {
        collected,
        completed_cells,
        skipped_cells,
        failed: progress.failed,
    })
}

fn run_worker(
    queue: &Mutex<VecDeque<Cell>>,
    client: &dyn ProviderClient,
    bucket: Option<&TokenBucket>,
    shared: &Mutex<SharedProgress>,
    plan: &RunPlan,
    opts: &ExecuteOptions,
    state_path: &Path,
) {
    loop {
        if shared.lock().expect("progress lock").io_error.is_some() {
            return;
        }
        let cell = queue.lock().expect("queue lock").pop_front();
        let Some(cell) = cell else { return };
        if let Some(bucket) = bucket {
            bucket.acquire();
        }
        let result = call_with_retries(client, plan, &cell, opts);
        let mut progress = shared.lock().expect("progress lock");
        match result {
            Ok(generation) => {
                let sample = make_sample(plan, &cell, generation);
                if let Err(err) = progress.writer.append(&sample) {
                    progress.io_error = Some(err);
                    return;
                }
                let key = cell.key();
                progress.state.completed.insert(key.clone(), sample.id.clone());
                progress.state.failed.remove(&key);
                if let Err(err) = progress.state.save(state_path) {
                    progress.io_error = Some(err);
                    return;
                }
                progress.collected.push(sample);
            }
            Err(reason) => {
                let key = cell.key();
                progress.state.failed.insert(key.clone(), reason.clone());
                if let Err(err) = progress.state.save(state_path) {
                    progress.io_error = Some(err);
                    return;
                }
                progress.failed.push((key, reason));
            }
        }
    }
}

fn call_with_retries(
    client: &dyn ProviderClient,
    plan: &RunPlan,
    cell: &Cell,
    opts: &ExecuteOptions,
) -> std::result::Result<Generation, String> {
    let prompt = match build_prompt(&cell.topic, cell.condition, plan.target_words) {
        Ok(p) => p,
        Err(e) => return Err(format!("fatal: {e}")),
    };
    let params = GenerationParams {
        model_name: cell.model_name.clone(),
        max_tokens: plan.max_tokens,
        temperature: None,
    };
    let mut attempt = 0u32;
    loop {
        match client.generate(&prompt, &params) {
            Ok(generation) => return Ok(generation),
            Err(GenerateError::Fatal(msg)) => return Err(format!("fatal: {msg}")),
            Err(GenerateError::Retryable(msg)) => {
                attempt += 1;
                if attempt >= opts.max_attempts {
                    return Err(format!("retryable after {attempt} attempts: {msg}"));
                }
                let factor = 2u32.saturating_pow(attempt - 1);
                let delay = opts
                    .backoff_base
                    .saturating_mul(factor)
                    .min(opts.backoff_cap);
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
            }
        }
    }
}

fn make_sample(plan: &RunPlan, cell: &Cell, generation: Generation) -> TextSample {
    let mut params = BTreeMap::new();
    params.insert(
        "max_tokens".to_owned(),
        serde_json::Value::from(plan.max_tokens),
    );
    if generation.truncated {
        params.insert("truncated".to_owned(), serde_json::Value::from(true));
    }
    TextSample {
        id: cell.sample_id(),
        text: generation.text,
        source: Source::Model,
        provider: Some(cell.provider.clone()),
        model_name: Some(cell.model_name.clone()),
        condition: SampleCondition::from(cell.condition),
        topic: Some(cell.topic.clone()),
        target_words: Some(plan.target_words),
        collected_at: chrono::Utc::now(),
        generation_params: Some(params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(models: usize, topics: usize, conditions: &[&str], reps: u32) -> RunConfig {
        RunConfig {
            models: (0..models)
                .map(|i| ModelSpec {
                    provider: format!("prov{i}"),
                    model_name: format!("model-{i}"),
                })
                .collect(),
            topics: (0..topics).map(|i| format!("topic {i}")).collect(),
            conditions: conditions.iter().map(|s| (*s).to_owned()).collect(),
            target_words: 100,
            samples_per_cell: reps,
            max_tokens: 2048,
            concurrency: 4,
            store_path: "store.jsonl".to_owned(),
            requests_per_minute: None,
        }
    }

    #[test]
    fn cell_grid_is_the_full_product() {
        let plan = plan_run(&config(2, 2, &["A", "B"], 1)).unwrap();
        assert_eq!(plan.cells().len(), 8);
        let plan = plan_run(&config(12, 10, &["A", "B"], 1)).unwrap();
        assert_eq!(plan.cells().len(), 240);
    }

    #[test]
    fn cell_keys_are_unique_and_stable() {
        let plan = plan_run(&config(2, 3, &["A", "B", "C"], 2)).unwrap();
        let keys: Vec<String> = plan.cells().iter().map(Cell::key).collect();
        let mut dedup = keys.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), keys.len());
        assert_eq!(keys[0], "m000|t000|A|s000");
        assert_eq!(keys[1], "m000|t000|A|s001");
    }

    #[test]
    fn plan_validation_catches_bad_configs() {
        let mut bad = config(1, 1, &["A"], 1);
        bad.topics.clear();
        assert!(plan_run(&bad).is_err());

        let mut bad = config(1, 1, &["A", "a"], 1);
        bad.conditions = vec!["A".to_owned(), "a".to_owned()];
        assert!(plan_run(&bad).is_err());

        let mut bad = config(1, 1, &["D"], 1);
        bad.conditions = vec!["D".to_owned()];
        assert!(plan_run(&bad).is_err());

        let mut bad = config(1, 1, &["A"], 1);
        bad.target_words = 0;
        assert!(plan_run(&bad).is_err());
    }

    #[test]
    fn design_hash_ignores_operational_knobs() {
        let plan_a = plan_run(&config(1, 1, &["A"], 1)).unwrap();
        let mut other = config(1, 1, &["A"], 1);
        other.concurrency = 9;
        other.requests_per_minute = Some(10);
        other.store_path = "elsewhere.jsonl".to_owned();
        let plan_b = plan_run(&other).unwrap();
        assert_eq!(plan_a.design_hash(), plan_b.design_hash());

        let mut different = config(1, 1, &["A"], 1);
        different.target_words = 999;
        let plan_c = plan_run(&different).unwrap();
        assert_ne!(plan_a.design_hash(), plan_c.design_hash());
    }

    #[test]
    fn state_rejects_a_different_plan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl.state.json");
        let plan_a = plan_run(&config(1, 1, &["A"], 1)).unwrap();
        let state = RunState::for_plan(&plan_a);
        state.save(&path).unwrap();
        assert!(RunState::load_or_create(&path, &plan_a).is_ok());

        let plan_b = plan_run(&config(1, 2, &["A"], 1)).unwrap();
        assert!(matches!(
            RunState::load_or_create(&path, &plan_b),
            Err(Error::PlanMismatch { .. })
        ));
    }

    #[test]
    fn slugs_are_filesystem_tame() {
        assert_eq!(slug("GPT-4.1"), "gpt-4-1");
        assert_eq!(slug("Llama 3.1 8B Inst."), "llama-3-1-8b-inst");
        assert_eq!(slug("Claude Opus 4.6"), "claude-opus-4-6");
    }
}
