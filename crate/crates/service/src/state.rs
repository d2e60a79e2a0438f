//! Registered datasets, campaigns and the published set.
//!
//! Lock order is map lock, then one campaign's mutex, then the store. The
//! snapshot path never holds the store while taking a campaign lock.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use arena_core::campaign::{
    build_strategy, now_ms, observe_assignment, run_with_strategy, CampaignConfig, IterationRecord, MethodSpec,
    RunStatus, Trajectory,
};
use arena_core::optimizer::{derive_seed, OptimizerError, Reasoning, Validity};
use arena_core::{Assignment, BenchmarkDataset, Measurement, SpaceError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::auth::TokenTable;
use crate::error::{malformed, ApiError};
use crate::leaderboard::{build_leaderboard, LeaderboardEntry};
use crate::store::{Event, Snapshot, Store, DEFAULT_SNAPSHOT_EVERY};

pub const ANONYMOUS: &str = "anonymous";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignState {
    AwaitingSuggestion,
    Running,
    Complete,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignEntry {
    pub id: String,
    pub dataset_id: String,
    pub author: String,
    pub state: CampaignState,
    pub created_ms: u64,
    pub trajectory: Trajectory,
}

impl CampaignEntry {
    pub fn is_human(&self) -> bool {
        matches!(self.trajectory.config.method, MethodSpec::Human)
    }

    pub fn remaining(&self) -> usize {
        self.trajectory
            .config
            .budget
            .saturating_sub(self.trajectory.records.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSoFar {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub id: String,
    pub dataset: String,
    pub author: String,
    pub state: CampaignState,
    pub method: String,
    pub modality: String,
    pub budget: usize,
    pub remaining: usize,
    pub next_iteration: usize,
    pub best_so_far: Option<BestSoFar>,
    pub published: bool,
    pub created_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignView {
    #[serde(flatten)]
    pub summary: CampaignSummary,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub id: String,
    pub provenance: String,
    pub parameters: Vec<String>,
    pub objectives: Vec<String>,
    pub space_size: usize,
    pub measured: usize,
}

/// Body of `POST /campaigns`: a campaign configuration plus the repeat index.
#[derive(Debug, Clone, Deserialize)]
pub struct CreateCampaign {
    #[serde(flatten)]
    pub config: CampaignConfig,
    #[serde(default)]
    pub run_index: usize,
    /// Ignored when tokens are configured; the token's handle is used instead.
    #[serde(default)]
    pub author: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AssignmentInput {
    Labels(Vec<String>),
    Named(BTreeMap<String, String>),
}

/// Body of `POST /campaigns/{id}/suggestions`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SubmitSuggestion {
    /// 1-based iteration this suggestion is for.
    pub iteration: usize,
    pub assignment: AssignmentInput,
    #[serde(default)]
    pub reasoning: Reasoning,
    #[serde(default)]
    pub author: Option<String>,
}

/// What a human gets back for one suggestion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationPayload {
    pub iteration: usize,
    pub assignment: Assignment,
    pub validity: Validity,
    /// Every replicate; null for the missing-marker.
    pub measurements: Option<Vec<Measurement>>,
    pub value: Option<f64>,
    pub missing: bool,
    pub remaining: usize,
    pub best_so_far: Option<BestSoFar>,
    pub state: CampaignState,
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub data_dir: Option<PathBuf>,
    pub tokens: Option<TokenTable>,
    pub snapshot_every: Option<usize>,
}

#[derive(Debug)]
pub struct ServiceState {
    datasets: RwLock<BTreeMap<String, Arc<BenchmarkDataset>>>,
    campaigns: RwLock<BTreeMap<String, Arc<Mutex<CampaignEntry>>>>,
    published: RwLock<BTreeSet<String>>,
    next_id: AtomicU64,
    store: Option<Mutex<Store>>,
    tokens: Option<TokenTable>,
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::internal(e.to_string())
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn best_of(t: &Trajectory) -> Option<BestSoFar> {
    t.best().map(|(index, value)| BestSoFar { index, value })
}

fn unknown_option(e: &SpaceError, dataset: &BenchmarkDataset) -> ApiError {
    let valid: Map<String, Value> = dataset
        .space()
        .parameters()
        .iter()
        .map(|p| (p.name.clone(), json!(p.options)))
        .collect();
    ApiError::bad_request(e.to_string()).with("valid_options", Value::Object(valid))
}

impl ServiceState {
    /// In-memory state with no persistence and no auth.
    pub fn in_memory() -> Arc<Self> {
        Self::open(ServiceConfig::default()).expect("in-memory state")
    }

    /// Opens the state, replaying the data directory when one is given.
    pub fn open(config: ServiceConfig) -> std::io::Result<Arc<Self>> {
        let mut state = Self {
            datasets: RwLock::default(),
            campaigns: RwLock::default(),
            published: RwLock::default(),
            next_id: AtomicU64::new(1),
            store: None,
            tokens: config.tokens,
        };
        if let Some(dir) = &config.data_dir {
            let every = config.snapshot_every.unwrap_or(DEFAULT_SNAPSHOT_EVERY);
            let (store, restored) = Store::open(dir, every)?;
            if let Some(snap) = restored.snapshot {
                state.next_id = AtomicU64::new(snap.next_id.max(1));
                for d in snap.datasets {
                    state.apply(Event::Dataset { dataset: d })?;
                }
                for entry in snap.campaigns {
                    state.apply(Event::Campaign { entry })?;
                }
                for id in snap.published {
                    state.apply(Event::Published { id })?;
                }
            }
            for event in restored.events {
                state.apply(event)?;
            }
            state.abort_interrupted();
            state.store = Some(Mutex::new(store));
        }
        Ok(Arc::new(state))
    }

    /// Replays one logged event onto in-memory state.
    fn apply(&mut self, event: Event) -> std::io::Result<()> {
        match event {
            Event::Dataset { dataset } => {
                let ds = BenchmarkDataset::from_json_str(&dataset.to_string()).map_err(std::io::Error::other)?;
                self.datasets.get_mut().unwrap().insert(ds.name.clone(), Arc::new(ds));
            }
            Event::Campaign { entry } => {
                if let Some(n) = entry.id.strip_prefix('c').and_then(|n| n.parse::<u64>().ok()) {
                    self.next_id.fetch_max(n + 1, Ordering::SeqCst);
                }
                self.campaigns
                    .get_mut()
                    .unwrap()
                    .insert(entry.id.clone(), Arc::new(Mutex::new(entry)));
            }
            Event::Record { id, record, state } => {
                if let Some(c) = self.campaigns.get_mut().unwrap().get(&id) {
                    let mut c = lock(c);
                    if c.trajectory.records.len() + 1 == record.index {
                        c.trajectory.records.push(record);
                        c.state = state;
                    }
                }
            }
            Event::Published { id } => {
                self.published.get_mut().unwrap().insert(id);
            }
        }
        Ok(())
    }

    /// Machine runs do not survive a restart; they are marked aborted.
    fn abort_interrupted(&mut self) {
        for c in self.campaigns.get_mut().unwrap().values() {
            let mut c = lock(c);
            if c.state == CampaignState::Running {
                c.state = CampaignState::Aborted;
                c.trajectory.status = RunStatus::Aborted;
                c.trajectory.abort_reason = Some("service restarted before the run finished".into());
            }
        }
    }

    pub fn requires_auth(&self) -> bool {
        self.tokens.is_some()
    }

    /// Resolves the caller's handle. With tokens configured a valid bearer
    /// token is mandatory; otherwise the handle comes from the request body.
    pub fn authenticate(&self, token: Option<&str>, claimed: Option<&str>) -> Result<String, ApiError> {
        match &self.tokens {
            Some(table) => {
                let token = token.ok_or_else(|| ApiError::unauthorized("bearer token required"))?;
                table
                    .handle(token)
                    .map(str::to_string)
                    .ok_or_else(|| ApiError::unauthorized("unknown token"))
            }
            None => Ok(claimed
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .unwrap_or(ANONYMOUS)
                .to_string()),
        }
    }

    fn persist(&self, event: &Event) -> Result<bool, ApiError> {
        match &self.store {
            Some(store) => lock(store).append(event).map_err(internal),
            None => Ok(false),
        }
    }

    /// Call only with no campaign lock held.
    fn snapshot_if(&self, due: bool) {
        if due {
            if let Err(e) = self.snapshot() {
                tracing::error!("snapshot failed: {e}");
            }
        }
    }

    pub fn snapshot(&self) -> Result<(), ApiError> {
        let Some(store) = &self.store else { return Ok(()) };
        let seq = lock(store).seq();
        let datasets = self
            .datasets
            .read()
            .unwrap()
            .values()
            .map(|d| d.to_json_value())
            .collect();
        let entries: Vec<_> = self.campaigns.read().unwrap().values().cloned().collect();
        let campaigns = entries.iter().map(|c| lock(c).clone()).collect();
        let published = self.published.read().unwrap().iter().cloned().collect();
        let snap = Snapshot {
            seq,
            next_id: self.next_id.load(Ordering::SeqCst),
            datasets,
            campaigns,
            published,
        };
        lock(store).write_snapshot(&snap).map_err(internal)
    }

    // Datasets

    /// Registers a dataset under its name. Re-registering identical content is a no-op.
    pub fn register_dataset(&self, body: &str) -> Result<DatasetSummary, ApiError> {
        let ds = BenchmarkDataset::from_json_str(body).map_err(|e| ApiError::bad_request(format!("invalid dataset: {e}")))?;
        let due = {
            let mut map = self.datasets.write().unwrap();
            if let Some(existing) = map.get(&ds.name) {
                if **existing == ds {
                    return Ok(summarize_dataset(existing));
                }
                return Err(ApiError::conflict(format!("dataset `{}` is already registered", ds.name)));
            }
            let due = self.persist(&Event::Dataset {
                dataset: ds.to_json_value(),
            })?;
            map.insert(ds.name.clone(), Arc::new(ds.clone()));
            due
        };
        self.snapshot_if(due);
        Ok(summarize_dataset(&ds))
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<BenchmarkDataset>, ApiError> {
        self.datasets
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown dataset `{id}`")))
    }

    pub fn list_datasets(&self) -> Vec<DatasetSummary> {
        self.datasets.read().unwrap().values().map(|d| summarize_dataset(d)).collect()
    }

    // Campaigns

    fn campaign(&self, id: &str) -> Result<Arc<Mutex<CampaignEntry>>, ApiError> {
        self.campaigns
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown campaign `{id}`")))
    }

    pub fn parse_create(body: &str) -> Result<CreateCampaign, ApiError> {
        serde_json::from_str(body).map_err(|e| malformed("campaign configuration", &e))
    }

    /// Allocates a campaign. Human campaigns wait for suggestions; machine
    /// campaigns start on a worker thread right away.
    pub fn create_campaign(self: &Arc<Self>, request: CreateCampaign, author: String) -> Result<CampaignView, ApiError> {
        let CreateCampaign { config, run_index, .. } = request;
        let dataset = self.dataset(&config.dataset)?;
        config
            .validate()
            .map_err(|e| ApiError::bad_request(e.to_string()).with("field", "budget/batch"))?;
        if config.output.is_some() {
            return Err(ApiError::bad_request("`output` is not accepted by the service").with("field", "output"));
        }
        match &config.method {
            MethodSpec::Bo { descriptor_paths, .. } if !descriptor_paths.is_empty() => {
                return Err(ApiError::bad_request("server-side descriptor paths are not accepted")
                    .with("field", "method.descriptor_paths"))
            }
            MethodSpec::Llm { context_paths, .. } | MethodSpec::Mock { context_paths, .. }
                if !context_paths.is_empty() =>
            {
                return Err(ApiError::bad_request("server-side context paths are not accepted")
                    .with("field", "method.context_paths"))
            }
            MethodSpec::Human if config.batch != 1 => {
                return Err(ApiError::bad_request("human campaigns take one suggestion per iteration")
                    .with("field", "batch"))
            }
            _ => {}
        }

        let id = format!("c{:06}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let mut trajectory = Trajectory::start(&config, &dataset, run_index);
        let mut strategy = None;
        let state = if matches!(config.method, MethodSpec::Human) {
            trajectory.method = format!("human-{author}");
            trajectory.run_id = format!("{}-{}-{}", dataset.name, trajectory.method, id);
            CampaignState::AwaitingSuggestion
        } else {
            match build_strategy(&config.method, &dataset, derive_seed(config.base_seed, run_index as u64)) {
                Ok(s) => {
                    strategy = Some(s);
                    CampaignState::Running
                }
                Err(OptimizerError::Config(msg)) => return Err(ApiError::bad_request(msg).with("field", "method")),
                Err(e) => {
                    trajectory.status = RunStatus::Aborted;
                    trajectory.abort_reason = Some(e.to_string());
                    CampaignState::Aborted
                }
            }
        };
        let entry = CampaignEntry {
            id: id.clone(),
            dataset_id: dataset.name.clone(),
            author,
            state,
            created_ms: now_ms(),
            trajectory,
        };
        let due = self.persist(&Event::Campaign { entry: entry.clone() })?;
        let view = self.view(&entry);
        self.campaigns
            .write()
            .unwrap()
            .insert(id.clone(), Arc::new(Mutex::new(entry)));
        self.snapshot_if(due);

        if let Some(strategy) = strategy {
            let state = Arc::clone(self);
            std::thread::Builder::new()
                .name(format!("campaign-{id}"))
                .spawn(move || {
                    let result = run_with_strategy(&config, &dataset, run_index, strategy);
                    state.finish_machine(&id, result);
                })
                .map_err(internal)?;
        }
        Ok(view)
    }

    fn finish_machine(
        &self,
        id: &str,
        result: Result<Trajectory, arena_core::campaign::CampaignError>,
    ) {
        let Ok(handle) = self.campaign(id) else { return };
        let due = {
            let mut c = lock(&handle);
            match result {
                Ok(t) => {
                    c.state = if t.is_complete() {
                        CampaignState::Complete
                    } else {
                        CampaignState::Aborted
                    };
                    c.trajectory = t;
                }
                Err(e) => {
                    c.state = CampaignState::Aborted;
                    c.trajectory.status = RunStatus::Aborted;
                    c.trajectory.abort_reason = Some(e.to_string());
                }
            }
            match self.persist(&Event::Campaign { entry: c.clone() }) {
                Ok(due) => due,
                Err(e) => {
                    tracing::error!("persisting campaign {id}: {e}");
                    false
                }
            }
        };
        self.snapshot_if(due);
    }

    fn summarize(&self, c: &CampaignEntry) -> CampaignSummary {
        let t = &c.trajectory;
        CampaignSummary {
            id: c.id.clone(),
            dataset: c.dataset_id.clone(),
            author: c.author.clone(),
            state: c.state,
            method: t.method.clone(),
            modality: t.config.method.modality().to_string(),
            budget: t.config.budget,
            remaining: c.remaining(),
            next_iteration: t.records.len() + 1,
            best_so_far: best_of(t),
            published: self.published.read().unwrap().contains(&c.id),
            created_ms: c.created_ms,
        }
    }

    fn view(&self, c: &CampaignEntry) -> CampaignView {
        CampaignView {
            summary: self.summarize(c),
            trajectory: c.trajectory.clone(),
        }
    }

    pub fn get_campaign(&self, id: &str) -> Result<CampaignView, ApiError> {
        let handle = self.campaign(id)?;
        let c = lock(&handle).clone();
        Ok(self.view(&c))
    }

    pub fn list_campaigns(&self) -> Vec<CampaignSummary> {
        let entries: Vec<_> = self.campaigns.read().unwrap().values().cloned().collect();
        entries
            .iter()
            .map(|c| {
                let c = lock(c).clone();
                self.summarize(&c)
            })
            .collect()
    }

    pub fn trajectory(&self, id: &str) -> Result<Trajectory, ApiError> {
        let handle = self.campaign(id)?;
        let t = lock(&handle).trajectory.clone();
        Ok(t)
    }

    pub fn parse_submission(body: &str) -> Result<SubmitSuggestion, ApiError> {
        serde_json::from_str(body).map_err(|e| malformed("suggestion", &e))
    }

    /// Records one human suggestion. The campaign stays locked from the
    /// iteration check through the append, so a given iteration is accepted once.
    /// `author` is the authenticated handle; without one the submission's own
    /// `author` field, then the campaign's author, is used.
    pub fn submit_suggestion(
        &self,
        id: &str,
        submission: SubmitSuggestion,
        author: Option<&str>,
    ) -> Result<ObservationPayload, ApiError> {
        let handle = self.campaign(id)?;
        let (payload, due) = {
            let mut c = lock(&handle);
            if !c.is_human() {
                return Err(ApiError::conflict("campaign is not driven by human suggestions"));
            }
            match c.state {
                CampaignState::AwaitingSuggestion => {}
                CampaignState::Complete => {
                    return Err(ApiError::conflict("campaign complete: budget exhausted").with("remaining", 0))
                }
                _ => return Err(ApiError::conflict("campaign is not accepting suggestions")),
            }
            let expected = c.trajectory.records.len() + 1;
            if submission.iteration != expected {
                return Err(ApiError::conflict(format!(
                    "out-of-turn submission for iteration {}",
                    submission.iteration
                ))
                .with("expected_iteration", expected));
            }
            if self.tokens.is_some() && author != Some(c.author.as_str()) {
                return Err(ApiError::forbidden(format!("campaign belongs to `{}`", c.author)));
            }
            let author = author
                .or(submission.author.as_deref())
                .unwrap_or(&c.author)
                .to_string();

            let dataset = self.dataset(&c.dataset_id)?;
            let space = dataset.space();
            let assignment = match &submission.assignment {
                AssignmentInput::Labels(labels) => Assignment::new(labels.clone()),
                AssignmentInput::Named(pairs) => space
                    .assignment_from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
                    .map_err(|e| unknown_option(&e, &dataset))?,
            };
            space
                .indices_of(&assignment)
                .map_err(|e| unknown_option(&e, &dataset))?;

            let policy = c.trajectory.policy;
            let (observation, validity, value) = observe_assignment(&dataset, &policy, &assignment, Validity::Valid);
            let record = IterationRecord {
                index: expected,
                batch: expected,
                assignment: assignment.clone(),
                validity,
                reasoning: Some(submission.reasoning),
                measurements: observation.measurements().map(<[Measurement]>::to_vec),
                value,
                author: Some(author),
                timestamp_ms: now_ms(),
            };
            let next_state = if expected >= c.trajectory.config.budget {
                CampaignState::Complete
            } else {
                CampaignState::AwaitingSuggestion
            };
            let due = self.persist(&Event::Record {
                id: id.to_string(),
                record: record.clone(),
                state: next_state,
            })?;
            c.trajectory.records.push(record);
            c.state = next_state;

            let payload = ObservationPayload {
                iteration: expected,
                assignment,
                validity,
                missing: observation.is_missing(),
                measurements: observation.measurements().map(<[Measurement]>::to_vec),
                value,
                remaining: c.remaining(),
                best_so_far: best_of(&c.trajectory),
                state: c.state,
            };
            (payload, due)
        };
        self.snapshot_if(due);
        Ok(payload)
    }

    // Leaderboard

    /// Adds a complete campaign to the leaderboard. Publishing twice changes nothing.
    pub fn publish(&self, id: &str, author: &str) -> Result<Vec<LeaderboardEntry>, ApiError> {
        let handle = self.campaign(id)?;
        let dataset = {
            let c = lock(&handle);
            if c.state != CampaignState::Complete {
                return Err(ApiError::conflict("only complete campaigns can be published").with("state", json!(c.state)));
            }
            if self.tokens.is_some() && c.is_human() && c.author != author {
                return Err(ApiError::forbidden(format!("campaign belongs to `{}`", c.author)));
            }
            c.dataset_id.clone()
        };
        let due = {
            let mut published = self.published.write().unwrap();
            if published.contains(id) {
                false
            } else {
                let due = self.persist(&Event::Published { id: id.to_string() })?;
                published.insert(id.to_string());
                due
            }
        };
        self.snapshot_if(due);
        Ok(self.leaderboard(Some(&dataset)))
    }

    /// Ranked entries, optionally limited to one dataset.
    pub fn leaderboard(&self, dataset: Option<&str>) -> Vec<LeaderboardEntry> {
        let ids: Vec<String> = self.published.read().unwrap().iter().cloned().collect();
        let runs: Vec<(String, Trajectory)> = ids
            .into_iter()
            .filter_map(|id| {
                let handle = self.campaign(&id).ok()?;
                let t = lock(&handle).trajectory.clone();
                dataset.is_none_or(|d| t.dataset == d).then_some((id, t))
            })
            .collect();
        build_leaderboard(runs.iter().map(|(id, t)| (id.as_str(), t)))
    }
}

fn summarize_dataset(d: &BenchmarkDataset) -> DatasetSummary {
    DatasetSummary {
        id: d.name.clone(),
        provenance: d.provenance.clone(),
        parameters: d.space().parameters().iter().map(|p| p.name.clone()).collect(),
        objectives: d.objectives().iter().map(|o| o.name.clone()).collect(),
        space_size: d.space().size(),
        measured: d.measured_keys(),
    }
}
