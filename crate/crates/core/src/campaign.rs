//! Campaign orchestration: the budget loop, trajectory records and persistence.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::aggregate::{aggregate_group, AggregationMode, AggregationPolicy, Measurement};
use crate::dataset::BenchmarkDataset;
use crate::llm::{self, HttpProvider, LlmProviderConfig, LlmStrategy, MockProvider, SamplingSettings};
use crate::optimizer::bo::{BoConfig, BoStrategy, DescriptorTable, Featurization};
use crate::optimizer::{
    derive_seed, Observation, OptimizerError, OptimizerSession, RandomStrategy, Reasoning, Strategy, Validity,
    DEFAULT_BATCH, DEFAULT_BUDGET,
};
use crate::space::{Assignment, Goal, ObjectiveSpec, ParameterSpace};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_REPEATS: usize = 20;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed trajectory: {source}")]
    Format { path: PathBuf, source: serde_json::Error },
}

/// Optimizer modality plus its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "modality", rename_all = "snake_case")]
pub enum MethodSpec {
    Random,
    Bo {
        #[serde(flatten)]
        config: BoConfig,
        /// One descriptor CSV per parameter, required for descriptor featurization.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        descriptor_paths: Vec<PathBuf>,
    },
    Llm {
        provider: LlmProviderConfig,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        context_paths: Vec<PathBuf>,
    },
    /// Scripted offline provider; the script is kept inline so replays are self-contained.
    Mock {
        script: Vec<Value>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        context_paths: Vec<PathBuf>,
    },
    /// Suggestions come from a person through the service.
    Human,
}

impl MethodSpec {
    pub fn modality(&self) -> &'static str {
        match self {
            MethodSpec::Random => "random",
            MethodSpec::Bo { .. } => "bo",
            MethodSpec::Llm { .. } => "llm",
            MethodSpec::Mock { .. } => "mock",
            MethodSpec::Human => "human",
        }
    }

    pub fn label(&self) -> String {
        match self {
            MethodSpec::Random => "random".into(),
            MethodSpec::Bo { config, .. } => format!("bo-{}-{}", config.acquisition, config.featurization),
            MethodSpec::Llm { provider, .. } => format!("llm-{}", provider.model),
            MethodSpec::Mock { .. } => "mock".into(),
            MethodSpec::Human => "human".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    /// Dataset path or identifier.
    pub dataset: String,
    pub method: MethodSpec,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub aggregation: AggregationMode,
    /// Directory trajectories are written to; nothing is persisted when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_batch() -> usize {
    DEFAULT_BATCH
}

fn default_repeats() -> usize {
    DEFAULT_REPEATS
}

impl CampaignConfig {
    pub fn new(dataset: impl Into<String>, method: MethodSpec) -> Self {
        Self {
            dataset: dataset.into(),
            method,
            budget: DEFAULT_BUDGET,
            batch: DEFAULT_BATCH,
            repeats: DEFAULT_REPEATS,
            base_seed: 0,
            aggregation: AggregationMode::default(),
            output: None,
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.budget == 0 || self.batch == 0 || self.repeats == 0 {
            return Err(CampaignError::Config("budget, batch and repeats must all be at least 1".into()));
        }
        if self.budget % self.batch != 0 {
            return Err(CampaignError::Config(format!(
                "batch size {} does not divide budget {}",
                self.batch, self.budget
            )));
        }
        if let MethodSpec::Llm { provider, .. } = &self.method {
            provider.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Reporting policy for a dataset with these objectives.
    pub fn policy(&self, objectives: &[ObjectiveSpec]) -> AggregationPolicy {
        AggregationPolicy::for_objectives(self.aggregation, objectives)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Aborted,
}

/// One issued suggestion and what came back for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based suggestion index.
    pub index: usize,
    /// 1-based batch (iteration) number.
    pub batch: usize,
    pub assignment: Assignment,
    pub validity: Validity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<Reasoning>,
    /// Every replicate, or null for the missing-marker.
    pub measurements: Option<Vec<Measurement>>,
    /// Aggregated reporting scalar, or null for the missing-marker.
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    pub timestamp_ms: u64,
}

impl IterationRecord {
    pub fn is_missing(&self) -> bool {
        self.measurements.is_none()
    }

    pub fn observation(&self) -> Observation {
        match &self.measurements {
            Some(m) => Observation::Measured(m.clone()),
            None => Observation::Missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema_version: u32,
    pub run_id: String,
    pub run_index: usize,
    pub seed: u64,
    pub dataset: String,
    pub method: String,
    pub config: CampaignConfig,
    pub space: ParameterSpace,
    pub objectives: Vec<ObjectiveSpec>,
    pub policy: AggregationPolicy,
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Trajectory {
    /// Empty trajectory for a run that is about to start.
    pub fn start(config: &CampaignConfig, dataset: &BenchmarkDataset, run_index: usize) -> Self {
        let method = config.method.label();
        Self {
            schema_version: SCHEMA_VERSION,
            run_id: format!("{}-{}-r{:02}", dataset.name, method, run_index),
            run_index,
            seed: derive_seed(config.base_seed, run_index as u64),
            dataset: dataset.name.clone(),
            method,
            config: config.clone(),
            space: dataset.space().clone(),
            objectives: dataset.objectives().to_vec(),
            policy: config.policy(dataset.objectives()),
            records: Vec::new(),
            status: RunStatus::Complete,
            abort_reason: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    pub fn reporting_goal(&self) -> Goal {
        self.policy.reporting_goal(&self.objectives)
    }

    pub fn suggestions(&self) -> impl Iterator<Item = &Assignment> {
        self.records.iter().map(|r| &r.assignment)
    }

    pub fn duplicates(&self) -> usize {
        llm::count_duplicates(self.suggestions())
    }

    pub fn invalid_rate(&self) -> f64 {
        llm::invalid_rate(self.records.iter().map(IterationRecord::is_missing))
    }

    /// Best reported value and the 1-based index where it first appeared.
    pub fn best(&self) -> Option<(usize, f64)> {
        let goal = self.reporting_goal();
        let mut best: Option<(usize, f64)> = None;
        for r in &self.records {
            if let Some(v) = r.value {
                if best.is_none_or(|(_, b)| goal.better(v, b)) {
                    best = Some((r.index, v));
                }
            }
        }
        best
    }

    /// Best value after each suggestion; `None` until something was observed.
    pub fn best_so_far(&self) -> Vec<Option<f64>> {
        let goal = self.reporting_goal();
        let mut best: Option<f64> = None;
        self.records
            .iter()
            .map(|r| {
                if let Some(v) = r.value {
                    if best.is_none_or(|b| goal.better(v, b)) {
                        best = Some(v);
                    }
                }
                best
            })
            .collect()
    }

    /// Copy with every timestamp zeroed, for replay comparisons.
    pub fn without_timestamps(&self) -> Self {
        let mut t = self.clone();
        for r in &mut t.records {
            r.timestamp_ms = 0;
        }
        t
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CampaignError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CampaignError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|source| CampaignError::Format {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Writes to a sibling temp file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CampaignError> {
        write_atomic(path.as_ref(), self.to_json_string().as_bytes())
    }

    pub fn file_name(&self) -> String {
        format!("{}.json", sanitize(&self.run_id))
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CampaignError> {
    let io_err = |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn load_trajectories(dir: impl AsRef<Path>) -> Result<Vec<Trajectory>, CampaignError> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|source| CampaignError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(Trajectory::load).collect()
}

fn read_texts(paths: &[PathBuf]) -> Result<Vec<String>, OptimizerError> {
    paths
        .iter()
        .map(|p| fs::read_to_string(p).map_err(|e| OptimizerError::Config(format!("{}: {e}", p.display()))))
        .collect()
}

/// Instantiates the strategy for one run.
pub fn build_strategy(
    method: &MethodSpec,
    dataset: &BenchmarkDataset,
    seed: u64,
) -> Result<Box<dyn Strategy>, OptimizerError> {
    Ok(match method {
        MethodSpec::Random => Box::new(RandomStrategy::new(seed)),
        MethodSpec::Bo {
            config,
            descriptor_paths,
        } => {
            let tables = descriptor_paths
                .iter()
                .map(DescriptorTable::from_csv_path)
                .collect::<Result<Vec<_>, _>>()?;
            let tables = (!tables.is_empty()).then_some(tables);
            let f = Featurization::build(dataset.space(), config.featurization, tables.as_deref())?;
            Box::new(BoStrategy::new(config.clone(), f, seed))
        }
        MethodSpec::Llm {
            provider,
            context_paths,
        } => {
            let http = HttpProvider::new(provider.clone()).map_err(|e| OptimizerError::Provider(e.to_string()))?;
            Box::new(
                LlmStrategy::new(Box::new(http), SamplingSettings::from_config(provider))
                    .with_context_documents(read_texts(context_paths)?),
            )
        }
        MethodSpec::Mock { script, context_paths } => {
            let mock = MockProvider::from_script_str(&Value::Array(script.clone()).to_string())
                .map_err(|e| OptimizerError::Config(e.to_string()))?;
            Box::new(
                LlmStrategy::new(Box::new(mock), SamplingSettings::default())
                    .with_context_documents(read_texts(context_paths)?),
            )
        }
        MethodSpec::Human => {
            return Err(OptimizerError::Config(
                "human campaigns are driven through the service".into(),
            ))
        }
    })
}

/// Looks up one suggestion and builds its record.
pub fn observe_assignment(
    dataset: &BenchmarkDataset,
    policy: &AggregationPolicy,
    assignment: &Assignment,
    validity: Validity,
) -> (Observation, Validity, Option<f64>) {
    match dataset.lookup(assignment) {
        Ok(Some(m)) => {
            let value = aggregate_group(m, policy, 0).ok();
            (Observation::Measured(m.to_vec()), validity, value)
        }
        Ok(None) => {
            let v = if validity == Validity::Valid { Validity::OffTable } else { validity };
            (Observation::Missing, v, None)
        }
        Err(_) => (Observation::Missing, Validity::InvalidOption, None),
    }
}

/// Runs repeat `run_index` of a campaign with the given strategy.
pub fn run_with_strategy(
    config: &CampaignConfig,
    dataset: &BenchmarkDataset,
    run_index: usize,
    strategy: Box<dyn Strategy>,
) -> Result<Trajectory, CampaignError> {
    config.validate()?;
    let mut traj = Trajectory::start(config, dataset, run_index);
    let policy = traj.policy;
    let mut session = OptimizerSession::new(
        dataset.space().clone(),
        dataset.objectives().to_vec(),
        policy,
        config.budget,
        config.batch,
        strategy,
    )
    .map_err(|e| CampaignError::Config(e.to_string()))?;

    let mut batch_no = 0;
    while !session.is_complete() {
        batch_no += 1;
        let suggestion = match session.suggest() {
            Ok(s) => s,
            Err(e) => {
                traj.status = RunStatus::Aborted;
                traj.abort_reason = Some(e.to_string());
                break;
            }
        };
        let mut results = Vec::with_capacity(suggestion.assignments.len());
        for (assignment, validity) in suggestion.assignments.into_iter().zip(suggestion.validity) {
            let (observation, validity, value) = observe_assignment(dataset, &policy, &assignment, validity);
            traj.records.push(IterationRecord {
                index: traj.records.len() + 1,
                batch: batch_no,
                assignment: assignment.clone(),
                validity,
                reasoning: suggestion.reasoning.clone(),
                measurements: observation.measurements().map(<[Measurement]>::to_vec),
                value,
                author: None,
                timestamp_ms: now_ms(),
            });
            results.push((assignment, observation));
        }
        session
            .observe(results)
            .map_err(|e| CampaignError::Config(format!("session protocol: {e}")))?;
    }
    Ok(traj)
}

/// Runs repeat `run_index` and persists it when an output directory is set.
/// Failures to construct the optimizer (missing key, unreadable files) yield
/// an aborted trajectory rather than an error.
pub fn run_campaign(
    config: &CampaignConfig,
    dataset: &BenchmarkDataset,
    run_index: usize,
) -> Result<Trajectory, CampaignError> {
    config.validate()?;
    let seed = derive_seed(config.base_seed, run_index as u64);
    let traj = match build_strategy(&config.method, dataset, seed) {
        Ok(strategy) => run_with_strategy(config, dataset, run_index, strategy)?,
        Err(OptimizerError::Config(msg)) => return Err(CampaignError::Config(msg)),
        Err(e) => {
            let mut t = Trajectory::start(config, dataset, run_index);
            t.status = RunStatus::Aborted;
            t.abort_reason = Some(e.to_string());
            t
        }
    };
    if let Some(dir) = &config.output {
        traj.save(dir.join(traj.file_name()))?;
    }
    Ok(traj)
}

/// One unit of work for [`run_suite`].
#[derive(Debug, Clone)]
pub struct CampaignJob {
    pub config: CampaignConfig,
    pub dataset: Arc<BenchmarkDataset>,
    pub run_index: usize,
}

/// All `repeats` runs of one configuration.
pub fn expand_repeats(config: &CampaignConfig, dataset: Arc<BenchmarkDataset>) -> Vec<CampaignJob> {
    (0..config.repeats)
        .map(|run_index| CampaignJob {
            config: config.clone(),
            dataset: dataset.clone(),
            run_index,
        })
        .collect()
}

/// Runs jobs on a bounded pool; results follow job order. Configuration
/// problems are reported before any run starts.
pub fn run_suite(jobs: &[CampaignJob], parallelism: usize) -> Result<Vec<Trajectory>, CampaignError> {
    for j in jobs {
        j.config.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| CampaignError::Config(e.to_string()))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|j| run_campaign(&j.config, &j.dataset, j.run_index))
            .collect()
    })
}
