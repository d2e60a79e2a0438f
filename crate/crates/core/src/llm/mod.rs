//! LLM-guided optimization: prompt rendering, constrained-output parsing and
//! a provider abstraction with an offline scripted mock.

pub mod parse;
pub mod prompt;
pub mod provider;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::optimizer::{OptimizerError, Reasoning, SessionContext, Strategy, Suggestion, Validity};
use crate::space::Assignment;

pub use parse::{parse_response, response_schema, ParseError, ParsedResponse, TOOL_NAME};
pub use prompt::{first_user_message, iteration_prompt, system_prompt, PromptBundle};
pub use provider::{
    ChatMessage, ChatRequest, HttpProvider, MockProvider, MockReply, Provider, ProviderError, RequestLimiter,
};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const MAX_OUTPUT_TOKENS: u32 = 8192;
pub const MAX_SPLIT_THINKING_TOKENS: u32 = 4096;
/// Malformed responses are re-requested this many times before aborting.
pub const PARSE_RETRIES: usize = 2;
pub const DEFAULT_MAX_CONCURRENT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureScale {
    /// Used as configured (0 to 2 range).
    #[default]
    Standard,
    /// Mapped linearly onto a 0 to 1 range.
    Halved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThinkingBudget {
    /// Explicit thinking-token allowance, split from the output allowance.
    Tokens(u32),
    /// Vendor effort level such as `low` or `medium`.
    Level(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff_ms: 1000,
            max_backoff_ms: 60_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmProviderConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub temperature_scale: TemperatureScale,
    #[serde(default = "default_max_output")]
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinking_budget: Option<ThinkingBudget>,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_max_output() -> u32 {
    MAX_OUTPUT_TOKENS
}

fn default_concurrency() -> usize {
    DEFAULT_MAX_CONCURRENT
}

impl LlmProviderConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key_env: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: DEFAULT_TEMPERATURE,
            temperature_scale: TemperatureScale::Standard,
            max_output_tokens: MAX_OUTPUT_TOKENS,
            thinking_budget: None,
            api_key_env: api_key_env.into(),
            retry: RetryPolicy::default(),
            max_concurrent_requests: DEFAULT_MAX_CONCURRENT,
        }
    }

    /// Temperature sent on the wire.
    pub fn effective_temperature(&self) -> f64 {
        match self.temperature_scale {
            TemperatureScale::Standard => self.temperature,
            TemperatureScale::Halved => self.temperature / 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.max_output_tokens == 0 || self.max_output_tokens > MAX_OUTPUT_TOKENS {
            return Err(OptimizerError::Config(format!(
                "max_output_tokens must be in 1..={MAX_OUTPUT_TOKENS}"
            )));
        }
        if let Some(ThinkingBudget::Tokens(t)) = self.thinking_budget {
            if t > MAX_SPLIT_THINKING_TOKENS || self.max_output_tokens > MAX_SPLIT_THINKING_TOKENS {
                return Err(OptimizerError::Config(format!(
                    "split thinking allows at most {MAX_SPLIT_THINKING_TOKENS} thinking and output tokens"
                )));
            }
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(OptimizerError::Config("temperature outside [0, 2]".into()));
        }
        if self.max_concurrent_requests == 0 {
            return Err(OptimizerError::Config("max_concurrent_requests must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sampling settings forwarded with every request.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSettings {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub thinking_budget: Option<ThinkingBudget>,
}

impl SamplingSettings {
    pub fn from_config(c: &LlmProviderConfig) -> Self {
        Self {
            temperature: c.effective_temperature(),
            max_output_tokens: c.max_output_tokens,
            thinking_budget: c.thinking_budget.clone(),
        }
    }
}

impl Default for SamplingSettings {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: MAX_OUTPUT_TOKENS,
            thinking_budget: None,
        }
    }
}

/// Strategy that asks a chat model for each batch.
pub struct LlmStrategy {
    provider: Box<dyn Provider>,
    sampling: SamplingSettings,
    context_documents: Vec<String>,
    /// Validity of every assignment issued so far, parallel to the history.
    issued: Vec<Validity>,
    parse_failures: usize,
}

impl LlmStrategy {
    pub fn new(provider: Box<dyn Provider>, sampling: SamplingSettings) -> Self {
        Self {
            provider,
            sampling,
            context_documents: Vec::new(),
            issued: Vec::new(),
            parse_failures: 0,
        }
    }

    pub fn with_context_documents(mut self, docs: Vec<String>) -> Self {
        self.context_documents = docs;
        self
    }

    /// Malformed responses that were retried.
    pub fn parse_failures(&self) -> usize {
        self.parse_failures
    }

    pub fn prompts(&self, ctx: &SessionContext<'_>, count: usize) -> PromptBundle {
        let flags = history_flags(ctx, &self.issued);
        PromptBundle {
            system_prompt: system_prompt(ctx.space, ctx.objectives, ctx.batch),
            iteration_prompt: iteration_prompt(ctx, &flags, count),
            context_documents: self.context_documents.clone(),
        }
    }
}

/// Display flag for each history entry.
fn history_flags(ctx: &SessionContext<'_>, issued: &[Validity]) -> Vec<Validity> {
    ctx.history
        .iter()
        .enumerate()
        .map(|(i, h)| match issued.get(i) {
            Some(Validity::InvalidOption) => Validity::InvalidOption,
            _ if ctx.space.indices_of(&h.assignment).is_err() => Validity::InvalidOption,
            _ if h.observation.is_missing() => Validity::OffTable,
            _ => Validity::Valid,
        })
        .collect()
}

impl Strategy for LlmStrategy {
    fn name(&self) -> &str {
        "llm"
    }

    fn propose(&mut self, ctx: &SessionContext<'_>, count: usize) -> Result<Suggestion, OptimizerError> {
        let bundle = self.prompts(ctx, count);
        let request = ChatRequest {
            messages: bundle.messages(),
            schema: response_schema(ctx.space, count),
            temperature: self.sampling.temperature,
            max_output_tokens: self.sampling.max_output_tokens,
            thinking_budget: self.sampling.thinking_budget.clone(),
        };
        let mut last_error = None;
        for _ in 0..=PARSE_RETRIES {
            let text = self
                .provider
                .complete(&request)
                .map_err(|e| OptimizerError::Provider(e.to_string()))?;
            match parse_response(&text, ctx.space, count) {
                Ok(parsed) => {
                    self.issued.extend(parsed.validity.iter().copied());
                    let recommendation = parsed
                        .assignments
                        .iter()
                        .map(Assignment::to_string)
                        .collect::<Vec<_>>()
                        .join("; ");
                    return Ok(Suggestion {
                        assignments: parsed.assignments,
                        validity: parsed.validity,
                        reasoning: Some(Reasoning {
                            analysis: parsed.analysis,
                            hypothesis: parsed.hypothesis,
                            rationale: parsed.reasoning,
                            recommendation,
                        }),
                    });
                }
                Err(e) => {
                    self.parse_failures += 1;
                    last_error = Some(e);
                }
            }
        }
        Err(OptimizerError::Provider(format!(
            "response rejected after {} attempts: {}",
            PARSE_RETRIES + 1,
            last_error.map(|e| e.to_string()).unwrap_or_default()
        )))
    }
}

/// Number of distinct assignments suggested at least twice.
pub fn count_duplicates<'a>(suggestions: impl IntoIterator<Item = &'a Assignment>) -> usize {
    let mut counts: HashMap<&Assignment, usize> = HashMap::new();
    for a in suggestions {
        *counts.entry(a).or_default() += 1;
    }
    counts.values().filter(|&&c| c >= 2).count()
}

/// Fraction of issued suggestions whose observation was the missing-marker.
pub fn invalid_rate(missing: impl IntoIterator<Item = bool>) -> f64 {
    let (mut n, mut bad) = (0usize, 0usize);
    for m in missing {
        n += 1;
        bad += m as usize;
    }
    if n == 0 {
        0.0
    } else {
        bad as f64 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> Assignment {
        Assignment::new(vec![s.to_string()])
    }

    #[test]
    fn duplicate_hand_count() {
        let seq: Vec<Assignment> = ["A", "B", "A", "C", "A", "B"].iter().map(|s| a(s)).collect();
        assert_eq!(count_duplicates(&seq), 2);
        assert_eq!(count_duplicates(&seq[..4]), 1);
        assert_eq!(count_duplicates(&[] as &[Assignment]), 0);
    }

    #[test]
    fn invalid_rate_counts() {
        assert_eq!(invalid_rate(std::iter::repeat_n(false, 20)), 0.0);
        assert_eq!(invalid_rate(std::iter::repeat_n(true, 20)), 1.0);
        assert_eq!(invalid_rate((0..20).map(|i| i % 7 == 3)), 0.15);
        assert_eq!(invalid_rate(std::iter::empty()), 0.0);
    }

    #[test]
    fn provider_defaults() {
        let mut c = LlmProviderConfig::new("http://x", "m", "KEY");
        assert_eq!(c.effective_temperature(), 0.7);
        c.temperature_scale = TemperatureScale::Halved;
        assert_eq!(c.effective_temperature(), 0.35);
        assert_eq!(c.max_output_tokens, 8192);
        assert!(c.validate().is_ok());
        c.thinking_budget = Some(ThinkingBudget::Tokens(4096));
        assert!(c.validate().is_err());
        c.max_output_tokens = 4096;
        assert!(c.validate().is_ok());
        c.thinking_budget = Some(ThinkingBudget::Tokens(5000));
        assert!(c.validate().is_err());
        c.thinking_budget = Some(ThinkingBudget::Level("low".into()));
        c.max_output_tokens = 8192;
        assert!(c.validate().is_ok());
    }
}
