//! Optional language-model routing for the supervisor.
//!
//! The model is asked which agent runs next. Its answer is accepted only when
//! it names the stage the deterministic rules would pick; anything else
//! (transport failure, garbage, an illegal role) falls back to the rules, so
//! the life cycle behaves identically with or without a model.

use std::fmt::{self, Write as _};
use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::lifecycle::{
    legal_successors, plan_route, AgentReport, Blackboard, ReportStatus, RoutePlan, Router,
    RoutingDecision, RoutingSource, Stage,
};

pub const DEFAULT_API_KEY_ENV: &str = "ANTEVO_LLM_API_KEY";
/// Prompts are kept under this many bytes.
pub const MAX_PROMPT_BYTES: usize = 8 * 1024;

const RETRY_BACKOFF: Duration = Duration::from_millis(200);

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

fn default_timeout_secs() -> f64 {
    30.0
}

fn default_max_retries() -> u32 {
    2
}

/// Where the chat-completions endpoint lives. The key itself is never stored
/// here, only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSettings {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

impl EndpointSettings {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: default_api_key_env(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(Error::Configuration(format!(
                "base_url must start with http:// or https://, got '{}'",
                self.base_url
            )));
        }
        if self.model.trim().is_empty() {
            return Err(Error::Configuration("model must not be empty".into()));
        }
        if self.api_key_env.is_empty() {
            return Err(Error::Configuration("api_key_env must not be empty".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::Configuration("timeout_secs must be positive".into()));
        }
        Ok(())
    }
}

/// An API key. Its `Debug` output is redacted and it cannot be serialized.
#[derive(Clone)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

/// Settings plus the resolved key.
#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub settings: EndpointSettings,
    api_key: ApiKey,
}

impl EndpointConfig {
    pub fn new(settings: EndpointSettings, api_key: ApiKey) -> Result<Self> {
        settings.validate()?;
        Ok(Self { settings, api_key })
    }

    /// Reads the key from the environment variable named in `settings`.
    pub fn from_env(settings: EndpointSettings) -> Result<Self> {
        let key = std::env::var(&settings.api_key_env).map_err(|_| {
            Error::Configuration(format!(
                "LLM routing needs an API key in the environment variable {}",
                settings.api_key_env
            ))
        })?;
        if key.trim().is_empty() {
            return Err(Error::Configuration(format!(
                "environment variable {} is empty",
                settings.api_key_env
            )));
        }
        Self::new(settings, ApiKey::new(key))
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl LlmError {
    fn retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Status(code) => *code == 429 || *code >= 500,
            LlmError::Malformed(_) => false,
        }
    }
}

/// System and user messages for one routing question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingPrompt {
    pub system: String,
    pub user: String,
}

const SYSTEM_PROMPT: &str = "You are the supervisor of a beamforming agent pipeline. \
Agents: Monitoring, DataCollection, ModelSelection, Training, Evaluation, Deployment. \
Rules: Monitoring goes to DataCollection when it triggers, otherwise Idle. \
DataCollection goes to ModelSelection, ModelSelection to Training, Training to Evaluation. \
Evaluation goes to Deployment on a pass, back to Training on a fail while training rounds remain, \
and to Deployment with the best candidate once they are used up. Deployment goes to Idle. \
A failed agent is retried once, then the event aborts to Idle. \
Answer with exactly one word: the next agent name, or Idle.";

impl RoutingPrompt {
    /// Summarizes the blackboard around `report` for the model.
    pub fn build(blackboard: &Blackboard, report: &AgentReport) -> Self {
        let mut user = String::new();
        let _ = writeln!(user, "step: {}", blackboard.step_index());
        let _ = writeln!(user, "current stage: {}", blackboard.stage());
        let status = match &report.status {
            ReportStatus::Ok => "ok".to_string(),
            ReportStatus::Fail(reason) => format!("failed ({})", truncate(reason, 400)),
        };
        let _ = writeln!(user, "last agent: {} {status}", report.role);
        let _ = writeln!(user, "message: {}", truncate(&report.message, 400));
        let _ = writeln!(user, "retries used: {}", blackboard.retries());
        if let Some(reading) = blackboard.monitor_reading() {
            let _ = writeln!(
                user,
                "movable gain: {:.3} dB, fixed gain: {:.3} dB, triggered: {}",
                reading.movable_gain_db, reading.fixed_gain_db, reading.decision.trigger
            );
        }
        if let Some(event) = blackboard.open_event() {
            let _ = writeln!(
                user,
                "open event: reason {}, training rounds {} of {}",
                event.reason.as_str(),
                event.training_rounds,
                blackboard.max_training_rounds()
            );
        }
        if let Some(verdict) = blackboard.evaluation_verdict() {
            let _ = writeln!(user, "evaluation verdict: {verdict:?}");
        }
        let options: Vec<&str> = legal_successors(report.role).iter().map(|s| s.name()).collect();
        let _ = writeln!(user, "allowed answers: {}", options.join(", "));
        user.push_str("Which agent runs next?");
        let user = truncate(&user, MAX_PROMPT_BYTES - SYSTEM_PROMPT.len()).to_string();
        Self {
            system: SYSTEM_PROMPT.to_string(),
            user,
        }
    }

    pub fn len(&self) -> usize {
        self.system.len() + self.user.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn truncate(s: &str, max_bytes: usize) -> &str {
    if s.len() <= max_bytes {
        return s;
    }
    let mut end = max_bytes;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

/// Anything that can answer a routing prompt with raw text.
pub trait ChatBackend {
    fn complete(&self, prompt: &RoutingPrompt) -> std::result::Result<String, LlmError>;
}

/// Blocking client for an OpenAI-style `/v1/chat/completions` endpoint.
pub struct ChatCompletionsClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
    url: String,
}

impl fmt::Debug for ChatCompletionsClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChatCompletionsClient")
            .field("url", &self.url)
            .field("model", &self.config.settings.model)
            .finish_non_exhaustive()
    }
}

impl ChatCompletionsClient {
    pub fn new(config: EndpointConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.settings.timeout_secs))
            .build()
            .map_err(|e| Error::Configuration(format!("cannot build HTTP client: {e}")))?;
        let url = format!(
            "{}/v1/chat/completions",
            config.settings.base_url.trim_end_matches('/')
        );
        Ok(Self { config, http, url })
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, LlmError> {
        let response = self
            .http
            .post(&self.url)
            .bearer_auth(self.config.api_key.expose())
            .json(body)
            .send()
            .map_err(|e| LlmError::Transport(e.without_url().to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(LlmError::Status(status.as_u16()));
        }
        let value: Value = response
            .json()
            .map_err(|e| LlmError::Malformed(e.without_url().to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Malformed("no choices[0].message.content".into()))
    }
}

impl ChatBackend for ChatCompletionsClient {
    fn complete(&self, prompt: &RoutingPrompt) -> std::result::Result<String, LlmError> {
        let body = json!({
            "model": self.config.settings.model,
            "temperature": 0,
            "max_tokens": 16,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        });
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.retryable() && attempt < self.config.settings.max_retries => {
                    attempt += 1;
                    warn!("LLM request failed ({e}), retry {attempt}");
                    thread::sleep(RETRY_BACKOFF * attempt);
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Reads a stage name out of a model reply. Surrounding whitespace, quotes and
/// punctuation are ignored; the remaining text must be exactly one role name
/// or `Idle`, in any case.
pub fn parse_role_response(text: &str) -> Option<Stage> {
    let trimmed = text.trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation());
    trimmed.parse().ok()
}

/// Asks `backend` for the next stage and checks the answer against `plan`.
/// The returned `next` is always the planned stage.
pub fn decide_next_agent(
    prompt: &RoutingPrompt,
    backend: &dyn ChatBackend,
    plan: &RoutePlan,
) -> RoutingDecision {
    match backend.complete(prompt) {
        Ok(raw) => {
            let source = match parse_role_response(&raw) {
                Some(stage) if stage == plan.next => RoutingSource::Llm,
                Some(stage) => {
                    warn!("LLM chose {stage}, expected {}; falling back", plan.next);
                    RoutingSource::Fallback
                }
                None => {
                    warn!("unparseable LLM reply; falling back");
                    RoutingSource::Fallback
                }
            };
            RoutingDecision {
                next: plan.next,
                source,
                raw_response: Some(raw),
            }
        }
        Err(e) => {
            warn!("LLM unavailable ({e}); falling back");
            RoutingDecision {
                next: plan.next,
                source: RoutingSource::Fallback,
                raw_response: None,
            }
        }
    }
}

/// Supervisor router that consults a chat model on every transition.
pub struct LlmRouter<B> {
    backend: B,
}

impl<B: ChatBackend> LlmRouter<B> {
    pub fn new(backend: B) -> Self {
        Self { backend }
    }
}

impl<B: ChatBackend> Router for LlmRouter<B> {
    fn route(&mut self, blackboard: &mut Blackboard, last_report: &AgentReport) -> Result<RoutingDecision> {
        let plan = plan_route(blackboard, last_report)?;
        let prompt = RoutingPrompt::build(blackboard, last_report);
        let decision = decide_next_agent(&prompt, &self.backend, &plan);
        crate::lifecycle::apply_route(blackboard, &plan);
        Ok(decision)
    }
}
