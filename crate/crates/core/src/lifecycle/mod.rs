//! Self-evolving control loop.
//!
//! Six role agents share a [`Blackboard`]. A supervisor routes between them:
//! monitoring compares the deployed movable array against the fixed baseline
//! every step and, on degradation, runs data collection, model selection,
//! training, evaluation and deployment to completion within the same step.

mod agents;
mod blackboard;
mod episode;
mod supervisor;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use agents::{agent_execute, Services};
pub use blackboard::{Blackboard, MonitorReading, Verdict};
pub use episode::{run_episode, run_episode_with, EpisodeOutcome, RoutingCounts};
pub use supervisor::{
    is_valid_sequence, legal_successors, plan_route, supervisor_next, DeterministicRouter,
    RouteAction, RoutePlan, Router, RoutingDecision, RoutingSource,
};
pub(crate) use supervisor::apply_route;

/// Default relative-drop trigger threshold in dB.
pub const DEFAULT_RELATIVE_DROP_DB: f64 = 3.0;
/// Evaluation/Training bounces before a candidate is force-deployed.
pub const DEFAULT_MAX_TRAINING_ROUNDS: usize = 5;
/// Slack the evaluation gate allows below the pre-trigger deployed gain.
pub const EVALUATION_REGRESSION_SLACK_DB: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentRole {
    DataCollection,
    ModelSelection,
    Training,
    Evaluation,
    Deployment,
    Monitoring,
}

impl AgentRole {
    pub const ALL: [AgentRole; 6] = [
        AgentRole::DataCollection,
        AgentRole::ModelSelection,
        AgentRole::Training,
        AgentRole::Evaluation,
        AgentRole::Deployment,
        AgentRole::Monitoring,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentRole::DataCollection => "DataCollection",
            AgentRole::ModelSelection => "ModelSelection",
            AgentRole::Training => "Training",
            AgentRole::Evaluation => "Evaluation",
            AgentRole::Deployment => "Deployment",
            AgentRole::Monitoring => "Monitoring",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the supervisor is: running an agent or waiting for the next step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Idle,
    Active(AgentRole),
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Idle => "Idle",
            Stage::Active(role) => role.name(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    /// Case-insensitive match on a role name or `Idle`.
    fn from_str(s: &str) -> Result<Self, Error> {
        if s.eq_ignore_ascii_case("idle") {
            return Ok(Stage::Idle);
        }
        AgentRole::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .map(Stage::Active)
            .ok_or_else(|| Error::Validation(format!("'{s}' is not a role name")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportStatus {
    Ok,
    Fail(String),
}

/// What an agent did during one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentReport {
    pub role: AgentRole,
    pub status: ReportStatus,
    pub message: String,
    /// Blackboard fields written by the agent.
    pub produced: Vec<&'static str>,
}

impl AgentReport {
    pub(crate) fn ok(role: AgentRole, message: impl Into<String>, produced: Vec<&'static str>) -> Self {
        Self {
            role,
            status: ReportStatus::Ok,
            message: message.into(),
            produced,
        }
    }

    pub(crate) fn fail(role: AgentRole, reason: impl Into<String>) -> Self {
        let reason = reason.into();
        Self {
            role,
            message: format!("{role} failed: {reason}"),
            status: ReportStatus::Fail(reason),
            produced: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ReportStatus::Ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerReason {
    BelowBaseline,
    RelativeDrop,
    HardwareChange,
}

impl TriggerReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TriggerReason::BelowBaseline => "below_baseline",
            TriggerReason::RelativeDrop => "relative_drop",
            TriggerReason::HardwareChange => "hardware_change",
        }
    }
}

impl FromStr for TriggerReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "below_baseline" => Ok(TriggerReason::BelowBaseline),
            "relative_drop" => Ok(TriggerReason::RelativeDrop),
            "hardware_change" => Ok(TriggerReason::HardwareChange),
            other => Err(Error::Validation(format!("unknown trigger reason '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitoringDecision {
    pub trigger: bool,
    pub reason: Option<TriggerReason>,
}

/// Degradation rule: strictly below the fixed baseline, otherwise a drop of more
/// than `relative_drop_threshold_db` since the last deployed reading.
pub fn monitoring_check(
    deployed_gain_db: f64,
    baseline_gain_db: f64,
    last_deployed_gain_db: f64,
    relative_drop_threshold_db: f64,
) -> MonitoringDecision {
    let reason = if deployed_gain_db < baseline_gain_db {
        Some(TriggerReason::BelowBaseline)
    } else if last_deployed_gain_db - deployed_gain_db > relative_drop_threshold_db {
        Some(TriggerReason::RelativeDrop)
    } else {
        None
    };
    MonitoringDecision {
        trigger: reason.is_some(),
        reason,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EventOutcome {
    Completed,
    /// Training rounds ran out; the best candidate was deployed anyway.
    Degraded,
    Aborted { error: String },
}

/// One trigger-to-deployment episode of self-evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionEvent {
    pub trigger_step: usize,
    pub reason: TriggerReason,
    /// Deployed gain at the true angles when the trigger fired.
    pub pre_gain_db: f64,
    /// Gain of the deployed candidate at the estimated angles.
    pub post_gain_db: f64,
    /// Fixed-array gain at the estimated angles, as judged by evaluation.
    pub baseline_gain_db: f64,
    pub agent_sequence: Vec<AgentRole>,
    pub training_rounds: usize,
    pub outcome: EventOutcome,
}

/// One row of the per-step gain curve.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: usize,
    pub true_angles: Vec<f64>,
    /// Most recent estimate (possibly from an earlier step); empty before the first.
    pub estimated_angles: Vec<f64>,
    pub movable_gain_db: f64,
    pub fixed_gain_db: f64,
    pub evolved: bool,
    pub trigger_reason: Option<TriggerReason>,
}
