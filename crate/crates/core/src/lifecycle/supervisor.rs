//! Supervisor routing.
//!
//! Routing is split into a pure plan ([`plan_route`]) and its application to
//! the blackboard, so an external advisor can be checked against the plan
//! before anything is mutated.

use super::{
    AgentReport, AgentRole, Blackboard, EventOutcome, EvolutionEvent, ReportStatus, Stage,
    TriggerReason, Verdict,
};
use crate::error::{Error, Result};

/// Failed reports are retried this many times before the event is aborted.
const MAX_RETRIES: usize = 1;

/// Side effect attached to a transition.
#[derive(Debug, Clone, PartialEq)]
pub enum RouteAction {
    /// Nominal forward move.
    Advance,
    /// Run the same role again after a failure.
    Retry,
    /// Give up on the open event.
    Abort(String),
    /// Monitoring fired; open a new evolution event.
    OpenEvent(TriggerReason),
    /// Evaluation rejected the candidate; train again.
    Retrain,
    /// Training rounds exhausted; deploy the best candidate so far.
    ForceDeploy,
    /// Cycle complete for this step.
    Finish,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    pub next: Stage,
    pub action: RouteAction,
}

/// Edges of the routing relation out of `role`, including retries and aborts.
pub fn legal_successors(role: AgentRole) -> &'static [Stage] {
    use AgentRole::*;
    use Stage::{Active, Idle};
    match role {
        Monitoring => &[Active(DataCollection), Idle, Active(Monitoring)],
        DataCollection => &[Active(ModelSelection), Active(DataCollection), Idle],
        ModelSelection => &[Active(Training), Active(ModelSelection), Idle],
        Training => &[Active(Evaluation), Active(Training), Idle],
        Evaluation => &[Active(Deployment), Active(Training), Active(Evaluation), Idle],
        Deployment => &[Idle, Active(Deployment)],
    }
}

/// True when `sequence` starts at data collection, follows the routing relation
/// edge by edge, and (if `completed`) ends with deployment.
pub fn is_valid_sequence(sequence: &[AgentRole], completed: bool) -> bool {
    if sequence.first() != Some(&AgentRole::DataCollection) {
        return false;
    }
    if completed && sequence.last() != Some(&AgentRole::Deployment) {
        return false;
    }
    sequence
        .windows(2)
        .all(|pair| legal_successors(pair[0]).contains(&Stage::Active(pair[1])))
}

/// The deterministic routing decision for `last_report`, without side effects.
pub fn plan_route(blackboard: &Blackboard, last_report: &AgentReport) -> Result<RoutePlan> {
    let role = last_report.role;
    if blackboard.stage != Stage::Active(role) {
        return Err(Error::Protocol(format!(
            "report from {role} while the supervisor is at {}",
            blackboard.stage
        )));
    }
    if let ReportStatus::Fail(reason) = &last_report.status {
        return Ok(if blackboard.retries < MAX_RETRIES {
            RoutePlan {
                next: Stage::Active(role),
                action: RouteAction::Retry,
            }
        } else {
            RoutePlan {
                next: Stage::Idle,
                action: RouteAction::Abort(format!("{role}: {reason}")),
            }
        });
    }
    let advance = |next: AgentRole| RoutePlan {
        next: Stage::Active(next),
        action: RouteAction::Advance,
    };
    Ok(match role {
        AgentRole::Monitoring => {
            let reading = blackboard.monitor_reading.as_ref().ok_or_else(|| {
                Error::Protocol("monitoring reported ok without a reading".into())
            })?;
            match reading.decision.reason {
                Some(reason) if reading.decision.trigger => RoutePlan {
                    next: Stage::Active(AgentRole::DataCollection),
                    action: RouteAction::OpenEvent(reason),
                },
                _ => RoutePlan {
                    next: Stage::Idle,
                    action: RouteAction::Finish,
                },
            }
        }
        AgentRole::DataCollection => advance(AgentRole::ModelSelection),
        AgentRole::ModelSelection => advance(AgentRole::Training),
        AgentRole::Training => advance(AgentRole::Evaluation),
        AgentRole::Evaluation => match &blackboard.evaluation_verdict {
            Some(Verdict::Pass) => advance(AgentRole::Deployment),
            Some(Verdict::Fail(_)) => {
                let rounds = blackboard.open_event.as_ref().map_or(0, |e| e.training_rounds);
                if rounds >= blackboard.max_training_rounds {
                    RoutePlan {
                        next: Stage::Active(AgentRole::Deployment),
                        action: RouteAction::ForceDeploy,
                    }
                } else {
                    RoutePlan {
                        next: Stage::Active(AgentRole::Training),
                        action: RouteAction::Retrain,
                    }
                }
            }
            None => {
                return Err(Error::Protocol(
                    "evaluation reported ok without a verdict".into(),
                ))
            }
        },
        AgentRole::Deployment => RoutePlan {
            next: Stage::Idle,
            action: RouteAction::Finish,
        },
    })
}

pub(crate) fn apply_route(blackboard: &mut Blackboard, plan: &RoutePlan) {
    if plan.action == RouteAction::Retry {
        blackboard.retries += 1;
    } else {
        blackboard.retries = 0;
    }
    match &plan.action {
        RouteAction::OpenEvent(reason) => {
            let (pre, baseline) = blackboard
                .monitor_reading
                .as_ref()
                .map_or((f64::NEG_INFINITY, f64::NEG_INFINITY), |r| {
                    (r.movable_gain_db, r.fixed_gain_db)
                });
            open_event(blackboard, *reason, pre, baseline);
        }
        RouteAction::ForceDeploy => {
            blackboard.force_deploy = true;
            if blackboard.best_candidate.is_some() {
                blackboard.candidate_solution = blackboard.best_candidate.clone();
            }
        }
        RouteAction::Retrain => {
            blackboard.evaluation_verdict = None;
        }
        RouteAction::Abort(error) => {
            if let Some(mut event) = blackboard.open_event.take() {
                event.post_gain_db = event.pre_gain_db;
                event.outcome = EventOutcome::Aborted {
                    error: error.clone(),
                };
                blackboard.append_event(event);
            }
            blackboard.clear_event_scratch();
        }
        RouteAction::Advance | RouteAction::Retry | RouteAction::Finish => {}
    }
    blackboard.stage = plan.next;
}

fn open_event(blackboard: &mut Blackboard, reason: TriggerReason, pre_gain_db: f64, baseline_gain_db: f64) {
    blackboard.clear_event_scratch();
    blackboard.open_event = Some(EvolutionEvent {
        trigger_step: blackboard.step_index,
        reason,
        pre_gain_db,
        post_gain_db: pre_gain_db,
        baseline_gain_db,
        agent_sequence: Vec::new(),
        training_rounds: 0,
        outcome: EventOutcome::Completed,
    });
}

/// Starts the fixed-to-movable upgrade cycle directly at data collection.
pub(crate) fn begin_hardware_upgrade(blackboard: &mut Blackboard, fixed_gain_db: f64) {
    open_event(
        blackboard,
        TriggerReason::HardwareChange,
        fixed_gain_db,
        fixed_gain_db,
    );
    blackboard.retries = 0;
    blackboard.stage = Stage::Active(AgentRole::DataCollection);
}

/// Deterministic supervisor: plans the route for `last_report` and applies it.
pub fn supervisor_next(blackboard: &mut Blackboard, last_report: &AgentReport) -> Result<Stage> {
    let plan = plan_route(blackboard, last_report)?;
    apply_route(blackboard, &plan);
    Ok(plan.next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoutingSource {
    Deterministic,
    Llm,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision {
    pub next: Stage,
    pub source: RoutingSource,
    pub raw_response: Option<String>,
}

/// Something that decides the supervisor's next stage.
pub trait Router {
    fn route(&mut self, blackboard: &mut Blackboard, last_report: &AgentReport) -> Result<RoutingDecision>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicRouter;

impl Router for DeterministicRouter {
    fn route(&mut self, blackboard: &mut Blackboard, last_report: &AgentReport) -> Result<RoutingDecision> {
        Ok(RoutingDecision {
            next: supervisor_next(blackboard, last_report)?,
            source: RoutingSource::Deterministic,
            raw_response: None,
        })
    }
}
