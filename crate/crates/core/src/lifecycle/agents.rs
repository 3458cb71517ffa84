//! Role agents. Each reads its prerequisites from the blackboard, does one unit
//! of work and reports; errors become `fail` reports, never panics.

use super::{
    monitoring_check, AgentReport, AgentRole, Blackboard, EventOutcome, MonitorReading, Stage,
    TriggerReason, Verdict, EVALUATION_REGRESSION_SLACK_DB,
};
use crate::array::{ArrayGeometry, DoaSet};
use crate::channel::synthesize_csi;
use crate::doa::{estimate_from_batch, EstimatorConfig};
use crate::optimizer::{fixed_baseline, optimize_movable, OptimizerConfig, Strategy};
use crate::seed::{derive_seed, stream};

/// Largest `K * N` for which gradient alternation is selected.
const GRADIENT_STRATEGY_MAX_PRODUCT: usize = 64;

/// Everything the agents may consult besides the blackboard: the world at the
/// current step and the solver settings.
#[derive(Debug, Clone, Copy)]
pub struct Services<'a> {
    /// Ground truth for the current step. Only the channel simulator and the
    /// gain measurements see it.
    pub true_angles: &'a DoaSet,
    pub optimizer: &'a OptimizerConfig,
    pub estimator: &'a EstimatorConfig,
    pub snr_db: f64,
    pub num_snapshots: usize,
    pub relative_drop_threshold_db: f64,
    /// Overrides the model-selection rule when set.
    pub forced_strategy: Option<Strategy>,
    pub seed: u64,
}

/// Runs `role` against the blackboard.
pub fn agent_execute(role: AgentRole, blackboard: &mut Blackboard, services: &Services<'_>) -> AgentReport {
    if blackboard.stage != Stage::Active(role) {
        return AgentReport::fail(
            role,
            format!("stage is {} but {role} was invoked", blackboard.stage),
        );
    }
    match role {
        AgentRole::DataCollection => data_collection(blackboard, services),
        AgentRole::ModelSelection => model_selection(blackboard, services),
        AgentRole::Training => training(blackboard, services),
        AgentRole::Evaluation => evaluation(blackboard),
        AgentRole::Deployment => deployment(blackboard),
        AgentRole::Monitoring => monitoring(blackboard, services),
    }
}

fn data_collection(bb: &mut Blackboard, services: &Services<'_>) -> AgentReport {
    let role = AgentRole::DataCollection;
    // CSI is sensed on the uniform reference placement, where angles are unambiguous.
    let geometry = match ArrayGeometry::uniform(bb.constraints) {
        Ok(g) => g,
        Err(e) => return AgentReport::fail(role, e.to_string()),
    };
    let csi_seed = derive_seed(
        derive_seed(services.seed, stream::CSI, bb.step_index as u64),
        stream::CSI,
        bb.retries as u64,
    );
    let batch = match synthesize_csi(
        &geometry,
        services.true_angles,
        services.snr_db,
        services.num_snapshots,
        csi_seed,
    ) {
        Ok(b) => b,
        Err(e) => return AgentReport::fail(role, e.to_string()),
    };
    let k = services.true_angles.len();
    let estimate = match estimate_from_batch(&batch, &geometry, k, services.estimator) {
        Ok(e) => e,
        Err(e) => return AgentReport::fail(role, e.to_string()),
    };
    let message = format!(
        "estimated {k} DoAs {:?} from {} snapshots at {} dB SNR ({:?} confidence)",
        estimate.angles.angles(),
        services.num_snapshots,
        services.snr_db,
        estimate.confidence
    );
    bb.latest_csi = Some(batch);
    bb.latest_estimate = Some(estimate);
    AgentReport::ok(role, message, vec!["latest_csi", "latest_estimate"])
}

fn model_selection(bb: &mut Blackboard, services: &Services<'_>) -> AgentReport {
    let role = AgentRole::ModelSelection;
    let Some(estimate) = &bb.latest_estimate else {
        return AgentReport::fail(role, "latest_estimate missing");
    };
    let product = estimate.angles.len() * bb.constraints.num_elements;
    let strategy = if let Some(forced) = services.forced_strategy {
        forced
    } else if product <= GRADIENT_STRATEGY_MAX_PRODUCT {
        Strategy::GradientAlternating
    } else {
        Strategy::CoordinateSearch
    };
    bb.selected_strategy = Some(strategy);
    AgentReport::ok(
        role,
        format!("K*N = {product}, selected {strategy}"),
        vec!["selected_strategy"],
    )
}

fn training(bb: &mut Blackboard, services: &Services<'_>) -> AgentReport {
    let role = AgentRole::Training;
    let Some(estimate) = &bb.latest_estimate else {
        return AgentReport::fail(role, "latest_estimate missing");
    };
    let Some(strategy) = bb.selected_strategy else {
        return AgentReport::fail(role, "selected_strategy missing");
    };
    let round = bb.open_event.as_ref().map_or(0, |e| e.training_rounds);
    let config = OptimizerConfig {
        strategy,
        seed: derive_seed(services.optimizer.seed, bb.step_index as u64, round as u64),
        ..services.optimizer.clone()
    };
    let candidate = match optimize_movable(&estimate.angles, &config, &bb.constraints) {
        Ok(s) => s,
        Err(e) => return AgentReport::fail(role, e.to_string()),
    };
    let message = format!(
        "round {}: {strategy} reached {:.4} dB (converged {}, {} iterations, restart {})",
        round + 1,
        candidate.gain_db,
        candidate.converged,
        candidate.iterations,
        candidate.restart
    );
    if bb
        .best_candidate
        .as_ref()
        .is_none_or(|b| candidate.gain_linear > b.gain_linear)
    {
        bb.best_candidate = Some(candidate.clone());
    }
    bb.candidate_solution = Some(candidate);
    if let Some(event) = bb.open_event.as_mut() {
        event.training_rounds += 1;
    }
    AgentReport::ok(role, message, vec!["candidate_solution"])
}

fn evaluation(bb: &mut Blackboard) -> AgentReport {
    let role = AgentRole::Evaluation;
    let Some(candidate) = &bb.candidate_solution else {
        return AgentReport::fail(role, "candidate_solution missing");
    };
    let Some(estimate) = &bb.latest_estimate else {
        return AgentReport::fail(role, "latest_estimate missing");
    };
    let baseline = match fixed_baseline(&estimate.angles, &bb.constraints) {
        Ok(b) => b,
        Err(e) => return AgentReport::fail(role, e.to_string()),
    };
    let reference_db = bb
        .open_event
        .as_ref()
        .map_or(baseline.gain_db, |e| e.pre_gain_db);

    let beats_baseline = candidate.gain_linear >= baseline.gain_linear - 1e-9;
    let holds_level = candidate.gain_db >= reference_db - EVALUATION_REGRESSION_SLACK_DB;
    let verdict = if !beats_baseline {
        Verdict::Fail(format!(
            "candidate {:.4} dB is below the fixed baseline {:.4} dB",
            candidate.gain_db, baseline.gain_db
        ))
    } else if !holds_level {
        Verdict::Fail(format!(
            "candidate {:.4} dB regresses from the pre-trigger {:.4} dB",
            candidate.gain_db, reference_db
        ))
    } else {
        Verdict::Pass
    };
    let message = format!(
        "candidate {:.4} dB vs baseline {:.4} dB, converged {}, {} iterations: {:?}",
        candidate.gain_db, baseline.gain_db, candidate.converged, candidate.iterations, verdict
    );
    if let Some(event) = bb.open_event.as_mut() {
        event.baseline_gain_db = baseline.gain_db;
    }
    bb.evaluation_verdict = Some(verdict);
    AgentReport::ok(role, message, vec!["evaluation_verdict"])
}

fn deployment(bb: &mut Blackboard) -> AgentReport {
    let role = AgentRole::Deployment;
    let approved = matches!(bb.evaluation_verdict, Some(Verdict::Pass)) || bb.force_deploy;
    if !approved {
        return AgentReport::fail(role, "evaluation_verdict is not a pass");
    }
    let Some(candidate) = bb.candidate_solution.take() else {
        return AgentReport::fail(role, "candidate_solution missing");
    };
    let message = format!(
        "deployed positions {:?} wavelengths at {:.4} dB",
        candidate
            .geometry
            .positions_in_wavelengths()
            .iter()
            .map(|p| (p * 1e4).round() / 1e4)
            .collect::<Vec<_>>(),
        candidate.gain_db
    );
    if let Some(mut event) = bb.open_event.take() {
        event.post_gain_db = candidate.gain_db;
        event.outcome = if bb.force_deploy {
            EventOutcome::Degraded
        } else {
            EventOutcome::Completed
        };
        bb.append_event(event);
    }
    bb.deployed_solution = Some(candidate);
    bb.evolved_this_step = true;
    bb.clear_event_scratch();
    AgentReport::ok(role, message, vec!["deployed_solution", "event_log"])
}

fn monitoring(bb: &mut Blackboard, services: &Services<'_>) -> AgentReport {
    let role = AgentRole::Monitoring;
    let baseline = match fixed_baseline(services.true_angles, &bb.constraints) {
        Ok(b) => b,
        Err(e) => return AgentReport::fail(role, e.to_string()),
    };
    let (movable_db, decision) = match &bb.deployed_solution {
        Some(deployed) => {
            let gain = match deployed.gain_at(services.true_angles) {
                Ok(g) => g,
                Err(e) => return AgentReport::fail(role, e.to_string()),
            };
            let last = bb.last_deployed_gain_db.unwrap_or(gain.db);
            let decision = monitoring_check(
                gain.db,
                baseline.gain_db,
                last,
                services.relative_drop_threshold_db,
            );
            (gain.db, decision)
        }
        // movable hardware is present but the fixed array is still in service
        None => (
            baseline.gain_db,
            super::MonitoringDecision {
                trigger: true,
                reason: Some(TriggerReason::HardwareChange),
            },
        ),
    };
    let message = format!(
        "movable {movable_db:.4} dB vs fixed {:.4} dB: {}",
        baseline.gain_db,
        match decision.reason {
            Some(reason) => format!("trigger ({})", reason.as_str()),
            None => "no action".to_string(),
        }
    );
    bb.monitor_reading = Some(MonitorReading {
        movable_gain_db: movable_db,
        fixed_gain_db: baseline.gain_db,
        decision,
    });
    bb.baseline_solution = Some(baseline);
    bb.last_deployed_gain_db = Some(movable_db);
    AgentReport::ok(
        role,
        message,
        vec!["monitor_reading", "baseline_solution"],
    )
}
