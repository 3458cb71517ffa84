use log::debug;

use super::agents::{agent_execute, Services};
use super::supervisor::{begin_hardware_upgrade, DeterministicRouter, Router, RoutingSource};
use super::{AgentRole, Blackboard, EvolutionEvent, MetricsRecord, Stage};
use crate::channel::generate_trajectory;
use crate::error::{Error, Result};
use crate::optimizer::fixed_baseline;
use crate::scenario::ScenarioConfig;

/// Upper bound on agent invocations within one step.
const MAX_TRANSITIONS_PER_STEP: usize = 200;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoutingCounts {
    pub deterministic: usize,
    pub llm: usize,
    pub fallback: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub metrics: Vec<MetricsRecord>,
    pub events: Vec<EvolutionEvent>,
    pub routing: RoutingCounts,
}

/// Runs a scenario with the deterministic supervisor.
pub fn run_episode(scenario: &ScenarioConfig) -> Result<EpisodeOutcome> {
    run_episode_with(scenario, &mut DeterministicRouter)
}

/// Runs a scenario, asking `router` for every supervisor decision.
///
/// Step 0 performs the fixed-to-movable upgrade. Every later step advances the
/// trajectory, runs monitoring and, when it fires, the full agent cycle. Failed
/// or aborted events are recorded in the event log; only configuration and
/// protocol errors are returned.
pub fn run_episode_with(scenario: &ScenarioConfig, router: &mut dyn Router) -> Result<EpisodeOutcome> {
    scenario
        .validate()
        .map_err(|e| Error::Validation(e.to_string()))?;
    let trajectory = generate_trajectory(&scenario.trajectory_config())?;
    let optimizer = scenario.optimizer_config();
    let mut bb = Blackboard::new(scenario.constraints, scenario.monitoring.max_training_rounds);
    let mut routing = RoutingCounts::default();

    for (step, truth) in trajectory.iter().enumerate() {
        bb.step_index = step;
        bb.evolved_this_step = false;
        let services = Services {
            true_angles: truth,
            optimizer: &optimizer,
            estimator: &scenario.estimation,
            snr_db: scenario.csi.snr_db,
            num_snapshots: scenario.csi.num_snapshots,
            relative_drop_threshold_db: scenario.monitoring.relative_drop_threshold_db,
            forced_strategy: scenario.forced_strategy,
            seed: scenario.seed,
        };

        if step == 0 {
            let fixed = fixed_baseline(truth, &bb.constraints)?;
            begin_hardware_upgrade(&mut bb, fixed.gain_db);
            bb.baseline_solution = Some(fixed);
        } else {
            bb.stage = Stage::Active(AgentRole::Monitoring);
        }

        let mut transitions = 0;
        while let Stage::Active(role) = bb.stage {
            transitions += 1;
            if transitions > MAX_TRANSITIONS_PER_STEP {
                return Err(Error::Protocol(format!(
                    "step {step} exceeded {MAX_TRANSITIONS_PER_STEP} agent invocations"
                )));
            }
            if let Some(event) = bb.open_event.as_mut() {
                event.agent_sequence.push(role);
            }
            let report = agent_execute(role, &mut bb, &services);
            debug!("step {step} {role}: {}", report.message);
            let decision = router.route(&mut bb, &report)?;
            match decision.source {
                RoutingSource::Deterministic => routing.deterministic += 1,
                RoutingSource::Llm => routing.llm += 1,
                RoutingSource::Fallback => routing.fallback += 1,
            }
        }

        close_step(&mut bb, step, truth)?;
    }

    let (metrics, events) = bb.into_histories();
    Ok(EpisodeOutcome {
        metrics,
        events,
        routing,
    })
}

fn close_step(bb: &mut Blackboard, step: usize, truth: &crate::array::DoaSet) -> Result<()> {
    let fixed = fixed_baseline(truth, &bb.constraints)?;
    let movable_db = match &bb.deployed_solution {
        Some(deployed) => deployed.gain_at(truth)?.db,
        None => fixed.gain_db,
    };
    let trigger_reason = bb
        .event_log()
        .iter()
        .rev()
        .find(|e| e.trigger_step == step)
        .map(|e| e.reason);
    let record = MetricsRecord {
        step,
        true_angles: truth.angles().to_vec(),
        estimated_angles: bb
            .latest_estimate
            .as_ref()
            .map(|e| e.angles.angles().to_vec())
            .unwrap_or_default(),
        movable_gain_db: movable_db,
        fixed_gain_db: fixed.gain_db,
        evolved: bb.evolved_this_step,
        trigger_reason,
    };
    if bb.deployed_solution.is_some() {
        bb.last_deployed_gain_db = Some(movable_db);
    }
    bb.append_metrics(record);
    Ok(())
}
