use serde::{Deserialize, Serialize};

use super::{EvolutionEvent, MetricsRecord, MonitoringDecision, Stage};
use crate::array::ArrayConstraints;
use crate::channel::CsiSnapshotBatch;
use crate::doa::DoaEstimate;
use crate::optimizer::{BeamformingSolution, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail(String),
}

/// Gains observed by the monitoring agent at the current true angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorReading {
    pub movable_gain_db: f64,
    pub fixed_gain_db: f64,
    pub decision: MonitoringDecision,
}

/// Shared state of the life cycle. Owned by the episode runner; agents write
/// their outputs here and the supervisor is the only writer of `stage`.
///
/// `metrics_history` and `event_log` only ever grow.
#[derive(Debug, Clone)]
pub struct Blackboard {
    pub(crate) step_index: usize,
    pub(crate) constraints: ArrayConstraints,
    pub(crate) stage: Stage,
    pub(crate) deployed_solution: Option<BeamformingSolution>,
    pub(crate) baseline_solution: Option<BeamformingSolution>,
    pub(crate) latest_csi: Option<CsiSnapshotBatch>,
    pub(crate) latest_estimate: Option<DoaEstimate>,
    pub(crate) selected_strategy: Option<Strategy>,
    pub(crate) candidate_solution: Option<BeamformingSolution>,
    pub(crate) best_candidate: Option<BeamformingSolution>,
    pub(crate) evaluation_verdict: Option<Verdict>,
    pub(crate) monitor_reading: Option<MonitorReading>,
    pub(crate) last_deployed_gain_db: Option<f64>,
    pub(crate) open_event: Option<EvolutionEvent>,
    pub(crate) force_deploy: bool,
    pub(crate) retries: usize,
    pub(crate) max_training_rounds: usize,
    pub(crate) evolved_this_step: bool,
    metrics_history: Vec<MetricsRecord>,
    event_log: Vec<EvolutionEvent>,
}

impl Blackboard {
    pub fn new(constraints: ArrayConstraints, max_training_rounds: usize) -> Self {
        Self {
            step_index: 0,
            constraints,
            stage: Stage::Idle,
            deployed_solution: None,
            baseline_solution: None,
            latest_csi: None,
            latest_estimate: None,
            selected_strategy: None,
            candidate_solution: None,
            best_candidate: None,
            evaluation_verdict: None,
            monitor_reading: None,
            last_deployed_gain_db: None,
            open_event: None,
            force_deploy: false,
            retries: 0,
            max_training_rounds,
            evolved_this_step: false,
            metrics_history: Vec::new(),
            event_log: Vec::new(),
        }
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn constraints(&self) -> &ArrayConstraints {
        &self.constraints
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn deployed_solution(&self) -> Option<&BeamformingSolution> {
        self.deployed_solution.as_ref()
    }

    pub fn baseline_solution(&self) -> Option<&BeamformingSolution> {
        self.baseline_solution.as_ref()
    }

    pub fn latest_csi(&self) -> Option<&CsiSnapshotBatch> {
        self.latest_csi.as_ref()
    }

    pub fn latest_estimate(&self) -> Option<&DoaEstimate> {
        self.latest_estimate.as_ref()
    }

    pub fn selected_strategy(&self) -> Option<Strategy> {
        self.selected_strategy
    }

    pub fn candidate_solution(&self) -> Option<&BeamformingSolution> {
        self.candidate_solution.as_ref()
    }

    pub fn evaluation_verdict(&self) -> Option<&Verdict> {
        self.evaluation_verdict.as_ref()
    }

    pub fn monitor_reading(&self) -> Option<&MonitorReading> {
        self.monitor_reading.as_ref()
    }

    pub fn open_event(&self) -> Option<&EvolutionEvent> {
        self.open_event.as_ref()
    }

    pub fn retries(&self) -> usize {
        self.retries
    }

    pub fn max_training_rounds(&self) -> usize {
        self.max_training_rounds
    }

    pub fn metrics_history(&self) -> &[MetricsRecord] {
        &self.metrics_history
    }

    pub fn event_log(&self) -> &[EvolutionEvent] {
        &self.event_log
    }

    pub(crate) fn append_metrics(&mut self, record: MetricsRecord) {
        self.metrics_history.push(record);
    }

    pub(crate) fn append_event(&mut self, event: EvolutionEvent) {
        self.event_log.push(event);
    }

    /// Clears per-event scratch fields once an event closes.
    pub(crate) fn clear_event_scratch(&mut self) {
        self.selected_strategy = None;
        self.candidate_solution = None;
        self.best_candidate = None;
        self.evaluation_verdict = None;
        self.force_deploy = false;
        self.open_event = None;
    }

    /// Test hook: put the board in an arbitrary stage.
    #[doc(hidden)]
    pub fn set_stage_for_test(&mut self, stage: Stage) {
        self.stage = stage;
    }

    /// Test hook: install a monitor reading.
    #[doc(hidden)]
    pub fn set_monitor_reading_for_test(&mut self, reading: MonitorReading) {
        self.monitor_reading = Some(reading);
    }

    /// Test hook: install an evaluation verdict.
    #[doc(hidden)]
    pub fn set_verdict_for_test(&mut self, verdict: Verdict) {
        self.evaluation_verdict = Some(verdict);
    }

    pub(crate) fn into_histories(self) -> (Vec<MetricsRecord>, Vec<EvolutionEvent>) {
        (self.metrics_history, self.event_log)
    }
}
