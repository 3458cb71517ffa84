//! Scenario configuration and the on-disk formats for metrics and event logs.
//!
//! Config files are TOML with a `schema_version` key. Metrics are written as
//! CSV with a fixed column order; the event log is TOML with one `[[events]]`
//! table per evolution event.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{ArrayConstraints, DoaSet, DEFAULT_NUM_ELEMENTS, DEFAULT_WAVELENGTH};
use crate::channel::{Drift, TrajectoryConfig, DEFAULT_NUM_SNAPSHOTS};
use crate::doa::EstimatorConfig;
use crate::lifecycle::{
    EvolutionEvent, MetricsRecord, TriggerReason, DEFAULT_MAX_TRAINING_ROUNDS,
    DEFAULT_RELATIVE_DROP_DB,
};
use crate::llm::EndpointSettings;
use crate::optimizer::{OptimizerConfig, Strategy};
use crate::seed::{derive_seed, stream};

pub const SCHEMA_VERSION: u32 = 1;

/// Metrics table columns, in order.
pub const METRICS_COLUMNS: [&str; 7] = [
    "step",
    "movable_gain_db",
    "fixed_gain_db",
    "evolved",
    "trigger_reason",
    "true_angles",
    "estimated_angles",
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    /// Bad or missing config value; `path` is the dotted field path.
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl ScenarioError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySettings {
    pub num_steps: usize,
    pub initial_angles: DoaSet,
    pub drift: Drift,
    #[serde(default = "default_angle_bounds")]
    pub angle_bounds: (f64, f64),
}

fn default_angle_bounds() -> (f64, f64) {
    (5.0, 175.0)
}

/// Constraint section; omitted values follow the wavelength.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintSettings {
    pub wavelength: Option<f64>,
    pub num_elements: Option<usize>,
    pub min_spacing: Option<f64>,
    pub position_bound: Option<f64>,
}

impl ConstraintSettings {
    pub fn resolve(&self) -> ArrayConstraints {
        let wavelength = self.wavelength.unwrap_or(DEFAULT_WAVELENGTH);
        let base = ArrayConstraints::for_wavelength(
            wavelength,
            self.num_elements.unwrap_or(DEFAULT_NUM_ELEMENTS),
        );
        ArrayConstraints {
            min_spacing: self.min_spacing.unwrap_or(base.min_spacing),
            position_bound: self.position_bound.unwrap_or(base.position_bound),
            ..base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitoringSettings {
    pub relative_drop_threshold_db: f64,
    pub max_training_rounds: usize,
}

impl Default for MonitoringSettings {
    fn default() -> Self {
        Self {
            relative_drop_threshold_db: DEFAULT_RELATIVE_DROP_DB,
            max_training_rounds: DEFAULT_MAX_TRAINING_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsiSettings {
    pub snr_db: f64,
    pub num_snapshots: usize,
}

impl Default for CsiSettings {
    fn default() -> Self {
        Self {
            snr_db: 10.0,
            num_snapshots: DEFAULT_NUM_SNAPSHOTS,
        }
    }
}

/// Everything needed to run one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Strategy used by every training round; `None` lets model selection decide.
    pub forced_strategy: Option<Strategy>,
    pub trajectory: TrajectorySettings,
    pub constraints: ArrayConstraints,
    pub optimizer: OptimizerConfig,
    pub monitoring: MonitoringSettings,
    pub csi: CsiSettings,
    pub estimation: EstimatorConfig,
    pub llm: Option<EndpointSettings>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    forced_strategy: Option<Strategy>,
    trajectory: TrajectorySettings,
    #[serde(default)]
    constraints: ConstraintSettings,
    #[serde(default)]
    optimizer: OptimizerConfig,
    #[serde(default)]
    monitoring: MonitoringSettings,
    #[serde(default)]
    csi: CsiSettings,
    #[serde(default)]
    estimation: EstimatorConfig,
    #[serde(default)]
    llm: Option<EndpointSettings>,
}

impl Default for ScenarioConfig {
    /// Eight elements at 2.4 GHz serving three UAVs drifting for 50 steps.
    fn default() -> Self {
        Self {
            seed: 42,
            forced_strategy: None,
            trajectory: TrajectorySettings {
                num_steps: 50,
                initial_angles: DoaSet::new(vec![45.0, 90.0, 130.0]).expect("valid angles"),
                drift: Drift::RandomWalk {
                    sigma_deg_per_step: 1.0,
                },
                angle_bounds: default_angle_bounds(),
            },
            constraints: ArrayConstraints::default(),
            optimizer: OptimizerConfig::default(),
            monitoring: MonitoringSettings::default(),
            csi: CsiSettings::default(),
            estimation: EstimatorConfig::default(),
            llm: None,
        }
    }
}

impl ScenarioConfig {
    /// Parses TOML text. Errors name the offending field path.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let de = toml::de::Deserializer::parse(text)
            .map_err(|e| ScenarioError::invalid("<document>", e.to_string()))?;
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "<document>".to_string() } else { path };
            ScenarioError::invalid(path, e.into_inner().message().trim().to_string())
        })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", file.schema_version),
            ));
        }
        let config = Self {
            seed: file.seed,
            forced_strategy: file.forced_strategy,
            trajectory: file.trajectory,
            constraints: file.constraints.resolve(),
            optimizer: file.optimizer,
            monitoring: file.monitoring,
            csi: file.csi,
            estimation: file.estimation,
            llm: file.llm,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ScenarioFile {
            schema_version: SCHEMA_VERSION,
            seed: self.seed,
            forced_strategy: self.forced_strategy,
            trajectory: self.trajectory.clone(),
            constraints: ConstraintSettings {
                wavelength: Some(self.constraints.wavelength),
                num_elements: Some(self.constraints.num_elements),
                min_spacing: Some(self.constraints.min_spacing),
                position_bound: Some(self.constraints.position_bound),
            },
            optimizer: self.optimizer.clone(),
            monitoring: self.monitoring,
            csi: self.csi,
            estimation: self.estimation,
            llm: self.llm.clone(),
        };
        toml::to_string_pretty(&file).expect("scenario is always representable")
    }

    /// Cross-field checks. Errors name the field path.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.constraints
            .validate()
            .map_err(|e| ScenarioError::invalid("constraints.min_spacing", e.to_string()))?;
        self.trajectory_config()
            .validate()
            .map_err(|e| ScenarioError::invalid("trajectory", e.to_string()))?;
        let k = self.trajectory.initial_angles.len();
        if k >= self.constraints.num_elements {
            return Err(ScenarioError::invalid(
                "trajectory.initial_angles",
                format!(
                    "{k} UAVs need more than {k} elements, constraints.num_elements is {}",
                    self.constraints.num_elements
                ),
            ));
        }
        self.optimizer
            .validate()
            .map_err(|e| ScenarioError::invalid("optimizer", e.to_string()))?;
        self.estimation
            .validate()
            .map_err(|e| ScenarioError::invalid("estimation", e.to_string()))?;
        if !self.csi.snr_db.is_finite() {
            return Err(ScenarioError::invalid("csi.snr_db", "must be finite"));
        }
        if self.csi.num_snapshots == 0 {
            return Err(ScenarioError::invalid("csi.num_snapshots", "must be at least 1"));
        }
        let drop = self.monitoring.relative_drop_threshold_db;
        if drop.is_nan() || drop < 0.0 {
            return Err(ScenarioError::invalid(
                "monitoring.relative_drop_threshold_db",
                "must be non-negative",
            ));
        }
        if self.monitoring.max_training_rounds == 0 {
            return Err(ScenarioError::invalid(
                "monitoring.max_training_rounds",
                "must be at least 1",
            ));
        }
        if let Some(llm) = &self.llm {
            llm.validate()
                .map_err(|e| ScenarioError::invalid("llm", e.to_string()))?;
        }
        Ok(())
    }

    /// Trajectory with its seed derived from the scenario seed.
    pub fn trajectory_config(&self) -> TrajectoryConfig {
        TrajectoryConfig {
            num_steps: self.trajectory.num_steps,
            initial_angles: self.trajectory.initial_angles.clone(),
            drift: self.trajectory.drift.clone(),
            angle_bounds: self.trajectory.angle_bounds,
            seed: derive_seed(self.seed, stream::TRAJECTORY, 0),
        }
    }

    /// Optimizer settings with the seed derived from the scenario seed.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: derive_seed(self.seed, stream::OPTIMIZER, 0),
            ..self.optimizer.clone()
        }
    }
}

/// Six-decimal rendering used for every gain and angle in the metrics table.
pub fn format_fixed(value: f64) -> String {
    if value.is_finite() {
        format!("{value:.6}")
    } else if value.is_nan() {
        "nan".to_string()
    } else if value > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn format_angles(angles: &[f64]) -> String {
    angles
        .iter()
        .map(|a| format_fixed(*a))
        .collect::<Vec<_>>()
        .join(";")
}

/// Serializes metrics as CSV with the [`METRICS_COLUMNS`] header.
pub fn metrics_to_csv(records: &[MetricsRecord]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(METRICS_COLUMNS).expect("in-memory write");
    for r in records {
        writer
            .write_record([
                r.step.to_string(),
                format_fixed(r.movable_gain_db),
                format_fixed(r.fixed_gain_db),
                r.evolved.to_string(),
                r.trigger_reason.map(|t| t.as_str().to_string()).unwrap_or_default(),
                format_angles(&r.true_angles),
                format_angles(&r.estimated_angles),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// Parses a metrics table written by [`metrics_to_csv`].
pub fn metrics_from_csv(text: &str) -> Result<Vec<MetricsRecord>, ScenarioError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| ScenarioError::invalid("metrics.header", e.to_string()))?;
    if header.iter().ne(METRICS_COLUMNS) {
        return Err(ScenarioError::invalid(
            "metrics.header",
            format!("expected columns {}", METRICS_COLUMNS.join(",")),
        ));
    }
    let mut records = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let rec = result.map_err(|e| ScenarioError::invalid(format!("metrics[{row}]"), e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |column: &str, e: &dyn std::fmt::Display| {
            ScenarioError::invalid(format!("metrics[{row}].{column}"), e.to_string())
        };
        let float = |i: usize| -> Result<f64, ScenarioError> {
            field(i).parse::<f64>().map_err(|e| bad(METRICS_COLUMNS[i], &e))
        };
        let angles = |i: usize| -> Result<Vec<f64>, ScenarioError> {
            if field(i).is_empty() {
                return Ok(Vec::new());
            }
            field(i)
                .split(';')
                .map(|s| s.parse::<f64>().map_err(|e| bad(METRICS_COLUMNS[i], &e)))
                .collect()
        };
        records.push(MetricsRecord {
            step: field(0).parse().map_err(|e| bad("step", &e))?,
            movable_gain_db: float(1)?,
            fixed_gain_db: float(2)?,
            evolved: field(3).parse().map_err(|e| bad("evolved", &e))?,
            trigger_reason: match field(4) {
                "" => None,
                s => Some(s.parse::<TriggerReason>().map_err(|e| bad("trigger_reason", &e))?),
            },
            true_angles: angles(5)?,
            estimated_angles: angles(6)?,
        });
    }
    Ok(records)
}

#[derive(Debug, Serialize, Deserialize)]
struct EventLogFile {
    schema_version: u32,
    #[serde(default)]
    events: Vec<EvolutionEvent>,
}

/// Serializes the event log as TOML. Floats are written in shortest
/// round-trip form, so [`events_from_toml`] restores them exactly.
pub fn events_to_toml(events: &[EvolutionEvent]) -> String {
    let file = EventLogFile {
        schema_version: SCHEMA_VERSION,
        events: events.to_vec(),
    };
    let mut out = String::new();
    let _ = writeln!(out, "# evolution events: {}", events.len());
    out.push_str(&toml::to_string_pretty(&file).expect("events are always representable"));
    out
}

pub fn events_from_toml(text: &str) -> Result<Vec<EvolutionEvent>, ScenarioError> {
    let de = toml::de::Deserializer::parse(text)
        .map_err(|e| ScenarioError::invalid("<events>", e.to_string()))?;
    let file: EventLogFile = serde_path_to_error::deserialize(de).map_err(|e| {
        ScenarioError::invalid(e.path().to_string(), e.into_inner().message().trim().to_string())
    })?;
    Ok(file.events)
}
