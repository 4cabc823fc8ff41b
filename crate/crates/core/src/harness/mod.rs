//! Device abstraction, experiment orchestration, persistence, and report
//! assembly for cross-checking devices against each other.

pub mod device;
pub mod plots;
pub mod run;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::GraphError;
use crate::patterns::{default_grid, PatternError};
use crate::simulator::SimulatorError;
use crate::verifier::regression::RegressionResult;
use crate::verifier::{Estimate, L2Estimate, SanityFlag, VerifierError};

pub use device::{BackendSpec, DeviceRegistry, DeviceSpec, Job};
pub use run::{recompute_report, run_experiment, self_verify};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("plan invalid: {0}")]
    PlanInvalid(String),
    #[error("device `{device}` failed on job `{job}`: {message}")]
    DeviceFailure { device: String, job: String, message: String },
    #[error("no persisted distributions for plotting; run with theory columns enabled")]
    MissingDistributions,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code contract: 2 plan invalid, 3 device failure,
    /// 4 verification data incomplete, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::PlanInvalid(_) => 2,
            HarnessError::DeviceFailure { .. } => 3,
            HarnessError::MissingDistributions => 4,
            _ => 1,
        }
    }
}

/// One device slot in a plan: which registered device runs which flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDevice {
    pub device_id: String,
    pub flow: String,
}

/// Everything needed to reproduce an experiment byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// Builtin graph name (H6, BOX_2x4, BOX_2x5).
    pub graph: String,
    pub devices: Vec<PlanDevice>,
    #[serde(default = "default_instances")]
    pub instance_count: usize,
    #[serde(default = "default_subset")]
    pub comparison_subset: usize,
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default = "default_grid")]
    pub angle_grid: Vec<f64>,
    pub master_seed: u64,
    /// Outcomes assumed for vertices outside every output set (vertex -> bit).
    #[serde(default)]
    pub reference_bits: BTreeMap<u32, u8>,
    /// Pairs running equal-width circuits are rejected unless set.
    #[serde(default)]
    pub allow_equal_widths: bool,
    /// Compute exact columns and persist reference data for plots.
    #[serde(default = "default_true")]
    pub with_theory: bool,
    /// Stamp the report with wall-clock time (breaks byte reproducibility).
    #[serde(default)]
    pub timestamp: bool,
}

fn default_instances() -> usize {
    200
}
fn default_subset() -> usize {
    34
}
fn default_shots() -> u64 {
    10_000
}
fn default_true() -> bool {
    true
}

impl ExperimentPlan {
    pub fn new(graph: &str, devices: Vec<PlanDevice>, master_seed: u64) -> Self {
        Self {
            graph: graph.to_string(),
            devices,
            instance_count: default_instances(),
            comparison_subset: default_subset(),
            shots: default_shots(),
            angle_grid: default_grid(),
            master_seed,
            reference_bits: BTreeMap::new(),
            allow_equal_widths: false,
            with_theory: true,
            timestamp: false,
        }
    }
}

/// Squared distance results for one instance of one pair, on the reference
/// probability scale (see [`PairReport::scale_convention`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance: usize,
    pub l2: L2Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_l2: Option<f64>,
}

/// Pairwise comparison block of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    /// Device ids, smaller-output side first.
    pub pair: (String, String),
    pub flow_a: String,
    pub flow_b: String,
    pub scale: f64,
    pub n_variable: usize,
    pub n_shared: usize,
    /// Distances are reported on the probability scale of the smaller
    /// circuit: normalized variable-space distances multiplied by
    /// 4^(n_v - n_O_A), matching rescaled scatter coordinates.
    pub scale_convention: String,
    pub per_instance: Vec<InstanceResult>,
    pub aggregate: Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate_exact: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionResult>,
}

/// An instance excluded after repeated device failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRecord {
    pub pair: (String, String),
    pub instance: usize,
    pub job: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub master_seed: u64,
    pub shots_per_term: u64,
    pub instances_compared: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(default)]
    pub excluded: Vec<ExclusionRecord>,
}

/// Full cross-check report for a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub plan: ExperimentPlan,
    pub pairs: Vec<PairReport>,
    /// Mean distance of each device against all its partners.
    pub device_means: BTreeMap<String, Estimate>,
    /// Mean exact distance of each device against noiseless theory on its
    /// own circuit (not scalable; present when theory columns are on).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub device_theory: BTreeMap<String, Estimate>,
    pub sanity_flags: BTreeMap<String, SanityFlag>,
    pub metadata: RunMetadata,
}

impl CrossCheckReport {
    /// Canonical serialized form; stable byte-for-byte for a fixed plan
    /// and seeds (timestamps off).
    pub fn to_canonical_json(&self) -> Result<String, serde_json::Error> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}
