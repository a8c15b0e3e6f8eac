//! Machine-readable run report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use yamabe_core::iteration::{IterationTrace, Residual, StepRecord};
use yamabe_core::spectral::{EigenResult, SignReport};
use yamabe_core::subsuper::{Constants, PairCheck, Recipe};
use yamabe_core::verify::{CurvatureReport, ObstructionReport};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    VerificationFailed,
    ConfigError,
    NoRecipe,
    NumericalFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Passed => 0,
            Status::ConfigError => 2,
            Status::NoRecipe => 3,
            Status::VerificationFailed | Status::NumericalFailure => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub eigenvalue: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub eigenvector_min: f64,
    pub eigenvector_max: f64,
}

impl From<&EigenResult> for EigenSummary {
    fn from(e: &EigenResult) -> Self {
        Self {
            eigenvalue: e.eigenvalue,
            residual_norm: e.residual_norm,
            iterations: e.iterations,
            eigenvector_min: e.eigenvector.min(),
            eigenvector_max: e.eigenvector.max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub recipe: Recipe,
    pub hypothesis: String,
    pub verified: bool,
    pub lambda: Option<f64>,
    pub lower_min: f64,
    pub upper_max: f64,
    pub check: PairCheck,
    pub constants: Constants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub total_steps: usize,
    pub converged: bool,
    pub shift: f64,
    pub tol_sup: f64,
    pub tol_residual: f64,
    pub tol_mono: f64,
    /// Largest step-to-step increase over the run.
    pub max_monotone_violation: Option<f64>,
    /// Largest excursion outside the pair over the run.
    pub max_bound_violation: Option<f64>,
    pub final_residual: Residual,
    pub steps: Vec<StepRecord>,
}

impl From<&IterationTrace> for TraceSummary {
    fn from(t: &IterationTrace) -> Self {
        let finite_max = |f: fn(&StepRecord) -> f64| {
            t.steps.iter().map(f).filter(|v| v.is_finite()).reduce(f64::max)
        };
        Self {
            total_steps: t.total_steps,
            converged: t.converged,
            shift: t.settings.shift,
            tol_sup: t.settings.tol_sup,
            tol_residual: t.settings.tol_residual,
            tol_mono: t.settings.tol_mono,
            max_monotone_violation: finite_max(|s| s.max_monotone_violation),
            max_bound_violation: finite_max(|s| s.max_bound_violation),
            final_residual: t.final_residual,
            steps: t.steps.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsLevel {
    pub shape: Vec<usize>,
    pub h_max: f64,
    pub max_error: f64,
    pub exact_residual_sup: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsReport {
    pub amplitude: f64,
    pub levels: Vec<MmsLevel>,
    pub error_order: f64,
    pub residual_order: f64,
    pub required_order: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionEntry {
    pub factor: String,
    #[serde(flatten)]
    pub check: ObstructionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub name: String,
    /// Header path relative to the report.
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub stages: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: Option<serde_json::Value>,
    pub status: Status,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign_report: Option<SignReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robin: Option<EigenSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dirichlet: Option<EigenSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairSummary>,
    /// Factor `c` applied to the boundary data of the final solution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background_trace: Option<TraceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curvature: Option<CurvatureReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mms: Option<MmsReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub obstruction: Vec<ObstructionEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub dumps: Vec<DumpEntry>,
    pub timings: Timings,
}

impl RunReport {
    pub fn new(config: Option<serde_json::Value>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            status: Status::Passed,
            exit_code: 0,
            error: None,
            sign_report: None,
            robin: None,
            dirichlet: None,
            pair: None,
            boundary_scale: None,
            background_trace: None,
            trace: None,
            curvature: None,
            mms: None,
            obstruction: Vec::new(),
            dumps: Vec::new(),
            timings: Timings::default(),
        }
    }

    pub fn finish(&mut self, status: Status, error: Option<String>) {
        self.status = status;
        self.exit_code = status.exit_code();
        self.error = error;
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
