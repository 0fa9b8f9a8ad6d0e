//! Campaign orchestration: load a campaign document, run its cases against
//! fresh machine instances, and render the results as a results log plus an
//! evidence package.
//!
//! The execution model is reset-per-case: the system is booted once, a
//! snapshot is taken, and every case restores from that snapshot, so no
//! state crosses case boundaries. Case-level parallelism runs independent
//! simulator+monitor instances and merges results by case id, which makes
//! the output independent of the worker count.

mod evidence;
mod runner;
mod schema;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::certmap::{CoverageInputs, CoverageReport, TechniqueTag};
use crate::hv::{PartId, SystemSpec, TraceEvent};
use crate::monitor::{BaselineMetrics, MonitorConfig, MonitorReport};
use crate::workloads::{FaultPlan, FuzzPolicy, TestCase};

pub use evidence::{
    emit_evidence, read_results_log, replay_all, replay_case, results_from_log,
    write_results_log, EvidenceFormat, LogRecord, ReplayOutcome,
};
pub use runner::run_campaign;
pub use schema::{load_campaign, load_system};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CampaignError {
    #[error("campaign schema error at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("unknown defect {0:?}")]
    UnknownDefect(String),
    #[error("unknown workload profile {0:?}")]
    UnknownProfile(String),
    #[error("results log has no case {0}")]
    UnknownCase(u64),
    #[error("malformed results log: {0}")]
    BadLog(String),
}

/// One technique block of a campaign, fully resolved (partition indices,
/// parsed scripts) and still serializable for the campaign echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TechniqueSpec {
    Fuzz {
        seed: u64,
        count: usize,
        policy: FuzzPolicy,
    },
    FaultInjection {
        seed: u64,
        plan: FaultPlan,
    },
    Scripted {
        script: String,
        target: PartId,
    },
    CovertProbe {
        seed: u64,
        n_bits: usize,
        sender: PartId,
        receiver: PartId,
    },
}

/// A validated, runnable campaign. The serialized form is the canonical
/// echo embedded in logs and evidence; it uses resolved indices, not the
/// name-based references of the input document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub name: String,
    pub spec: SystemSpec,
    pub monitor: MonitorConfig,
    pub techniques: Vec<TechniqueSpec>,
    pub frames_per_case: u64,
    /// Worker threads; an execution-host detail, so it is excluded from
    /// the canonical echo (results must not depend on it).
    #[serde(skip, default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    /// The case ran its program to the end of its frame budget.
    Completed,
    /// A test partition ended the case halted (HALT trap or injected
    /// crash); the orchestrator reset the machine afterwards as usual.
    HvReset,
}

/// Everything recorded about one executed case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: TestCase,
    pub frames: u64,
    pub status: CaseStatus,
    pub trace_digest: String,
    pub events_total: u64,
    pub report: MonitorReport,
    /// Stored trace (up to the cap); serialized through the results log as
    /// individual event records, not inline here.
    #[serde(skip)]
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResults {
    pub campaign: Campaign,
    pub baseline: BaselineMetrics,
    pub baseline_digest: String,
    /// Ordered by case id regardless of execution order.
    pub cases: Vec<CaseResult>,
    /// Wall-clock milliseconds; excluded from canonical renderings.
    #[serde(skip)]
    pub wall_ms: u64,
}

impl CampaignResults {
    pub fn total_violations(&self) -> usize {
        self.cases.iter().map(|c| c.report.violations.len()).sum()
    }

    /// Distill the evidence the certification mapping consumes.
    pub fn coverage_inputs(&self) -> CoverageInputs {
        let mut inputs = CoverageInputs::default();
        let mut tsfi = BTreeSet::new();
        for c in &self.cases {
            inputs
                .mechanisms_exercised
                .extend(c.report.mechanisms_exercised.iter().copied());
            for v in &c.report.violations {
                inputs.violated_mechanisms.extend(v.mechanisms.iter().copied());
            }
            inputs.techniques_run.insert(TechniqueTag::from(c.case.technique));
            tsfi.extend(c.report.tsfi_exercised.iter().cloned());
        }
        inputs.tsfi_covered = tsfi.len();
        inputs
    }

    pub fn coverage(&self) -> CoverageReport {
        crate::certmap::coverage(&self.coverage_inputs())
    }

    /// Digest over the canonical machine evidence rendering; equal digests
    /// mean equal results in every field that matters.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let doc = emit_evidence(self, EvidenceFormat::Machine);
        crate::hex(&Sha256::digest(doc.as_bytes()))
    }
}
