//! isoforge: a deterministic simulation of a statically partitioned hypervisor,
//! plus the assessment harness used to probe its isolation guarantees.
//!
//! The crate is organised around the lifecycle of an assessment campaign:
//!
//! * [`hv`] — the simulated hypervisor itself: system configuration, the
//!   machine state, and the append-only execution trace. Eight isolation
//!   mechanisms can be individually weakened through seeded defects.
//! * [`surface`] — the guest-visible interface (paravirtual hypercalls and
//!   hardware-emulation traps) through which all workloads drive the machine.
//! * [`workloads`] — deterministic generators for fuzzing, fault injection,
//!   scripted tests, covert-channel probe pairs, and the background
//!   workloads that stand in for regular guests.
//! * [`monitor`] — an independent observer that replays the trace against
//!   the declared configuration and reports isolation violations.
//! * [`certmap`] — the mapping between enforcement mechanisms, assessment
//!   techniques, and certification requirements, with coverage scoring.
//! * [`orchestrator`] — campaign loading, execution (optionally across
//!   worker threads), the results log, and evidence rendering.
//!
//! Everything is deterministic: a campaign document plus its seeds fully
//! determines every trace byte, so runs replay and digest-check identically
//! across platforms and thread counts.

pub mod certmap;
pub mod hv;
pub mod mech;
pub mod monitor;
pub mod orchestrator;
pub mod surface;
pub mod workloads;

pub use hv::{SpecError, SystemSpec, SystemState, TraceEvent};
pub use mech::{DefectId, MechanismId};
pub use monitor::{
    BaselineMetrics, Monitor, MonitorConfig, MonitorReport, PropertyId, Violation,
};
pub use orchestrator::{
    emit_evidence, load_campaign, load_system, replay_case, run_campaign, Campaign,
    CampaignError, CampaignResults, EvidenceFormat,
};

/// Render bytes as lowercase hex (used for trace digests).
pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        use std::fmt::Write;
        let _ = write!(s, "{b:02x}");
    }
    s
}
