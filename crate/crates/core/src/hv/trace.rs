//! The append-only execution trace.
//!
//! Every observable thing the machine does becomes exactly one
//! [`TraceEvent`]. The trace is the single source of truth downstream: the
//! monitor consumes it, digests are computed over it, and the results log
//! stores it. Events serialize to one canonical JSON line each (fixed field
//! order, no floats), so digests are comparable across platforms.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::spec::{Access, PartId, RegionId};

/// Status code of a hypercall or trap; errors are values, never panics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "OK")]
    Ok,
    /// Malformed id, arity, or argument outside its declared domain.
    #[serde(rename = "EINVAL")]
    Einval,
    /// Policy denial: no channel, not owner, outside device window.
    #[serde(rename = "EPERM")]
    Eperm,
    /// Memory access denial along the call's data path.
    #[serde(rename = "EFAULT")]
    Efault,
    /// Allocation would exceed the partition's quota.
    #[serde(rename = "EQUOTA")]
    Equota,
    /// Aborted at the WCET bound.
    #[serde(rename = "ETIME")]
    Etime,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Ok => "OK",
            Status::Einval => "EINVAL",
            Status::Eperm => "EPERM",
            Status::Efault => "EFAULT",
            Status::Equota => "EQUOTA",
            Status::Etime => "ETIME",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    /// Address falls in no region.
    Unmapped,
    /// User-space region owned by someone else, no matching grant.
    NoGrant,
    /// Kernel-space region; guests have no business there.
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Crash,
    Halt,
}

/// Event payloads, tagged by the fixed `kind` catalogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    #[serde(rename = "MEM_READ")]
    MemRead { addr: u64, region: RegionId },
    #[serde(rename = "MEM_WRITE")]
    MemWrite { addr: u64, region: RegionId },
    #[serde(rename = "MEM_DENIED")]
    MemDenied { addr: u64, access: Access, reason: DenyReason, region: Option<RegionId> },
    #[serde(rename = "SCHED_SWITCH")]
    SchedSwitch { from: Option<PartId>, to: PartId, slot: u32 },
    #[serde(rename = "HYPERCALL")]
    Hypercall { id: u64, name: Option<String>, args: Vec<u64>, status: Status, duration: u64 },
    #[serde(rename = "TRAP")]
    Trap { reason: u64, name: Option<String>, payload: Vec<u64>, status: Status, duration: u64 },
    #[serde(rename = "ALLOC")]
    Alloc { bytes: u64, used_after: u64 },
    #[serde(rename = "ALLOC_DENIED")]
    AllocDenied { bytes: u64, used: u64, quota: u64 },
    #[serde(rename = "DEVICE_ACCESS")]
    DeviceAccess { denied: bool, latency: u64, hold: u64 },
    #[serde(rename = "PART_FAULT")]
    PartFault { fault: FaultKind },
    #[serde(rename = "REG_SNAPSHOT")]
    RegSnapshot { regs: [u64; 8], writers: [Option<PartId>; 8] },
    #[serde(rename = "SLOT_OVERRUN")]
    SlotOverrun { extra: u64, slot: u32 },
    #[serde(rename = "WCET_ABORT")]
    WcetAbort { id: u64, name: String, bound: u64, nominal: u64 },
}

impl EventKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EventKind::MemRead { .. } => "MEM_READ",
            EventKind::MemWrite { .. } => "MEM_WRITE",
            EventKind::MemDenied { .. } => "MEM_DENIED",
            EventKind::SchedSwitch { .. } => "SCHED_SWITCH",
            EventKind::Hypercall { .. } => "HYPERCALL",
            EventKind::Trap { .. } => "TRAP",
            EventKind::Alloc { .. } => "ALLOC",
            EventKind::AllocDenied { .. } => "ALLOC_DENIED",
            EventKind::DeviceAccess { .. } => "DEVICE_ACCESS",
            EventKind::PartFault { .. } => "PART_FAULT",
            EventKind::RegSnapshot { .. } => "REG_SNAPSHOT",
            EventKind::SlotOverrun { .. } => "SLOT_OVERRUN",
            EventKind::WcetAbort { .. } => "WCET_ABORT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Strictly increasing over a machine's lifetime, starting at 0.
    pub seq: u64,
    /// Non-decreasing.
    pub tick: u64,
    /// The partition the event is attributed to (for SCHED_SWITCH: the one
    /// being entered).
    pub actor: PartId,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl TraceEvent {
    /// The canonical one-line JSON rendering digests are computed over.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("trace events always serialize")
    }
}

/// Append-only event store with a running digest.
///
/// Storage is capped: events past `cap` still count and still feed the
/// digest, but are no longer kept in memory.
#[derive(Debug, Clone)]
pub struct Trace {
    events: Vec<TraceEvent>,
    cap: usize,
    total: u64,
    last_tick: u64,
    hasher: Sha256,
}

pub const DEFAULT_TRACE_CAP: usize = 1_000_000;

impl Default for Trace {
    fn default() -> Self {
        Trace::with_cap(DEFAULT_TRACE_CAP)
    }
}

impl Trace {
    pub fn with_cap(cap: usize) -> Self {
        Trace { events: Vec::new(), cap, total: 0, last_tick: 0, hasher: Sha256::new() }
    }

    pub(crate) fn push(&mut self, tick: u64, actor: PartId, kind: EventKind) -> u64 {
        debug_assert!(tick >= self.last_tick, "trace ticks must be non-decreasing");
        self.last_tick = tick;
        let ev = TraceEvent { seq: self.total, tick, actor, kind };
        self.hasher.update(ev.canonical().as_bytes());
        self.hasher.update(b"\n");
        self.total += 1;
        if self.events.len() < self.cap {
            self.events.push(ev);
        }
        self.total - 1
    }

    /// Events retained in memory (everything, unless the cap was hit).
    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    /// Total number of events ever emitted, retained or not.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Hex SHA-256 over the canonical line rendering of every event.
    pub fn digest(&self) -> String {
        crate::hex(&self.hasher.clone().finalize())
    }
}
