//! The simulated partitioning hypervisor.
//!
//! Split into three layers:
//!
//! * [`spec`] — the static system description ([`SystemSpec`]): partitions,
//!   memory map, cyclic schedule, shared device, WCET budgets, and the set
//!   of seeded defects. Immutable once a machine is booted.
//! * [`trace`] — the append-only event trace every simulation produces; the
//!   only output channel of the machine and the monitor's sole input.
//! * [`state`] — the live machine ([`SystemState`]): tick counter, register
//!   file, sparse memory, allocation accounting, and the scheduler cursor.
//!
//! Time is discrete integer ticks. Everything is deterministic: there is no
//! randomness anywhere in this module, so a spec plus an input sequence
//! fully determines the trace, byte for byte.

pub mod spec;
pub mod state;
pub mod trace;

pub use spec::{
    Access, CyclicSchedule, DeviceSpec, MemoryRegion, PartId, PartitionKind, PartitionSpec,
    RegionId, SlotSpec, Space, SpecError, SystemSpec,
};
pub use state::{AccessDecision, AllocOutcome, DeviceOutcome, Snapshot, SystemState};
pub use trace::{DenyReason, EventKind, FaultKind, Status, Trace, TraceEvent};
