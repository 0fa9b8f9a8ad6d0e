//! The guest-visible attack/test surface.
//!
//! Two dispatch paths exist: the para-virtual hypercall interface (`PV`)
//! and the hardware-emulation trap interface (`HWFV`). Together their
//! entries are the TSFIs — the externally visible interfaces coverage is
//! measured against. Both catalogues are fixed, ordered, and small enough
//! to brute-force.
//!
//! Dispatch is total: malformed ids, arities, or out-of-domain arguments
//! come back as `EINVAL` in the [`CallRecord`], never as a panic, and
//! validation happens before any side effect.

use serde::{Deserialize, Serialize};

use crate::hv::{Access, DeviceOutcome, PartId, RegionId, Status, SystemState};
use crate::hv::{AllocOutcome, EventKind};
use crate::mech::DefectId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SurfaceKind {
    #[serde(rename = "PV")]
    Pv,
    #[serde(rename = "HWFV")]
    Hwfv,
}

impl SurfaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::Pv => "PV",
            SurfaceKind::Hwfv => "HWFV",
        }
    }
}

/// Declared domain of one argument. `Addr` is intentionally unchecked at
/// dispatch time — bad addresses fault at the access check instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ArgDomain {
    Any,
    /// Valid partition index.
    PartIdx,
    /// Valid region index.
    RegionIdx,
    /// A memory address; policed by the access check, not the dispatcher.
    Addr,
    /// Inclusive numeric range.
    Range(u64, u64),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ArgSpec {
    pub name: &'static str,
    pub domain: ArgDomain,
}

/// One catalogue entry of either surface.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IfaceSpec {
    pub id: u64,
    pub name: &'static str,
    pub args: &'static [ArgSpec],
    /// Declared tick-cost rule, as documentation.
    pub cost: &'static str,
    pub help: &'static str,
}

const fn arg(name: &'static str, domain: ArgDomain) -> ArgSpec {
    ArgSpec { name, domain }
}

pub const PV_CATALOG: [IfaceSpec; 10] = [
    IfaceSpec {
        id: 0,
        name: "CONSOLE_WRITE",
        args: &[arg("word", ArgDomain::Any)],
        cost: "1",
        help: "emit one word to the partition console (heartbeat vehicle)",
    },
    IfaceSpec {
        id: 1,
        name: "MEM_MAP",
        args: &[
            arg("region", ArgDomain::RegionIdx),
            arg("target", ArgDomain::PartIdx),
            arg("perm", ArgDomain::Range(0, 1)),
        ],
        cost: "1",
        help: "owner grants target read (0) or write (1) access to a region",
    },
    IfaceSpec {
        id: 2,
        name: "MEM_UNMAP",
        args: &[
            arg("region", ArgDomain::RegionIdx),
            arg("target", ArgDomain::PartIdx),
            arg("perm", ArgDomain::Range(0, 1)),
        ],
        cost: "1",
        help: "owner revokes a previously granted access",
    },
    IfaceSpec {
        id: 3,
        name: "ALLOC",
        args: &[arg("bytes", ArgDomain::Range(1, 65536))],
        cost: "1",
        help: "allocate dynamic memory against the caller's quota",
    },
    IfaceSpec {
        id: 4,
        name: "FREE",
        args: &[arg("bytes", ArgDomain::Range(1, 65536))],
        cost: "1",
        help: "release dynamic memory (never below the static floor)",
    },
    IfaceSpec {
        id: 5,
        name: "IPC_SEND",
        args: &[arg("dest", ArgDomain::PartIdx), arg("value", ArgDomain::Any)],
        cost: "1",
        help: "send one word over an explicitly configured channel",
    },
    IfaceSpec {
        id: 6,
        name: "YIELD",
        args: &[],
        cost: "1",
        help: "advisory: relinquish the rest of the current slot",
    },
    IfaceSpec {
        id: 7,
        name: "DEV_ACCESS",
        args: &[arg("hold", ArgDomain::Range(0, 8))],
        cost: "1",
        help: "one shared-device transaction leaving `hold` busy ticks behind",
    },
    IfaceSpec {
        id: 8,
        name: "COPY",
        args: &[
            arg("src", ArgDomain::Addr),
            arg("dst", ArgDomain::Addr),
            arg("len", ArgDomain::Range(1, 1024)),
        ],
        cost: "ceil(len/64)",
        help: "word-wise copy; every word passes the memory access check",
    },
    IfaceSpec {
        id: 9,
        name: "INFO",
        args: &[],
        cost: "1",
        help: "read-only digest of the caller-visible machine state",
    },
];

pub const HWFV_CATALOG: [IfaceSpec; 6] = [
    IfaceSpec {
        id: 0,
        name: "MMIO_READ",
        args: &[arg("addr", ArgDomain::Addr)],
        cost: "1",
        help: "emulated MMIO load through the memory access check",
    },
    IfaceSpec {
        id: 1,
        name: "MMIO_WRITE",
        args: &[arg("addr", ArgDomain::Addr), arg("value", ArgDomain::Any)],
        cost: "1",
        help: "emulated MMIO store through the memory access check",
    },
    IfaceSpec {
        id: 2,
        name: "IO_PORT",
        args: &[arg("port", ArgDomain::Range(0, 3)), arg("value", ArgDomain::Any)],
        cost: "1",
        help: "port I/O routed to the shared device (no busy hold)",
    },
    IfaceSpec {
        id: 3,
        name: "INFO_QUERY",
        args: &[arg("kind", ArgDomain::Range(0, 3))],
        cost: "1",
        help: "read-only digest query",
    },
    IfaceSpec {
        id: 4,
        name: "HALT",
        args: &[],
        cost: "1",
        help: "halt the calling partition; its slots idle from here on",
    },
    IfaceSpec {
        id: 5,
        name: "CONTROL_REG",
        args: &[arg("idx", ArgDomain::Range(0, 7)), arg("value", ArgDomain::Any)],
        cost: "1",
        help: "write a hypervisor control register (kernel space; guests are denied)",
    },
];

/// The complete, ordered catalogue for one surface — the coverage denominator.
pub fn list_surface(kind: SurfaceKind) -> &'static [IfaceSpec] {
    match kind {
        SurfaceKind::Pv => &PV_CATALOG,
        SurfaceKind::Hwfv => &HWFV_CATALOG,
    }
}

/// Total entries across both surfaces.
pub const SURFACE_TOTAL: usize = PV_CATALOG.len() + HWFV_CATALOG.len();

/// Record of one dispatched call, whatever its fate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub surface: SurfaceKind,
    pub id: u64,
    /// `None` when the id is outside the catalogue.
    pub name: Option<String>,
    pub args: Vec<u64>,
    pub status: Status,
    /// Ticks consumed; always ≥ 1.
    pub duration: u64,
    /// Call-specific scalar result: INFO digest, DEV_ACCESS/IO_PORT latency,
    /// MMIO_READ value, ALLOC used-after.
    pub aux: Option<u64>,
}

fn args_valid(st: &SystemState, entry: &IfaceSpec, args: &[u64]) -> bool {
    if args.len() != entry.args.len() {
        return false;
    }
    let nparts = st.spec().partitions.len() as u64;
    let nregions = st.spec().regions.len() as u64;
    entry.args.iter().zip(args).all(|(spec, &v)| match spec.domain {
        ArgDomain::Any | ArgDomain::Addr => true,
        ArgDomain::PartIdx => v < nparts,
        ArgDomain::RegionIdx => v < nregions,
        ArgDomain::Range(lo, hi) => v >= lo && v <= hi,
    })
}

/// Dispatch one para-virtual hypercall. Never panics; emits exactly one
/// HYPERCALL event (plus any interior memory/alloc/device events).
pub fn dispatch_pv(st: &mut SystemState, actor: PartId, id: u64, args: &[u64]) -> CallRecord {
    let entry = PV_CATALOG.get(id as usize);
    let mut rec = CallRecord {
        surface: SurfaceKind::Pv,
        id,
        name: entry.map(|e| e.name.to_string()),
        args: args.to_vec(),
        status: Status::Einval,
        duration: 1,
        aux: None,
    };

    if let Some(entry) = entry.filter(|e| args_valid(st, e, args)) {
        match entry.name {
            "CONSOLE_WRITE" => rec.status = Status::Ok,
            "MEM_MAP" | "MEM_UNMAP" => {
                let region = RegionId(args[0] as u16);
                let target = PartId(args[1] as u16);
                let access = if args[2] == 0 { Access::Read } else { Access::Write };
                if st.spec().region(region).owner == Some(actor) {
                    st.set_grant(region, target, access, entry.name == "MEM_MAP");
                    rec.status = Status::Ok;
                } else {
                    rec.status = Status::Eperm;
                }
            }
            "ALLOC" => match st.alloc_memory(actor, args[0]) {
                AllocOutcome::Ok { used_after } => {
                    rec.status = Status::Ok;
                    rec.aux = Some(used_after);
                }
                AllocOutcome::QuotaExceeded => rec.status = Status::Equota,
            },
            "FREE" => {
                st.free_memory(actor, args[0]);
                rec.status = Status::Ok;
            }
            "IPC_SEND" => {
                let dest = PartId(args[0] as u16);
                rec.status = if st.spec().channels.contains(&(actor, dest)) {
                    Status::Ok
                } else {
                    Status::Eperm
                };
            }
            "YIELD" => rec.status = Status::Ok,
            "DEV_ACCESS" => match st.device_access(actor, args[0]) {
                DeviceOutcome::Granted { latency } => {
                    rec.status = Status::Ok;
                    rec.aux = Some(latency);
                }
                DeviceOutcome::Denied => rec.status = Status::Eperm,
            },
            "COPY" => run_copy(st, actor, args, &mut rec),
            "INFO" => {
                rec.status = Status::Ok;
                rec.aux = Some(st.info_digest(actor));
            }
            _ => unreachable!("catalogue is exhaustive"),
        }
    }

    st.emit(
        actor,
        EventKind::Hypercall {
            id,
            name: rec.name.clone(),
            args: rec.args.clone(),
            status: rec.status,
            duration: rec.duration,
        },
    );
    rec
}

/// COPY: word-at-a-time, 8 words per tick, each word read+written through
/// the access check; truncated at the WCET budget while T3 is enforced.
fn run_copy(st: &mut SystemState, actor: PartId, args: &[u64], rec: &mut CallRecord) {
    let (src, dst, len) = (args[0], args[1], args[2]);
    let words = len.div_ceil(8);
    let nominal = len.div_ceil(64);
    let bound = st.spec().wcet.get("COPY").copied();
    let enforced = !st.spec().defect(DefectId::DT3);
    let abort_at = bound.filter(|&b| enforced && nominal > b);
    let budget_words = abort_at.map_or(words, |b| b.saturating_mul(8));

    rec.status = Status::Ok;
    rec.duration = nominal;
    for i in 0..words.min(budget_words) {
        let copied = st
            .mem_read(actor, src + 8 * i)
            .and_then(|v| st.mem_write(actor, dst + 8 * i, v));
        if copied.is_err() {
            rec.status = Status::Efault;
            rec.duration = i / 8 + 1;
            return;
        }
    }
    if let Some(b) = abort_at {
        st.emit(
            actor,
            EventKind::WcetAbort { id: rec.id, name: "COPY".into(), bound: b, nominal },
        );
        rec.status = Status::Etime;
        rec.duration = b;
    }
}

/// Dispatch one hardware-emulation trap. Same totality contract as
/// [`dispatch_pv`]; emits exactly one TRAP event.
pub fn dispatch_hwfv(st: &mut SystemState, actor: PartId, reason: u64, payload: &[u64]) -> CallRecord {
    let entry = HWFV_CATALOG.get(reason as usize);
    let mut rec = CallRecord {
        surface: SurfaceKind::Hwfv,
        id: reason,
        name: entry.map(|e| e.name.to_string()),
        args: payload.to_vec(),
        status: Status::Einval,
        duration: 1,
        aux: None,
    };

    if let Some(entry) = entry.filter(|e| args_valid(st, e, payload)) {
        match entry.name {
            "MMIO_READ" => match st.mem_read(actor, payload[0]) {
                Ok(v) => {
                    rec.status = Status::Ok;
                    rec.aux = Some(v);
                }
                Err(_) => rec.status = Status::Efault,
            },
            "MMIO_WRITE" => {
                rec.status = match st.mem_write(actor, payload[0], payload[1]) {
                    Ok(()) => Status::Ok,
                    Err(_) => Status::Efault,
                };
            }
            "IO_PORT" => match st.device_access(actor, 0) {
                DeviceOutcome::Granted { latency } => {
                    rec.status = Status::Ok;
                    rec.aux = Some(latency);
                }
                DeviceOutcome::Denied => rec.status = Status::Eperm,
            },
            "INFO_QUERY" => {
                rec.status = Status::Ok;
                rec.aux = Some(st.info_digest(actor) ^ payload[0]);
            }
            "HALT" => {
                st.fault(actor, crate::hv::FaultKind::Halt);
                rec.status = Status::Ok;
            }
            "CONTROL_REG" => {
                rec.status = match st.spec().kernel_region() {
                    Some(kr) => {
                        let addr = st.spec().region(kr).base + payload[0] * 8;
                        match st.mem_write(actor, addr, payload[1]) {
                            Ok(()) => Status::Ok,
                            Err(_) => Status::Eperm,
                        }
                    }
                    None => Status::Eperm,
                };
            }
            _ => unreachable!("catalogue is exhaustive"),
        }
    }

    st.emit(
        actor,
        EventKind::Trap {
            reason,
            name: rec.name.clone(),
            payload: rec.args.clone(),
            status: rec.status,
            duration: rec.duration,
        },
    );
    rec
}

/// Default WCET table used by generated configurations: generous for the
/// fixed-cost calls, tight enough on COPY that crafted lengths can trip it.
pub fn default_wcet() -> std::collections::BTreeMap<String, u64> {
    let mut m = std::collections::BTreeMap::new();
    for e in PV_CATALOG.iter().chain(HWFV_CATALOG.iter()) {
        m.insert(e.name.to_string(), if e.name == "COPY" { 5 } else { 16 });
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hv::spec::{
        CyclicSchedule, DeviceSpec, MemoryRegion, PartitionKind, PartitionSpec, SlotSpec, Space,
        SystemSpec,
    };
    use std::collections::{BTreeMap, BTreeSet};

    fn spec() -> SystemSpec {
        SystemSpec {
            partitions: vec![
                PartitionSpec {
                    name: "P1".into(),
                    kind: PartitionKind::TestPv,
                    memory_quota: 0x10000,
                    role: "idle".into(),
                },
                PartitionSpec {
                    name: "P2".into(),
                    kind: PartitionKind::Regular,
                    memory_quota: 0x10000,
                    role: "idle".into(),
                },
            ],
            regions: vec![
                MemoryRegion {
                    name: "ram1".into(),
                    base: 0x1000,
                    size: 0x1000,
                    space: Space::User,
                    owner: Some(PartId(0)),
                    grants: BTreeSet::new(),
                },
                MemoryRegion {
                    name: "ram2".into(),
                    base: 0x2000,
                    size: 0x1000,
                    space: Space::User,
                    owner: Some(PartId(1)),
                    grants: BTreeSet::new(),
                },
                MemoryRegion {
                    name: "kcfg".into(),
                    base: 0xF000,
                    size: 0x100,
                    space: Space::Kernel,
                    owner: None,
                    grants: BTreeSet::new(),
                },
            ],
            schedule: CyclicSchedule {
                slots: vec![
                    SlotSpec { part: PartId(0), len: 8 },
                    SlotSpec { part: PartId(1), len: 8 },
                ],
            },
            channels: BTreeSet::from([(PartId(0), PartId(1))]),
            device: DeviceSpec::default(),
            wcet: BTreeMap::from([("COPY".to_string(), 5)]),
            defects: BTreeSet::new(),
        }
    }

    fn boot() -> SystemState {
        SystemState::boot(spec()).unwrap()
    }

    #[test]
    fn catalogues_are_fixed_and_dense() {
        assert_eq!(list_surface(SurfaceKind::Pv).len(), 10);
        assert_eq!(list_surface(SurfaceKind::Hwfv).len(), 6);
        assert_eq!(SURFACE_TOTAL, 16);
        for (i, e) in PV_CATALOG.iter().enumerate() {
            assert_eq!(e.id, i as u64);
            assert!(e.args.len() <= 4);
        }
        for (i, e) in HWFV_CATALOG.iter().enumerate() {
            assert_eq!(e.id, i as u64);
        }
    }

    #[test]
    fn alloc_under_quota_is_ok() {
        let mut st = boot();
        let rec = dispatch_pv(&mut st, PartId(0), 3, &[8192]);
        assert_eq!(rec.status, Status::Ok);
        assert!(st
            .trace()
            .events()
            .iter()
            .any(|e| matches!(e.kind, EventKind::Alloc { bytes: 8192, .. })));
    }

    #[test]
    fn ipc_requires_a_configured_channel() {
        let mut st = boot();
        assert_eq!(dispatch_pv(&mut st, PartId(0), 5, &[1, 99]).status, Status::Ok);
        assert_eq!(dispatch_pv(&mut st, PartId(1), 5, &[0, 99]).status, Status::Eperm);
    }

    #[test]
    fn copy_aborts_at_wcet_bound() {
        // len 640 → 10 nominal ticks against a bound of 5 → abort at tick 5
        // with exactly 40 of 80 words copied.
        let mut st = boot();
        st.mem_write(PartId(0), 0x1000 + 8 * 39, 7).unwrap();
        let rec = dispatch_pv(&mut st, PartId(0), 8, &[0x1000, 0x1400, 640]);
        assert_eq!(rec.status, Status::Etime);
        assert_eq!(rec.duration, 5);
        assert!(st
            .trace()
            .events()
            .iter()
            .any(|e| matches!(e.kind, EventKind::WcetAbort { bound: 5, nominal: 10, .. })));
        assert_eq!(st.peek_word(0x1400 + 8 * 39), 7, "word 39 made it");
        assert_eq!(st.peek_word(0x1400 + 8 * 40), 0, "word 40 did not");
    }

    #[test]
    fn copy_runs_to_completion_without_t3() {
        let mut st = SystemState::boot(spec().seed_defect(DefectId::DT3)).unwrap();
        let rec = dispatch_pv(&mut st, PartId(0), 8, &[0x1000, 0x1400, 640]);
        assert_eq!(rec.status, Status::Ok);
        assert_eq!(rec.duration, 10, "full nominal cost is consumed and visible");
    }

    #[test]
    fn copy_faults_on_denied_words() {
        let mut st = boot();
        // dst starts inside P1's region but walks into P2's at 0x2000.
        let rec = dispatch_pv(&mut st, PartId(0), 8, &[0x1000, 0x1FF8, 64]);
        assert_eq!(rec.status, Status::Efault);
        assert_eq!(rec.duration, 1);
    }

    #[test]
    fn mem_map_grant_round_trip() {
        let mut st = boot();
        // Non-owner cannot grant someone else's region.
        assert_eq!(dispatch_pv(&mut st, PartId(0), 1, &[1, 0, 1]).status, Status::Eperm);
        // Owner grants P1 write access to ram2; a cross write then succeeds.
        assert_eq!(dispatch_pv(&mut st, PartId(1), 1, &[1, 0, 1]).status, Status::Ok);
        assert!(st.mem_write(PartId(0), 0x2008, 5).is_ok());
        // Revoke and the write is denied again.
        assert_eq!(dispatch_pv(&mut st, PartId(1), 2, &[1, 0, 1]).status, Status::Ok);
        assert!(st.mem_write(PartId(0), 0x2008, 5).is_err());
    }

    #[test]
    fn malformed_calls_are_einval_with_no_side_effects() {
        let mut st = boot();
        let used = st.alloc_used(PartId(0));
        for (id, args) in [
            (99, vec![1u64]),          // unknown id
            (3, vec![]),               // missing arg
            (3, vec![0]),              // bytes below domain
            (3, vec![70000]),          // bytes above domain
            (6, vec![1]),              // extra arg on YIELD
            (1, vec![9, 0, 1]),        // region index out of range
            (1, vec![0, 9, 1]),        // partition index out of range
        ] {
            let rec = dispatch_pv(&mut st, PartId(0), id, &args);
            assert_eq!(rec.status, Status::Einval, "id={id} args={args:?}");
            assert_eq!(rec.duration, 1);
        }
        assert_eq!(st.alloc_used(PartId(0)), used);
        assert_eq!(dispatch_hwfv(&mut st, PartId(0), 77, &[]).status, Status::Einval);
    }

    #[test]
    fn halt_trap_marks_the_caller_halted() {
        let mut st = boot();
        let rec = dispatch_hwfv(&mut st, PartId(0), 4, &[]);
        assert_eq!(rec.status, Status::Ok);
        assert!(st.is_halted(PartId(0)));
    }

    #[test]
    fn control_reg_denied_for_guests_mutated_under_defect() {
        let mut st = boot();
        assert_eq!(dispatch_hwfv(&mut st, PartId(0), 5, &[2, 0xEE]).status, Status::Eperm);
        assert_eq!(st.peek_word(0xF010), 0);

        let mut st = SystemState::boot(spec().seed_defect(DefectId::DM2)).unwrap();
        assert_eq!(dispatch_hwfv(&mut st, PartId(0), 5, &[2, 0xEE]).status, Status::Ok);
        assert_eq!(st.peek_word(0xF010), 0xEE);
    }

    #[test]
    fn mmio_round_trip_and_denial() {
        let mut st = boot();
        assert_eq!(dispatch_hwfv(&mut st, PartId(0), 1, &[0x1010, 31]).status, Status::Ok);
        let rec = dispatch_hwfv(&mut st, PartId(0), 0, &[0x1010]);
        assert_eq!((rec.status, rec.aux), (Status::Ok, Some(31)));
        assert_eq!(dispatch_hwfv(&mut st, PartId(0), 1, &[0x2010, 1]).status, Status::Efault);
    }

    #[test]
    fn io_port_respects_device_windows() {
        let mut st = boot();
        assert_eq!(dispatch_hwfv(&mut st, PartId(0), 2, &[0, 5]).status, Status::Ok);
        st.advance(8); // P2's slot: P1 is outside its window now
        assert_eq!(dispatch_hwfv(&mut st, PartId(0), 2, &[0, 5]).status, Status::Eperm);
    }
}
