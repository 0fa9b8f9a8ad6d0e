//! Static system description and its validation rules.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mech::DefectId;

/// Index of a partition within [`SystemSpec::partitions`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct PartId(pub u16);

/// Index of a region within [`SystemSpec::regions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionId(pub u16);

impl std::fmt::Display for PartId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    /// Test partition driving the para-virtual hypercall surface.
    TestPv,
    /// Test partition driving the hardware-emulation trap surface.
    TestHwfv,
    /// Regular partition running a representative background workload.
    Regular,
}

impl PartitionKind {
    pub fn is_test(self) -> bool {
        matches!(self, PartitionKind::TestPv | PartitionKind::TestHwfv)
    }
}

/// Memory access direction, used both in grants and in trace events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub name: String,
    pub kind: PartitionKind,
    /// Total memory budget in bytes, static regions included.
    pub memory_quota: u64,
    /// Workload binding name; resolved by the runner ("idle" runs nothing).
    pub role: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    User,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRegion {
    pub name: String,
    /// Byte address of the first word. Words are 8 bytes, addressed sparsely.
    pub base: u64,
    pub size: u64,
    pub space: Space,
    /// `None` means the hypervisor itself owns the region (kernel space).
    pub owner: Option<PartId>,
    /// Static cross-partition grants; more can be added at run time via MEM_MAP.
    pub grants: BTreeSet<(PartId, Access)>,
}

impl MemoryRegion {
    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr - self.base < self.size
    }

    pub fn end(&self) -> u64 {
        self.base + self.size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub part: PartId,
    /// Slot length in ticks; always > 0.
    pub len: u64,
}

/// The repeating scheduling table: one major frame = all slots in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicSchedule {
    pub slots: Vec<SlotSpec>,
}

impl CyclicSchedule {
    pub fn major_frame(&self) -> u64 {
        self.slots.iter().map(|s| s.len).sum()
    }

    /// Tick offset of slot `i`'s start within the major frame.
    pub fn slot_start(&self, i: usize) -> u64 {
        self.slots[..i].iter().map(|s| s.len).sum()
    }

    /// Total ticks per major frame owned by partition `p`.
    pub fn frame_ticks_of(&self, p: PartId) -> u64 {
        self.slots.iter().filter(|s| s.part == p).map(|s| s.len).sum()
    }
}

/// The single shared device all partitions may contend on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSpec {
    /// Service latency of an uncontended access.
    pub base_latency: u64,
    /// Constant latency reported while normalisation (T4) is intact.
    pub normalized_latency: u64,
    /// Busy ticks a deliberate "busy pulse" leaves in the device queue.
    pub busy_pulse: u64,
    /// Access windows as `[start, end)` tick offsets within the major frame.
    /// Partitions without an entry default to their own schedule slots.
    /// Serialized as rows, not a map, so keys stay numeric in JSON.
    #[serde(with = "window_rows")]
    pub windows: BTreeMap<PartId, Vec<(u64, u64)>>,
}

mod window_rows {
    use super::PartId;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    type Map = BTreeMap<PartId, Vec<(u64, u64)>>;

    pub fn serialize<S: Serializer>(m: &Map, s: S) -> Result<S::Ok, S::Error> {
        m.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Map, D::Error> {
        Ok(Vec::<(PartId, Vec<(u64, u64)>)>::deserialize(d)?
            .into_iter()
            .collect())
    }
}

impl Default for DeviceSpec {
    fn default() -> Self {
        DeviceSpec {
            base_latency: 2,
            normalized_latency: 6,
            busy_pulse: 4,
            windows: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("unknown defect {0:?}")]
    UnknownDefect(String),
    #[error("defects are fixed at boot; a live or restored machine cannot be re-seeded")]
    SpecFrozen,
}

/// The complete static description of a simulated system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub partitions: Vec<PartitionSpec>,
    pub regions: Vec<MemoryRegion>,
    pub schedule: CyclicSchedule,
    /// Explicitly allowed IPC pairs (source, destination). Nothing else flows.
    pub channels: BTreeSet<(PartId, PartId)>,
    pub device: DeviceSpec,
    /// WCET budget per hypercall name; calls without an entry are unbounded.
    pub wcet: BTreeMap<String, u64>,
    pub defects: BTreeSet<DefectId>,
}

impl SystemSpec {
    /// Check every structural invariant; `boot` refuses specs that fail.
    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |msg: String| Err(SpecError::InvalidSpec(msg));

        if self.partitions.is_empty() {
            return bad("no partitions defined".into());
        }
        let mut names = BTreeSet::new();
        for p in &self.partitions {
            if p.name.is_empty() || p.name == "hypervisor" {
                return bad(format!("illegal partition name {:?}", p.name));
            }
            if !names.insert(p.name.as_str()) {
                return bad(format!("duplicate partition name {:?}", p.name));
            }
        }

        let valid_part = |id: PartId| (id.0 as usize) < self.partitions.len();

        let mut region_names = BTreeSet::new();
        for r in &self.regions {
            if !region_names.insert(r.name.as_str()) {
                return bad(format!("duplicate region name {:?}", r.name));
            }
            if r.size == 0 {
                return bad(format!("region {:?} has zero size", r.name));
            }
            if r.base.checked_add(r.size).is_none() {
                return bad(format!("region {:?} wraps the address space", r.name));
            }
            match (r.space, r.owner) {
                (Space::Kernel, Some(_)) => {
                    return bad(format!("kernel region {:?} must be hypervisor-owned", r.name));
                }
                (Space::User, None) => {
                    return bad(format!("user region {:?} must be owned by a partition", r.name));
                }
                (Space::User, Some(p)) if !valid_part(p) => {
                    return bad(format!("region {:?} owner {} out of range", r.name, p));
                }
                _ => {}
            }
            for (p, _) in &r.grants {
                if !valid_part(*p) {
                    return bad(format!("region {:?} grant to unknown partition {}", r.name, p));
                }
            }
        }
        let mut spans: Vec<(u64, u64, &str)> =
            self.regions.iter().map(|r| (r.base, r.end(), r.name.as_str())).collect();
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return bad(format!("regions {:?} and {:?} overlap", w[0].2, w[1].2));
            }
        }

        if self.schedule.slots.is_empty() {
            return bad("schedule has no slots".into());
        }
        for s in &self.schedule.slots {
            if s.len == 0 {
                return bad(format!("zero-length slot for {}", s.part));
            }
            if !valid_part(s.part) {
                return bad(format!("schedule references unknown partition {}", s.part));
            }
        }

        for &(a, b) in &self.channels {
            if !valid_part(a) || !valid_part(b) {
                return bad(format!("channel ({a}, {b}) references unknown partition"));
            }
            if a == b {
                return bad(format!("self-channel ({a}, {a}) is not allowed"));
            }
        }

        for (i, p) in self.partitions.iter().enumerate() {
            let static_bytes = self.static_bytes(PartId(i as u16));
            if p.memory_quota < static_bytes {
                return bad(format!(
                    "partition {:?} quota {} below statically owned {}",
                    p.name, p.memory_quota, static_bytes
                ));
            }
        }

        let frame = self.schedule.major_frame();
        for (p, wins) in &self.device.windows {
            if !valid_part(*p) {
                return bad(format!("device window for unknown partition {p}"));
            }
            for &(lo, hi) in wins {
                if lo >= hi || hi > frame {
                    return bad(format!("device window ({lo}, {hi}) outside major frame {frame}"));
                }
            }
        }
        if self.device.normalized_latency == 0 || self.device.busy_pulse == 0 {
            return bad("device latencies must be positive".into());
        }

        for (name, &bound) in &self.wcet {
            if bound == 0 {
                return bad(format!("WCET bound for {name:?} must be positive"));
            }
        }

        Ok(())
    }

    /// Return a copy of this spec with one more defect seeded (set semantics).
    pub fn seed_defect(&self, d: DefectId) -> SystemSpec {
        let mut out = self.clone();
        out.defects.insert(d);
        out
    }

    /// Like [`seed_defect`](Self::seed_defect) but resolving a defect name.
    pub fn seed_defect_named(&self, name: &str) -> Result<SystemSpec, SpecError> {
        match DefectId::parse(name) {
            Some(d) => Ok(self.seed_defect(d)),
            None => Err(SpecError::UnknownDefect(name.to_string())),
        }
    }

    /// The same spec with every defect removed (the baseline twin).
    pub fn without_defects(&self) -> SystemSpec {
        let mut out = self.clone();
        out.defects.clear();
        out
    }

    pub fn defect(&self, d: DefectId) -> bool {
        self.defects.contains(&d)
    }

    pub fn part_by_name(&self, name: &str) -> Option<PartId> {
        self.partitions.iter().position(|p| p.name == name).map(|i| PartId(i as u16))
    }

    pub fn part(&self, id: PartId) -> &PartitionSpec {
        &self.partitions[id.0 as usize]
    }

    pub fn part_name(&self, id: PartId) -> &str {
        &self.partitions[id.0 as usize].name
    }

    pub fn quota(&self, id: PartId) -> u64 {
        self.partitions[id.0 as usize].memory_quota
    }

    pub fn region(&self, id: RegionId) -> &MemoryRegion {
        &self.regions[id.0 as usize]
    }

    pub fn region_of_addr(&self, addr: u64) -> Option<RegionId> {
        self.regions
            .iter()
            .position(|r| r.contains(addr))
            .map(|i| RegionId(i as u16))
    }

    /// Region indices statically owned by `p`.
    pub fn regions_owned(&self, p: PartId) -> Vec<RegionId> {
        self.regions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.owner == Some(p))
            .map(|(i, _)| RegionId(i as u16))
            .collect()
    }

    /// Bytes covered by regions statically owned by `p` (the allocation floor).
    pub fn static_bytes(&self, p: PartId) -> u64 {
        self.regions.iter().filter(|r| r.owner == Some(p)).map(|r| r.size).sum()
    }

    /// First kernel region (lowest base), used as the control-register file.
    pub fn kernel_region(&self) -> Option<RegionId> {
        self.regions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.space == Space::Kernel)
            .min_by_key(|(_, r)| r.base)
            .map(|(i, _)| RegionId(i as u16))
    }

    /// Device windows for `p`: explicit entry, or its own schedule slots.
    pub fn device_windows(&self, p: PartId) -> Vec<(u64, u64)> {
        if let Some(w) = self.device.windows.get(&p) {
            return w.clone();
        }
        let mut wins = Vec::new();
        let mut at = 0;
        for s in &self.schedule.slots {
            if s.part == p {
                wins.push((at, at + s.len));
            }
            at += s.len;
        }
        wins
    }

    pub fn in_device_window(&self, p: PartId, tick: u64) -> bool {
        let frame = self.schedule.major_frame();
        let off = tick % frame;
        self.device_windows(p).iter().any(|&(lo, hi)| off >= lo && off < hi)
    }
}
