//! The independent isolation monitor.
//!
//! The monitor never reads machine internals. Its inputs are the declared
//! system configuration (defects stripped) and the event trace — exactly
//! what an external observer of a real deployment could record. From the
//! configuration it reconstructs what should have happened (ownership,
//! live grants, the nominal schedule grid, quotas, WCET budgets) and files
//! a [`Violation`] wherever the observed events disagree.
//!
//! Feeding events one at a time or all at once produces the same report;
//! the only detectors that need the whole trace — fault containment and
//! covert-channel assessment — run at [`Monitor::finalize`].

pub mod capacity;

pub use capacity::{decode_accuracy, estimate_capacity, median_threshold, threshold_decode};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hv::{
    Access, DenyReason, EventKind, PartId, PartitionKind, Space, Status, SystemSpec, TraceEvent,
};
use crate::mech::MechanismId;

/// An isolation property the monitor checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PropertyId {
    /// Spatial integrity: no foreign writes into a partition's memory.
    #[serde(rename = "SP-INT")]
    SpInt,
    /// Spatial confidentiality: no foreign reads of a partition's memory.
    #[serde(rename = "SP-CONF")]
    SpConf,
    /// Kernel protection: guests never touch hypervisor-owned space.
    #[serde(rename = "SP-KERN")]
    SpKern,
    /// Quota safety: allocations never exceed the static budget.
    #[serde(rename = "SP-QUOTA")]
    SpQuota,
    /// Schedule fidelity: handovers stay on the nominal grid (± jitter).
    #[serde(rename = "TP-SLOT")]
    TpSlot,
    /// Service time bounds: no call outlives its declared WCET.
    #[serde(rename = "TP-WCET")]
    TpWcet,
    /// Residual state: no register content survives a context switch.
    #[serde(rename = "TP-RESID")]
    TpResid,
    /// Covert timing channels: device timing carries no decodable signal.
    #[serde(rename = "TP-COVERT")]
    TpCovert,
    /// Fault containment: one partition's failure leaves the rest intact.
    #[serde(rename = "FT-CONT")]
    FtCont,
}

impl PropertyId {
    pub const ALL: [PropertyId; 9] = [
        PropertyId::SpInt,
        PropertyId::SpConf,
        PropertyId::SpKern,
        PropertyId::SpQuota,
        PropertyId::TpSlot,
        PropertyId::TpWcet,
        PropertyId::TpResid,
        PropertyId::TpCovert,
        PropertyId::FtCont,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PropertyId::SpInt => "SP-INT",
            PropertyId::SpConf => "SP-CONF",
            PropertyId::SpKern => "SP-KERN",
            PropertyId::SpQuota => "SP-QUOTA",
            PropertyId::TpSlot => "TP-SLOT",
            PropertyId::TpWcet => "TP-WCET",
            PropertyId::TpResid => "TP-RESID",
            PropertyId::TpCovert => "TP-COVERT",
            PropertyId::FtCont => "FT-CONT",
        }
    }

    pub fn parse(s: &str) -> Option<PropertyId> {
        PropertyId::ALL.iter().copied().find(|p| p.name() == s)
    }

    /// Isolation family the property belongs to.
    pub fn family(self) -> &'static str {
        match self {
            PropertyId::SpInt | PropertyId::SpConf | PropertyId::SpKern | PropertyId::SpQuota => {
                "spatial"
            }
            PropertyId::TpSlot | PropertyId::TpWcet | PropertyId::TpResid | PropertyId::TpCovert => {
                "temporal"
            }
            PropertyId::FtCont => "fault",
        }
    }

    /// The enforcement mechanisms a violation of this property implicates.
    ///
    /// Fault containment is a whole-system property rather than the job of
    /// any single mechanism, so it implicates none.
    pub fn mechanisms(self) -> &'static [MechanismId] {
        match self {
            PropertyId::SpInt | PropertyId::SpConf => &[MechanismId::M1],
            PropertyId::SpKern => &[MechanismId::M2],
            PropertyId::SpQuota => &[MechanismId::M4],
            PropertyId::TpSlot => &[MechanismId::T2],
            PropertyId::TpWcet => &[MechanismId::T3],
            PropertyId::TpResid => &[MechanismId::T1],
            PropertyId::TpCovert => &[MechanismId::M3, MechanismId::T4],
            PropertyId::FtCont => &[],
        }
    }
}

impl std::fmt::Display for PropertyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MonitorError {
    #[error("event {seq} arrived out of order (last seen {last})")]
    OutOfOrderEvent { last: u64, seq: u64 },
    #[error("bit sequences differ in length: sent {sent}, received {received}")]
    LengthMismatch { sent: usize, received: usize },
}

/// Reference measurements from a defect-free, fault-free run of the same
/// configuration; the yardstick for fault-containment checks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    /// Per partition: frame index → heartbeat word observed in that frame.
    /// Serialized as `(partition, frame, word)` rows to keep JSON keys
    /// numeric.
    #[serde(with = "heartbeat_rows")]
    pub heartbeats: BTreeMap<PartId, BTreeMap<u64, u64>>,
}

mod heartbeat_rows {
    use super::PartId;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    type Map = BTreeMap<PartId, BTreeMap<u64, u64>>;

    pub fn serialize<S: Serializer>(m: &Map, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<(PartId, u64, u64)> = m
            .iter()
            .flat_map(|(&p, by_frame)| by_frame.iter().map(move |(&f, &w)| (p, f, w)))
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Map, D::Error> {
        let mut m = Map::new();
        for (p, f, w) in Vec::<(PartId, u64, u64)>::deserialize(d)? {
            m.entry(p).or_default().insert(f, w);
        }
        Ok(m)
    }
}

impl BaselineMetrics {
    /// Collect heartbeats (successful CONSOLE_WRITE calls) from a reference
    /// trace, keeping the first per partition and frame.
    pub fn from_trace(spec: &SystemSpec, events: &[TraceEvent]) -> BaselineMetrics {
        let major = spec.schedule.major_frame().max(1);
        let mut heartbeats: BTreeMap<PartId, BTreeMap<u64, u64>> = BTreeMap::new();
        for ev in events {
            if let EventKind::Hypercall { name: Some(n), args, status: Status::Ok, .. } = &ev.kind
            {
                if n == "CONSOLE_WRITE" {
                    if let Some(&w) = args.first() {
                        heartbeats
                            .entry(ev.actor)
                            .or_default()
                            .entry(ev.tick / major)
                            .or_insert(w);
                    }
                }
            }
        }
        BaselineMetrics { heartbeats }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// Properties the monitor files violations for; others are still
    /// observed (for exercise bookkeeping) but stay silent.
    #[serde(default = "all_properties")]
    pub enabled: BTreeSet<PropertyId>,
    /// Tolerated deviation, in ticks, of a handover from the nominal grid.
    #[serde(default = "default_jitter")]
    pub jitter: u64,
    /// Tolerated fraction of a partition's nominal frame time lost before
    /// fault containment is considered broken.
    #[serde(default = "default_degradation")]
    pub degradation: f64,
    /// Covert capacity (bits/symbol) above which a channel is a violation.
    #[serde(default = "default_capacity_max")]
    pub capacity_max: f64,
    #[serde(default)]
    pub baseline: Option<BaselineMetrics>,
}

fn all_properties() -> BTreeSet<PropertyId> {
    PropertyId::ALL.into_iter().collect()
}

fn default_jitter() -> u64 {
    1
}

fn default_degradation() -> f64 {
    0.2
}

fn default_capacity_max() -> f64 {
    0.05
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            enabled: all_properties(),
            jitter: default_jitter(),
            degradation: default_degradation(),
            capacity_max: default_capacity_max(),
            baseline: None,
        }
    }
}

/// One detected breach of an isolation property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub property: PropertyId,
    /// The partition the finding is filed against (the accessor, the
    /// overrunner, the observer of residue, the degraded victim).
    pub partition: Option<PartId>,
    /// Mechanisms implicated by this class of violation.
    pub mechanisms: Vec<MechanismId>,
    pub tick: u64,
    /// Trace sequence numbers backing the finding.
    pub evidence: Vec<u64>,
    pub detail: String,
}

/// Covert-probe measurements, reported whether or not they cross the limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovertAssessment {
    pub bits_sent: usize,
    pub samples: usize,
    pub threshold: f64,
    pub accuracy: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub events_seen: u64,
    pub violations: Vec<Violation>,
    /// Mechanisms whose enforcement point was actually reached.
    pub mechanisms_exercised: BTreeSet<MechanismId>,
    /// Catalogue interfaces seen, as (surface, id) pairs.
    pub tsfi_exercised: BTreeSet<(String, u64)>,
    pub covert: Option<CovertAssessment>,
}

struct CovertProbe {
    sent: Vec<u8>,
    receiver: PartId,
    latencies: Vec<u64>,
    evidence: Vec<u64>,
}

pub struct Monitor {
    spec: SystemSpec,
    cfg: MonitorConfig,
    last_seq: Option<u64>,
    events_seen: u64,
    end_tick: u64,
    // Nominal schedule grid.
    major: u64,
    nslots: u64,
    prefix: Vec<u64>,
    switches_seen: u64,
    cur_active: Option<PartId>,
    last_switch_tick: u64,
    active_ticks: BTreeMap<(PartId, u64), u64>,
    // Live grant mirror, updated from successful MEM_MAP/MEM_UNMAP calls.
    grants: Vec<BTreeSet<(PartId, Access)>>,
    faulted: BTreeSet<PartId>,
    first_fault: Option<(u64, u64)>,
    heartbeats: BTreeMap<(PartId, u64), u64>,
    probe: Option<CovertProbe>,
    pending_overruns: Vec<u64>,
    seen: BTreeSet<(PropertyId, Option<PartId>, u64)>,
    violations: Vec<Violation>,
    mechs: BTreeSet<MechanismId>,
    tsfi: BTreeSet<(String, u64)>,
}

impl Monitor {
    pub fn new(spec: &SystemSpec, cfg: MonitorConfig) -> Monitor {
        let spec = spec.without_defects();
        Monitor {
            grants: spec.regions.iter().map(|r| r.grants.clone()).collect(),
            major: spec.schedule.major_frame(),
            nslots: spec.schedule.slots.len() as u64,
            prefix: (0..spec.schedule.slots.len()).map(|i| spec.schedule.slot_start(i)).collect(),
            spec,
            cfg,
            last_seq: None,
            events_seen: 0,
            end_tick: 0,
            switches_seen: 0,
            cur_active: None,
            last_switch_tick: 0,
            active_ticks: BTreeMap::new(),
            faulted: BTreeSet::new(),
            first_fault: None,
            heartbeats: BTreeMap::new(),
            probe: None,
            pending_overruns: Vec::new(),
            seen: BTreeSet::new(),
            violations: Vec::new(),
            mechs: BTreeSet::new(),
            tsfi: BTreeSet::new(),
        }
    }

    /// Arm covert-channel assessment: `sent` is the ground-truth bit-stream
    /// a sender modulates, `receiver` the partition whose device latencies
    /// should be scanned for it.
    pub fn register_covert_probe(&mut self, sent: Vec<u8>, receiver: PartId) {
        self.probe = Some(CovertProbe {
            sent,
            receiver,
            latencies: Vec::new(),
            evidence: Vec::new(),
        });
    }

    /// Consume one trace event. Events must arrive in strictly increasing
    /// `seq` order (gaps are fine; the storage cap can create them).
    pub fn observe(&mut self, ev: &TraceEvent) -> Result<(), MonitorError> {
        if let Some(last) = self.last_seq {
            if ev.seq <= last {
                return Err(MonitorError::OutOfOrderEvent { last, seq: ev.seq });
            }
        }
        self.last_seq = Some(ev.seq);
        self.events_seen += 1;
        self.end_tick = self.end_tick.max(ev.tick);

        match &ev.kind {
            EventKind::MemRead { addr, region } => {
                self.check_memory(ev, *addr, region.0, Access::Read);
            }
            EventKind::MemWrite { addr, region } => {
                self.check_memory(ev, *addr, region.0, Access::Write);
            }
            EventKind::MemDenied { reason, .. } => {
                self.mechs.insert(match reason {
                    DenyReason::Kernel => MechanismId::M2,
                    _ => MechanismId::M1,
                });
            }
            EventKind::SchedSwitch { from, to, slot } => {
                self.mechs.insert(MechanismId::T1);
                self.mechs.insert(MechanismId::T2);
                if let Some(p) = self.cur_active {
                    let (a, b) = (self.last_switch_tick, ev.tick);
                    self.credit(p, a, b);
                }
                self.cur_active = Some(*to);
                self.last_switch_tick = ev.tick;
                let k = self.switches_seen;
                self.switches_seen += 1;
                if let Some(wraps) = k.checked_div(self.nslots) {
                    let expected = wraps * self.major + self.prefix[(k % self.nslots) as usize];
                    let deviation = ev.tick.abs_diff(expected);
                    if deviation > self.cfg.jitter {
                        let culprit = from.unwrap_or(*to);
                        let mut evidence = std::mem::take(&mut self.pending_overruns);
                        evidence.push(ev.seq);
                        self.file(
                            PropertyId::TpSlot,
                            Some(culprit),
                            0,
                            ev.tick,
                            evidence,
                            format!(
                                "handover into slot {slot} at tick {} deviates from nominal \
                                 tick {expected} by {deviation} (> jitter {})",
                                ev.tick, self.cfg.jitter
                            ),
                        );
                    }
                }
            }
            EventKind::Hypercall { id, name, args, status, duration } => {
                self.mechs.insert(MechanismId::T3);
                if let Some(n) = name {
                    self.tsfi.insert(("PV".into(), *id));
                    self.check_wcet(ev, n, *duration);
                    if *status == Status::Ok {
                        match n.as_str() {
                            "MEM_MAP" | "MEM_UNMAP" => {
                                if let [rg, tg, perm] = args[..] {
                                    let access =
                                        if perm == 0 { Access::Read } else { Access::Write };
                                    if let Some(g) = self.grants.get_mut(rg as usize) {
                                        let key = (PartId(tg as u16), access);
                                        if n == "MEM_MAP" {
                                            g.insert(key);
                                        } else {
                                            g.remove(&key);
                                        }
                                    }
                                }
                            }
                            "CONSOLE_WRITE" => {
                                if let (Some(&w), true) = (args.first(), self.major > 0) {
                                    self.heartbeats
                                        .entry((ev.actor, ev.tick / self.major))
                                        .or_insert(w);
                                }
                            }
                            _ => {}
                        }
                    }
                }
            }
            EventKind::Trap { reason, name, duration, .. } => {
                self.mechs.insert(MechanismId::T3);
                if let Some(n) = name {
                    self.tsfi.insert(("HWFV".into(), *reason));
                    self.check_wcet(ev, n, *duration);
                }
            }
            EventKind::Alloc { bytes, used_after } => {
                self.mechs.insert(MechanismId::M4);
                let quota = self.spec.partitions.get(ev.actor.0 as usize).map(|p| p.memory_quota);
                if let Some(q) = quota {
                    if *used_after > q {
                        self.file(
                            PropertyId::SpQuota,
                            Some(ev.actor),
                            0,
                            ev.tick,
                            vec![ev.seq],
                            format!(
                                "allocating {bytes} bytes took {} to {used_after} of its \
                                 {q}-byte quota",
                                self.part_label(ev.actor)
                            ),
                        );
                    }
                }
            }
            EventKind::AllocDenied { .. } => {
                self.mechs.insert(MechanismId::M4);
            }
            EventKind::DeviceAccess { denied, latency, .. } => {
                self.mechs.insert(MechanismId::M3);
                self.mechs.insert(MechanismId::T4);
                if let Some(pr) = self.probe.as_mut() {
                    if ev.actor == pr.receiver && !*denied {
                        pr.latencies.push(*latency);
                        if pr.evidence.len() < 8 {
                            pr.evidence.push(ev.seq);
                        }
                    }
                }
            }
            EventKind::PartFault { .. } => {
                self.faulted.insert(ev.actor);
                self.first_fault.get_or_insert((ev.tick, ev.seq));
            }
            EventKind::RegSnapshot { regs, writers } => {
                self.mechs.insert(MechanismId::T1);
                for (i, w) in writers.iter().enumerate() {
                    if let Some(p) = *w {
                        if p != ev.actor {
                            self.file(
                                PropertyId::TpResid,
                                Some(ev.actor),
                                0,
                                ev.tick,
                                vec![ev.seq],
                                format!(
                                    "register r{i} still holds {:#x} written by {} as {} is \
                                     switched in",
                                    regs[i],
                                    self.part_label(p),
                                    self.part_label(ev.actor)
                                ),
                            );
                            break;
                        }
                    }
                }
            }
            EventKind::SlotOverrun { .. } => {
                self.mechs.insert(MechanismId::T2);
                if self.pending_overruns.len() < 8 {
                    self.pending_overruns.push(ev.seq);
                }
            }
            EventKind::WcetAbort { .. } => {
                self.mechs.insert(MechanismId::T3);
            }
        }
        Ok(())
    }

    pub fn observe_all(&mut self, events: &[TraceEvent]) -> Result<(), MonitorError> {
        for ev in events {
            self.observe(ev)?;
        }
        Ok(())
    }

    /// Run the end-of-trace detectors and emit the report.
    pub fn finalize(mut self) -> MonitorReport {
        if let Some(p) = self.cur_active {
            let (a, b) = (self.last_switch_tick, self.end_tick);
            self.credit(p, a, b);
        }
        self.check_containment();
        let covert = self.assess_covert();
        MonitorReport {
            events_seen: self.events_seen,
            violations: self.violations,
            mechanisms_exercised: self.mechs,
            tsfi_exercised: self.tsfi,
            covert,
        }
    }

    /// One-shot convenience: new → observe_all → finalize.
    pub fn assess(
        spec: &SystemSpec,
        cfg: MonitorConfig,
        events: &[TraceEvent],
    ) -> Result<MonitorReport, MonitorError> {
        let mut m = Monitor::new(spec, cfg);
        m.observe_all(events)?;
        Ok(m.finalize())
    }

    fn check_memory(&mut self, ev: &TraceEvent, addr: u64, region_idx: u16, access: Access) {
        let Some(r) = self.spec.regions.get(region_idx as usize) else {
            return;
        };
        let (space, owner, rname) = (r.space, r.owner, r.name.clone());
        match space {
            Space::Kernel => {
                self.mechs.insert(MechanismId::M2);
                let verb = if access == Access::Write { "wrote" } else { "read" };
                self.file(
                    PropertyId::SpKern,
                    Some(ev.actor),
                    region_idx as u64,
                    ev.tick,
                    vec![ev.seq],
                    format!(
                        "{} {verb} kernel-space region {rname:?} at {addr:#x}",
                        self.part_label(ev.actor)
                    ),
                );
            }
            Space::User => {
                self.mechs.insert(MechanismId::M1);
                let allowed = owner == Some(ev.actor)
                    || self
                        .grants
                        .get(region_idx as usize)
                        .is_some_and(|g| g.contains(&(ev.actor, access)));
                if !allowed {
                    let (property, verb) = match access {
                        Access::Write => (PropertyId::SpInt, "wrote"),
                        Access::Read => (PropertyId::SpConf, "read"),
                    };
                    let owner_label =
                        owner.map_or("the hypervisor".to_string(), |o| self.part_label(o));
                    self.file(
                        property,
                        Some(ev.actor),
                        region_idx as u64,
                        ev.tick,
                        vec![ev.seq],
                        format!(
                            "{} {verb} {addr:#x} in region {rname:?} owned by {owner_label} \
                             without a grant",
                            self.part_label(ev.actor)
                        ),
                    );
                }
            }
        }
    }

    fn check_wcet(&mut self, ev: &TraceEvent, name: &str, duration: u64) {
        let bound = self.spec.wcet.get(name).copied();
        if let Some(b) = bound {
            if duration > b {
                self.file(
                    PropertyId::TpWcet,
                    Some(ev.actor),
                    0,
                    ev.tick,
                    vec![ev.seq],
                    format!("{name} ran for {duration} ticks against a declared bound of {b}"),
                );
            }
        }
    }

    /// Attribute the active interval `[t0, t1)` to `p`, split per frame.
    fn credit(&mut self, p: PartId, t0: u64, t1: u64) {
        if t1 <= t0 || self.major == 0 {
            return;
        }
        for f in t0 / self.major..=(t1 - 1) / self.major {
            let lo = t0.max(f * self.major);
            let hi = t1.min((f + 1) * self.major);
            *self.active_ticks.entry((p, f)).or_insert(0) += hi - lo;
        }
    }

    /// After the first fault, every complete later frame must show the other
    /// regular partitions still delivering: the baseline heartbeat word,
    /// and at least `(1 - degradation)` of their nominal slot time.
    fn check_containment(&mut self) {
        let Some((fault_tick, fault_seq)) = self.first_fault else {
            return;
        };
        let Some(baseline) = self.cfg.baseline.clone() else {
            return;
        };
        if self.major == 0 {
            return;
        }
        let fault_frame = fault_tick / self.major;
        let frames_total = self.end_tick / self.major;
        let degradation = self.cfg.degradation;
        for idx in 0..self.spec.partitions.len() {
            let p = PartId(idx as u16);
            if self.spec.partitions[idx].kind != PartitionKind::Regular
                || self.faulted.contains(&p)
            {
                continue;
            }
            let nominal = self.spec.schedule.frame_ticks_of(p);
            let floor = ((1.0 - degradation) * nominal as f64).ceil() as u64;
            for frame in (fault_frame + 1)..frames_total {
                if self.seen.contains(&(PropertyId::FtCont, Some(p), 0)) {
                    break;
                }
                if let Some(&want) = baseline.heartbeats.get(&p).and_then(|m| m.get(&frame)) {
                    let got = self.heartbeats.get(&(p, frame)).copied();
                    if got != Some(want) {
                        let what = match got {
                            Some(v) => format!("changed to {v:#x}"),
                            None => "disappeared".to_string(),
                        };
                        self.file(
                            PropertyId::FtCont,
                            Some(p),
                            0,
                            fault_tick,
                            vec![fault_seq],
                            format!(
                                "after the fault at tick {fault_tick}, {}'s frame-{frame} \
                                 heartbeat {what} (baseline {want:#x})",
                                self.part_label(p)
                            ),
                        );
                        continue;
                    }
                }
                let got = self.active_ticks.get(&(p, frame)).copied().unwrap_or(0);
                if nominal > 0 && got < floor {
                    self.file(
                        PropertyId::FtCont,
                        Some(p),
                        0,
                        fault_tick,
                        vec![fault_seq],
                        format!(
                            "after the fault at tick {fault_tick}, {} ran {got} of its \
                             nominal {nominal} ticks in frame {frame} (floor {floor})",
                            self.part_label(p)
                        ),
                    );
                }
            }
        }
    }

    fn assess_covert(&mut self) -> Option<CovertAssessment> {
        let pr = self.probe.take()?;
        let n = pr.sent.len().min(pr.latencies.len());
        let sent = &pr.sent[..n];
        let lat = &pr.latencies[..n];
        let threshold = capacity::median_threshold(lat);
        let decoded = capacity::threshold_decode(lat);
        let accuracy = capacity::decode_accuracy(sent, &decoded).unwrap_or(0.5);
        let cap = capacity::estimate_capacity(sent, &decoded).unwrap_or(0.0);
        if cap > self.cfg.capacity_max {
            let detail = format!(
                "device timing decodes the probe bit-stream at accuracy {accuracy:.3}; \
                 estimated capacity {cap:.4} bits/symbol exceeds the {:.4} limit",
                self.cfg.capacity_max
            );
            self.file(
                PropertyId::TpCovert,
                Some(pr.receiver),
                0,
                self.end_tick,
                pr.evidence.clone(),
                detail,
            );
        }
        Some(CovertAssessment {
            bits_sent: pr.sent.len(),
            samples: pr.latencies.len(),
            threshold,
            accuracy,
            capacity: cap,
        })
    }

    /// File a violation, once per (property, partition, key) triple.
    fn file(
        &mut self,
        property: PropertyId,
        partition: Option<PartId>,
        key: u64,
        tick: u64,
        evidence: Vec<u64>,
        detail: String,
    ) {
        if !self.cfg.enabled.contains(&property) {
            return;
        }
        if !self.seen.insert((property, partition, key)) {
            return;
        }
        self.violations.push(Violation {
            property,
            partition,
            mechanisms: property.mechanisms().to_vec(),
            tick,
            evidence,
            detail,
        });
    }

    fn part_label(&self, p: PartId) -> String {
        self.spec
            .partitions
            .get(p.0 as usize)
            .map_or_else(|| p.to_string(), |s| s.name.clone())
    }
}
