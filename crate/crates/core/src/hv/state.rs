//! The live machine state and its enforcement points.
//!
//! Every mechanism check lives here, guarded by the defect set frozen into
//! the `SystemSpec` at boot. The scheduler is a cursor over the cyclic table;
//! the
//! only way it leaves the nominal grid is a greedy slot overrun enabled by
//! the D-T2 defect, and it snaps back to the grid at the next boundary.

use std::collections::{BTreeMap, BTreeSet};

use super::spec::{Access, PartId, RegionId, Space, SpecError, SystemSpec};
use super::trace::{
    DenyReason, EventKind, FaultKind, Trace, TraceEvent, DEFAULT_TRACE_CAP,
};
use crate::mech::DefectId;

/// Outcome of one memory access check; denial is a value, not an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessDecision {
    Allowed(RegionId),
    Denied(DenyReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocOutcome {
    Ok { used_after: u64 },
    QuotaExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceOutcome {
    /// Outside the caller's device window while M3 is enforced.
    Denied,
    Granted { latency: u64 },
}

/// A resumable copy of a machine; restoring yields a state whose future
/// trace under identical inputs is identical to the original's.
#[derive(Debug, Clone)]
pub struct Snapshot(Box<SystemState>);

#[derive(Debug, Clone)]
pub struct SystemState {
    spec: SystemSpec,
    tick: u64,
    active: PartId,
    /// Slots entered since boot; `cur_slot % slots.len()` is the live index.
    cur_slot: u64,
    /// Nominal (grid) end tick of the current slot.
    nominal_end: u64,
    /// Actual tick of the next switch; past `nominal_end` during an overrun.
    switch_due: u64,
    overrun_flagged: bool,
    live_regs: [u64; 8],
    live_writers: [Option<PartId>; 8],
    saved: Vec<([u64; 8], [Option<PartId>; 8])>,
    alloc_used: Vec<u64>,
    memory: BTreeMap<u64, u64>,
    /// Live grant table per region; seeded from the `SystemSpec`, grown by
    /// MEM_MAP.
    grants: Vec<BTreeSet<(PartId, Access)>>,
    greedy: Vec<u64>,
    halted: BTreeSet<PartId>,
    device_queue: u64,
    device_frame: u64,
    trace: Trace,
}

impl SystemState {
    /// Validate the `SystemSpec` and bring the machine up at tick 0.
    pub fn boot(spec: SystemSpec) -> Result<SystemState, SpecError> {
        SystemState::boot_with_cap(spec, DEFAULT_TRACE_CAP)
    }

    pub fn boot_with_cap(spec: SystemSpec, trace_cap: usize) -> Result<SystemState, SpecError> {
        spec.validate()?;
        let n = spec.partitions.len();
        let first = spec.schedule.slots[0];
        let mut st = SystemState {
            tick: 0,
            active: first.part,
            cur_slot: 0,
            nominal_end: first.len,
            switch_due: first.len,
            overrun_flagged: false,
            live_regs: [0; 8],
            live_writers: [None; 8],
            saved: vec![([0; 8], [None; 8]); n],
            alloc_used: (0..n).map(|i| spec.static_bytes(PartId(i as u16))).collect(),
            memory: BTreeMap::new(),
            grants: spec.regions.iter().map(|r| r.grants.clone()).collect(),
            greedy: vec![0; n],
            halted: BTreeSet::new(),
            device_queue: 0,
            device_frame: 0,
            trace: Trace::with_cap(trace_cap),
            spec,
        };
        st.emit(first.part, EventKind::SchedSwitch { from: None, to: first.part, slot: 0 });
        st.emit(
            first.part,
            EventKind::RegSnapshot { regs: st.live_regs, writers: st.live_writers },
        );
        Ok(st)
    }

    /// Advance wall-clock time by `n ≥ 1` ticks, switching partitions at
    /// every slot boundary crossed. Returns the events emitted meanwhile.
    pub fn advance(&mut self, n: u64) -> Vec<TraceEvent> {
        debug_assert!(n >= 1);
        let mark = self.trace.total();
        for _ in 0..n {
            self.tick += 1;
            self.run_scheduler();
        }
        self.events_since(mark).to_vec()
    }

    fn run_scheduler(&mut self) {
        let nslots = self.spec.schedule.slots.len() as u64;
        while self.tick >= self.switch_due {
            if !self.overrun_flagged && self.spec.defect(DefectId::DT2) {
                let extra = self.greedy[self.active.0 as usize];
                if extra > 0 && !self.halted.contains(&self.active) {
                    let slot = (self.cur_slot % nslots) as u32;
                    self.emit(self.active, EventKind::SlotOverrun { extra, slot });
                    self.switch_due += extra;
                    self.overrun_flagged = true;
                    continue;
                }
            }
            let from = self.active;
            self.cur_slot += 1;
            let idx = (self.cur_slot % nslots) as usize;
            let slot = self.spec.schedule.slots[idx];
            self.nominal_end += slot.len;
            self.switch_due = self.nominal_end;
            self.overrun_flagged = false;
            self.active = slot.part;
            self.context_switch(from, slot.part, idx as u32);
        }
    }

    fn context_switch(&mut self, from: PartId, to: PartId, slot: u32) {
        self.saved[from.0 as usize] = (self.live_regs, self.live_writers);
        if !self.spec.defect(DefectId::DT1) {
            // Clear, then load the incoming partition's own saved context.
            let (regs, writers) = self.saved[to.0 as usize];
            self.live_regs = regs;
            self.live_writers = writers;
        }
        self.emit(to, EventKind::SchedSwitch { from: Some(from), to, slot });
        self.emit(to, EventKind::RegSnapshot { regs: self.live_regs, writers: self.live_writers });
    }

    /// Decide one memory access and record the decision in the trace.
    pub fn check_mem_access(&mut self, actor: PartId, addr: u64, access: Access) -> AccessDecision {
        let decision = match self.spec.region_of_addr(addr) {
            None => AccessDecision::Denied(DenyReason::Unmapped),
            Some(rid) => {
                let region = self.spec.region(rid);
                match region.space {
                    Space::Kernel => {
                        if access == Access::Write && self.spec.defect(DefectId::DM2) {
                            AccessDecision::Allowed(rid)
                        } else {
                            AccessDecision::Denied(DenyReason::Kernel)
                        }
                    }
                    Space::User => {
                        let granted = region.owner == Some(actor)
                            || self.grants[rid.0 as usize].contains(&(actor, access));
                        let leaked = match access {
                            Access::Write => self.spec.defect(DefectId::DM1W),
                            Access::Read => self.spec.defect(DefectId::DM1R),
                        };
                        if granted || leaked {
                            AccessDecision::Allowed(rid)
                        } else {
                            AccessDecision::Denied(DenyReason::NoGrant)
                        }
                    }
                }
            }
        };
        match decision {
            AccessDecision::Allowed(region) => {
                let kind = match access {
                    Access::Read => EventKind::MemRead { addr, region },
                    Access::Write => EventKind::MemWrite { addr, region },
                };
                self.emit(actor, kind);
            }
            AccessDecision::Denied(reason) => {
                let region = self.spec.region_of_addr(addr);
                self.emit(actor, EventKind::MemDenied { addr, access, reason, region });
            }
        }
        decision
    }

    /// Checked word read; unmapped-but-allowed words read as zero.
    pub fn mem_read(&mut self, actor: PartId, addr: u64) -> Result<u64, DenyReason> {
        match self.check_mem_access(actor, addr, Access::Read) {
            AccessDecision::Allowed(_) => Ok(self.memory.get(&addr).copied().unwrap_or(0)),
            AccessDecision::Denied(reason) => Err(reason),
        }
    }

    /// Checked word write.
    pub fn mem_write(&mut self, actor: PartId, addr: u64, value: u64) -> Result<(), DenyReason> {
        match self.check_mem_access(actor, addr, Access::Write) {
            AccessDecision::Allowed(_) => {
                self.memory.insert(addr, value);
                Ok(())
            }
            AccessDecision::Denied(reason) => Err(reason),
        }
    }

    /// Unchecked read used by assertions and state digests.
    pub fn peek_word(&self, addr: u64) -> u64 {
        self.memory.get(&addr).copied().unwrap_or(0)
    }

    pub fn alloc_memory(&mut self, actor: PartId, bytes: u64) -> AllocOutcome {
        debug_assert!(bytes > 0);
        let used = self.alloc_used[actor.0 as usize];
        let quota = self.spec.quota(actor);
        let fits = used.checked_add(bytes).is_some_and(|u| u <= quota);
        if fits || self.spec.defect(DefectId::DM4) {
            let used_after = used.saturating_add(bytes);
            self.alloc_used[actor.0 as usize] = used_after;
            self.emit(actor, EventKind::Alloc { bytes, used_after });
            AllocOutcome::Ok { used_after }
        } else {
            self.emit(actor, EventKind::AllocDenied { bytes, used, quota });
            AllocOutcome::QuotaExceeded
        }
    }

    /// Release dynamic memory; never drops below the statically owned floor.
    pub fn free_memory(&mut self, actor: PartId, bytes: u64) {
        let floor = self.spec.static_bytes(actor);
        let used = &mut self.alloc_used[actor.0 as usize];
        *used = floor.max(used.saturating_sub(bytes));
    }

    /// One access to the shared device, leaving `hold` busy ticks behind.
    ///
    /// The contention queue is scoped to the current major frame: work left
    /// by earlier accesses in the same frame delays later ones, which is
    /// exactly the signal T4's normalisation hides.
    pub fn device_access(&mut self, actor: PartId, hold: u64) -> DeviceOutcome {
        let frame = self.frame();
        if frame != self.device_frame {
            self.device_queue = 0;
            self.device_frame = frame;
        }
        if !self.spec.defect(DefectId::DM3) && !self.spec.in_device_window(actor, self.tick) {
            self.emit(actor, EventKind::DeviceAccess { denied: true, latency: 0, hold });
            return DeviceOutcome::Denied;
        }
        let raw = self.spec.device.base_latency + self.device_queue;
        let normalised =
            !(self.spec.defect(DefectId::DT4) || self.spec.defect(DefectId::DM3));
        let latency = if normalised { self.spec.device.normalized_latency } else { raw };
        self.device_queue += hold;
        self.emit(actor, EventKind::DeviceAccess { denied: false, latency, hold });
        DeviceOutcome::Granted { latency }
    }

    /// Write a live register on behalf of the active partition.
    pub fn set_reg(&mut self, actor: PartId, idx: usize, value: u64) {
        debug_assert!(idx < 8);
        debug_assert_eq!(actor, self.active, "only the active partition touches registers");
        let idx = idx % 8;
        self.live_regs[idx] = value;
        self.live_writers[idx] = Some(actor);
    }

    pub fn reg(&self, idx: usize) -> u64 {
        self.live_regs[idx % 8]
    }

    /// Mark a partition faulted; it keeps its slots but runs nothing.
    pub fn fault(&mut self, target: PartId, kind: FaultKind) {
        if self.halted.insert(target) {
            self.emit(target, EventKind::PartFault { fault: kind });
        }
    }

    /// Arm or clear the greedy-overrun amount for a partition (D-T2 bait).
    pub fn set_greedy(&mut self, actor: PartId, extra: u64) {
        self.greedy[actor.0 as usize] = extra;
    }

    /// Add or remove a dynamic grant; policy is decided by the dispatcher.
    pub(crate) fn set_grant(&mut self, region: RegionId, who: PartId, access: Access, on: bool) {
        let g = &mut self.grants[region.0 as usize];
        if on {
            g.insert((who, access));
        } else {
            g.remove(&(who, access));
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot(Box::new(self.clone()))
    }

    pub fn restore(snap: &Snapshot) -> SystemState {
        (*snap.0).clone()
    }

    /// Defects are spec-time only; a live machine always refuses.
    pub fn seed_defect(&mut self, _d: DefectId) -> Result<(), SpecError> {
        Err(SpecError::SpecFrozen)
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Major-frame index of the current tick.
    pub fn frame(&self) -> u64 {
        self.tick / self.spec.schedule.major_frame()
    }

    pub fn active(&self) -> PartId {
        self.active
    }

    pub fn is_halted(&self, p: PartId) -> bool {
        self.halted.contains(&p)
    }

    pub fn halted(&self) -> &BTreeSet<PartId> {
        &self.halted
    }

    pub fn alloc_used(&self, p: PartId) -> u64 {
        self.alloc_used[p.0 as usize]
    }

    pub fn live_regs(&self) -> &[u64; 8] {
        &self.live_regs
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// Stored events with `seq >= mark` (short of the cap, all of them).
    pub fn events_since(&self, mark: u64) -> &[TraceEvent] {
        let evs = self.trace.events();
        let start = evs.partition_point(|e| e.seq < mark);
        &evs[start..]
    }

    /// Cheap structural digest used by the INFO call; deterministic.
    pub fn info_digest(&self, actor: PartId) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for x in [
            self.tick,
            self.active.0 as u64,
            self.alloc_used[actor.0 as usize],
            self.trace.total(),
        ] {
            h ^= x;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    pub(crate) fn emit(&mut self, actor: PartId, kind: EventKind) -> u64 {
        self.trace.push(self.tick, actor, kind)
    }
}
