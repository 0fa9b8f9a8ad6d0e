//! Shared fixtures for the integration suites: the reference campaign
//! layout and a trace-scanning oracle that rechecks hypervisor invariants
//! from the raw event stream, independently of the monitor.

// Each suite links this module separately and uses its own subset.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use isoforge_core::hv::{Access, DenyReason, EventKind, PartId, RegionId, Status, TraceEvent};
use isoforge_core::orchestrator::{load_campaign, Campaign};
use isoforge_core::SystemSpec;

/// Reference layout: a PV test partition, an HWFV test partition, a second
/// PV partition usable as covert receiver, and two regular victims whose
/// regions sit at the fuzz generator's victim addresses.
pub fn doc(defects: &str, techniques: &str, frames: u64) -> String {
    format!(
        r#"{{
          "name": "acceptance",
          "system": {{
            "partitions": [
              {{"name": "TP", "kind": "test_pv"}},
              {{"name": "TH", "kind": "test_hwfv"}},
              {{"name": "TR", "kind": "test_pv"}},
              {{"name": "R1", "kind": "regular", "role": "periodic_compute"}},
              {{"name": "R2", "kind": "regular", "role": "memory_toucher"}}
            ],
            "regions": [
              {{"name": "tp.ram", "base": 4096, "size": 4096, "owner": "TP"}},
              {{"name": "th.ram", "base": 8192, "size": 4096, "owner": "TH"}},
              {{"name": "tr.ram", "base": 12288, "size": 4096, "owner": "TR"}},
              {{"name": "r1.ram", "base": 16384, "size": 4096, "owner": "R1"}},
              {{"name": "r2.ram", "base": 20480, "size": 4096, "owner": "R2"}},
              {{"name": "kcfg", "base": 61440, "size": 256}}
            ],
            "schedule": [["TP", 6], ["R1", 6], ["TH", 6], ["TR", 6], ["R2", 6]],
            "channels": [["TP", "TR"]],
            "defects": [{defects}]
          }},
          "techniques": [{techniques}],
          "frames_per_case": {frames}
        }}"#
    )
}

pub fn campaign(defects: &str, techniques: &str, frames: u64, parallelism: usize) -> Campaign {
    let mut c = load_campaign(&doc(defects, techniques, frames)).expect("fixture loads");
    c.parallelism = parallelism;
    c
}

pub fn fuzz(seed: u64, count: usize, policy: &str) -> String {
    format!(
        r#"{{"name": "fuzz", "seed": {seed}, "count": {count}, "params": {{"policy": "{policy}"}}}}"#
    )
}

pub fn scripted(script: &str, target: &str) -> String {
    format!(r#"{{"name": "scripted", "params": {{"script": "{script}", "target": "{target}"}}}}"#)
}

pub fn covert(seed: u64, n_bits: usize) -> String {
    format!(
        r#"{{"name": "covert_probe", "seed": {seed}, "params": {{"n_bits": {n_bits}, "sender": "TP", "receiver": "TR"}}}}"#
    )
}

/// Per-partition active ticks, reconstructed purely from SCHED_SWITCH
/// events and the end-of-run tick.
pub fn active_ticks(events: &[TraceEvent], end_tick: u64) -> BTreeMap<PartId, u64> {
    let mut spans: Vec<(u64, PartId)> = events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::SchedSwitch { to, .. } => Some((e.tick, to)),
            _ => None,
        })
        .collect();
    spans.sort_by_key(|&(t, _)| t);
    let mut ticks = BTreeMap::new();
    for (i, &(start, p)) in spans.iter().enumerate() {
        let stop = spans.get(i + 1).map_or(end_tick, |&(t, _)| t).min(end_tick);
        *ticks.entry(p).or_insert(0) += stop.saturating_sub(start);
    }
    ticks
}

/// Recheck the hypervisor's own invariants from a defect-free trace:
/// event ordering, memory access legality (tracking dynamic grants),
/// kernel-space inviolability, quota bounds, device windows and latency
/// normalisation, WCET-bounded call durations, schedule fidelity, and
/// register provenance at context switches. Returns the first problem.
pub fn scan_trace(spec: &SystemSpec, events: &[TraceEvent]) -> Result<(), String> {
    let major = spec.schedule.major_frame();
    let quota = |p: PartId| spec.part(p).memory_quota;
    // Dynamic grant state, seeded from the static configuration.
    let mut grants: BTreeMap<RegionId, BTreeSet<(PartId, Access)>> = spec
        .regions
        .iter()
        .enumerate()
        .map(|(i, r)| (RegionId(i as u16), r.grants.clone()))
        .collect();

    let legal = |grants: &BTreeMap<RegionId, BTreeSet<(PartId, Access)>>,
                 actor: PartId,
                 region: RegionId,
                 access: Access| {
        let r = spec.region(region);
        r.owner == Some(actor) || grants[&region].contains(&(actor, access))
    };

    let mut last_seq: Option<u64> = None;
    let mut last_tick = 0u64;
    for e in events {
        if let Some(prev) = last_seq {
            if e.seq != prev + 1 {
                return Err(format!("seq {} follows {prev}", e.seq));
            }
        }
        last_seq = Some(e.seq);
        if e.tick < last_tick {
            return Err(format!("tick went backwards at seq {}", e.seq));
        }
        last_tick = e.tick;

        match &e.kind {
            EventKind::MemRead { region, .. } => {
                if spec.region(*region).space == isoforge_core::hv::Space::Kernel {
                    return Err(format!("guest read of kernel space at seq {}", e.seq));
                }
                if !legal(&grants, e.actor, *region, Access::Read) {
                    return Err(format!("illegal read by {} at seq {}", e.actor, e.seq));
                }
            }
            EventKind::MemWrite { region, .. } => {
                if spec.region(*region).space == isoforge_core::hv::Space::Kernel {
                    return Err(format!("guest write to kernel space at seq {}", e.seq));
                }
                if !legal(&grants, e.actor, *region, Access::Write) {
                    return Err(format!("illegal write by {} at seq {}", e.actor, e.seq));
                }
            }
            EventKind::MemDenied { addr, access, reason, .. } => {
                // The denial itself must be justified.
                match spec.region_of_addr(*addr) {
                    None => {
                        if *reason != DenyReason::Unmapped {
                            return Err(format!("wrong deny reason at seq {}", e.seq));
                        }
                    }
                    Some(r) => {
                        if legal(&grants, e.actor, r, *access)
                            && spec.region(r).space != isoforge_core::hv::Space::Kernel
                        {
                            return Err(format!("spurious denial at seq {}", e.seq));
                        }
                    }
                }
            }
            EventKind::Hypercall { name: Some(name), args, status, duration, .. } => {
                if let Some(&bound) = spec.wcet.get(name.as_str()) {
                    if *duration > bound {
                        return Err(format!("{name} ran {duration} > WCET {bound} at seq {}", e.seq));
                    }
                }
                if *status == Status::Ok && (name == "MEM_MAP" || name == "MEM_UNMAP") {
                    let region = RegionId(args[0] as u16);
                    let target = PartId(args[1] as u16);
                    let access = if args[2] == 0 { Access::Read } else { Access::Write };
                    let set = grants.entry(region).or_default();
                    if name == "MEM_MAP" {
                        set.insert((target, access));
                    } else {
                        set.remove(&(target, access));
                    }
                }
            }
            EventKind::Trap { name: Some(name), duration, .. } => {
                if let Some(&bound) = spec.wcet.get(name.as_str()) {
                    if *duration > bound {
                        return Err(format!("{name} ran {duration} > WCET {bound} at seq {}", e.seq));
                    }
                }
            }
            EventKind::Alloc { used_after, .. } => {
                if *used_after > quota(e.actor) {
                    return Err(format!(
                        "allocation left {} over quota at seq {}",
                        e.actor, e.seq
                    ));
                }
            }
            EventKind::AllocDenied { bytes, used, quota: q } => {
                if used + bytes <= *q {
                    return Err(format!("unjustified allocation denial at seq {}", e.seq));
                }
            }
            EventKind::DeviceAccess { denied, latency, .. } => {
                let in_window = spec.in_device_window(e.actor, e.tick);
                if *denied == in_window {
                    return Err(format!("window decision wrong at seq {}", e.seq));
                }
                if !denied && *latency != spec.device.normalized_latency {
                    return Err(format!(
                        "latency {latency} escaped normalisation at seq {}",
                        e.seq
                    ));
                }
            }
            EventKind::SchedSwitch { to, slot, .. } => {
                let i = *slot as usize;
                if i >= spec.schedule.slots.len()
                    || spec.schedule.slots[i].part != *to
                    || e.tick % major != spec.schedule.slot_start(i)
                {
                    return Err(format!("switch off the grid at seq {}", e.seq));
                }
            }
            EventKind::RegSnapshot { writers, .. } => {
                if writers.iter().flatten().any(|w| *w != e.actor) {
                    return Err(format!(
                        "foreign register residue visible to {} at seq {}",
                        e.actor, e.seq
                    ));
                }
            }
            EventKind::SlotOverrun { .. } => {
                return Err(format!("slot overrun without a defect at seq {}", e.seq));
            }
            _ => {}
        }
    }
    Ok(())
}
