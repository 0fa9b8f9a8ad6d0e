//! Case execution: bind programs to partitions, drive the machine tick by
//! tick, and stream the trace into a per-case monitor.
//!
//! Pacing model: a bound program executes at most one step per major frame,
//! at its partition's first active tick of that frame, provided any busy
//! time from the previous step and any explicit wait have expired. Steps
//! are atomic at a single tick. Regular partitions run their background
//! profile once per frame under the same activation rule.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use std::collections::BTreeMap;

use super::{Campaign, CampaignResults, CaseResult, CaseStatus, TechniqueSpec};
use crate::hv::{FaultKind, PartId, PartitionKind, Snapshot, SystemState};
use crate::monitor::{BaselineMetrics, Monitor};
use crate::surface::{dispatch_hwfv, dispatch_pv, HWFV_CATALOG, PV_CATALOG};
use crate::workloads::{
    covert_pair, frame_checksum, gen_fault_plan, gen_fuzz, representative, script::parse_script,
    FaultSpec, Step, TestCase, Workload,
};

/// One schedulable execution: the case program plus, for covert pairs, the
/// receiver's probe program and the ground-truth bits for the monitor.
#[derive(Debug, Clone)]
pub(super) struct RunUnit {
    pub case: TestCase,
    pub extra: Option<(PartId, Vec<Step>)>,
    pub probe: Option<(Vec<u8>, PartId)>,
    pub frames: u64,
}

fn first_test_part(campaign: &Campaign, prefer: PartitionKind) -> Option<PartId> {
    let pick = |kind: PartitionKind| {
        campaign
            .spec
            .partitions
            .iter()
            .position(|p| p.kind == kind)
            .map(|i| PartId(i as u16))
    };
    pick(prefer).or_else(|| pick(PartitionKind::TestPv)).or_else(|| pick(PartitionKind::TestHwfv))
}

/// A fuzz case runs on the test partition matching its first step's
/// surface, falling back to whichever test partition exists.
fn bind_fuzz_target(campaign: &Campaign, case: &TestCase) -> PartId {
    let prefer = match case.steps.first() {
        Some(Step::HwfvTrap { .. }) => PartitionKind::TestHwfv,
        _ => PartitionKind::TestPv,
    };
    first_test_part(campaign, prefer).expect("validated at load: a test partition exists")
}

/// Expand every technique into bound, campaign-indexed run units.
/// Deterministic; replay relies on regenerating exactly this list.
pub(super) fn plan_units(campaign: &Campaign) -> Vec<RunUnit> {
    let mut units = Vec::new();
    let mut next_id = 0u64;
    let mut push = |mut case: TestCase, extra, probe, frames| {
        case.id = next_id;
        next_id += 1;
        units.push(RunUnit { case, extra, probe, frames });
    };
    for t in &campaign.techniques {
        match t {
            TechniqueSpec::Fuzz { seed, count, policy } => {
                for mut c in gen_fuzz(*seed, &PV_CATALOG, &HWFV_CATALOG, *policy, *count) {
                    c.target = Some(bind_fuzz_target(campaign, &c));
                    push(c, None, None, campaign.frames_per_case);
                }
            }
            TechniqueSpec::FaultInjection { seed, plan } => {
                let cases = gen_fault_plan(*seed, &campaign.spec, plan)
                    .expect("validated at load: plan targets test partitions");
                for c in cases {
                    push(c, None, None, campaign.frames_per_case);
                }
            }
            TechniqueSpec::Scripted { script, target } => {
                let mut c = parse_script(script).expect("validated at load: script parses");
                c.target = Some(*target);
                push(c, None, None, campaign.frames_per_case);
            }
            TechniqueSpec::CovertProbe { seed, n_bits, sender, receiver } => {
                let (mut s, r, bits) = covert_pair(*seed, *n_bits);
                s.target = Some(*sender);
                let frames = campaign.frames_per_case.max(*n_bits as u64);
                push(s, Some((*receiver, r.steps)), Some((bits, *receiver)), frames);
            }
        }
    }
    units
}

struct ProgCursor {
    steps: Vec<Step>,
    pc: usize,
    busy_until: u64,
    wait_until: u64,
    last_frame: Option<u64>,
    leak: Option<u64>,
    leak_frame: Option<u64>,
}

impl ProgCursor {
    fn new(steps: Vec<Step>) -> ProgCursor {
        ProgCursor {
            steps,
            pc: 0,
            busy_until: 0,
            wait_until: 0,
            last_frame: None,
            leak: None,
            leak_frame: None,
        }
    }
}

fn exec_step(st: &mut SystemState, p: PartId, step: &Step, prog: &mut ProgCursor) {
    match step {
        Step::PvCall { id, args } => {
            let rec = dispatch_pv(st, p, *id, args);
            prog.busy_until = st.tick() + rec.duration;
        }
        Step::HwfvTrap { reason, payload } => {
            let rec = dispatch_hwfv(st, p, *reason, payload);
            prog.busy_until = st.tick() + rec.duration;
        }
        Step::InjectFault { fault } => match fault {
            FaultSpec::Crash => st.fault(p, FaultKind::Crash),
            FaultSpec::MemCorrupt { addr, val } => {
                let _ = st.mem_write(p, *addr, *val);
            }
            FaultSpec::RegCorrupt { idx, val } => st.set_reg(p, (*idx as usize) % 8, *val),
            FaultSpec::Leak { bytes_per_frame } => {
                prog.leak = Some(*bytes_per_frame);
                prog.leak_frame = Some(st.tick() / st.spec().schedule.major_frame());
                st.alloc_memory(p, *bytes_per_frame);
            }
        },
        Step::Wait { ticks } => prog.wait_until = st.tick() + ticks,
        Step::SetGreedy { extra } => st.set_greedy(p, *extra),
        Step::DevPulse { busy } => {
            // A busy pulse loads the device; an idle pulse is silence.
            if *busy {
                let hold = st.spec().device.busy_pulse;
                st.device_access(p, hold);
            }
        }
    }
}

/// Drive the machine for `frames` major frames, interleaving bound programs
/// with the regular partitions' background workloads, optionally streaming
/// every event into a monitor.
fn drive(
    st: &mut SystemState,
    progs: &mut BTreeMap<PartId, ProgCursor>,
    frames: u64,
    mut monitor: Option<&mut Monitor>,
) {
    let spec = st.spec().clone();
    let major = spec.schedule.major_frame();
    let workloads: BTreeMap<PartId, (Workload, u64)> = spec
        .partitions
        .iter()
        .enumerate()
        .filter(|(_, p)| p.kind == PartitionKind::Regular && p.role != "idle")
        .map(|(i, p)| {
            let id = PartId(i as u16);
            let base = spec
                .regions_owned(id)
                .first()
                .map(|&r| spec.region(r).base)
                .unwrap_or(0);
            let w = representative(&p.role).expect("validated at load: profile exists");
            (id, (w, base))
        })
        .collect();
    let mut wl_last: BTreeMap<PartId, u64> = BTreeMap::new();
    let mut fed: u64 = 0;
    let total = frames * major;

    while st.tick() < total {
        let tick = st.tick();
        let frame = tick / major;
        let p = st.active();
        if !st.is_halted(p) {
            if let Some((w, base)) = workloads.get(&p) {
                if wl_last.get(&p) != Some(&frame) {
                    wl_last.insert(p, frame);
                    st.set_reg(p, 0, frame_checksum(w.profile, frame));
                    for step in w.frame_steps(frame, *base) {
                        if let Step::PvCall { id, args } = step {
                            dispatch_pv(st, p, id, &args);
                        }
                    }
                }
            }
            if let Some(prog) = progs.get_mut(&p) {
                if let Some(bpf) = prog.leak {
                    if prog.leak_frame != Some(frame) {
                        prog.leak_frame = Some(frame);
                        st.alloc_memory(p, bpf);
                    }
                }
                if prog.pc < prog.steps.len()
                    && tick >= prog.busy_until
                    && tick >= prog.wait_until
                    && prog.last_frame != Some(frame)
                {
                    prog.last_frame = Some(frame);
                    let step = prog.steps[prog.pc].clone();
                    prog.pc += 1;
                    exec_step(st, p, &step, prog);
                }
            }
        }
        if let Some(m) = monitor.as_deref_mut() {
            for ev in st.events_since(fed) {
                m.observe(ev).expect("events feed in order");
            }
            fed = st.trace().total();
        }
        st.advance(1);
        if let Some(m) = monitor.as_deref_mut() {
            for ev in st.events_since(fed) {
                m.observe(ev).expect("events feed in order");
            }
            fed = st.trace().total();
        }
    }
}

/// Reference run of the defect-free twin with only the background
/// workloads; its heartbeats are the containment yardstick.
pub(super) fn capture_baseline(campaign: &Campaign) -> (BaselineMetrics, String) {
    let spec = campaign.spec.without_defects();
    let mut st = SystemState::boot(spec.clone()).expect("campaign spec is valid");
    drive(&mut st, &mut BTreeMap::new(), campaign.frames_per_case, None);
    let baseline = BaselineMetrics::from_trace(&spec, st.trace().events());
    (baseline, st.trace().digest())
}

pub(super) fn run_unit(
    campaign: &Campaign,
    snap: &Snapshot,
    baseline: &BaselineMetrics,
    unit: &RunUnit,
) -> CaseResult {
    let mut st = SystemState::restore(snap);
    let mut cfg = campaign.monitor.clone();
    cfg.baseline = Some(baseline.clone());
    let mut monitor = Monitor::new(&campaign.spec, cfg);
    if let Some((bits, receiver)) = &unit.probe {
        monitor.register_covert_probe(bits.clone(), *receiver);
    }

    let mut progs = BTreeMap::new();
    let target = unit.case.target.expect("cases are bound at planning");
    progs.insert(target, ProgCursor::new(unit.case.steps.clone()));
    if let Some((p, steps)) = &unit.extra {
        progs.insert(*p, ProgCursor::new(steps.clone()));
    }

    drive(&mut st, &mut progs, unit.frames, Some(&mut monitor));

    let status = if progs.keys().any(|p| st.is_halted(*p)) {
        CaseStatus::HvReset
    } else {
        CaseStatus::Completed
    };
    CaseResult {
        case: unit.case.clone(),
        frames: unit.frames,
        status,
        trace_digest: st.trace().digest(),
        events_total: st.trace().total(),
        report: monitor.finalize(),
        events: st.trace().events().to_vec(),
    }
}

/// Run every case of a campaign, reset-per-case, optionally across worker
/// threads. Results are merged by case id, so the outcome is identical for
/// any parallelism.
pub fn run_campaign(campaign: &Campaign) -> CampaignResults {
    let t0 = std::time::Instant::now();
    let (baseline, baseline_digest) = capture_baseline(campaign);
    let units = plan_units(campaign);
    let snap = SystemState::boot(campaign.spec.clone())
        .expect("campaign spec is valid")
        .snapshot();

    let n = units.len();
    let workers = campaign.parallelism.min(n.max(1));
    let mut cases: Vec<CaseResult> = if workers <= 1 {
        units.iter().map(|u| run_unit(campaign, &snap, &baseline, u)).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<CaseResult>>> = (0..n).map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let r = run_unit(campaign, &snap, &baseline, &units[i]);
                    *slots[i].lock().expect("result slot") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("result slot").expect("every unit ran"))
            .collect()
    };
    cases.sort_by_key(|c| c.case.id);

    CampaignResults {
        campaign: campaign.clone(),
        baseline,
        baseline_digest,
        cases,
        wall_ms: t0.elapsed().as_millis() as u64,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mech::MechanismId;
    use crate::monitor::PropertyId;
    use crate::orchestrator::load_campaign;
    use crate::workloads::Technique;

    /// A five-partition layout exercising both surfaces, two regular
    /// victims, and a dedicated covert receiver.
    pub(crate) fn doc(defects: &str, techniques: &str, frames: u64) -> String {
        format!(
            r#"{{
              "name": "bench",
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

    fn fuzz(seed: u64, count: usize, policy: &str) -> String {
        format!(
            r#"{{"name": "fuzz", "seed": {seed}, "count": {count}, "params": {{"policy": "{policy}"}}}}"#
        )
    }

    #[test]
    fn clean_sweep_campaign_is_silent_and_covers_the_surface() {
        let c = load_campaign(&doc("", &fuzz(11, 32, "sweep"), 4)).unwrap();
        let r = run_campaign(&c);
        assert_eq!(r.cases.len(), 32);
        assert_eq!(r.total_violations(), 0);
        let tsfi: std::collections::BTreeSet<_> = r
            .cases
            .iter()
            .flat_map(|c| c.report.tsfi_exercised.iter().cloned())
            .collect();
        assert_eq!(tsfi.len(), 16, "a 32-case sweep visits both catalogues fully");
        // The HALT sweep case ends with the test partition down.
        assert!(r.cases.iter().any(|c| c.status == CaseStatus::HvReset));
        assert!(r.cases.iter().any(|c| c.status == CaseStatus::Completed));
    }

    #[test]
    fn results_are_ordered_and_deterministic_across_parallelism() {
        let mut c = load_campaign(&doc("", &fuzz(3, 24, "random"), 3)).unwrap();
        let a = run_campaign(&c);
        c.parallelism = 4;
        let b = run_campaign(&c);
        assert_eq!(a.cases.len(), b.cases.len());
        for (x, y) in a.cases.iter().zip(&b.cases) {
            assert_eq!(x, y);
        }
        assert_eq!(a.digest(), b.digest());
        let ids: Vec<u64> = a.cases.iter().map(|c| c.case.id).collect();
        assert_eq!(ids, (0..24).collect::<Vec<u64>>());
    }

    #[test]
    fn cross_partition_write_defect_is_caught_by_the_sweep() {
        let c = load_campaign(&doc("\"D-M1W\"", &fuzz(11, 64, "sweep"), 4)).unwrap();
        let r = run_campaign(&c);
        let hits: Vec<&crate::monitor::Violation> = r
            .cases
            .iter()
            .flat_map(|c| c.report.violations.iter())
            .collect();
        assert!(!hits.is_empty());
        assert!(hits.iter().all(|v| v.property == PropertyId::SpInt));
        assert!(hits.iter().all(|v| v.mechanisms == vec![MechanismId::M1]));
    }

    #[test]
    fn greedy_script_trips_the_slot_monitor_only_with_the_defect() {
        let script = r#"{"name": "scripted", "params": {"script": "greedy 4\nwait 40\n", "target": "TP"}}"#;
        let c = load_campaign(&doc("\"D-T2\"", script, 4)).unwrap();
        let r = run_campaign(&c);
        let v: Vec<_> = r.cases[0].report.violations.iter().collect();
        assert!(v.iter().any(|v| v.property == PropertyId::TpSlot), "{v:?}");

        let c = load_campaign(&doc("", script, 4)).unwrap();
        assert_eq!(run_campaign(&c).total_violations(), 0);
    }

    #[test]
    fn register_canary_script_exposes_residue() {
        let script =
            r#"{"name": "scripted", "params": {"script": "inject reg_corrupt 3 51966", "target": "TP"}}"#;
        let c = load_campaign(&doc("\"D-T1\"", script, 3)).unwrap();
        let r = run_campaign(&c);
        let v = &r.cases[0].report.violations;
        assert!(v.iter().any(|v| v.property == PropertyId::TpResid), "{v:?}");
        assert!(v.iter().all(|v| v.property != PropertyId::SpInt));
    }

    #[test]
    fn covert_pair_reads_through_the_weakened_device() {
        let covert = r#"{"name": "covert_probe", "seed": 5, "params": {"n_bits": 64, "sender": "TP", "receiver": "TR"}}"#;
        let c = load_campaign(&doc("\"D-T4\"", covert, 4)).unwrap();
        let r = run_campaign(&c);
        assert_eq!(r.cases.len(), 1, "a probe pair is one case");
        assert_eq!(r.cases[0].frames, 64);
        let cov = r.cases[0].report.covert.as_ref().unwrap();
        assert_eq!(cov.bits_sent, 64);
        assert_eq!(cov.samples, 64);
        assert_eq!(cov.accuracy, 1.0);
        assert!(cov.capacity > 0.9, "capacity {}", cov.capacity);
        assert!(r.cases[0]
            .report
            .violations
            .iter()
            .any(|v| v.property == PropertyId::TpCovert));

        let c = load_campaign(&doc("", covert, 4)).unwrap();
        let r = run_campaign(&c);
        let cov = r.cases[0].report.covert.as_ref().unwrap();
        assert_eq!(cov.accuracy, 0.5, "normalisation hides the pulse train");
        assert_eq!(cov.capacity, 0.0);
        assert_eq!(r.total_violations(), 0);
    }

    #[test]
    fn crash_injection_is_contained_and_reported_as_reset() {
        let fi = r#"{"name": "fault_injection", "params": {"faults": [{"kind": "crash"}], "targets": ["TP"], "frames": [2]}}"#;
        let c = load_campaign(&doc("", fi, 12)).unwrap();
        let r = run_campaign(&c);
        assert_eq!(r.cases.len(), 1);
        assert_eq!(r.cases[0].status, CaseStatus::HvReset);
        assert_eq!(r.total_violations(), 0, "regulars keep their beat");
        assert_eq!(r.cases[0].case.technique, Technique::FaultInjection);
    }

    #[test]
    fn quota_leak_is_flagged_against_the_leaker() {
        let fi = r#"{"name": "fault_injection", "params": {"faults": [{"kind": "leak", "bytes_per_frame": 16384}], "targets": ["TP"], "frames": [1]}}"#;
        let c = load_campaign(&doc("\"D-M4\"", fi, 10)).unwrap();
        let r = run_campaign(&c);
        let v = &r.cases[0].report.violations;
        assert!(v.iter().any(|v| v.property == PropertyId::SpQuota), "{v:?}");

        // Enforced quotas hold the line: denials, no violations.
        let c = load_campaign(&doc("", fi, 10)).unwrap();
        assert_eq!(run_campaign(&c).total_violations(), 0);
    }

    #[test]
    fn reset_hygiene_case_results_ignore_execution_order() {
        let c = load_campaign(&doc("\"D-M1W\"", &fuzz(7, 12, "random"), 3)).unwrap();
        let baseline = capture_baseline(&c);
        let snap = SystemState::boot(c.spec.clone()).unwrap().snapshot();
        let units = plan_units(&c);
        let forward: Vec<CaseResult> =
            units.iter().map(|u| run_unit(&c, &snap, &baseline.0, u)).collect();
        let mut backward: Vec<CaseResult> =
            units.iter().rev().map(|u| run_unit(&c, &snap, &baseline.0, u)).collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn baseline_comes_from_the_defect_free_twin() {
        let a = load_campaign(&doc("", &fuzz(1, 1, "sweep"), 4)).unwrap();
        let b = load_campaign(&doc("\"D-T4\", \"D-M1W\"", &fuzz(1, 1, "sweep"), 4)).unwrap();
        assert_eq!(capture_baseline(&a), capture_baseline(&b));
    }
}
