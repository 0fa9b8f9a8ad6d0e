//! Campaign document parsing and resolution.
//!
//! The on-disk document references partitions by name; loading resolves
//! every reference to an index, parses embedded scripts, seeds defects, and
//! validates the resulting system. Errors carry a JSON-ish path to the
//! offending key.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use super::{Campaign, CampaignError, TechniqueSpec};
use crate::hv::{
    Access, CyclicSchedule, DeviceSpec, MemoryRegion, PartId, PartitionKind, PartitionSpec,
    SlotSpec, Space, SpecError, SystemSpec,
};
use crate::mech::DefectId;
use crate::monitor::{MonitorConfig, PropertyId};
use crate::surface::default_wcet;
use crate::workloads::{script::parse_script, FaultPlan, FaultSpec, FuzzPolicy, WorkloadProfile};

fn err(path: impl Into<String>, reason: impl Into<String>) -> CampaignError {
    CampaignError::Schema { path: path.into(), reason: reason.into() }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCampaign {
    #[serde(default = "default_name")]
    name: String,
    system: RawSystem,
    #[serde(default)]
    monitor: RawMonitor,
    techniques: Vec<RawTechnique>,
    #[serde(default = "default_frames")]
    frames_per_case: u64,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
}

fn default_name() -> String {
    "campaign".into()
}

fn default_frames() -> u64 {
    4
}

fn default_parallelism() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    partitions: Vec<RawPartition>,
    #[serde(default)]
    regions: Vec<RawRegion>,
    schedule: Vec<(String, u64)>,
    #[serde(default)]
    device: Option<RawDevice>,
    /// Absent or `"default"` → the built-in WCET table; an object sets
    /// explicit bounds (empty object = everything unbounded).
    #[serde(default)]
    wcet: Option<RawWcet>,
    #[serde(default)]
    channels: Vec<(String, String)>,
    #[serde(default)]
    defects: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPartition {
    name: String,
    kind: PartitionKind,
    #[serde(default = "default_quota")]
    memory_quota: u64,
    #[serde(default = "default_role")]
    role: String,
}

fn default_quota() -> u64 {
    65536
}

fn default_role() -> String {
    "idle".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    name: String,
    base: u64,
    size: u64,
    /// Defaults to `user` when an owner is named, `kernel` otherwise.
    #[serde(default)]
    space: Option<Space>,
    #[serde(default)]
    owner: Option<String>,
    #[serde(default)]
    grants: Vec<(String, String)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    #[serde(default = "default_base_latency")]
    base_latency: u64,
    #[serde(default = "default_normalized_latency")]
    normalized_latency: u64,
    #[serde(default = "default_busy_pulse")]
    busy_pulse: u64,
    #[serde(default)]
    windows: BTreeMap<String, Vec<(u64, u64)>>,
}

fn default_base_latency() -> u64 {
    DeviceSpec::default().base_latency
}

fn default_normalized_latency() -> u64 {
    DeviceSpec::default().normalized_latency
}

fn default_busy_pulse() -> u64 {
    DeviceSpec::default().busy_pulse
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawWcet {
    Named(String),
    Table(BTreeMap<String, u64>),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMonitor {
    #[serde(default)]
    enabled: Option<Vec<String>>,
    #[serde(default)]
    jitter: Option<u64>,
    #[serde(default)]
    degradation: Option<f64>,
    #[serde(default)]
    capacity_max: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTechnique {
    name: String,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    count: usize,
    #[serde(default)]
    params: serde_json::Value,
}

fn one() -> usize {
    1
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawFuzzParams {
    #[serde(default)]
    policy: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFaultParams {
    faults: Vec<FaultSpec>,
    targets: Vec<String>,
    #[serde(default = "default_fault_frames")]
    frames: Vec<u64>,
}

fn default_fault_frames() -> Vec<u64> {
    vec![1]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScriptParams {
    script: String,
    target: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCovertParams {
    #[serde(default = "default_n_bits")]
    n_bits: usize,
    sender: String,
    receiver: String,
}

fn default_n_bits() -> usize {
    1000
}

struct NameTable {
    parts: BTreeMap<String, PartId>,
}

impl NameTable {
    fn resolve(&self, name: &str, path: &str) -> Result<PartId, CampaignError> {
        self.parts
            .get(name)
            .copied()
            .ok_or_else(|| err(path, format!("unknown partition {name:?}")))
    }
}

fn resolve_system(raw: RawSystem) -> Result<SystemSpec, CampaignError> {
    if raw.partitions.is_empty() {
        return Err(err("system.partitions", "at least one partition is required"));
    }
    let mut parts = BTreeMap::new();
    let mut partitions = Vec::new();
    for (i, p) in raw.partitions.iter().enumerate() {
        let path = format!("system.partitions[{i}]");
        if parts.insert(p.name.clone(), PartId(i as u16)).is_some() {
            return Err(err(path, format!("duplicate partition name {:?}", p.name)));
        }
        match (p.kind.is_test(), p.role.as_str()) {
            (true, "idle") | (false, "idle") => {}
            (true, other) => {
                return Err(err(
                    format!("{path}.role"),
                    format!("test partitions run campaign cases, not a profile ({other:?})"),
                ));
            }
            (false, other) => {
                // Regular partitions must name a known background profile.
                WorkloadProfile::parse(other)
                    .map_err(|_| CampaignError::UnknownProfile(other.to_string()))?;
            }
        }
        partitions.push(PartitionSpec {
            name: p.name.clone(),
            kind: p.kind,
            memory_quota: p.memory_quota,
            role: p.role.clone(),
        });
    }
    let names = NameTable { parts };

    let mut regions = Vec::new();
    for (i, r) in raw.regions.into_iter().enumerate() {
        let path = format!("system.regions[{i}]");
        let owner = match &r.owner {
            Some(n) => Some(names.resolve(n, &format!("{path}.owner"))?),
            None => None,
        };
        let space = r.space.unwrap_or(if owner.is_some() { Space::User } else { Space::Kernel });
        let mut grants = BTreeSet::new();
        for (j, (who, how)) in r.grants.iter().enumerate() {
            let gpath = format!("{path}.grants[{j}]");
            let access = match how.as_str() {
                "read" => Access::Read,
                "write" => Access::Write,
                other => return Err(err(gpath, format!("access must be read or write, got {other:?}"))),
            };
            grants.insert((names.resolve(who, &gpath)?, access));
        }
        regions.push(MemoryRegion { name: r.name, base: r.base, size: r.size, space, owner, grants });
    }

    let mut slots = Vec::new();
    for (i, (name, len)) in raw.schedule.iter().enumerate() {
        let path = format!("system.schedule[{i}]");
        slots.push(SlotSpec { part: names.resolve(name, &path)?, len: *len });
    }

    let device = match raw.device {
        None => DeviceSpec::default(),
        Some(d) => {
            let mut windows = BTreeMap::new();
            for (name, wins) in d.windows {
                let p = names.resolve(&name, "system.device.windows")?;
                windows.insert(p, wins);
            }
            DeviceSpec {
                base_latency: d.base_latency,
                normalized_latency: d.normalized_latency,
                busy_pulse: d.busy_pulse,
                windows,
            }
        }
    };

    let wcet = match raw.wcet {
        None => default_wcet(),
        Some(RawWcet::Named(n)) if n == "default" => default_wcet(),
        Some(RawWcet::Named(n)) => {
            return Err(err("system.wcet", format!("expected \"default\" or a table, got {n:?}")));
        }
        Some(RawWcet::Table(t)) => t,
    };

    let mut channels = BTreeSet::new();
    for (i, (a, b)) in raw.channels.iter().enumerate() {
        let path = format!("system.channels[{i}]");
        channels.insert((names.resolve(a, &path)?, names.resolve(b, &path)?));
    }

    let mut defects = BTreeSet::new();
    for d in &raw.defects {
        match DefectId::parse(d) {
            Some(id) => {
                defects.insert(id);
            }
            None => return Err(CampaignError::UnknownDefect(d.clone())),
        }
    }

    let spec = SystemSpec { partitions, regions, schedule: CyclicSchedule { slots }, channels, device, wcet, defects };
    match spec.validate() {
        Ok(()) => Ok(spec),
        Err(SpecError::InvalidSpec(m)) => Err(err("system", m)),
        Err(e) => Err(err("system", e.to_string())),
    }
}

fn resolve_monitor(raw: RawMonitor) -> Result<MonitorConfig, CampaignError> {
    let mut cfg = MonitorConfig::default();
    if let Some(names) = raw.enabled {
        let mut enabled = BTreeSet::new();
        for n in &names {
            match PropertyId::parse(n) {
                Some(p) => {
                    enabled.insert(p);
                }
                None => return Err(err("monitor.enabled", format!("unknown property {n:?}"))),
            }
        }
        cfg.enabled = enabled;
    }
    if let Some(j) = raw.jitter {
        cfg.jitter = j;
    }
    if let Some(d) = raw.degradation {
        if !(0.0..1.0).contains(&d) {
            return Err(err("monitor.degradation", "must be in [0, 1)"));
        }
        cfg.degradation = d;
    }
    if let Some(c) = raw.capacity_max {
        if !(0.0..=1.0).contains(&c) {
            return Err(err("monitor.capacity_max", "must be in [0, 1]"));
        }
        cfg.capacity_max = c;
    }
    Ok(cfg)
}

fn resolve_technique(
    i: usize,
    raw: RawTechnique,
    spec: &SystemSpec,
) -> Result<TechniqueSpec, CampaignError> {
    let path = format!("techniques[{i}]");
    let ppath = format!("{path}.params");
    let raw = RawTechnique {
        // An omitted params block means "all defaults".
        params: if raw.params.is_null() {
            serde_json::Value::Object(Default::default())
        } else {
            raw.params
        },
        ..raw
    };
    let is_test = |p: PartId| spec.part(p).kind.is_test();
    let names = NameTable {
        parts: spec
            .partitions
            .iter()
            .enumerate()
            .map(|(j, p)| (p.name.clone(), PartId(j as u16)))
            .collect(),
    };
    match raw.name.as_str() {
        "fuzz" => {
            if !spec.partitions.iter().any(|p| p.kind.is_test()) {
                return Err(err(path, "fuzzing needs at least one test partition"));
            }
            if raw.count == 0 {
                return Err(err(format!("{path}.count"), "must be at least 1"));
            }
            let p: RawFuzzParams = serde_json::from_value(raw.params)
                .map_err(|e| err(&ppath, e.to_string()))?;
            let policy = match p.policy.as_deref() {
                None => FuzzPolicy::Sweep,
                Some(s) => FuzzPolicy::parse(s)
                    .ok_or_else(|| err(format!("{ppath}.policy"), format!("unknown policy {s:?}")))?,
            };
            Ok(TechniqueSpec::Fuzz { seed: raw.seed, count: raw.count, policy })
        }
        "fault_injection" => {
            let p: RawFaultParams = serde_json::from_value(raw.params)
                .map_err(|e| err(&ppath, e.to_string()))?;
            if p.faults.is_empty() {
                return Err(err(format!("{ppath}.faults"), "must name at least one fault"));
            }
            if p.frames.is_empty() {
                return Err(err(format!("{ppath}.frames"), "must name at least one frame"));
            }
            let mut targets = Vec::new();
            for (j, t) in p.targets.iter().enumerate() {
                let tpath = format!("{ppath}.targets[{j}]");
                let id = names.resolve(t, &tpath)?;
                if !is_test(id) {
                    return Err(err(tpath, format!("fault plans may target test partitions only, not {t:?}")));
                }
                targets.push(id);
            }
            if targets.is_empty() {
                return Err(err(format!("{ppath}.targets"), "must name at least one target"));
            }
            Ok(TechniqueSpec::FaultInjection {
                seed: raw.seed,
                plan: FaultPlan { faults: p.faults, targets, frames: p.frames },
            })
        }
        "scripted" => {
            let p: RawScriptParams = serde_json::from_value(raw.params)
                .map_err(|e| err(&ppath, e.to_string()))?;
            parse_script(&p.script).map_err(|e| err(format!("{ppath}.script"), e.to_string()))?;
            let target = names.resolve(&p.target, &format!("{ppath}.target"))?;
            if !is_test(target) {
                return Err(err(
                    format!("{ppath}.target"),
                    format!("scripts may target test partitions only, not {:?}", p.target),
                ));
            }
            Ok(TechniqueSpec::Scripted { script: p.script, target })
        }
        "covert_probe" => {
            let p: RawCovertParams = serde_json::from_value(raw.params)
                .map_err(|e| err(&ppath, e.to_string()))?;
            if p.n_bits == 0 {
                return Err(err(format!("{ppath}.n_bits"), "must be at least 1"));
            }
            let sender = names.resolve(&p.sender, &format!("{ppath}.sender"))?;
            let receiver = names.resolve(&p.receiver, &format!("{ppath}.receiver"))?;
            if sender == receiver {
                return Err(err(&ppath, "sender and receiver must be distinct partitions"));
            }
            for (label, id) in [("sender", sender), ("receiver", receiver)] {
                if !is_test(id) {
                    return Err(err(
                        format!("{ppath}.{label}"),
                        "covert probes run on test partitions only",
                    ));
                }
            }
            Ok(TechniqueSpec::CovertProbe { seed: raw.seed, n_bits: p.n_bits, sender, receiver })
        }
        other => Err(err(format!("{path}.name"), format!("unknown technique {other:?}"))),
    }
}

/// Parse and validate a campaign document (JSON text).
pub fn load_campaign(document: &str) -> Result<Campaign, CampaignError> {
    let raw: RawCampaign =
        serde_json::from_str(document).map_err(|e| err("$", e.to_string()))?;
    if raw.techniques.is_empty() {
        return Err(err("techniques", "at least one technique is required"));
    }
    if raw.frames_per_case == 0 {
        return Err(err("frames_per_case", "must be at least 1"));
    }
    if raw.parallelism == 0 {
        return Err(err("parallelism", "must be at least 1"));
    }
    let spec = resolve_system(raw.system)?;
    let monitor = resolve_monitor(raw.monitor)?;
    let techniques = raw
        .techniques
        .into_iter()
        .enumerate()
        .map(|(i, t)| resolve_technique(i, t, &spec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Campaign {
        name: raw.name,
        spec,
        monitor,
        techniques,
        frames_per_case: raw.frames_per_case,
        parallelism: raw.parallelism,
    })
}

/// Parse and validate a bare system block (the same shape a campaign
/// document carries under `"system"`), without requiring a campaign
/// around it.
pub fn load_system(document: &str) -> Result<SystemSpec, CampaignError> {
    let raw: RawSystem =
        serde_json::from_str(document).map_err(|e| err("$", e.to_string()))?;
    resolve_system(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::PropertyId;

    fn minimal_doc() -> String {
        r#"{
            "system": {
                "partitions": [
                    {"name": "TP", "kind": "test_pv"},
                    {"name": "R1", "kind": "regular", "role": "periodic_compute"}
                ],
                "regions": [
                    {"name": "tp.ram", "base": 4096, "size": 4096, "owner": "TP"},
                    {"name": "r1.ram", "base": 16384, "size": 4096, "owner": "R1"}
                ],
                "schedule": [["TP", 5], ["R1", 5]]
            },
            "techniques": [{"name": "fuzz", "seed": 1, "count": 4}]
        }"#
        .to_string()
    }

    #[test]
    fn minimal_document_gets_the_defaults() {
        let c = load_campaign(&minimal_doc()).unwrap();
        assert_eq!(c.name, "campaign");
        assert_eq!(c.frames_per_case, 4);
        assert_eq!(c.parallelism, 1);
        assert_eq!(c.monitor.jitter, 1);
        assert_eq!(c.monitor.degradation, 0.2);
        assert_eq!(c.monitor.capacity_max, 0.05);
        assert_eq!(c.monitor.enabled.len(), PropertyId::ALL.len());
        assert_eq!(c.spec.wcet, crate::surface::default_wcet());
        assert!(c.spec.defects.is_empty());
        assert_eq!(
            c.techniques,
            vec![TechniqueSpec::Fuzz { seed: 1, count: 4, policy: FuzzPolicy::Sweep }]
        );
    }

    #[test]
    fn unknown_defect_is_its_own_error() {
        let doc = minimal_doc().replace(
            "\"schedule\"",
            "\"defects\": [\"D-T9\"], \"schedule\"",
        );
        assert_eq!(
            load_campaign(&doc),
            Err(CampaignError::UnknownDefect("D-T9".into()))
        );
    }

    #[test]
    fn unknown_profile_is_its_own_error() {
        let doc = minimal_doc().replace("periodic_compute", "chaos_monkey");
        assert_eq!(
            load_campaign(&doc),
            Err(CampaignError::UnknownProfile("chaos_monkey".into()))
        );
    }

    #[test]
    fn zero_parallelism_is_rejected() {
        let doc = minimal_doc().replace(
            "\"techniques\"",
            "\"parallelism\": 0, \"techniques\"",
        );
        assert!(matches!(
            load_campaign(&doc),
            Err(CampaignError::Schema { path, .. }) if path == "parallelism"
        ));
    }

    #[test]
    fn schema_paths_point_at_the_offender() {
        let doc = minimal_doc().replace("[\"TP\", 5]", "[\"TX\", 5]");
        assert!(matches!(
            load_campaign(&doc),
            Err(CampaignError::Schema { path, .. }) if path == "system.schedule[0]"
        ));

        let doc = minimal_doc().replace(
            r#"{"name": "fuzz", "seed": 1, "count": 4}"#,
            r#"{"name": "seance"}"#,
        );
        assert!(matches!(
            load_campaign(&doc),
            Err(CampaignError::Schema { path, .. }) if path == "techniques[0].name"
        ));

        let doc = minimal_doc().replace(
            r#"{"name": "fuzz", "seed": 1, "count": 4}"#,
            r#"{"name": "fuzz", "params": {"policy": "chaotic"}}"#,
        );
        assert!(matches!(
            load_campaign(&doc),
            Err(CampaignError::Schema { path, .. }) if path == "techniques[0].params.policy"
        ));
    }

    #[test]
    fn scripts_are_parsed_at_load_time() {
        let doc = minimal_doc().replace(
            r#"{"name": "fuzz", "seed": 1, "count": 4}"#,
            r#"{"name": "scripted", "params": {"script": "pv BOGUS 1", "target": "TP"}}"#,
        );
        let e = load_campaign(&doc).unwrap_err();
        assert!(matches!(
            &e,
            CampaignError::Schema { path, reason }
                if path == "techniques[0].params.script" && reason.contains("line 1")
        ), "{e}");
    }

    #[test]
    fn covert_probes_must_pair_distinct_test_partitions() {
        let covert = r#"{"name": "covert_probe", "params": {"sender": "TP", "receiver": "TP"}}"#;
        let doc = minimal_doc().replace(r#"{"name": "fuzz", "seed": 1, "count": 4}"#, covert);
        assert!(load_campaign(&doc).is_err());

        let covert = r#"{"name": "covert_probe", "params": {"sender": "TP", "receiver": "R1"}}"#;
        let doc = minimal_doc().replace(r#"{"name": "fuzz", "seed": 1, "count": 4}"#, covert);
        assert!(matches!(
            load_campaign(&doc),
            Err(CampaignError::Schema { path, .. }) if path.ends_with("receiver")
        ));
    }

    #[test]
    fn fault_targets_must_be_test_partitions() {
        let fi = r#"{"name": "fault_injection", "params": {"faults": [{"kind": "crash"}], "targets": ["R1"]}}"#;
        let doc = minimal_doc().replace(r#"{"name": "fuzz", "seed": 1, "count": 4}"#, fi);
        assert!(matches!(
            load_campaign(&doc),
            Err(CampaignError::Schema { path, reason })
                if path == "techniques[0].params.targets[0]" && reason.contains("R1")
        ));
    }

    #[test]
    fn overlapping_regions_surface_as_system_errors() {
        let doc = minimal_doc().replace("16384", "4100");
        assert!(matches!(
            load_campaign(&doc),
            Err(CampaignError::Schema { path, reason })
                if path == "system" && reason.contains("overlap")
        ));
    }

    #[test]
    fn campaign_echo_round_trips() {
        let c = load_campaign(&minimal_doc()).unwrap();
        let echo = serde_json::to_string(&c).unwrap();
        let back: Campaign = serde_json::from_str(&echo).unwrap();
        assert_eq!(c, back);
    }
}
