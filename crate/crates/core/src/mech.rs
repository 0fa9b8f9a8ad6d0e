//! The isolation mechanism catalogue and the seeded defects that weaken it.
//!
//! Mechanisms come in two families: spatial (`M1`–`M4`) guard memory and
//! resource ownership, temporal (`T1`–`T4`) guard timing behaviour. Every
//! mechanism is on by default; a [`DefectId`] disables one specific aspect
//! of one mechanism so that assessment campaigns have a known ground truth
//! to detect.

use serde::{Deserialize, Serialize};

/// An isolation enforcement mechanism of the simulated hypervisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MechanismId {
    /// Memory access control for guest user-space accesses.
    M1,
    /// Memory access control for accesses targeting kernel space.
    M2,
    /// Time-windowed arbitration of shared hardware resources.
    M3,
    /// Static per-partition memory quotas.
    M4,
    /// CPU register clearing on context switch.
    T1,
    /// Cyclic, table-driven partition scheduling.
    T2,
    /// Worst-case execution time bounds on hypervisor services.
    T3,
    /// Temporal normalisation of shared device latency.
    T4,
}

impl MechanismId {
    pub const ALL: [MechanismId; 8] = [
        MechanismId::M1,
        MechanismId::M2,
        MechanismId::M3,
        MechanismId::M4,
        MechanismId::T1,
        MechanismId::T2,
        MechanismId::T3,
        MechanismId::T4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismId::M1 => "M1",
            MechanismId::M2 => "M2",
            MechanismId::M3 => "M3",
            MechanismId::M4 => "M4",
            MechanismId::T1 => "T1",
            MechanismId::T2 => "T2",
            MechanismId::T3 => "T3",
            MechanismId::T4 => "T4",
        }
    }

    /// One-line description of what the mechanism enforces.
    pub fn description(self) -> &'static str {
        match self {
            MechanismId::M1 => {
                "user-space memory access control: a guest may touch only regions it owns \
                 or was explicitly granted"
            }
            MechanismId::M2 => {
                "kernel-space memory access control: no guest access to hypervisor-owned space"
            }
            MechanismId::M3 => {
                "hardware resource partitioning: shared devices are reachable only inside a \
                 partition's configured time windows"
            }
            MechanismId::M4 => {
                "static memory quotas: dynamic allocation never exceeds a partition's budget"
            }
            MechanismId::T1 => {
                "register hygiene: CPU registers are cleared and reloaded on every context switch"
            }
            MechanismId::T2 => {
                "cyclic scheduling: partitions run in fixed slots of a repeating major frame"
            }
            MechanismId::T3 => {
                "service time bounds: hypervisor calls are aborted past their WCET budget"
            }
            MechanismId::T4 => {
                "latency normalisation: shared device operations complete in constant \
                 observable time"
            }
        }
    }

    pub fn parse(s: &str) -> Option<MechanismId> {
        MechanismId::ALL.iter().copied().find(|m| m.name() == s)
    }
}

impl std::fmt::Display for MechanismId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A seeded defect: a deliberate, targeted weakening of one mechanism.
///
/// Defects are the ground truth of an assessment campaign; detecting the
/// violation class they enable is what the monitor is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DefectId {
    /// M1 write checks skipped: cross-partition user-space writes succeed.
    #[serde(rename = "D-M1W")]
    DM1W,
    /// M1 read checks skipped: cross-partition user-space reads succeed.
    #[serde(rename = "D-M1R")]
    DM1R,
    /// M2 weakened: guest writes into kernel space succeed (reads stay denied).
    #[serde(rename = "D-M2")]
    DM2,
    /// M3 disabled: device windows are not enforced and raw latency is exposed.
    #[serde(rename = "D-M3")]
    DM3,
    /// M4 disabled: allocations beyond the quota succeed.
    #[serde(rename = "D-M4")]
    DM4,
    /// T1 disabled: registers survive context switches unscrubbed.
    #[serde(rename = "D-T1")]
    DT1,
    /// T2 weakened: a greedy partition can overrun its slot boundary.
    #[serde(rename = "D-T2")]
    DT2,
    /// T3 disabled: hypervisor calls run to completion past their WCET.
    #[serde(rename = "D-T3")]
    DT3,
    /// T4 disabled: shared device latency reflects actual queue depth.
    #[serde(rename = "D-T4")]
    DT4,
}

impl DefectId {
    pub const ALL: [DefectId; 9] = [
        DefectId::DM1W,
        DefectId::DM1R,
        DefectId::DM2,
        DefectId::DM3,
        DefectId::DM4,
        DefectId::DT1,
        DefectId::DT2,
        DefectId::DT3,
        DefectId::DT4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DefectId::DM1W => "D-M1W",
            DefectId::DM1R => "D-M1R",
            DefectId::DM2 => "D-M2",
            DefectId::DM3 => "D-M3",
            DefectId::DM4 => "D-M4",
            DefectId::DT1 => "D-T1",
            DefectId::DT2 => "D-T2",
            DefectId::DT3 => "D-T3",
            DefectId::DT4 => "D-T4",
        }
    }

    /// The mechanism this defect weakens.
    pub fn mechanism(self) -> MechanismId {
        match self {
            DefectId::DM1W | DefectId::DM1R => MechanismId::M1,
            DefectId::DM2 => MechanismId::M2,
            DefectId::DM3 => MechanismId::M3,
            DefectId::DM4 => MechanismId::M4,
            DefectId::DT1 => MechanismId::T1,
            DefectId::DT2 => MechanismId::T2,
            DefectId::DT3 => MechanismId::T3,
            DefectId::DT4 => MechanismId::T4,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            DefectId::DM1W => "user-space write checks are skipped",
            DefectId::DM1R => "user-space read checks are skipped",
            DefectId::DM2 => "guest writes to kernel space are allowed",
            DefectId::DM3 => "device time windows are not enforced; raw latency is visible",
            DefectId::DM4 => "allocation quota checks are skipped",
            DefectId::DT1 => "registers are not cleared on context switch",
            DefectId::DT2 => "a greedy partition may overrun its scheduling slot",
            DefectId::DT3 => "WCET budgets on hypervisor calls are not enforced",
            DefectId::DT4 => "device latency is not normalised",
        }
    }

    pub fn parse(s: &str) -> Option<DefectId> {
        DefectId::ALL.iter().copied().find(|d| d.name() == s)
    }
}

impl std::fmt::Display for DefectId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defect_names_round_trip() {
        for d in DefectId::ALL {
            assert_eq!(DefectId::parse(d.name()), Some(d));
            let json = serde_json::to_string(&d).unwrap();
            assert_eq!(json, format!("\"{}\"", d.name()));
            assert_eq!(serde_json::from_str::<DefectId>(&json).unwrap(), d);
        }
    }

    #[test]
    fn mechanism_names_round_trip() {
        for m in MechanismId::ALL {
            assert_eq!(MechanismId::parse(m.name()), Some(m));
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
    }

    #[test]
    fn every_mechanism_has_a_defect() {
        use std::collections::BTreeSet;
        let covered: BTreeSet<_> = DefectId::ALL.iter().map(|d| d.mechanism()).collect();
        assert_eq!(covered.len(), MechanismId::ALL.len());
    }
}
