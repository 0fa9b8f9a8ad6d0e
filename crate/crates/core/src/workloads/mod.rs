//! Test-case generation and representative background workloads.
//!
//! Test partitions run [`TestCase`]s — small step programs produced by one
//! of four generators: interface fuzzing, fault-injection plans, hand
//! written scripts, and covert-channel probe pairs. Regular partitions run
//! [`Workload`] profiles that stand in for production guests and emit a
//! per-frame heartbeat checksum the monitor compares against baseline.
//!
//! Every generator is a pure function of its seed and policy. Where a
//! generated step needs concrete addresses (the dispatcher checks access,
//! not the generator), values are drawn from the canonical memory layout
//! used by the bundled campaign configurations: test/regular partition
//! regions at 0x1000..0x6000 and a kernel region at 0xF000. On foreign
//! layouts those probes simply fault — still sound, just less pointed.

pub mod script;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hv::{PartId, SystemSpec};
use crate::surface::{ArgDomain, IfaceSpec, SurfaceKind};

/// One instruction of a test program, interpreted by the campaign runner
/// at a rate of one step per major frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    PvCall { id: u64, args: Vec<u64> },
    HwfvTrap { reason: u64, payload: Vec<u64> },
    InjectFault { fault: FaultSpec },
    Wait { ticks: u64 },
    SetGreedy { extra: u64 },
    DevPulse { busy: bool },
}

/// Injectable fault kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultSpec {
    /// The partition dies: PART_FAULT, then its slots idle.
    Crash,
    /// A stray word write (subject to the ordinary access checks).
    MemCorrupt { addr: u64, val: u64 },
    /// Clobber one live register.
    RegCorrupt { idx: u8, val: u64 },
    /// A resource leak: this many bytes allocated every frame from now on.
    Leak { bytes_per_frame: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    Fuzz,
    FaultInjection,
    Scripted,
    CovertProbe,
}

impl Technique {
    pub fn name(self) -> &'static str {
        match self {
            Technique::Fuzz => "fuzz",
            Technique::FaultInjection => "fault_injection",
            Technique::Scripted => "scripted",
            Technique::CovertProbe => "covert_probe",
        }
    }
}

/// A bound, runnable test program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    /// Campaign-unique index; generators number locally from 0 and the
    /// orchestrator re-indexes.
    pub id: u64,
    pub seed: u64,
    pub technique: Technique,
    pub steps: Vec<Step>,
    /// Filled in when the case is bound to a partition.
    pub target: Option<PartId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuzzPolicy {
    /// Walk the catalogue round-robin with well-formed, varied arguments.
    Sweep,
    /// Seeded random entries and arguments, all within declared domains.
    Random,
    /// Deliberately broken ids, arities, or argument domains.
    Malformed,
}

impl FuzzPolicy {
    pub fn name(self) -> &'static str {
        match self {
            FuzzPolicy::Sweep => "sweep",
            FuzzPolicy::Random => "random",
            FuzzPolicy::Malformed => "malformed",
        }
    }

    pub fn parse(s: &str) -> Option<FuzzPolicy> {
        match s {
            "sweep" => Some(FuzzPolicy::Sweep),
            "random" => Some(FuzzPolicy::Random),
            "malformed" => Some(FuzzPolicy::Malformed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("fault plans may target test partitions only, not {0}")]
    PlanTargetsRegularPartition(String),
    #[error("unknown workload profile {0:?}")]
    UnknownProfile(String),
}

/// Canonical-layout address palette the fuzzer draws from.
mod palette {
    /// Likely self-owned region base for the PV test partition.
    pub const PV_OWN: u64 = 0x1000;
    /// Likely self-owned region base for the HWFV test partition.
    pub const HWFV_OWN: u64 = 0x2000;
    /// Regular partitions' regions — the interesting victims.
    pub const REGULAR: [u64; 2] = [0x4000, 0x5000];
    /// Kernel-space region.
    pub const KERNEL: u64 = 0xF000;
    /// Far outside every region.
    pub const UNMAPPED: u64 = 0x9_0000;
}

fn case_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(salt))
}

/// Word-aligned offset inside a 0x1000-byte region.
fn off(rng: &mut ChaCha8Rng) -> u64 {
    rng.random_range(0..0x40u64) * 8
}

/// Arguments for one sweep visit: `round` counts how many times this entry
/// was hit before, cycling through the entry's interesting patterns.
fn sweep_args(entry: &IfaceSpec, surface: SurfaceKind, round: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let own = match surface {
        SurfaceKind::Pv => palette::PV_OWN,
        SurfaceKind::Hwfv => palette::HWFV_OWN,
    };
    let victim = palette::REGULAR[(round % 2) as usize];
    match entry.name {
        // Three spatial probes and one long self-copy that stresses the
        // WCET budget (ceil(640/64) = 10 ticks of nominal work).
        "COPY" => match round % 4 {
            0 => vec![own + off(rng), own + 0x800 + off(rng), 640],
            1 => vec![own + off(rng), victim + off(rng), 64],
            2 => vec![victim + off(rng), own + off(rng), 64],
            _ => vec![own + off(rng), palette::KERNEL + off(rng) % 0x100, 64],
        },
        "ALLOC" => vec![[4096u64, 65536, 32768, 61440][(round % 4) as usize]],
        "FREE" => vec![4096],
        "MEM_MAP" | "MEM_UNMAP" => match round % 2 {
            0 => vec![0, 1, round % 2],
            _ => vec![1, 0, 1],
        },
        "IPC_SEND" => vec![round % 2 + 1, rng.next_u64() & 0xFFFF],
        "CONSOLE_WRITE" => vec![rng.next_u64() & 0xFFFF_FFFF],
        "DEV_ACCESS" => vec![if round.is_multiple_of(2) { 0 } else { 4 }],
        "MMIO_READ" => vec![
            [own, victim, palette::KERNEL, palette::UNMAPPED][(round % 4) as usize] + off(rng),
        ],
        "MMIO_WRITE" => vec![
            [own, victim, palette::KERNEL, palette::UNMAPPED][(round % 4) as usize] + off(rng),
            rng.next_u64() & 0xFFFF,
        ],
        "IO_PORT" => vec![round % 4, rng.next_u64() & 0xFF],
        "INFO_QUERY" => vec![round % 4],
        "CONTROL_REG" => vec![round % 8, rng.next_u64() & 0xFFFF],
        _ => vec![], // YIELD, HALT, INFO
    }
}

/// In-domain random arguments for one entry.
fn random_args(entry: &IfaceSpec, surface: SurfaceKind, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let own = match surface {
        SurfaceKind::Pv => palette::PV_OWN,
        SurfaceKind::Hwfv => palette::HWFV_OWN,
    };
    entry
        .args
        .iter()
        .map(|a| match a.domain {
            ArgDomain::Any => rng.next_u64() & 0xFFFF_FFFF,
            // Indices are validated against the live spec at dispatch; stay
            // small so most draws land in range on typical configurations.
            ArgDomain::PartIdx => rng.random_range(0..5),
            ArgDomain::RegionIdx => rng.random_range(0..6),
            ArgDomain::Range(lo, hi) => rng.random_range(lo..=hi),
            ArgDomain::Addr => {
                let base = *[own, palette::REGULAR[0], palette::REGULAR[1], palette::KERNEL, palette::UNMAPPED]
                    .as_slice()
                    .choose(rng)
                    .unwrap();
                base + off(rng)
            }
        })
        .collect()
}

/// Corrupt a well-formed call so dispatch must answer EINVAL: break the id,
/// the arity, or a checkable argument domain.
fn malform(
    entry: &IfaceSpec,
    surface_len: u64,
    args: &mut Vec<u64>,
    id: &mut u64,
    rng: &mut ChaCha8Rng,
) {
    let violable: Vec<usize> = entry
        .args
        .iter()
        .enumerate()
        .filter(|(_, a)| {
            matches!(a.domain, ArgDomain::Range(..) | ArgDomain::PartIdx | ArgDomain::RegionIdx)
        })
        .map(|(i, _)| i)
        .collect();
    let mode = rng.random_range(0..if violable.is_empty() { 2 } else { 3 });
    match mode {
        0 => *id = surface_len + rng.random_range(0..64),
        1 => {
            if args.is_empty() || rng.random_range(0..2) == 0 {
                args.push(rng.next_u64() & 0xFF);
            } else {
                args.pop();
            }
        }
        _ => {
            let i = violable[rng.random_range(0..violable.len())];
            args[i] = match entry.args[i].domain {
                ArgDomain::Range(_, hi) => hi + 1 + rng.random_range(0..16),
                // Out of range on any plausibly sized configuration.
                _ => 64 + rng.random_range(0..64),
            };
        }
    }
}

/// Generate `n` fuzz cases against the given catalogues.
///
/// Deterministic in `(seed, policy, n)`. With `policy = Sweep` and
/// `n ≥ pv.len() + hwfv.len()`, every catalogue entry is visited.
pub fn gen_fuzz(
    seed: u64,
    pv: &[IfaceSpec],
    hwfv: &[IfaceSpec],
    policy: FuzzPolicy,
    n: usize,
) -> Vec<TestCase> {
    let total = pv.len() + hwfv.len();
    (0..n)
        .map(|i| {
            let case_seed = case_rng(seed, i as u64).next_u64();
            let mut rng = case_rng(case_seed, 0);
            let steps = match policy {
                FuzzPolicy::Sweep => {
                    let slot = i % total;
                    let round = (i / total) as u64;
                    let (surface, entry) = if slot < pv.len() {
                        (SurfaceKind::Pv, &pv[slot])
                    } else {
                        (SurfaceKind::Hwfv, &hwfv[slot - pv.len()])
                    };
                    let args = sweep_args(entry, surface, round, &mut rng);
                    vec![call_step(surface, entry.id, args)]
                }
                FuzzPolicy::Random => {
                    let count = rng.random_range(1..=3);
                    (0..count)
                        .map(|_| {
                            let slot = rng.random_range(0..total);
                            let (surface, entry) = if slot < pv.len() {
                                (SurfaceKind::Pv, &pv[slot])
                            } else {
                                (SurfaceKind::Hwfv, &hwfv[slot - pv.len()])
                            };
                            let args = random_args(entry, surface, &mut rng);
                            call_step(surface, entry.id, args)
                        })
                        .collect()
                }
                FuzzPolicy::Malformed => {
                    let count = rng.random_range(1..=3);
                    (0..count)
                        .map(|_| {
                            let slot = rng.random_range(0..total);
                            let (surface, entry, len) = if slot < pv.len() {
                                (SurfaceKind::Pv, &pv[slot], pv.len() as u64)
                            } else {
                                (SurfaceKind::Hwfv, &hwfv[slot - pv.len()], hwfv.len() as u64)
                            };
                            let mut args = random_args(entry, surface, &mut rng);
                            let mut id = entry.id;
                            malform(entry, len, &mut args, &mut id, &mut rng);
                            call_step(surface, id, args)
                        })
                        .collect()
                }
            };
            TestCase { id: i as u64, seed: case_seed, technique: Technique::Fuzz, steps, target: None }
        })
        .collect()
}

fn call_step(surface: SurfaceKind, id: u64, args: Vec<u64>) -> Step {
    match surface {
        SurfaceKind::Pv => Step::PvCall { id, args },
        SurfaceKind::Hwfv => Step::HwfvTrap { reason: id, payload: args },
    }
}

/// A fault-injection plan: the cross product of faults × targets × frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub faults: Vec<FaultSpec>,
    pub targets: Vec<PartId>,
    /// Major-frame indices at which the fault lands.
    pub frames: Vec<u64>,
}

/// One case per (fault, target, frame) tuple: wait until the frame, then
/// inject. Targets must be test partitions.
pub fn gen_fault_plan(
    seed: u64,
    spec: &SystemSpec,
    plan: &FaultPlan,
) -> Result<Vec<TestCase>, WorkloadError> {
    for &t in &plan.targets {
        if !spec.part(t).kind.is_test() {
            return Err(WorkloadError::PlanTargetsRegularPartition(
                spec.part_name(t).to_string(),
            ));
        }
    }
    let major_frame = spec.schedule.major_frame();
    let mut out = Vec::new();
    for fault in &plan.faults {
        for &target in &plan.targets {
            for &frame in &plan.frames {
                let id = out.len() as u64;
                let mut steps = Vec::new();
                if frame > 0 {
                    steps.push(Step::Wait { ticks: frame * major_frame });
                }
                steps.push(Step::InjectFault { fault: fault.clone() });
                out.push(TestCase {
                    id,
                    seed: case_rng(seed, id).next_u64(),
                    technique: Technique::FaultInjection,
                    steps,
                    target: Some(target),
                });
            }
        }
    }
    Ok(out)
}

/// Build a covert probe pair: the sender modulates device contention with
/// one busy/idle pulse per frame, the receiver times one device access per
/// frame. Sent bits are exactly balanced so chance-level decoding sits at
/// one half, and are shuffled deterministically from the seed.
pub fn covert_pair(seed: u64, n_bits: usize) -> (TestCase, TestCase, Vec<u8>) {
    assert!(n_bits >= 1);
    let mut bits = vec![0u8; n_bits];
    for b in bits.iter_mut().take(n_bits / 2) {
        *b = 1;
    }
    bits.shuffle(&mut case_rng(seed, 0xC0));
    let sender_steps = bits.iter().map(|&b| Step::DevPulse { busy: b == 1 }).collect();
    let receiver_steps = (0..n_bits).map(|_| Step::PvCall { id: 7, args: vec![0] }).collect();
    let sender = TestCase {
        id: 0,
        seed,
        technique: Technique::CovertProbe,
        steps: sender_steps,
        target: None,
    };
    let receiver = TestCase {
        id: 1,
        seed,
        technique: Technique::CovertProbe,
        steps: receiver_steps,
        target: None,
    };
    (sender, receiver, bits)
}

/// Background workload profiles for regular partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadProfile {
    /// Pure compute: heartbeat only.
    PeriodicCompute,
    /// Copies within its own region every frame.
    MemoryToucher,
    /// Touches the shared device every frame and records the latency.
    DeviceClient,
}

impl WorkloadProfile {
    pub const ALL: [WorkloadProfile; 3] = [
        WorkloadProfile::PeriodicCompute,
        WorkloadProfile::MemoryToucher,
        WorkloadProfile::DeviceClient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorkloadProfile::PeriodicCompute => "periodic_compute",
            WorkloadProfile::MemoryToucher => "memory_toucher",
            WorkloadProfile::DeviceClient => "device_client",
        }
    }

    pub fn parse(s: &str) -> Result<WorkloadProfile, WorkloadError> {
        WorkloadProfile::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| WorkloadError::UnknownProfile(s.to_string()))
    }
}

/// The per-frame heartbeat value: a pure function of (profile, frame).
pub fn frame_checksum(profile: WorkloadProfile, frame: u64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for x in [profile as u64 + 1, frame.wrapping_add(0x51ED)] {
        h ^= x;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// A bound representative workload for one regular partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub profile: WorkloadProfile,
}

/// Resolve a profile by name.
pub fn representative(profile: &str) -> Result<Workload, WorkloadError> {
    Ok(Workload { profile: WorkloadProfile::parse(profile)? })
}

impl Workload {
    /// The calls this workload performs at its first activation in `frame`.
    /// `own_base` is the base address of the partition's own region.
    pub fn frame_steps(&self, frame: u64, own_base: u64) -> Vec<Step> {
        let heartbeat = Step::PvCall {
            id: 0,
            args: vec![frame_checksum(self.profile, frame)],
        };
        match self.profile {
            WorkloadProfile::PeriodicCompute => vec![heartbeat],
            WorkloadProfile::MemoryToucher => {
                let o = (frame % 0x40) * 8;
                vec![heartbeat, Step::PvCall { id: 8, args: vec![own_base + o, own_base + 0x800 + o, 64] }]
            }
            WorkloadProfile::DeviceClient => {
                vec![heartbeat, Step::PvCall { id: 7, args: vec![0] }]
            }
        }
    }
}
