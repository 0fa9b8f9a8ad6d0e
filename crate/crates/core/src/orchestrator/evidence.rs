//! Evidence rendering and the line-delimited results log.
//!
//! The machine rendering is canonical: fixed key order, no wall-clock or
//! host details, so equal result sets produce byte-identical documents.
//! The results log stores everything needed to re-render evidence or to
//! re-execute any single case and compare trace digests.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::runner::{capture_baseline, plan_units, run_unit};
use super::{Campaign, CampaignError, CampaignResults, CaseResult, CaseStatus};
use crate::certmap::{sar_entries, sfr_entries, standard_rows, CoverageReport, CoverageStatus};
use crate::hv::{SystemState, TraceEvent};
use crate::mech::{DefectId, MechanismId};
use crate::monitor::{BaselineMetrics, CovertAssessment, MonitorReport, Violation};
use crate::surface::SURFACE_TOTAL;
use crate::workloads::{Technique, TestCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceFormat {
    Human,
    Machine,
}

#[derive(Debug, Clone, Serialize)]
struct CaseSummary<'a> {
    id: u64,
    technique: Technique,
    status: CaseStatus,
    frames: u64,
    trace_digest: &'a str,
    events_total: u64,
    violations: &'a [Violation],
    #[serde(skip_serializing_if = "Option::is_none")]
    covert: Option<&'a CovertAssessment>,
}

#[derive(Debug, Clone, Serialize)]
struct Totals {
    cases: usize,
    completed: usize,
    hv_reset: usize,
    violations: usize,
}

#[derive(Debug, Clone, Serialize)]
struct TsfiBlock {
    covered: usize,
    total: usize,
    entries: Vec<(String, u64)>,
}

/// Ground truth for one seeded defect: whether any violation implicated
/// the mechanism it weakens.
#[derive(Debug, Clone, Serialize)]
struct DefectOutcome {
    defect: DefectId,
    mechanism: MechanismId,
    detected: bool,
}

#[derive(Debug, Clone, Serialize)]
struct MachineEvidence<'a> {
    campaign: &'a Campaign,
    baseline_digest: &'a str,
    totals: Totals,
    cases: Vec<CaseSummary<'a>>,
    mechanisms_exercised: Vec<MechanismId>,
    violated_mechanisms: Vec<MechanismId>,
    tsfi: TsfiBlock,
    defects: Vec<DefectOutcome>,
    coverage: CoverageReport,
    notes: Vec<String>,
}

fn tsfi_union(results: &CampaignResults) -> Vec<(String, u64)> {
    let set: BTreeSet<(String, u64)> = results
        .cases
        .iter()
        .flat_map(|c| c.report.tsfi_exercised.iter().cloned())
        .collect();
    set.into_iter().collect()
}

fn defect_outcomes(results: &CampaignResults) -> Vec<DefectOutcome> {
    let hit: BTreeSet<MechanismId> = results
        .cases
        .iter()
        .flat_map(|c| c.report.violations.iter())
        .flat_map(|v| v.mechanisms.iter().copied())
        .collect();
    results
        .campaign
        .spec
        .defects
        .iter()
        .map(|&d| DefectOutcome {
            defect: d,
            mechanism: d.mechanism(),
            detected: hit.contains(&d.mechanism()),
        })
        .collect()
}

fn fixture_notes() -> Vec<String> {
    let mut notes = Vec::new();
    for e in sfr_entries() {
        if let Some(n) = &e.note {
            notes.push(format!("{}: {}", e.sfr, n));
        }
    }
    for e in sar_entries() {
        if let Some(n) = &e.note {
            notes.push(format!("{}: {}", e.sar, n));
        }
    }
    notes
}

fn render_machine(results: &CampaignResults) -> String {
    let inputs = results.coverage_inputs();
    let doc = MachineEvidence {
        campaign: &results.campaign,
        baseline_digest: &results.baseline_digest,
        totals: Totals {
            cases: results.cases.len(),
            completed: results
                .cases
                .iter()
                .filter(|c| c.status == CaseStatus::Completed)
                .count(),
            hv_reset: results
                .cases
                .iter()
                .filter(|c| c.status == CaseStatus::HvReset)
                .count(),
            violations: results.total_violations(),
        },
        cases: results
            .cases
            .iter()
            .map(|c| CaseSummary {
                id: c.case.id,
                technique: c.case.technique,
                status: c.status,
                frames: c.frames,
                trace_digest: &c.trace_digest,
                events_total: c.events_total,
                violations: &c.report.violations,
                covert: c.report.covert.as_ref(),
            })
            .collect(),
        mechanisms_exercised: inputs.mechanisms_exercised.iter().copied().collect(),
        violated_mechanisms: inputs.violated_mechanisms.iter().copied().collect(),
        tsfi: TsfiBlock {
            covered: inputs.tsfi_covered,
            total: SURFACE_TOTAL,
            entries: tsfi_union(results),
        },
        defects: defect_outcomes(results),
        coverage: results.coverage(),
        notes: fixture_notes(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("evidence serializes");
    out.push('\n');
    out
}

fn short(digest: &str) -> &str {
    &digest[..digest.len().min(16)]
}

fn render_human(results: &CampaignResults) -> String {
    let coverage = results.coverage();
    let mut s = String::new();
    let _ = writeln!(s, "campaign: {}", results.campaign.name);
    let completed = results
        .cases
        .iter()
        .filter(|c| c.status == CaseStatus::Completed)
        .count();
    let _ = writeln!(
        s,
        "  cases: {} ({} completed, {} reset)   violations: {}",
        results.cases.len(),
        completed,
        results.cases.len() - completed,
        results.total_violations()
    );
    let _ = writeln!(s, "  baseline digest: {}", short(&results.baseline_digest));
    let _ = writeln!(
        s,
        "  interfaces exercised: {}/{}",
        coverage.tsfi_covered, coverage.tsfi_total
    );
    if !results.campaign.spec.defects.is_empty() {
        let seeded: Vec<&str> = results
            .campaign
            .spec
            .defects
            .iter()
            .map(|d| d.name())
            .collect();
        let _ = writeln!(s, "  seeded defects: {}", seeded.join(", "));
        for o in defect_outcomes(results) {
            let _ = writeln!(
                s,
                "    {} ({}): {}",
                o.defect.name(),
                o.mechanism.name(),
                if o.detected { "detected" } else { "missed" }
            );
        }
    }

    let _ = writeln!(s, "\nfunctional requirements");
    for r in &coverage.sfrs {
        let status = match r.status {
            CoverageStatus::Supported => "supported",
            CoverageStatus::Refuted => "REFUTED",
            CoverageStatus::Untested => "untested",
        };
        let mechs: Vec<&str> = r.mechanisms.iter().map(|m| m.name()).collect();
        let _ = writeln!(
            s,
            "  [{status:>9}] {:<12} {} ({})",
            r.sfr,
            r.title,
            mechs.join(", ")
        );
    }

    let _ = writeln!(s, "\nassurance activities");
    for r in &coverage.sars {
        let mark = if r.exercised { "exercised" } else { "  pending" };
        let mut techs: Vec<String> = Vec::new();
        for t in &r.techniques_run {
            techs.push(t.name().to_string());
        }
        for t in &r.techniques_missing {
            if t.implemented() {
                techs.push(format!("{} (not run)", t.name()));
            } else {
                techs.push(format!("{} (not implemented)", t.name()));
            }
        }
        let _ = writeln!(s, "  [{mark}] {:<8} {} — {}", r.sar, r.title, techs.join(", "));
    }

    let mut any = false;
    for c in &results.cases {
        for v in &c.report.violations {
            if !any {
                let _ = writeln!(s, "\nviolations");
                any = true;
            }
            let part = v
                .partition
                .map(|p| results.campaign.spec.part_name(p).to_string())
                .unwrap_or_else(|| "-".to_string());
            let mechs: Vec<&str> = v.mechanisms.iter().map(|m| m.name()).collect();
            let _ = writeln!(
                s,
                "  case {:>4}  {:<9} tick {:<6} {:<4} [{}] {}",
                c.case.id,
                v.property.name(),
                v.tick,
                part,
                mechs.join(", "),
                v.detail
            );
        }
        if let Some(cov) = &c.report.covert {
            let _ = writeln!(
                s,
                "  case {:>4}  covert probe: {} bits, accuracy {:.3}, capacity {:.4} bit/symbol",
                c.case.id, cov.bits_sent, cov.accuracy, cov.capacity
            );
        }
    }

    let _ = writeln!(s, "\nisolation clauses in certification standards");
    let mut last = "";
    for row in standard_rows() {
        if row.label != last {
            let _ = writeln!(s, "  {} — {}", row.label, row.scope);
            last = &row.label;
        }
        let _ = writeln!(s, "    {:<8} {:<20} {}", row.property.name(), row.locator, row.detail);
    }

    let _ = writeln!(s, "\nnotes");
    for n in fixture_notes() {
        let _ = writeln!(s, "  - {n}");
    }
    s
}

/// Render a result set. The machine form is canonical JSON; the human form
/// is a stable plain-text report. Both are pure functions of the results.
pub fn emit_evidence(results: &CampaignResults, format: EvidenceFormat) -> String {
    match format {
        EvidenceFormat::Machine => render_machine(results),
        EvidenceFormat::Human => render_human(results),
    }
}

/// One line of the results log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Campaign {
        campaign: Campaign,
    },
    Baseline {
        digest: String,
        baseline: BaselineMetrics,
    },
    CaseStart {
        case: TestCase,
        frames: u64,
    },
    Event {
        case: u64,
        #[serde(flatten)]
        event: TraceEvent,
    },
    Violation {
        case: u64,
        #[serde(flatten)]
        violation: Violation,
    },
    CaseEnd {
        case: u64,
        status: CaseStatus,
        trace_digest: String,
        events_total: u64,
        report: MonitorReport,
    },
    Summary {
        cases: usize,
        violations: usize,
        tsfi_covered: usize,
        coverage: CoverageReport,
    },
}

/// Serialize a result set as a line-delimited record stream.
pub fn write_results_log(results: &CampaignResults) -> String {
    let mut out = String::new();
    let mut push = |r: &LogRecord| {
        out.push_str(&serde_json::to_string(r).expect("log record serializes"));
        out.push('\n');
    };
    push(&LogRecord::Campaign { campaign: results.campaign.clone() });
    push(&LogRecord::Baseline {
        digest: results.baseline_digest.clone(),
        baseline: results.baseline.clone(),
    });
    for c in &results.cases {
        push(&LogRecord::CaseStart { case: c.case.clone(), frames: c.frames });
        for ev in &c.events {
            push(&LogRecord::Event { case: c.case.id, event: ev.clone() });
        }
        for v in &c.report.violations {
            push(&LogRecord::Violation { case: c.case.id, violation: v.clone() });
        }
        push(&LogRecord::CaseEnd {
            case: c.case.id,
            status: c.status,
            trace_digest: c.trace_digest.clone(),
            events_total: c.events_total,
            report: c.report.clone(),
        });
    }
    let coverage = results.coverage();
    push(&LogRecord::Summary {
        cases: results.cases.len(),
        violations: results.total_violations(),
        tsfi_covered: coverage.tsfi_covered,
        coverage,
    });
    out
}

/// Parse a results log; any unreadable line is an error.
pub fn read_results_log(text: &str) -> Result<Vec<LogRecord>, CampaignError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: LogRecord = serde_json::from_str(line)
            .map_err(|e| CampaignError::BadLog(format!("line {}: {e}", i + 1)))?;
        records.push(r);
    }
    Ok(records)
}

/// Rebuild a result set from its log, e.g. to re-render evidence. Wall time
/// is not recorded in the log and comes back as zero.
pub fn results_from_log(text: &str) -> Result<CampaignResults, CampaignError> {
    let records = read_results_log(text)?;
    let mut campaign = None;
    let mut baseline = None;
    let mut cases: Vec<CaseResult> = Vec::new();
    let mut open: Option<(TestCase, u64, Vec<TraceEvent>)> = None;
    for r in records {
        match r {
            LogRecord::Campaign { campaign: c } => campaign = Some(c),
            LogRecord::Baseline { digest, baseline: b } => baseline = Some((digest, b)),
            LogRecord::CaseStart { case, frames } => {
                if open.is_some() {
                    return Err(CampaignError::BadLog(format!(
                        "case {} starts before the previous case ended",
                        case.id
                    )));
                }
                open = Some((case, frames, Vec::new()));
            }
            LogRecord::Event { case, event } => match &mut open {
                Some((c, _, evs)) if c.id == case => evs.push(event),
                _ => {
                    return Err(CampaignError::BadLog(format!(
                        "event for case {case} outside its record block"
                    )))
                }
            },
            LogRecord::Violation { .. } => {}
            LogRecord::CaseEnd { case, status, trace_digest, events_total, report } => {
                let (c, frames, events) = open.take().ok_or_else(|| {
                    CampaignError::BadLog(format!("case {case} ends without a start"))
                })?;
                if c.id != case {
                    return Err(CampaignError::BadLog(format!(
                        "case {case} ends while case {} is open",
                        c.id
                    )));
                }
                cases.push(CaseResult {
                    case: c,
                    frames,
                    status,
                    trace_digest,
                    events_total,
                    report,
                    events,
                });
            }
            LogRecord::Summary { .. } => {}
        }
    }
    if open.is_some() {
        return Err(CampaignError::BadLog("unterminated case record".into()));
    }
    let campaign = campaign.ok_or_else(|| CampaignError::BadLog("missing campaign record".into()))?;
    let (baseline_digest, baseline) =
        baseline.ok_or_else(|| CampaignError::BadLog("missing baseline record".into()))?;
    cases.sort_by_key(|c| c.case.id);
    Ok(CampaignResults { campaign, baseline, baseline_digest, cases, wall_ms: 0 })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayOutcome {
    Match { digest: String },
    Mismatch { stored: String, regenerated: String },
}

/// Re-execute one case from a results log and compare trace digests.
/// The case is regenerated from the embedded campaign, not from the log's
/// event records, so replay also detects tampered event lines.
pub fn replay_case(log_text: &str, case_id: u64) -> Result<ReplayOutcome, CampaignError> {
    let records = read_results_log(log_text)?;
    let campaign = records
        .iter()
        .find_map(|r| match r {
            LogRecord::Campaign { campaign } => Some(campaign.clone()),
            _ => None,
        })
        .ok_or_else(|| CampaignError::BadLog("missing campaign record".into()))?;
    let stored = records
        .iter()
        .find_map(|r| match r {
            LogRecord::CaseEnd { case, trace_digest, .. } if *case == case_id => {
                Some(trace_digest.clone())
            }
            _ => None,
        })
        .ok_or(CampaignError::UnknownCase(case_id))?;

    let units = plan_units(&campaign);
    let unit = units
        .iter()
        .find(|u| u.case.id == case_id)
        .ok_or(CampaignError::UnknownCase(case_id))?;
    let (baseline, _) = capture_baseline(&campaign);
    let snap = SystemState::boot(campaign.spec.clone())
        .map_err(|e| CampaignError::BadLog(format!("embedded campaign is invalid: {e}")))?
        .snapshot();
    let result = run_unit(&campaign, &snap, &baseline, unit);
    if result.trace_digest == stored {
        Ok(ReplayOutcome::Match { digest: stored })
    } else {
        Ok(ReplayOutcome::Mismatch { stored, regenerated: result.trace_digest })
    }
}

/// Re-execute every case recorded in a results log; the heavyweight parts
/// (log parse, baseline, boot snapshot) happen once. Returned in case-id
/// order.
pub fn replay_all(log_text: &str) -> Result<Vec<(u64, ReplayOutcome)>, CampaignError> {
    let records = read_results_log(log_text)?;
    let campaign = records
        .iter()
        .find_map(|r| match r {
            LogRecord::Campaign { campaign } => Some(campaign.clone()),
            _ => None,
        })
        .ok_or_else(|| CampaignError::BadLog("missing campaign record".into()))?;
    let units = plan_units(&campaign);
    let (baseline, _) = capture_baseline(&campaign);
    let snap = SystemState::boot(campaign.spec.clone())
        .map_err(|e| CampaignError::BadLog(format!("embedded campaign is invalid: {e}")))?
        .snapshot();
    let mut out = Vec::new();
    for r in &records {
        let LogRecord::CaseEnd { case, trace_digest, .. } = r else {
            continue;
        };
        let unit = units
            .iter()
            .find(|u| u.case.id == *case)
            .ok_or(CampaignError::UnknownCase(*case))?;
        let result = run_unit(&campaign, &snap, &baseline, unit);
        let outcome = if result.trace_digest == *trace_digest {
            ReplayOutcome::Match { digest: trace_digest.clone() }
        } else {
            ReplayOutcome::Mismatch {
                stored: trace_digest.clone(),
                regenerated: result.trace_digest,
            }
        };
        out.push((*case, outcome));
    }
    out.sort_by_key(|(id, _)| *id);
    Ok(out)
}
