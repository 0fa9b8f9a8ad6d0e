//! Operator front end. Exit codes are part of the interface:
//! 0 success with zero violations, 1 violations found, 2 usage or
//! configuration error, 3 internal error. Diagnostics go to stderr only
//! (ISOFORGE_LOG=quiet|info|debug); stdout carries the stable output.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use isoforge_core::certmap::{
    sar_entries, sfr_entries, standard_rows, techniques_for_sar, TechniqueTag,
};
use isoforge_core::orchestrator::{
    emit_evidence, load_campaign, replay_case, results_from_log, run_campaign, write_results_log,
    Campaign, EvidenceFormat, ReplayOutcome, TechniqueSpec,
};
use isoforge_core::surface::{HWFV_CATALOG, PV_CATALOG};
use isoforge_core::{DefectId, MechanismId};

#[derive(Parser)]
#[command(name = "isoforge", version, about = "isolation assessment harness", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a campaign document; write the results log and evidence package
    Run {
        /// Campaign document (JSON)
        campaign: PathBuf,
        /// Output directory for results.jsonl and evidence files
        out_dir: PathBuf,
        /// Worker threads (overrides the document)
        #[arg(long, value_name = "N")]
        parallel: Option<usize>,
        /// Replace every technique's seed
        #[arg(long, value_name = "S")]
        seed_override: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// Print a catalogue (stable output)
    List { what: ListWhat },
    /// Resolve a mapping query: sfr=<ref> | mech=<id> | sar=<ref>
    Map { query: String },
    /// Re-execute one case from a results log and compare trace digests
    Replay { results_log: PathBuf, case_id: u64 },
    /// Re-render evidence from a results log
    Report {
        results_log: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Machine,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ListWhat {
    Mechanisms,
    Surface,
    Defects,
    Sfrs,
    Sars,
    Standards,
}

fn log_level() -> u8 {
    match std::env::var("ISOFORGE_LOG").as_deref() {
        Ok("debug") => 2,
        Ok("info") => 1,
        _ => 0,
    }
}

macro_rules! info {
    ($($t:tt)*) => { if log_level() >= 1 { eprintln!($($t)*); } };
}
macro_rules! debug {
    ($($t:tt)*) => { if log_level() >= 2 { eprintln!($($t)*); } };
}

fn main() -> ExitCode {
    // Die quietly on a closed pipe (`isoforge list | head`) like other
    // line-oriented tools instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let code = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli)))
        .unwrap_or_else(|_| {
            eprintln!("isoforge: internal error");
            3
        });
    ExitCode::from(code)
}

fn run(cli: Cli) -> u8 {
    match cli.cmd {
        Cmd::Run { campaign, out_dir, parallel, seed_override, format } => {
            cmd_run(&campaign, &out_dir, parallel, seed_override, format)
        }
        Cmd::List { what } => cmd_list(what),
        Cmd::Map { query } => cmd_map(&query),
        Cmd::Replay { results_log, case_id } => cmd_replay(&results_log, case_id),
        Cmd::Report { results_log, format } => cmd_report(&results_log, format),
    }
}

fn usage_err(msg: impl std::fmt::Display) -> u8 {
    eprintln!("isoforge: {msg}");
    2
}

fn read(path: &Path) -> Result<String, u8> {
    fs::read_to_string(path).map_err(|e| usage_err(format_args!("{}: {e}", path.display())))
}

fn override_seeds(campaign: &mut Campaign, seed: u64) {
    for t in &mut campaign.techniques {
        match t {
            TechniqueSpec::Fuzz { seed: s, .. }
            | TechniqueSpec::FaultInjection { seed: s, .. }
            | TechniqueSpec::CovertProbe { seed: s, .. } => *s = seed,
            TechniqueSpec::Scripted { .. } => {}
        }
    }
}

fn cmd_run(
    campaign_path: &Path,
    out_dir: &Path,
    parallel: Option<usize>,
    seed_override: Option<u64>,
    format: Format,
) -> u8 {
    let doc = match read(campaign_path) {
        Ok(d) => d,
        Err(code) => return code,
    };
    let mut campaign = match load_campaign(&doc) {
        Ok(c) => c,
        Err(e) => return usage_err(e),
    };
    if let Some(n) = parallel {
        if n == 0 {
            return usage_err("--parallel must be at least 1");
        }
        campaign.parallelism = n;
    }
    if let Some(s) = seed_override {
        override_seeds(&mut campaign, s);
    }
    info!(
        "campaign '{}': {} technique(s), parallelism {}",
        campaign.name,
        campaign.techniques.len(),
        campaign.parallelism
    );

    let results = run_campaign(&campaign);
    info!(
        "ran {} case(s) in {} ms: {} violation(s)",
        results.cases.len(),
        results.wall_ms,
        results.total_violations()
    );
    for c in &results.cases {
        debug!(
            "case {:>4} [{}] {} events, digest {}",
            c.case.id,
            c.case.technique.name(),
            c.events_total,
            &c.trace_digest[..16]
        );
    }

    if let Err(e) = fs::create_dir_all(out_dir) {
        return usage_err(format_args!("{}: {e}", out_dir.display()));
    }
    let mut written = vec![("results.jsonl", write_results_log(&results))];
    if format != Format::Human {
        written.push(("evidence.json", emit_evidence(&results, EvidenceFormat::Machine)));
    }
    if format != Format::Machine {
        written.push(("evidence.txt", emit_evidence(&results, EvidenceFormat::Human)));
    }
    for (name, content) in &written {
        let path = out_dir.join(name);
        if let Err(e) = fs::write(&path, content) {
            return usage_err(format_args!("{}: {e}", path.display()));
        }
        println!("wrote {}", path.display());
    }
    let violations = results.total_violations();
    println!("cases: {}  violations: {violations}", results.cases.len());
    u8::from(violations > 0)
}

fn cmd_list(what: ListWhat) -> u8 {
    match what {
        ListWhat::Mechanisms => {
            for m in MechanismId::ALL {
                println!("{:<3} {}", m.name(), m.description());
            }
        }
        ListWhat::Surface => {
            for (kind, catalog) in [("PV", &PV_CATALOG[..]), ("HWFV", &HWFV_CATALOG[..])] {
                for e in catalog {
                    let args: Vec<&str> = e.args.iter().map(|a| a.name).collect();
                    println!(
                        "{kind:<5} {:>2}  {:<14} ({})  cost: {}; {}",
                        e.id,
                        e.name,
                        args.join(", "),
                        e.cost,
                        e.help
                    );
                }
            }
        }
        ListWhat::Defects => {
            for d in DefectId::ALL {
                println!("{:<6} weakens {:<3} {}", d.name(), d.mechanism().name(), d.description());
            }
        }
        ListWhat::Sfrs => {
            for e in sfr_entries() {
                let mechs: Vec<&str> = e.mechanisms.iter().map(|m| m.name()).collect();
                println!("{:<12} [{}]  {}", e.sfr, mechs.join(", "), e.title);
            }
        }
        ListWhat::Sars => {
            for e in sar_entries() {
                println!("{:<8} [{}]  {}", e.sar, map_techniques(&e.techniques), e.title);
            }
        }
        ListWhat::Standards => {
            for r in standard_rows() {
                println!(
                    "{:<22} {:<8} {:<8} {}",
                    r.label,
                    r.scope,
                    r.property.name(),
                    r.locator
                );
            }
        }
    }
    0
}

fn map_techniques(techniques: &[TechniqueTag]) -> String {
    let rows: Vec<String> = techniques
        .iter()
        .map(|t| {
            if t.implemented() {
                t.name().to_string()
            } else {
                format!("{}(not implemented)", t.name())
            }
        })
        .collect();
    rows.join(", ")
}

fn cmd_map(query: &str) -> u8 {
    let Some((key, value)) = query.split_once('=') else {
        return usage_err("query must be sfr=<ref>, mech=<id>, or sar=<ref>");
    };
    match key {
        "sfr" => match isoforge_core::certmap::mechanisms_for_sfr(value) {
            Ok(mechs) => {
                let names: Vec<&str> = mechs.iter().map(|m| m.name()).collect();
                println!("{value} -> {}", names.join(", "));
                0
            }
            Err(e) => usage_err(e),
        },
        "mech" => match MechanismId::parse(value) {
            Some(m) => {
                let sfrs: Vec<&str> = sfr_entries()
                    .iter()
                    .filter(|e| e.mechanisms.contains(&m))
                    .map(|e| e.sfr.as_str())
                    .collect();
                println!("{value} -> {}", sfrs.join(", "));
                0
            }
            None => usage_err(format_args!("unknown mechanism: {value}")),
        },
        "sar" => match techniques_for_sar(value) {
            Ok(techs) => {
                println!("{value} -> {}", map_techniques(&techs));
                0
            }
            Err(e) => usage_err(e),
        },
        other => usage_err(format_args!("unknown query key: {other}")),
    }
}

fn cmd_replay(results_log: &Path, case_id: u64) -> u8 {
    let log = match read(results_log) {
        Ok(l) => l,
        Err(code) => return code,
    };
    match replay_case(&log, case_id) {
        Ok(ReplayOutcome::Match { digest }) => {
            println!("case {case_id}: digest match ({digest})");
            0
        }
        Ok(ReplayOutcome::Mismatch { stored, regenerated }) => {
            println!("case {case_id}: digest mismatch");
            println!("  stored:      {stored}");
            println!("  regenerated: {regenerated}");
            1
        }
        Err(e) => usage_err(e),
    }
}

fn cmd_report(results_log: &Path, format: Format) -> u8 {
    let log = match read(results_log) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let results = match results_from_log(&log) {
        Ok(r) => r,
        Err(e) => return usage_err(e),
    };
    if format != Format::Human {
        print!("{}", emit_evidence(&results, EvidenceFormat::Machine));
    }
    if format != Format::Machine {
        print!("{}", emit_evidence(&results, EvidenceFormat::Human));
    }
    u8::from(results.total_violations() > 0)
}
