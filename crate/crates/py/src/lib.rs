//! Python bindings. Structured values cross the boundary as JSON strings
//! (the same canonical forms the CLI writes), scalars as plain ints,
//! floats, and strings; errors surface as `ValueError`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use isoforge_core::hv::{PartId, SystemState};
use isoforge_core::orchestrator::{
    self, emit_evidence, load_campaign, run_campaign as run, write_results_log, CampaignResults,
    EvidenceFormat, ReplayOutcome,
};
use isoforge_core::surface::{self, SurfaceKind};
use isoforge_core::{certmap, monitor, workloads, DefectId, MechanismId};

fn val_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn deny_err(reason: isoforge_core::hv::DenyReason) -> PyErr {
    use isoforge_core::hv::DenyReason::*;
    PyValueError::new_err(match reason {
        Unmapped => "access denied: address is unmapped",
        NoGrant => "access denied: no ownership or grant",
        Kernel => "access denied: kernel space",
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string_pretty(value).map_err(val_err)
}

/// A booted machine driven step by step: the interactive counterpart to
/// running a whole campaign.
#[pyclass]
struct Simulator {
    st: SystemState,
}

impl Simulator {
    fn part(&self, name: &str) -> PyResult<PartId> {
        self.st
            .spec()
            .part_by_name(name)
            .ok_or_else(|| val_err(format!("unknown partition {name:?}")))
    }
}

#[pymethods]
impl Simulator {
    /// Boot from a system description (the `"system"` block of a campaign
    /// document): partitions, regions, schedule, channels, defects.
    #[new]
    fn new(system_json: &str) -> PyResult<Self> {
        let spec = orchestrator::load_system(system_json).map_err(val_err)?;
        let st = SystemState::boot(spec).map_err(val_err)?;
        Ok(Simulator { st })
    }

    /// Advance `n` ticks; returns the events emitted meanwhile as JSON.
    fn advance(&mut self, n: u64) -> PyResult<String> {
        if n == 0 {
            return Err(val_err("advance needs at least one tick"));
        }
        to_json(&self.st.advance(n))
    }

    /// Issue one para-virtual hypercall as `part`; returns the call record.
    fn call_pv(&mut self, part: &str, id: u64, args: Vec<u64>) -> PyResult<String> {
        let actor = self.part(part)?;
        to_json(&surface::dispatch_pv(&mut self.st, actor, id, &args))
    }

    /// Raise one emulated hardware trap as `part`; returns the call record.
    fn trap_hwfv(&mut self, part: &str, reason: u64, payload: Vec<u64>) -> PyResult<String> {
        let actor = self.part(part)?;
        to_json(&surface::dispatch_hwfv(&mut self.st, actor, reason, &payload))
    }

    /// Read one word as `part`; denied accesses raise with the reason.
    fn mem_read(&mut self, part: &str, addr: u64) -> PyResult<u64> {
        let actor = self.part(part)?;
        self.st.mem_read(actor, addr).map_err(deny_err)
    }

    /// Write one word as `part`; denied accesses raise with the reason.
    fn mem_write(&mut self, part: &str, addr: u64, value: u64) -> PyResult<()> {
        let actor = self.part(part)?;
        self.st.mem_write(actor, addr, value).map_err(deny_err)
    }

    #[getter]
    fn tick(&self) -> u64 {
        self.st.tick()
    }

    #[getter]
    fn frame(&self) -> u64 {
        self.st.frame()
    }

    /// Name of the partition currently scheduled.
    #[getter]
    fn active(&self) -> String {
        self.st.spec().part_name(self.st.active()).to_string()
    }

    #[getter]
    fn halted(&self) -> Vec<String> {
        self.st
            .halted()
            .iter()
            .map(|&p| self.st.spec().part_name(p).to_string())
            .collect()
    }

    /// Bytes currently charged against `part`'s quota.
    fn alloc_used(&self, part: &str) -> PyResult<u64> {
        Ok(self.st.alloc_used(self.part(part)?))
    }

    /// Running SHA-256 over the canonical trace.
    fn trace_digest(&self) -> String {
        self.st.trace().digest()
    }

    /// All retained trace events as JSON.
    fn trace_events(&self) -> PyResult<String> {
        to_json(&self.st.trace().events())
    }

    fn events_total(&self) -> u64 {
        self.st.trace().total()
    }

    /// The resolved system description this machine runs, as JSON.
    fn spec_json(&self) -> PyResult<String> {
        to_json(self.st.spec())
    }
}

/// The outcome of one campaign run, with every rendering the CLI offers.
#[pyclass]
struct CampaignRun {
    results: CampaignResults,
}

#[pymethods]
impl CampaignRun {
    #[getter]
    fn cases(&self) -> usize {
        self.results.cases.len()
    }

    #[getter]
    fn violations(&self) -> usize {
        self.results.total_violations()
    }

    /// Digest of the canonical machine evidence; equal digests mean equal
    /// results.
    fn digest(&self) -> String {
        self.results.digest()
    }

    fn machine_evidence(&self) -> String {
        emit_evidence(&self.results, EvidenceFormat::Machine)
    }

    fn human_evidence(&self) -> String {
        emit_evidence(&self.results, EvidenceFormat::Human)
    }

    /// The replayable results log (JSON lines).
    fn results_log(&self) -> String {
        write_results_log(&self.results)
    }

    /// Requirement coverage (SFR verdicts, SAR exercise) as JSON.
    fn coverage_json(&self) -> PyResult<String> {
        to_json(&self.results.coverage())
    }

    /// One case's record (without its event stream) as JSON.
    fn case_json(&self, case_id: u64) -> PyResult<String> {
        let case = self
            .results
            .cases
            .iter()
            .find(|c| c.case.id == case_id)
            .ok_or_else(|| val_err(format!("no case {case_id}")))?;
        to_json(case)
    }
}

/// Validate a campaign document and return its canonical echo as JSON.
#[pyfunction]
fn check_campaign(document: &str) -> PyResult<String> {
    to_json(&load_campaign(document).map_err(val_err)?)
}

/// Run a campaign document end to end.
#[pyfunction]
#[pyo3(signature = (document, parallelism=None))]
fn run_campaign(document: &str, parallelism: Option<usize>) -> PyResult<CampaignRun> {
    let mut campaign = load_campaign(document).map_err(val_err)?;
    if let Some(workers) = parallelism {
        if workers == 0 {
            return Err(val_err("parallelism must be at least 1"));
        }
        campaign.parallelism = workers;
    }
    Ok(CampaignRun { results: run(&campaign) })
}

/// Re-execute one logged case; returns stored vs regenerated digests.
#[pyfunction]
fn replay_case(log_text: &str, case_id: u64) -> PyResult<(bool, String, String)> {
    match orchestrator::replay_case(log_text, case_id).map_err(val_err)? {
        ReplayOutcome::Match { digest } => Ok((true, digest.clone(), digest)),
        ReplayOutcome::Mismatch { stored, regenerated } => Ok((false, stored, regenerated)),
    }
}

/// Re-execute every logged case; returns `[(case_id, matched), ...]`.
#[pyfunction]
fn replay_all(log_text: &str) -> PyResult<Vec<(u64, bool)>> {
    Ok(orchestrator::replay_all(log_text)
        .map_err(val_err)?
        .into_iter()
        .map(|(id, o)| (id, matches!(o, ReplayOutcome::Match { .. })))
        .collect())
}

/// Parse a test script into its resolved step list (JSON); raises on the
/// first syntax error with line and column.
#[pyfunction]
fn parse_script(text: &str) -> PyResult<String> {
    to_json(&workloads::script::parse_script(text).map_err(val_err)?.steps)
}

/// Both interface catalogues, keyed "PV" and "HWFV", as JSON.
#[pyfunction]
fn surface_catalog() -> PyResult<String> {
    let doc = serde_json::json!({
        "PV": surface::list_surface(SurfaceKind::Pv),
        "HWFV": surface::list_surface(SurfaceKind::Hwfv),
    });
    serde_json::to_string_pretty(&doc).map_err(val_err)
}

/// The isolation mechanisms as `[(id, description), ...]`.
#[pyfunction]
fn mechanisms() -> Vec<(String, String)> {
    MechanismId::ALL
        .iter()
        .map(|m| (m.name().to_string(), m.description().to_string()))
        .collect()
}

/// The seedable defects as `[(id, weakened_mechanism, description), ...]`.
#[pyfunction]
fn defects() -> Vec<(String, String, String)> {
    DefectId::ALL
        .iter()
        .map(|d| {
            (
                d.name().to_string(),
                d.mechanism().name().to_string(),
                d.description().to_string(),
            )
        })
        .collect()
}

/// The functional-requirement mapping rows as JSON.
#[pyfunction]
fn sfr_table() -> PyResult<String> {
    to_json(&certmap::sfr_entries())
}

/// The assurance-requirement mapping rows as JSON.
#[pyfunction]
fn sar_table() -> PyResult<String> {
    to_json(&certmap::sar_entries())
}

/// The cross-standard isolation terminology rows as JSON.
#[pyfunction]
fn standards_table() -> PyResult<String> {
    to_json(&certmap::standard_rows())
}

/// Median of the samples, the decoding threshold the monitor uses.
#[pyfunction]
fn median_threshold(samples: Vec<u64>) -> f64 {
    monitor::median_threshold(&samples)
}

/// Decode latency samples against their own median: above → 1.
#[pyfunction]
fn threshold_decode(samples: Vec<u64>) -> Vec<u8> {
    monitor::threshold_decode(&samples)
}

/// Fraction of positions where `decoded` matches `sent`.
#[pyfunction]
fn decode_accuracy(sent: Vec<u8>, decoded: Vec<u8>) -> PyResult<f64> {
    monitor::decode_accuracy(&sent, &decoded).map_err(val_err)
}

/// Plug-in mutual information of the empirical (sent, decoded) channel,
/// in bits per symbol, clamped to [0, 1].
#[pyfunction]
fn estimate_capacity(sent: Vec<u8>, decoded: Vec<u8>) -> PyResult<f64> {
    monitor::estimate_capacity(&sent, &decoded).map_err(val_err)
}

#[pymodule]
fn isoforge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Simulator>()?;
    m.add_class::<CampaignRun>()?;
    m.add_function(wrap_pyfunction!(check_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(replay_case, m)?)?;
    m.add_function(wrap_pyfunction!(replay_all, m)?)?;
    m.add_function(wrap_pyfunction!(parse_script, m)?)?;
    m.add_function(wrap_pyfunction!(surface_catalog, m)?)?;
    m.add_function(wrap_pyfunction!(mechanisms, m)?)?;
    m.add_function(wrap_pyfunction!(defects, m)?)?;
    m.add_function(wrap_pyfunction!(sfr_table, m)?)?;
    m.add_function(wrap_pyfunction!(sar_table, m)?)?;
    m.add_function(wrap_pyfunction!(standards_table, m)?)?;
    m.add_function(wrap_pyfunction!(median_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_decode, m)?)?;
    m.add_function(wrap_pyfunction!(decode_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_capacity, m)?)?;
    Ok(())
}
