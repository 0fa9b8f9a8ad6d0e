//! End-to-end checks of the binary: exit codes, output stability, and the
//! run → replay → report loop.

use std::path::Path;
use std::process::{Command, Output};

fn isoforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isoforge"))
        .args(args)
        .env_remove("ISOFORGE_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn campaign_doc(defects: &str) -> String {
    format!(
        r#"{{
          "name": "cli-smoke",
          "system": {{
            "partitions": [
              {{"name": "TP", "kind": "test_pv"}},
              {{"name": "TH", "kind": "test_hwfv"}},
              {{"name": "R1", "kind": "regular", "role": "periodic_compute"}},
              {{"name": "R2", "kind": "regular", "role": "memory_toucher"}}
            ],
            "regions": [
              {{"name": "tp.ram", "base": 4096, "size": 4096, "owner": "TP"}},
              {{"name": "th.ram", "base": 8192, "size": 4096, "owner": "TH"}},
              {{"name": "r1.ram", "base": 16384, "size": 4096, "owner": "R1"}},
              {{"name": "r2.ram", "base": 20480, "size": 4096, "owner": "R2"}},
              {{"name": "kcfg", "base": 61440, "size": 256}}
            ],
            "schedule": [["TP", 5], ["TH", 5], ["R1", 5], ["R2", 5]],
            "defects": [{defects}]
          }},
          "techniques": [
            {{"name": "fuzz", "seed": 41, "count": 32, "params": {{"policy": "sweep"}}}}
          ],
          "frames_per_case": 3
        }}"#
    )
}

fn write_doc(dir: &Path, defects: &str) -> std::path::PathBuf {
    let path = dir.join("campaign.json");
    std::fs::write(&path, campaign_doc(defects)).unwrap();
    path
}

#[test]
fn run_exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let doc = write_doc(dir.path(), "");
    let out_dir = dir.path().join("out");

    let clean = isoforge(&["run", doc.to_str().unwrap(), out_dir.to_str().unwrap()]);
    assert_eq!(code(&clean), 0, "{}", stdout(&clean));
    for f in ["results.jsonl", "evidence.json", "evidence.txt"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }

    let doc = write_doc(dir.path(), "\"D-M1W\"");
    let bad = isoforge(&["run", doc.to_str().unwrap(), out_dir.to_str().unwrap()]);
    assert_eq!(code(&bad), 1, "defects must gate the exit code");

    let missing = isoforge(&["run", "/no/such/file.json", out_dir.to_str().unwrap()]);
    assert_eq!(code(&missing), 2);

    let invalid = dir.path().join("broken.json");
    std::fs::write(&invalid, r#"{"techniques": []}"#).unwrap();
    let broken = isoforge(&["run", invalid.to_str().unwrap(), out_dir.to_str().unwrap()]);
    assert_eq!(code(&broken), 2);
    assert!(!String::from_utf8_lossy(&broken.stderr).is_empty());
}

#[test]
fn list_and_map_are_byte_stable() {
    for what in ["mechanisms", "surface", "defects", "sfrs", "sars", "standards"] {
        let a = isoforge(&["list", what]);
        let b = isoforge(&["list", what]);
        assert_eq!(code(&a), 0);
        assert_eq!(a.stdout, b.stdout, "list {what} must not wobble");
        assert!(!a.stdout.is_empty());
    }
    assert_eq!(code(&isoforge(&["list", "nonsense"])), 2);

    let lines = |args: &[&str]| stdout(&isoforge(args));
    assert_eq!(lines(&["map", "sfr=FRU_PRU"]), "FRU_PRU -> M4, T3, T4\n");
    assert_eq!(lines(&["map", "mech=T1"]), "T1 -> FDP_RIP.2.1\n");
    assert_eq!(
        lines(&["map", "sar=AVA_VAN"]),
        "AVA_VAN -> penetration(not implemented), fuzz, taint(not implemented)\n"
    );
    assert_eq!(code(&isoforge(&["map", "sfr=FDP_NONE"])), 2);
    assert_eq!(code(&isoforge(&["map", "grant=T1"])), 2);
    assert_eq!(code(&isoforge(&["map", "no-equals"])), 2);
}

#[test]
fn expected_row_counts() {
    let rows = |what: &str| stdout(&isoforge(&["list", what])).lines().count();
    assert_eq!(rows("mechanisms"), 8);
    assert_eq!(rows("surface"), 16);
    assert_eq!(rows("defects"), 9);
    assert_eq!(rows("sfrs"), 8);
    assert_eq!(rows("sars"), 6);
    assert_eq!(rows("standards"), 15);
}

#[test]
fn replay_verifies_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let doc = write_doc(dir.path(), "");
    let out_dir = dir.path().join("out");
    assert_eq!(
        code(&isoforge(&["run", doc.to_str().unwrap(), out_dir.to_str().unwrap()])),
        0
    );
    let log_path = out_dir.join("results.jsonl");
    let log = std::fs::read_to_string(&log_path).unwrap();

    for case in ["0", "17", "31"] {
        let ok = isoforge(&["replay", log_path.to_str().unwrap(), case]);
        assert_eq!(code(&ok), 0, "case {case}: {}", stdout(&ok));
    }
    assert_eq!(code(&isoforge(&["replay", log_path.to_str().unwrap(), "500"])), 2);

    // Corrupt case 0's recorded digest and expect the mismatch exit.
    let digest = log
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .find(|v| v["record"] == "case_end" && v["case"] == 0)
        .map(|v| v["trace_digest"].as_str().unwrap().to_string())
        .expect("case 0 present");
    let tampered_path = dir.path().join("tampered.jsonl");
    std::fs::write(&tampered_path, log.replace(&digest, &"0".repeat(64))).unwrap();
    assert_eq!(code(&isoforge(&["replay", tampered_path.to_str().unwrap(), "0"])), 1);
}

#[test]
fn report_rerenders_stored_results() {
    let dir = tempfile::tempdir().unwrap();
    let doc = write_doc(dir.path(), "");
    let out_dir = dir.path().join("out");
    assert_eq!(
        code(&isoforge(&["run", doc.to_str().unwrap(), out_dir.to_str().unwrap()])),
        0
    );
    let log_path = out_dir.join("results.jsonl");

    let machine = isoforge(&["report", log_path.to_str().unwrap(), "--format", "machine"]);
    assert_eq!(code(&machine), 0);
    assert_eq!(
        stdout(&machine),
        std::fs::read_to_string(out_dir.join("evidence.json")).unwrap(),
        "report must reproduce the stored machine evidence"
    );

    let human = isoforge(&["report", log_path.to_str().unwrap()]);
    assert_eq!(
        stdout(&human),
        std::fs::read_to_string(out_dir.join("evidence.txt")).unwrap()
    );
}

#[test]
fn seed_override_rebinds_every_technique() {
    let dir = tempfile::tempdir().unwrap();
    let doc = write_doc(dir.path(), "");
    let run = |out: &str, seed: &str| {
        let out_dir = dir.path().join(out);
        let r = isoforge(&[
            "run",
            doc.to_str().unwrap(),
            out_dir.to_str().unwrap(),
            "--seed-override",
            seed,
        ]);
        assert_eq!(code(&r), 0);
        std::fs::read_to_string(out_dir.join("evidence.json")).unwrap()
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b, "same override, same evidence");
    assert_ne!(a, c, "different seed reshapes the fuzz corpus");
}

#[test]
fn diagnostics_stay_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let doc = write_doc(dir.path(), "");
    let out_dir = dir.path().join("out");
    let quiet = isoforge(&["run", doc.to_str().unwrap(), out_dir.to_str().unwrap()]);
    let noisy = Command::new(env!("CARGO_BIN_EXE_isoforge"))
        .args(["run", doc.to_str().unwrap(), out_dir.to_str().unwrap()])
        .env("ISOFORGE_LOG", "debug")
        .output()
        .unwrap();
    assert_eq!(quiet.stdout, noisy.stdout, "stdout is stable across log levels");
    assert!(quiet.stderr.is_empty());
    assert!(!noisy.stderr.is_empty());
}
