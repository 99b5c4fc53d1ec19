use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use faultline_core::scenario::{Manifest, ScenarioName, BROWSER_FILE, HAR_FILE, MANIFEST_FILE, SERVER_FILE, SPEC_FILE};
use faultline_core::FailureContextObject;

const CID: &str = "7f3c9a1e-2b4d-4e8f-9a6b-1c2d3e4f5a6b";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_faultline"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/worked_example").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn analyze_worked_example(out: &Path) -> Output {
    bin()
        .arg("analyze")
        .arg("--har")
        .arg(fixture("network.har"))
        .arg("--server-logs")
        .arg(fixture("server_log.jsonl"))
        .arg("--browser-events")
        .arg(fixture("browser_events.jsonl"))
        .args(["--cid", CID, "--out"])
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn worked_example_is_a_backend_exception() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fco.json");
    let o = analyze_worked_example(&out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fco: FailureContextObject = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(fco.events.len(), 3);
    assert_eq!(fco.root_cause.to_string(), "BackendException");
    let text = stdout(&o);
    assert!(text.contains("root cause     BackendException"));
    assert!(text.contains("/api/v1/data") && text.contains("500"));
}

#[test]
fn fco_goes_to_stdout_without_out() {
    let o = bin()
        .arg("analyze")
        .arg("--browser-events")
        .arg(fixture("browser_events.jsonl"))
        .args(["--failure-time", "2024-03-05T14:02:11Z"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let json_end = text.find("\n}\n").unwrap() + 2;
    let fco: FailureContextObject = serde_json::from_str(&text[..json_end]).unwrap();
    assert_eq!(fco.events.len(), 1);
}

#[test]
fn nothing_matching_is_unclassified_not_an_error() {
    let o = bin()
        .arg("analyze")
        .arg("--server-logs")
        .arg(fixture("server_log.jsonl"))
        .args(["--failure-time", "0"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("root cause     Unclassified"));
}

#[test]
fn input_errors_exit_2() {
    let missing_time = bin().arg("analyze").arg("--har").arg(fixture("network.har")).output().unwrap();
    assert_eq!(missing_time.status.code(), Some(2));

    let unreadable = bin().args(["analyze", "--har", "/no/such.har", "--failure-time", "1"]).output().unwrap();
    assert_eq!(unreadable.status.code(), Some(2));

    let not_har = bin()
        .arg("analyze")
        .arg("--har")
        .arg(fixture("server_log.jsonl"))
        .args(["--failure-time", "1"])
        .output()
        .unwrap();
    assert_eq!(not_har.status.code(), Some(2));

    let bad_time = bin()
        .arg("analyze")
        .arg("--har")
        .arg(fixture("network.har"))
        .args(["--failure-time", "yesterday"])
        .output()
        .unwrap();
    assert_eq!(bad_time.status.code(), Some(2));

    assert_eq!(bin().args(["frobnicate"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().output().unwrap().status.code(), Some(2));
}

#[test]
fn explain_rules_lists_rules_in_order() {
    let o = bin().arg("--explain-rules").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let pos: Vec<usize> = ["R1", "R2", "R3", "R4"].iter().map(|r| text.find(r).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn metrics_project_table() {
    let o = bin()
        .args(["metrics", "project", "--detect", "10", "--diagnose", "20", "--fix", "5", "--reduction", "0.5"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o).lines().find(|l| l.starts_with("projected MTTR")).unwrap().to_string();
    let value: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
    assert_eq!(value, 35.0 - 20.0 * 0.5);

    let bad = bin()
        .args(["metrics", "project", "--detect", "10", "--diagnose", "20", "--fix", "5", "--reduction", "1.5"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = bin().args(["simulate", "--scenario", "NetworkTimeout", "--seed", "7", "--out-dir"]).arg(d).output().unwrap();
        assert_eq!(o.status.code(), Some(0));
    }
    let tree = read_tree(&a);
    assert_eq!(tree.len(), 5);
    assert_eq!(tree, read_tree(&b));
}

#[test]
fn analyze_scenario_dirs_matches_manifest() {
    let dir = tempfile::tempdir().unwrap();
    for name in ScenarioName::ALL {
        let out_dir = dir.path().join(name.to_string());
        let o = bin().args(["simulate", "--scenario", &name.to_string(), "--seed", "3", "--out-dir"]).arg(&out_dir).output().unwrap();
        assert_eq!(o.status.code(), Some(0));
        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join(MANIFEST_FILE)).unwrap()).unwrap();
        let o = bin()
            .arg("analyze")
            .arg("--har")
            .arg(out_dir.join(HAR_FILE))
            .arg("--server-logs")
            .arg(out_dir.join(SERVER_FILE))
            .arg("--browser-events")
            .arg(out_dir.join(BROWSER_FILE))
            .arg("--spec")
            .arg(out_dir.join(SPEC_FILE))
            .args(["--failure-time", &manifest.report.failure_time_ms.to_string()])
            .args(["--cid", manifest.correlation_id.as_str()])
            .arg("--out")
            .arg(out_dir.join("fco.json"))
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let expected = format!("root cause     {}", manifest.expected_class);
        assert!(stdout(&o).contains(&expected), "{name}: {}", stdout(&o));
    }
}

#[test]
fn serve_rejects_unreadable_spec_before_binding() {
    let o = bin().args(["serve", "--spec", "/no/such/spec.yaml", "--port", "1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["serve", "--port", "70000"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn readme_config_example_loads() {
    let readme = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap();
    let start = readme.find("```toml\n").unwrap() + "```toml\n".len();
    let block = &readme[start..start + readme[start..].find("```").unwrap()];
    let config = faultline_core::config::Config::from_toml(block).unwrap();
    assert_eq!(config.service.port, 8080);
    assert_eq!(config.correlation.window_ms, 5000);
}
