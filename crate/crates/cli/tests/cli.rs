use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_patternscout"));
    c.env("RUST_LOG", "error");
    c
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/shop-service").canonicalize().unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn report_without_timestamps(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["run"]["started_at"] = "".into();
    v["run"]["finished_at"] = "".into();
    v
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run_in(dir.path(), &["detect", ".", "--threshold", "11"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["detect"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn operational_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["detect", "does-not-exist"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    std::fs::write(dir.path().join("bad.toml"), "threshold = 99\n").unwrap();
    assert_eq!(run_in(dir.path(), &["--config", "bad.toml", "detect", "."]).status.code(), Some(1));
}

#[test]
fn seed_then_detect_writes_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["seed"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join(".patternscout/store.json").is_file());

    let repo = fixture();
    let o = run_in(
        dir.path(),
        &["detect", repo.to_str().unwrap(), "--out", "out/report.json", "--traces", "out/trace.jsonl", "--seed", "42"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = report_without_timestamps(&dir.path().join("out/report.json"));
    assert_eq!(report["run"]["seed"], 42);
    assert_eq!(report["run"]["model"], "mock/keyword-oracle");
    assert_eq!(report["run"]["config_hash"].as_str().unwrap().len(), 64);
    let verdicts = report["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 9);
    let container = verdicts.iter().find(|v| v["pattern_name"] == "Service Instance Per Container").unwrap();
    assert_eq!(container["detected"], true);
    let trace = std::fs::read_to_string(dir.path().join("out/trace.jsonl")).unwrap();
    assert!(trace.lines().count() > 9);

    let o = run_in(dir.path(), &["fdi", "out/trace.jsonl", "--pattern", "Service Instance Per Container"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("Dockerfile"));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "threshold = 9\ntop_n = 3\n[output]\nreports = \"cfg.json\"\n").unwrap();
    let repo = fixture();
    let o = run_in(dir.path(), &["--config", "run.toml", "detect", repo.to_str().unwrap()]);
    assert!(o.status.success());
    let a = report_without_timestamps(&dir.path().join("cfg.json"));
    assert_eq!(a["run"]["threshold"], 9);
    assert_eq!(a["run"]["top_n"], 3);
    let o = run_in(dir.path(), &["--config", "run.toml", "--threshold", "4", "detect", repo.to_str().unwrap(), "--out", "flag.json"]);
    assert!(o.status.success());
    let b = report_without_timestamps(&dir.path().join("flag.json"));
    assert_eq!(b["run"]["threshold"], 4);
    assert_ne!(a["run"]["config_hash"], b["run"]["config_hash"]);
}

fn copy_dir(from: &Path, to: &Path) {
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            std::fs::create_dir_all(&dest).unwrap();
            copy_dir(&entry.path(), &dest);
        } else {
            std::fs::copy(entry.path(), dest).unwrap();
        }
    }
}

#[test]
fn batch_equals_independent_runs() {
    let dir = tempfile::tempdir().unwrap();
    let repos = dir.path().join("repos");
    std::fs::create_dir_all(repos.join("shop-service")).unwrap();
    copy_dir(&fixture(), &repos.join("shop-service"));
    std::fs::create_dir_all(repos.join("mesh-demo/istio")).unwrap();
    std::fs::write(repos.join("mesh-demo/istio/virtualservice.yaml"), "kind: VirtualService\n# istio sidecar mtls\n").unwrap();
    std::fs::write(repos.join("mesh-demo/README.md"), "Service mesh demo using Istio.\n").unwrap();
    std::fs::create_dir_all(repos.join("empty")).unwrap();
    std::fs::write(dir.path().join("repos.txt"), "# repositories\nrepos/shop-service\nrepos/mesh-demo\n\nrepos/empty\n").unwrap();

    let o = run_in(dir.path(), &["detect-batch", "repos.txt", "--jobs", "3", "--out", "batch", "--traces", "traces"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["shop-service", "mesh-demo", "empty"] {
        let single = format!("single-{name}.json");
        let o = run_in(dir.path(), &["detect", &format!("repos/{name}"), "--out", &single]);
        assert!(o.status.success());
        assert_eq!(
            report_without_timestamps(&dir.path().join(format!("batch/{name}.json"))),
            report_without_timestamps(&dir.path().join(&single)),
            "{name}"
        );
        assert!(dir.path().join(format!("traces/{name}.jsonl")).is_file());
    }
    let mesh = report_without_timestamps(&dir.path().join("batch/mesh-demo.json"));
    let v = mesh["verdicts"].as_array().unwrap().iter().find(|v| v["pattern_name"] == "Service Mesh").unwrap().clone();
    assert_eq!(v["detected"], true);

    let o = run_in(dir.path(), &["fdi", "traces"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("virtualservice.yaml"));
}

/// 190 repositories x 9 patterns with the published aggregate counts.
fn write_aggregate_fixture(dir: &Path) {
    let patterns = [
        "3rd Party Registration",
        "Multiple Service Instances Per Host",
        "Server-Side Service Discovery",
        "Service Deployment Platform",
        "Service Instance Per Container",
        "Service Instance Per VM",
        "Service Mesh",
        "Service Registry",
        "Single Service Instance Per Host",
    ];
    let mut outcomes = Vec::new();
    outcomes.extend(std::iter::repeat_n((true, true), 114));
    outcomes.extend(std::iter::repeat_n((true, false), 116));
    outcomes.extend(std::iter::repeat_n((false, false), 1246));
    outcomes.extend(std::iter::repeat_n((false, true), 234));
    let mut csv = String::from("repo_id,pattern,present\n");
    std::fs::create_dir_all(dir.join("reports")).unwrap();
    let mut it = outcomes.into_iter();
    for r in 0..190 {
        let repo = format!("repo{r:03}");
        let mut verdicts = Vec::new();
        for p in patterns {
            let (detected, present) = it.next().unwrap();
            csv.push_str(&format!("{repo},{p},{present}\n"));
            verdicts.push(serde_json::json!({
                "pattern_name": p, "score": if detected { 7 } else { 2 }, "detected": detected,
                "explanation": "", "evidence_paths": [],
            }));
        }
        let report = serde_json::json!({
            "repo": repo, "verdicts": verdicts,
            "run": {"model": "m", "embed_model": "e", "seed": 1, "config_hash": "h", "tool_version": "0",
                    "threshold": 5, "top_n": 20, "started_at": "", "finished_at": ""},
        });
        std::fs::write(dir.join(format!("reports/{repo}.json")), report.to_string()).unwrap();
    }
    std::fs::write(dir.join("annotations.csv"), csv).unwrap();
}

#[test]
fn evaluate_prints_aggregate_metrics() {
    let dir = tempfile::tempdir().unwrap();
    write_aggregate_fixture(dir.path());
    let o = run_in(dir.path(), &["evaluate", "reports", "annotations.csv", "--out", "eval.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("TP 114  FP 116  TN 1246  FN 234  (total 1710)"), "{out}");
    assert!(out.contains("accuracy 0.795  precision 0.496  recall 0.328  F1 0.394"), "{out}");
    for col in ["PV", "P", "R", "A", "F1", "Max FDI"] {
        assert!(out.lines().next().unwrap().contains(col));
    }
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("eval.json")).unwrap()).unwrap();
    assert_eq!(json["confusion"]["tp"], 114);
}

#[test]
fn evaluate_rejects_unannotated_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    write_aggregate_fixture(dir.path());
    std::fs::write(dir.path().join("annotations.csv"), "repo_id,pattern,present\nrepo000,Service Mesh,true\n").unwrap();
    let o = run_in(dir.path(), &["evaluate", "reports", "annotations.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no annotation"));
}

#[test]
fn dataset_filter_keeps_qualifying_repos() {
    let dir = tempfile::tempdir().unwrap();
    let meta = serde_json::json!([
        {"repo_id": "ok", "stars": 10, "active_months": 6, "size_kb": 100, "matching_artifacts": 3, "recent_commits": 5, "contributors": 2},
        {"repo_id": "few-stars", "stars": 9, "active_months": 6, "size_kb": 100, "matching_artifacts": 3, "recent_commits": 5, "contributors": 2},
    ]);
    std::fs::write(dir.path().join("meta.json"), meta.to_string()).unwrap();
    let o = run_in(dir.path(), &["dataset", "filter", "meta.json"]);
    assert!(o.status.success());
    let kept: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(kept.as_array().unwrap().len(), 1);
    assert_eq!(kept[0]["repo_id"], "ok");

    let partial = serde_json::json!([{"repo_id": "x", "stars": 10}]);
    std::fs::write(dir.path().join("partial.json"), partial.to_string()).unwrap();
    let o = run_in(dir.path(), &["dataset", "filter", "partial.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing metadata field"));
}

#[test]
fn profile_generation_writes_yaml() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &["profiles", "generate", "--name", "Circuit Breaker", "--description", "Stop calling a failing remote service", "--out", "drafts"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let path = PathBuf::from(stdout(&o).trim());
    let text = std::fs::read_to_string(dir.path().join(&path)).unwrap_or_else(|_| std::fs::read_to_string(&path).unwrap());
    assert!(text.contains("name: Circuit Breaker"));
}
