use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wiscon"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().unwrap_or_default();
    serde_json::from_str(last).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
}

fn small_spec(dir: &Path, fraction: f64) -> PathBuf {
    let path = dir.join("small.json");
    let spec = json!({"kind": "global", "n": 300, "d": 3, "n_clusters": 2, "anomaly_fraction": fraction, "seed": 4});
    std::fs::write(&path, spec.to_string()).unwrap();
    path
}

fn read_jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn strip_runtime(mut reports: Vec<Value>) -> Vec<Value> {
    for r in &mut reports {
        r.as_object_mut().unwrap().remove("runtime_secs");
    }
    reports
}

#[test]
fn generate_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["generate", "synthetic1", "--out", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("synthetic1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25_251);
    let manifest: Value = serde_json::from_slice(&std::fs::read(dir.path().join("synthetic1.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n"], 25_250);
    assert_eq!(manifest["anomaly_indices"].as_array().unwrap().len(), 250);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["anomalies"], 250);

    let spec = small_spec(dir.path(), 0.0);
    let out = run(&["generate", spec.to_str().unwrap(), "--out", d, "--name", "clean"]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_path(dir.path().join("clean.csv")).unwrap();
    let label_col = reader.headers().unwrap().iter().position(|h| h == "label").unwrap();
    let labels: Vec<String> = reader.records().map(|r| r.unwrap()[label_col].to_string()).collect();
    assert_eq!(labels.len(), 300);
    assert!(labels.iter().all(|l| l == "0"));
}

#[test]
fn malformed_spec_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, "{\n  \"kind\": \"global\",\n  \"n\": 10,,\n}").unwrap();
    let out = run(&["generate", spec.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_error(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("line 3"), "{err}");

    let out = run(&["generate", "no-such-preset", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_outputs_and_snapshot_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), 0.05);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "run", "--generate", spec.to_str().unwrap(), "--strategy", "lca,random", "--budget", "6", "--seeds", "2",
        "--combiner", "wiscon,avg", "--max-clusters", "4", "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports = read_jsonl(&out_dir.join("reports.jsonl"));
    assert_eq!(reports.len(), 2 * 2 * 2);
    for r in &reports {
        let audit = out_dir.join(r["audit"].as_str().unwrap());
        assert_eq!(read_jsonl(&audit).len(), 6);
        assert!(r["auc_pr"].as_f64().unwrap() > 0.0);
    }
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows.iter().any(|r| r.contains(",lca,6,wiscon,auc_pr,")));
    assert!(rows.iter().any(|r| r.contains(",random,6,wiscon,auc_pr,")));

    let snapshot = out_dir.join("config.json");
    let out2 = dir.path().join("out2");
    let again = run(&["run", "--config", snapshot.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(strip_runtime(read_jsonl(&out2.join("reports.jsonl"))), strip_runtime(reports));
}

#[test]
fn run_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), 0.05);
    let spec = spec.to_str().unwrap();
    let out_dir = dir.path().join("o");
    let o = out_dir.to_str().unwrap();

    let out = run(&["run", "--generate", spec, "--budget", "1000", "--seeds", "1", "--out", o]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_error(&out)["error"]["message"].as_str().unwrap().contains("budget"));

    let out = run(&["run", "--generate", spec, "--combiner", "true", "--budget", "5", "--out", o]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["run", "--generate", spec, "--strategy", "best", "--out", o]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["run", "--generate", spec, "--lambda", "-1", "--out", o]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["run", "--out", o]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["run", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("missing.csv");
    let out = run(&["run", "--dataset", missing.to_str().unwrap(), "--budget", "5", "--out", o]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_error(&out)["error"]["kind"], "data");

    let unlabeled = dir.path().join("unlabeled.csv");
    std::fs::write(&unlabeled, "a,b\n1,2\n3,4\n5,7\n").unwrap();
    let out = run(&["run", "--dataset", unlabeled.to_str().unwrap(), "--budget", "1", "--out", o]);
    assert_eq!(out.status.code(), Some(3));

    let cfg = dir.path().join("cfg.json");
    let mut value: Value = serde_json::from_slice(
        &std::fs::read({
            let ok = run(&["run", "--generate", spec, "--budget", "3", "--seeds", "1", "--max-clusters", "3", "--out", o]);
            assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
            out_dir.join("config.json")
        })
        .unwrap(),
    )
    .unwrap();
    value["surprise"] = json!(true);
    std::fs::write(&cfg, value.to_string()).unwrap();
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = bin().env("WISCON_WORKERS", "lots").args(["run", "--generate", spec, "--out", o]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_budget_curve_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), 0.05);
    let out_dir = dir.path().join("sweep");
    let args = [
        "sweep", "--generate", spec.to_str().unwrap(), "--strategy", "random,ce,kl,mla,lca", "--budgets", "2,4",
        "--seeds", "2", "--max-clusters", "3", "--out", out_dir.to_str().unwrap(),
    ];
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = std::fs::read_to_string(out_dir.join("budget_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 5 * 2);
    assert!(curve.lines().next().unwrap().starts_with("dataset,strategy,budget,combiner,auc_pr_mean"));
    assert_eq!(std::fs::read_dir(out_dir.join("cells")).unwrap().count(), 5 * 2 * 2);
    let first = std::fs::read_to_string(out_dir.join("reports.jsonl")).unwrap();

    let again = bin().env("RUST_LOG", "info").args(args).output().unwrap();
    assert!(again.status.success());
    let log = String::from_utf8_lossy(&again.stderr);
    assert_eq!(log.matches("cells already done").count(), 2, "{log}");
    assert_eq!(std::fs::read_to_string(out_dir.join("reports.jsonl")).unwrap(), first);

    let mut extended = args.to_vec();
    extended[6] = "2,4,6";
    let more = bin().args(&extended).output().unwrap();
    assert!(more.status.success());
    let curve = std::fs::read_to_string(out_dir.join("budget_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 5 * 3);

    let mut changed = extended.clone();
    changed.extend(["--lambda", "0.5"]);
    let clash = bin().args(&changed).output().unwrap();
    assert_eq!(clash.status.code(), Some(2));

    let out = run(&["sweep", "--generate", spec.to_str().unwrap(), "--budgets", "", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

fn first_stdout_line(child: &mut std::process::Child) -> Value {
    let stdout = child.stdout.as_mut().unwrap();
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).unwrap();
    serde_json::from_str(&line).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn serve_and_interactive_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), 0.05);
    let client = reqwest::Client::new();

    let mut server = bin().args(["serve", "--addr", "127.0.0.1:0"]).stdout(Stdio::piped()).spawn().unwrap();
    let url = first_stdout_line(&mut server)["url"].as_str().unwrap().to_string();
    let spec_value: Value = serde_json::from_str(&std::fs::read_to_string(&spec).unwrap()).unwrap();
    let r = client
        .post(format!("{url}/sessions"))
        .json(&json!({"dataset": {"generate": spec_value}, "budget": 2, "max_clusters": 3}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 201);
    server.kill().unwrap();
    server.wait().unwrap();

    let out_dir = dir.path().join("interactive");
    let mut child = bin()
        .args([
            "run", "--generate", spec.to_str().unwrap(), "--budget", "3", "--seeds", "1", "--max-clusters", "3",
            "--serve", "127.0.0.1:0", "--out", out_dir.to_str().unwrap(),
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let hello = first_stdout_line(&mut child);
    let url = hello["url"].as_str().unwrap();
    let id = hello["session_id"].as_str().unwrap();
    let mut query: Value = client.get(format!("{url}/sessions/{id}/query")).send().await.unwrap().json().await.unwrap();
    loop {
        let resp: Value = client
            .post(format!("{url}/sessions/{id}/label"))
            .json(&json!({"sample_index": query["sample_index"], "label": 1}))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        if resp["next_query"].is_null() {
            break;
        }
        query = resp["next_query"].clone();
    }
    let status = tokio::task::spawn_blocking(move || child.wait().unwrap()).await.unwrap();
    assert!(status.success());
    let result: Value = serde_json::from_slice(&std::fs::read(out_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["audit"].as_array().unwrap().len(), 3);
    assert_eq!(read_jsonl(&out_dir.join("audit/session.jsonl")).len(), 3);
    assert_eq!(read_jsonl(&out_dir.join("reports.jsonl")).len(), 1);
}
