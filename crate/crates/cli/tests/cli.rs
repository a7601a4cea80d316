use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eami(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eami")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = eami(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    eami(args).status.code().unwrap()
}

fn sha(stdout: &str) -> &str {
    stdout.split("sha256 ").nth(1).unwrap().split_whitespace().next().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) -> String {
    let d = dir.to_str().unwrap();
    let mut args = vec!["simulate", "--riders", "20", "--steps", "600", "--seed", "7", "--out", d];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn simulate_is_reproducible_and_leaves_no_partial() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let sa = simulate(&a, &[]);
    let sb = simulate(&b, &[]);
    assert_eq!(sha(&sa), sha(&sb));
    assert_eq!(sha(&sa).len(), 64);
    assert_eq!(fs::read(a.join("trace.jsonl")).unwrap(), fs::read(b.join("trace.jsonl")).unwrap());
    assert!(!a.join("trace.jsonl.partial").exists());
}

#[test]
fn config_file_and_flags_combine() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("world.toml");
    fs::write(&cfg, "n_riders = 4\ntotal_steps = 240\nseed = 3\n").unwrap();
    let out = tmp.path().join("o");
    let stdout = ok(&["simulate", "--config", cfg.to_str().unwrap(), "--steps", "120", "--out", out.to_str().unwrap()]);
    assert!(stdout.contains("120 ticks"), "{stdout}");
    let header = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert!(header.lines().nth(1).unwrap().contains("\"n_riders\":4"));
}

#[test]
fn analyze_writes_every_artifact_idempotently() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &[]);
    let trace = tmp.path().join("trace.jsonl");
    let (x, y) = (tmp.path().join("x"), tmp.path().join("y"));
    for out in [&x, &y] {
        ok(&[
            "analyze",
            "--trace",
            trace.to_str().unwrap(),
            "--k",
            "3",
            "--silhouette",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    for f in ["repository.jsonl", "clusters.csv", "diagram.json", "diagram.dot", "silhouette.csv"] {
        assert_eq!(fs::read(x.join(f)).unwrap(), fs::read(y.join(f)).unwrap(), "{f}");
    }
    let repo = fs::read_to_string(x.join("repository.jsonl")).unwrap();
    assert!(repo.lines().count() > 0);
    assert!(repo.contains("bounded:"));

    // re-rendering reproduces the dot the analysis wrote
    let z = tmp.path().join("z");
    ok(&[
        "diagram",
        "--input",
        x.join("diagram.json").to_str().unwrap(),
        "--format",
        "dot",
        "--out",
        z.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(x.join("diagram.dot")).unwrap(), fs::read(z.join("diagram.dot")).unwrap());
    ok(&[
        "diagram",
        "--input",
        x.join("diagram.json").to_str().unwrap(),
        "--format",
        "svg",
        "--out",
        z.to_str().unwrap(),
    ]);
    assert!(fs::read_to_string(z.join("diagram.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn ablations_change_the_analysis() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &[]);
    let trace = tmp.path().join("trace.jsonl");
    let t = trace.to_str().unwrap();

    let no_analyzer = tmp.path().join("na");
    ok(&["analyze", "--trace", t, "--no-analyzer", "--out", no_analyzer.to_str().unwrap()]);
    let d: serde_json::Value = serde_json::from_str(&fs::read_to_string(no_analyzer.join("diagram.json")).unwrap()).unwrap();
    assert_eq!(d["points"].as_array().unwrap().len(), 0);

    let no_inspector = tmp.path().join("ni");
    ok(&["analyze", "--trace", t, "--no-inspector", "--out", no_inspector.to_str().unwrap()]);
    let repo = fs::read_to_string(no_inspector.join("repository.jsonl")).unwrap();
    assert!(!repo.contains("bounded:"));
}

#[test]
fn metrics_writes_csvs_and_audits() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &[]);
    let out = tmp.path().join("m");
    ok(&[
        "metrics",
        "--trace",
        tmp.path().join("trace.jsonl").to_str().unwrap(),
        "--audit",
        "--out",
        out.to_str().unwrap(),
    ]);
    let inv = fs::read_to_string(out.join("involution.csv")).unwrap();
    assert_eq!(inv.lines().count(), 1 + 5, "header plus five days");
    assert!(fs::read_to_string(out.join("effective_hours.csv"))
        .unwrap()
        .starts_with("day,agent_id,"));
    assert!(out.join("hours.csv").exists());
    assert!(out.join("heatmap_w0.csv").exists());
}

#[test]
fn ingested_logs_are_analyzed() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("log.jsonl");
    let mapping = tmp.path().join("map.toml");
    fs::write(
        &log,
        "{\"who\": \"Ana\", \"t\": 1, \"say\": \"host a party on friday\"}\n\
         {\"who\": \"Ben\", \"t\": 5, \"say\": \"join the friday party\"}\n\
         {\"oops\": true}\n",
    )
    .unwrap();
    fs::write(&mapping, "agent = \"who\"\ntick = \"t\"\ntext = \"say\"\n").unwrap();
    let out = tmp.path().join("a");
    let o = eami(&[
        "analyze",
        "--ingest",
        log.to_str().unwrap(),
        "--mapping",
        mapping.to_str().unwrap(),
        "--k",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped 1"));
    assert!(out.join("diagram.json").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(code(&["simulate", "--bogus"]), 2);
    assert_eq!(code(&["analyze", "--trace", "/nonexistent/trace.jsonl"]), 3);
    assert_eq!(code(&["metrics", "--trace", "/nonexistent/trace.jsonl", "--out", out]), 3);

    let bad = tmp.path().join("bad.jsonl");
    fs::write(&bad, "{\"schema_version\": 99}\n").unwrap();
    assert_eq!(code(&["analyze", "--trace", bad.to_str().unwrap(), "--out", out]), 4);

    let junk = tmp.path().join("junk.json");
    fs::write(&junk, "not json").unwrap();
    assert_eq!(code(&["diagram", "--input", junk.to_str().unwrap(), "--format", "dot", "--out", out]), 4);

    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "n_riders = \"many\"\n").unwrap();
    assert_eq!(code(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]), 4);

    let stderr = String::from_utf8(eami(&["simulate", "--bogus"]).stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.contains("--help"));
    assert!(ok(&["--help"]).contains("Exit codes"));
}
