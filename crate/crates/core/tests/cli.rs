use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn astmask(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_astmask"))
        .args(args)
        .output()
        .expect("spawn astmask")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn source(dir: &Path) -> String {
    let p = dir.join("prog.py");
    fs::write(
        &p,
        "def f(n):\n    if n > 1:\n        return n * f(n - 1)\n    return 1\nx = f(5)\n",
    )
    .unwrap();
    p.display().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(astmask(&["--help"]).status.code(), Some(0));
    assert_eq!(astmask(&["--version"]).status.code(), Some(0));
    for verb in [
        "parse",
        "spans",
        "corrupt",
        "pipeline",
        "verify",
        "train",
        "evaluate",
        "schedule-dump",
    ] {
        assert_eq!(astmask(&[verb, "--help"]).status.code(), Some(0), "{verb}");
    }
}

#[test]
fn usage_and_validation_errors_exit_one() {
    assert_eq!(astmask(&["no-such-verb"]).status.code(), Some(1));
    assert_eq!(astmask(&["parse"]).status.code(), Some(1));
    assert_eq!(
        astmask(&["schedule-dump", "--epsilon", "1.5"]).status.code(),
        Some(1)
    );
    assert_eq!(
        astmask(&["parse", "/definitely/not/here.py"]).status.code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "bogus_key = 1\n").unwrap();
    assert_eq!(
        astmask(&["--config", cfg.to_str().unwrap(), "schedule-dump"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing-dir/dump.txt");
    let o = astmask(&["schedule-dump", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let src = source(dir.path());
    fs::write(&src, "def broken(:\n").unwrap();
    assert_eq!(astmask(&["parse", &src]).status.code(), Some(2));
}

#[test]
fn parse_prints_spans() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let o = astmask(&["parse", &src, "--dump-spans"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(
        text.contains("FUNCTIONDEF") && text.contains("IFSTMT") && text.contains("RETURN"),
        "{text}"
    );
    let o = astmask(&["spans", &src]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).is_empty());
}

#[test]
fn corrupt_is_reproducible_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let run = |seed: &str| stdout(&astmask(&["corrupt", &src, "--seed", seed, "--epsilon", "0.5"]));
    let a = run("7");
    assert_eq!(a, run("7"));
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["epsilon"], 0.5);
    let others: Vec<String> = (8..14).map(|s| run(&s.to_string())).collect();
    assert!(others.iter().any(|o| *o != a));
}

#[test]
fn pipeline_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/records.jsonl");
    let mut bodies = Vec::new();
    for (name, jobs) in [("a.jsonl", "1"), ("b.jsonl", "2")] {
        let out = dir.path().join(name);
        let o = astmask(&[
            "pipeline",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "42",
            "--jobs",
            jobs,
            "--holdout",
            "1",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(format!("{name}.stats.json")).exists());
        assert!(dir.path().join(format!("{name}.vocab")).exists());
        assert!(dir.path().join(format!("{name}.holdout.jsonl")).exists());
        bodies.push(fs::read(&out).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(String::from_utf8_lossy(&bodies[0]).lines().count(), 4);
    // no --out
    assert_eq!(
        astmask(&["pipeline", input.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn verify_and_schedule_dump() {
    let o = astmask(&[
        "verify",
        "--epsilon",
        "0.5",
        "--trials",
        "20000",
        "--strategy",
        "free",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).is_empty());
    let o = astmask(&["schedule-dump", "--timesteps", "10", "--points", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let model = Path::new("/nonexistent/model.json");
    assert_eq!(
        astmask(&["evaluate", "--model", model.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert!(text.contains("0.5") && text.contains('1'), "{text}");
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("recs.jsonl");
    let body: String = astmask::eval::synthetic_records(120, 1)
        .iter()
        .map(|r| r.to_json_line() + "\n")
        .collect();
    fs::write(&records, body).unwrap();
    let model = dir.path().join("m.json");
    let o = astmask(&[
        "train",
        records.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--holdout",
        "20",
        "--epsilon",
        "0.3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = astmask(&[
        "evaluate",
        records.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--holdout",
        "20",
        "--epsilon",
        "0.3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = astmask(&[
        "evaluate",
        "--compare",
        "random,ast-span",
        "--synthetic",
        "120",
        "--holdout",
        "20",
        "--epsilon",
        "0.3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("random") && text.contains("budgeted"), "{text}");
}
