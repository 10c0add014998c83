use std::fs;
use std::path::{Path, PathBuf};

use astmask::corrupt::{CorruptionPolicy, Strategy};
use astmask::eval::synthetic_records;
use astmask::pipeline::{
    assemble, holdout_path, read_output, run_pipeline, stats_path, vocab_path, PipelineOptions,
    PipelineStats, RawRecord,
};
use astmask::schedule::Schedule;
use astmask::tokenize::{RegionKind, Vocabulary, MASK_ID};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn write_records(path: &Path, records: &[RawRecord]) {
    let body: String = records.iter().map(|r| r.to_json_line() + "\n").collect();
    fs::write(path, body).unwrap();
}

fn opts(jobs: usize) -> PipelineOptions {
    PipelineOptions {
        jobs,
        ..PipelineOptions::default()
    }
}

#[test]
fn fixture_matches_golden_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.jsonl");
    let policy = CorruptionPolicy::new(Strategy::AstSpanBudgeted, 42);
    let stats = run_pipeline(
        &golden("records.jsonl"),
        &out,
        &policy,
        &Schedule::linear(100),
        &opts(1),
    )
    .unwrap();
    assert_eq!(stats.records_in, 5);
    assert_eq!(stats.parse_failures, 1);
    let produced = fs::read_to_string(&out).unwrap();
    let expected_path = golden("records.seed42.jsonl");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&expected_path, &produced).unwrap();
    }
    let expected = fs::read_to_string(&expected_path).unwrap();
    assert_eq!(
        produced, expected,
        "rerun with UPDATE_GOLDEN=1 after an intended change"
    );
}

#[test]
fn output_is_independent_of_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    write_records(&input, &synthetic_records(600, 3));
    let policy = CorruptionPolicy::new(Strategy::AstSpanBudgeted, 9);
    let schedule = Schedule::cosine(0.1, 0.6, 1000);
    let mut outputs = Vec::new();
    for jobs in [1, 3] {
        let out = dir.path().join(format!("out{jobs}.jsonl"));
        run_pipeline(&input, &out, &policy, &schedule, &opts(jobs)).unwrap();
        outputs.push((fs::read(&out).unwrap(), fs::read(stats_path(&out)).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn output_lines_round_trip_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.jsonl");
    let policy = CorruptionPolicy::new(Strategy::AstSpanFree, 1);
    run_pipeline(
        &golden("records.jsonl"),
        &out,
        &policy,
        &Schedule::linear(50),
        &opts(0),
    )
    .unwrap();
    let lines = read_output(&out).unwrap();
    let vocab = Vocabulary::load(vocab_path(&out)).unwrap();
    assert_eq!(lines.len(), 5);
    for line in &lines {
        line.verify().unwrap();
        assert!(line.t >= 1 && line.t <= 50);
        assert!((line.epsilon - line.t as f64 / 50.0).abs() < 1e-12);
        assert!(line
            .x0
            .iter()
            .all(|&id| (id as usize) < vocab.len() && id != MASK_ID));
        let text = serde_json::to_string(line).unwrap();
        assert_eq!(
            &serde_json::from_str::<astmask::pipeline::OutputLine>(&text).unwrap(),
            line
        );
    }
    let stats: PipelineStats = serde_json::from_str(&fs::read_to_string(stats_path(&out)).unwrap()).unwrap();
    assert_eq!(stats.records_in, 5);
}

#[test]
fn holdout_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    write_records(&input, &synthetic_records(40, 11));
    let policy = CorruptionPolicy::new(Strategy::AstSpanBudgeted, 5);
    let schedule = Schedule::linear(10);
    let options = PipelineOptions {
        holdout: 6,
        ..opts(1)
    };
    let full = dir.path().join("full.jsonl");
    run_pipeline(&input, &full, &policy, &schedule, &options).unwrap();
    let expected = fs::read_to_string(&full).unwrap();
    assert_eq!(expected.lines().count(), 34);
    let held = fs::read_to_string(holdout_path(&full)).unwrap();
    assert_eq!(held.lines().count(), 6);
    for line in held.lines() {
        let id = RawRecord::from_json_line(line, 1).unwrap().id;
        assert!(!expected.contains(&format!("\"id\":\"{id}\"")));
    }

    // an interrupted run: ten complete lines and half of the eleventh
    let partial = dir.path().join("partial.jsonl");
    let cut: usize = expected.lines().take(10).map(|l| l.len() + 1).sum();
    fs::write(&partial, &expected[..cut + 17]).unwrap();
    let stats = run_pipeline(
        &input,
        &partial,
        &policy,
        &schedule,
        &PipelineOptions {
            resume: true,
            ..options.clone()
        },
    )
    .unwrap();
    assert_eq!(stats.resumed, 10);
    assert_eq!(stats.records_in, 24);
    assert_eq!(fs::read_to_string(&partial).unwrap(), expected);
}

#[test]
fn malformed_lines_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let good = RawRecord::new("a", "p", "r", "x = 1\n").to_json_line();
    fs::write(&input, format!("{good}\nnot json\n{{\"id\": \"b\"}}\n\n{good}\n")).unwrap();
    let out = dir.path().join("out.jsonl");
    let stats = run_pipeline(
        &input,
        &out,
        &CorruptionPolicy::default(),
        &Schedule::linear(10),
        &opts(1),
    )
    .unwrap();
    assert_eq!(stats.malformed, 2);
    assert_eq!(stats.records_in, 2);
}

#[test]
fn missing_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_pipeline(
        &dir.path().join("nope.jsonl"),
        &dir.path().join("out.jsonl"),
        &CorruptionPolicy::default(),
        &Schedule::linear(10),
        &opts(1),
    )
    .unwrap_err();
    assert!(
        matches!(err, astmask::pipeline::PipelineError::FileNotFound(_)),
        "{err:?}"
    );
}

#[test]
fn random_masked_fraction_tracks_mean_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let records = synthetic_records(500, 21);
    write_records(&input, &records);
    let out = dir.path().join("out.jsonl");
    let policy = CorruptionPolicy::new(Strategy::RandomToken, 2);
    let stats = run_pipeline(&input, &out, &policy, &Schedule::linear(100), &opts(1)).unwrap();
    let vocab = Vocabulary::load(vocab_path(&out)).unwrap();
    let lines = read_output(&out).unwrap();
    // Σ Bernoulli(εᵢ) over eligible tokens: mean Σ εᵢ, variance Σ εᵢ(1 − εᵢ)
    let (mut masked, mut mean, mut var, mut eligible) = (0usize, 0.0, 0.0, 0usize);
    for (line, rec) in lines.iter().zip(&records) {
        assert_eq!(line.id, rec.id);
        let seq = assemble(rec, &vocab).unwrap().seq;
        let n = seq.regions.iter().filter(|&&k| k == RegionKind::Code).count();
        masked += line.mask.iter().filter(|&&b| b == 1).count();
        eligible += n;
        mean += n as f64 * line.epsilon;
        var += n as f64 * line.epsilon * (1.0 - line.epsilon);
    }
    assert_eq!(stats.eligible_tokens as usize, eligible);
    assert_eq!(stats.masked_tokens as usize, masked);
    let z = (masked as f64 - mean) / var.sqrt();
    assert!(z.abs() <= 4.0, "z = {z}");
}
