//! Runs the JSONL pipeline on a generated record file and checks that every
//! output line reproduces its corrupted sequence.
//!
//! cargo run --release --example pipeline_jsonl [out_dir]

use std::path::PathBuf;

use astmask::corrupt::{CorruptionPolicy, Strategy};
use astmask::eval::synthetic_records;
use astmask::pipeline::{read_output, run_pipeline, stats_path, PipelineOptions, RawRecord};
use astmask::schedule::Schedule;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let input = dir.join("astmask_demo.jsonl");
    let output = dir.join("astmask_demo.out.jsonl");

    let records: Vec<RawRecord> = synthetic_records(200, 5)
        .into_iter()
        .enumerate()
        .map(|(i, mut r)| {
            r.prompt = format!("task {i}: implement the program below");
            r.reasoning = "work through the control flow first".to_string();
            r.think_tagged = true;
            r
        })
        .collect();
    let text: String = records.iter().map(|r| r.to_json_line() + "\n").collect();
    std::fs::write(&input, text).expect("write input");

    let policy = CorruptionPolicy::new(Strategy::AstSpanBudgeted, 2024);
    let options = PipelineOptions {
        holdout: 20,
        ..PipelineOptions::default()
    };
    let stats = run_pipeline(&input, &output, &policy, &Schedule::linear(1000), &options).expect("pipeline");

    let lines = read_output(&output).expect("read output");
    let broken = lines.iter().filter(|l| l.verify().is_err()).count();
    println!(
        "wrote {} lines to {} ({} failed to round-trip)",
        lines.len(),
        output.display(),
        broken
    );
    println!(
        "parse failures {}, mean ε {:.4}, mean masked fraction {:.4}, fallback usage {:.4}",
        stats.parse_failures, stats.epsilon_mean, stats.masked_fraction_mean, stats.fallback_usage
    );
    println!("stats: {}", stats_path(&output).display());
}
