//! Trains the count denoiser under random and AST-span corruption on
//! generated programs and compares them on held-out programs corrupted with
//! AST spans at ε = 0.3.
//!
//! cargo run --release --example toy_denoiser -- [seeds]

use astmask::corrupt::{CorruptionPolicy, Strategy};
use astmask::eval::{compare_training_strategies, split_corpus, synthetic_records, EvalConfig, TrainConfig};
use astmask::schedule::Schedule;

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let schedule = Schedule::constant(0.3);
    let strategies = [Strategy::AstSpanBudgeted, Strategy::RandomToken];
    let mut sums = [0.0; 2];
    for seed in 0..seeds {
        let records = synthetic_records(1000, seed);
        let split = split_corpus(&records, 100, seed, 50_000).expect("corpus");
        let eval_policy = CorruptionPolicy::new(Strategy::AstSpanBudgeted, seed);
        let report = compare_training_strategies(
            &split,
            &strategies,
            &schedule,
            &eval_policy,
            &schedule,
            &TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            &EvalConfig {
                seed,
                ..EvalConfig::default()
            },
        )
        .expect("comparison");
        println!("seed {seed}\n{}", report.table());
        for (i, s) in strategies.iter().enumerate() {
            sums[i] += report.per_strategy[s.as_str()].syntactic_validity_rate;
        }
    }
    let n = seeds as f64;
    println!(
        "mean syntactic validity: span-trained {:.2}%, random-trained {:.2}%",
        100.0 * sums[0] / n,
        100.0 * sums[1] / n
    );
}
