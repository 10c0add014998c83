//! Corrupts one prompt / reasoning / code record under each strategy and
//! shows which tokens were masked and why.
//!
//! cargo run --example corrupt_record

use astmask::corrupt::{corrupt, CorruptionPolicy, Phase, Rate, Strategy};
use astmask::pipeline::{assemble, record_document, RawRecord};
use astmask::tokenize::{RegionKind, Vocabulary};

fn main() {
    let record = RawRecord::new(
        "demo",
        "Return the largest of three numbers.",
        "Compare pairwise and keep the bigger one.",
        "def biggest(a, b, c):\n    m = a\n    if b > m:\n        m = b\n    if c > m:\n        m = c\n    return m\n",
    );
    let vocab = Vocabulary::build([&record_document(&record)], 1000).expect("vocabulary");
    let assembled = assemble(&record, &vocab).expect("assemble");
    let rate = Rate::new(0.4).expect("rate");

    for strategy in [
        Strategy::RandomToken,
        Strategy::NodeTypeToken,
        Strategy::AstSpanBudgeted,
        Strategy::AstSpanFree,
    ] {
        let policy = CorruptionPolicy::new(strategy, 7);
        let ex = corrupt(assembled.input(), 400, rate, &policy, 42).expect("corrupt");
        println!(
            "== {strategy} ({} of {} tokens masked)",
            ex.mask.masked_count(),
            ex.x0.len()
        );
        let mut line = String::new();
        for i in 0..ex.x0.len() {
            let surface = ex.x0.surfaces[i].as_str();
            let shown = match ex.mask.phase_of(i) {
                Phase::None => surface.to_string(),
                Phase::Span => "▇".repeat(surface.chars().count().max(1)),
                Phase::Fallback => "░".repeat(surface.chars().count().max(1)),
                Phase::Token => "▒".repeat(surface.chars().count().max(1)),
            };
            if surface == "\n" {
                line.push('\n');
                continue;
            }
            if ex.x0.regions[i] == RegionKind::Delimiter {
                line.push_str(&format!("{shown}\n"));
                continue;
            }
            line.push_str(&shown);
            line.push(' ');
        }
        println!("{line}\n");
    }
    println!("▇ span  ░ fallback  ▒ token-level");
}
