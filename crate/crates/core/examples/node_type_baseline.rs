//! Node-type weighted token masking: per-label masking rates over many
//! generated programs.
//!
//! cargo run --release --example node_type_baseline

use std::collections::BTreeMap;

use astmask::corrupt::{node_type_probabilities, node_type_token_mask, Eligibility, NodeTypeTable};
use astmask::eval::synthetic_records;
use astmask::pipeline::{assemble, record_document};
use astmask::rng::stream_rng;
use astmask::tokenize::{RegionKind, Vocabulary};

fn main() {
    let table = NodeTypeTable::default();
    let records = synthetic_records(2000, 11);
    let docs: Vec<_> = records.iter().map(record_document).collect();
    let vocab = Vocabulary::build(&docs, 10_000).expect("vocabulary");

    // probability bucket -> (masked, total)
    let mut tally: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (i, record) in records.iter().enumerate() {
        let a = assemble(record, &vocab).expect("assemble");
        let eligible = Eligibility::of_region(&a.seq, RegionKind::Code);
        let code = a.seq.region_range(RegionKind::Code);
        let spans: Vec<_> = a
            .label_spans
            .iter()
            .filter(|s| s.start >= code.start)
            .copied()
            .collect();
        let probs = node_type_probabilities(a.seq.len(), &spans, &table);
        let mask = node_type_token_mask(&eligible, &spans, &table, &mut stream_rng(i as u64, 3));
        for pos in eligible.positions() {
            let entry = tally.entry(format!("{:.2}", probs[pos])).or_default();
            entry.0 += u64::from(mask.is_masked(pos));
            entry.1 += 1;
        }
    }
    println!("{:>6} {:>9} {:>9} {:>8}", "p", "tokens", "masked", "rate");
    for (p, (masked, total)) in tally {
        println!(
            "{p:>6} {total:>9} {masked:>9} {:>8.4}",
            masked as f64 / total as f64
        );
    }
}
