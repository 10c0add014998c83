//! Contrasts the budgeted and free span strategies on the same spans:
//! masked-count spread, span overlap and fallback use.
//!
//! cargo run --release --example budgeted_vs_free

use astmask::corrupt::{ast_span_mask_budgeted, ast_span_mask_free, budget, Eligibility, Phase, Rate};
use astmask::parser::Label;
use astmask::rng::stream_rng;
use astmask::tokenize::TokenSpan;

fn main() {
    let len = 40;
    // a nested family: one statement with two sub-expressions, plus siblings
    let spans: Vec<TokenSpan> = [(0, 12), (2, 6), (7, 11), (12, 20), (20, 32), (22, 30), (32, 40)]
        .iter()
        .map(|&(s, e)| TokenSpan::new(s, e, Label::Assign))
        .collect();
    let eligible = Eligibility::all(len);
    let trials = 20_000;

    for eps in [0.1, 0.3, 0.6] {
        let rate = Rate::new(eps).expect("rate");
        let n = budget(rate, len);
        let mut budgeted = Vec::with_capacity(trials);
        let mut free = Vec::with_capacity(trials);
        let mut fallback = 0;
        let mut overlapping = 0;
        for seed in 0..trials as u64 {
            let b = ast_span_mask_budgeted(&eligible, &spans, rate, &mut stream_rng(seed, 3));
            fallback += b.count_phase(Phase::Fallback);
            budgeted.push(b.masked_count());
            let f = ast_span_mask_free(&eligible, &spans, rate, &mut stream_rng(seed, 3));
            let acc = f.accepted_spans();
            if acc
                .iter()
                .enumerate()
                .any(|(i, a)| acc[i + 1..].iter().any(|b| a.0 < b.1 && b.0 < a.1))
            {
                overlapping += 1;
            }
            free.push(f.masked_count());
        }
        let (bmin, bmax, bmean) = summary(&budgeted);
        let (fmin, fmax, fmean) = summary(&free);
        println!("ε = {eps}: N = {n}");
        println!(
            "  budgeted  min {bmin:>2}  max {bmax:>2}  mean {bmean:6.2}  fallback share {:.3}",
            fallback as f64 / budgeted.iter().sum::<usize>() as f64
        );
        println!(
            "  free      min {fmin:>2}  max {fmax:>2}  mean {fmean:6.2}  runs with overlapping spans {:.3}",
            overlapping as f64 / trials as f64
        );
    }
}

fn summary(xs: &[usize]) -> (usize, usize, f64) {
    let min = *xs.iter().min().unwrap_or(&0);
    let max = *xs.iter().max().unwrap_or(&0);
    let mean = xs.iter().sum::<usize>() as f64 / xs.len().max(1) as f64;
    (min, max, mean)
}
