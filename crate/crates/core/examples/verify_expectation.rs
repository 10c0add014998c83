//! Compares Monte Carlo estimates of the free strategy's masked count with
//! exact enumeration, and shows where the mean departs from ε·L.
//!
//! cargo run --release --example verify_expectation

use astmask::eval::{brute_force_masked_count_distribution, monte_carlo_check, McParams, McStrategy};
use astmask::parser::Label;
use astmask::tokenize::TokenSpan;

fn spans(ranges: &[(usize, usize)]) -> Vec<TokenSpan> {
    ranges
        .iter()
        .map(|&(s, e)| TokenSpan::new(s, e, Label::Assign))
        .collect()
}

fn main() {
    let cases = [
        ("3 × 4 tokens, ε=0.5", 12, spans(&[(0, 4), (4, 8), (8, 12)]), 0.5),
        ("2 × 4 tokens, ε=0.25", 8, spans(&[(0, 4), (4, 8)]), 0.25),
        (
            "8 × 1 token, ε=0.25",
            8,
            spans(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8)]),
            0.25,
        ),
        (
            "nested, ε=0.3",
            10,
            spans(&[(0, 10), (0, 4), (5, 9), (6, 8)]),
            0.3,
        ),
    ];
    println!(
        "{:<22} {:>8} {:>10} {:>10} {:>9} {:>8}",
        "case", "ε·L", "exact", "MC mean", "std err", "|gap|/se"
    );
    for (name, len, spans, eps) in cases {
        let exact = brute_force_masked_count_distribution(&spans, eps, len).expect("enumerable");
        let params = McParams {
            len,
            spans,
            epsilon: eps,
            seed: 1,
        };
        let mc = monte_carlo_check(McStrategy::Free, 200_000, &params).expect("monte carlo");
        println!(
            "{name:<22} {:>8.4} {:>10.4} {:>10.4} {:>9.5} {:>8.2}",
            eps * len as f64,
            exact.mean,
            mc.mean_count,
            mc.std_error,
            mc.gap_in_std_errors
        );
    }
}
