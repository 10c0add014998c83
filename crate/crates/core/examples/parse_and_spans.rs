//! Parses a small program, prints its tree, and maps the AST spans onto
//! tokens.
//!
//! cargo run --example parse_and_spans [file]

use astmask::parser::{collect_char_spans, parse, LabelFilter};
use astmask::tokenize::{char_spans_to_token_spans, encode, Document, RegionKind, SpanFilter, Vocabulary};

const DEMO: &str = "\
def count_even(n):
    count = 0
    for i in range(n):
        if i % 2 == 0:
            count = count + 1
    return count
";

fn main() {
    let source = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path).expect("readable file"),
        None => DEMO.to_string(),
    };
    let parsed = parse(&source);
    for d in &parsed.diagnostics {
        eprintln!("offset {}: {}", d.offset, d.message);
    }
    println!("{}", parsed.root);

    let char_spans = collect_char_spans(&parsed.root, &LabelFilter::default());
    let doc = Document::single(&source, RegionKind::Code);
    let vocab = Vocabulary::build([&doc], 10_000).expect("vocabulary");
    let seq = encode(&source, &doc.regions, &vocab).expect("tokenize");
    let spans = char_spans_to_token_spans(&char_spans, &seq, &SpanFilter::default()).expect("map spans");

    println!(
        "{} tokens, {} byte spans, {} token spans after filtering",
        seq.len(),
        char_spans.len(),
        spans.len()
    );
    for s in spans {
        let text: Vec<&str> = seq.surfaces[s.range()]
            .iter()
            .map(|t| if t == "\n" { "\\n" } else { t.trim_end() })
            .filter(|t| !t.is_empty())
            .collect();
        println!(
            "[{:>3}, {:>3}) {:<12} {}",
            s.start,
            s.end,
            s.label,
            text.join(" ")
        );
    }
}
