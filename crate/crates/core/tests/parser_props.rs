use astmask::parser::{collect_char_spans, parse, parse_bytes, pretty_print, LabelFilter, ProgramGenerator};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn generated_programs_round_trip(seed in any::<u64>()) {
        let mut gen = ProgramGenerator::with_seed(seed);
        let tree = gen.module();
        let source = pretty_print(&tree);
        let parsed = parse(&source);
        prop_assert!(parsed.is_ok(), "{:?}\n{}", parsed.diagnostics, source);
        prop_assert!(parsed.root.same_shape(&tree), "{}", source);
        prop_assert!(parsed.root.check_nesting().is_ok());
        // printing the parse gives the same text back
        prop_assert_eq!(pretty_print(&parsed.root), source);
    }

    #[test]
    fn spans_lie_inside_the_source(seed in any::<u64>()) {
        let source = ProgramGenerator::with_seed(seed).program();
        let parsed = parse(&source);
        for span in collect_char_spans(&parsed.root, &LabelFilter::default()) {
            prop_assert!(span.start < span.end && span.end <= source.len());
            prop_assert!(source.is_char_boundary(span.start) && source.is_char_boundary(span.end));
            let text = &source[span.start..span.end];
            prop_assert_eq!(text.trim(), text, "span text has outer whitespace");
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let result = parse_bytes(&bytes);
        prop_assert!(result.root.check_nesting().is_ok());
    }

    #[test]
    fn program_like_text_never_panics(text in "[a-z0-9 ():=+\\-*/%<>!,\n\t'\"#]{0,300}") {
        let result = parse(&text);
        prop_assert!(result.root.check_nesting().is_ok());
        if result.is_ok() {
            for span in collect_char_spans(&result.root, &LabelFilter::All) {
                prop_assert!(span.end <= text.len());
            }
        }
    }
}

#[test]
fn deep_nesting_is_rejected_not_overflowed() {
    let source = format!("x = {}1{}\n", "(".repeat(5000), ")".repeat(5000));
    let result = parse(&source);
    assert!(!result.is_ok());
    let source = format!("x = {}1\n", "-".repeat(5000));
    assert!(!parse(&source).is_ok());
}
