//! Lexer, parser and span extraction for the indentation-based mini language.

mod ast;
pub mod generate;
mod grammar;
mod lexer;
mod printer;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use ast::{AstNode, Label, UnknownLabel};
pub use generate::{GeneratorConfig, ProgramGenerator};
pub use grammar::{parse, parse_bytes, ParseError, ParseResult};
pub use lexer::{lex, LexError, LexErrorKind, Lexeme, LexemeKind, KEYWORDS};
pub use printer::{expression as print_expression, pretty_print};

/// A half-open byte interval of source text labelled with its construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

/// Which node labels contribute spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelFilter {
    /// Every node, including `MODULE` and `BLOCK` containers.
    All,
    /// Every node except the listed labels.
    Except(BTreeSet<Label>),
    /// Only the listed labels.
    Only(BTreeSet<Label>),
}

impl Default for LabelFilter {
    /// All nodes except the structural containers `MODULE` and `BLOCK`, which
    /// carry no source position in Python's `ast` and would otherwise offer
    /// the entire code region as a single span.
    fn default() -> Self {
        LabelFilter::Except([Label::Module, Label::Block].into_iter().collect())
    }
}

impl LabelFilter {
    pub fn accepts(&self, label: Label) -> bool {
        match self {
            LabelFilter::All => true,
            LabelFilter::Except(set) => !set.contains(&label),
            LabelFilter::Only(set) => set.contains(&label),
        }
    }
}

/// Pre-order list of the spans of every accepted node under `root`.
///
/// A module without statements yields no spans at all.
pub fn collect_char_spans(root: &AstNode, filter: &LabelFilter) -> Vec<CharSpan> {
    let mut spans = Vec::new();
    if root.label == Label::Module && root.children.is_empty() {
        return spans;
    }
    root.walk(&mut |node, _| {
        if filter.accepts(node.label) {
            spans.push(CharSpan {
                start: node.char_start,
                end: node.char_end,
                label: node.label,
            });
        }
    });
    spans
}
