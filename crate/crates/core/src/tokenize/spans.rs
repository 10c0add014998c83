use std::collections::HashSet;

use super::{RegionKind, TokenSequence, TokenSpan, TokenizeError};
use crate::parser::CharSpan;

/// Candidate-set filters applied after mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanFilter {
    /// Spans shorter than this many tokens are dropped.
    pub min_len: usize,
    /// Keep only the first span for each distinct token range.
    pub dedup: bool,
}

impl Default for SpanFilter {
    fn default() -> Self {
        SpanFilter {
            min_len: 2,
            dedup: true,
        }
    }
}

impl SpanFilter {
    /// No filtering at all; used to feed length-1 spans to the engine.
    pub fn none() -> Self {
        SpanFilter {
            min_len: 1,
            dedup: false,
        }
    }
}

/// Maps byte spans onto the smallest token ranges covering every token they
/// touch. Partially covered tokens are included whole; spans touching no
/// token are dropped. No length or duplicate filtering happens here.
pub fn map_char_spans(spans: &[CharSpan], seq: &TokenSequence) -> Result<Vec<TokenSpan>, TokenizeError> {
    let mut out = Vec::with_capacity(spans.len());
    for span in spans {
        if span.start > span.end || span.end > seq.source_len {
            return Err(TokenizeError::SpanOutOfBounds {
                start: span.start,
                end: span.end,
                len: seq.source_len,
            });
        }
        if span.start == span.end {
            continue;
        }
        let first = seq.offsets.partition_point(|&(_, e)| e <= span.start);
        let last = seq.offsets.partition_point(|&(s, _)| s < span.end);
        if first >= last {
            continue;
        }
        if seq.regions[first..last].iter().any(|&k| k != RegionKind::Code) {
            return Err(TokenizeError::SpanCrossesRegion {
                start: span.start,
                end: span.end,
            });
        }
        out.push(TokenSpan::new(first, last, span.label));
    }
    Ok(out)
}

/// Applies the length filter, then collapses duplicate ranges keeping the
/// first occurrence. With pre-order input that is the shallowest node.
pub fn filter_token_spans(spans: &[TokenSpan], filter: &SpanFilter) -> Vec<TokenSpan> {
    let mut seen = HashSet::new();
    spans
        .iter()
        .filter(|s| s.len() >= filter.min_len.max(1))
        .filter(|s| !filter.dedup || seen.insert((s.start, s.end)))
        .copied()
        .collect()
}

/// [`map_char_spans`] followed by [`filter_token_spans`].
pub fn char_spans_to_token_spans(
    spans: &[CharSpan],
    seq: &TokenSequence,
    filter: &SpanFilter,
) -> Result<Vec<TokenSpan>, TokenizeError> {
    Ok(filter_token_spans(&map_char_spans(spans, seq)?, filter))
}
