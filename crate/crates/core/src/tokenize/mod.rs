//! Region-aware tokenization and the mapping from source spans to token spans.

mod encode;
mod spans;
mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::Label;

pub use encode::{encode, encode_bytes, Document};
pub use spans::{char_spans_to_token_spans, filter_token_spans, map_char_spans, SpanFilter};
pub use vocab::{VocabError, Vocabulary, MASK_ID, SPECIAL_TOKENS, THINK_CLOSE_ID, THINK_OPEN_ID, UNK_ID};

/// The segment a token belongs to. `Delimiter` marks tag tokens between
/// regions; it never names a region itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Prompt,
    Reasoning,
    Code,
    Delimiter,
}

impl RegionKind {
    pub const REGIONS: [RegionKind; 3] = [RegionKind::Prompt, RegionKind::Reasoning, RegionKind::Code];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionKind::Prompt => "prompt",
            RegionKind::Reasoning => "reasoning",
            RegionKind::Code => "code",
            RegionKind::Delimiter => "delimiter",
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub kind: RegionKind,
    pub char_start: usize,
    pub char_end: usize,
}

impl Region {
    pub fn new(kind: RegionKind, char_start: usize, char_end: usize) -> Self {
        Region {
            kind,
            char_start,
            char_end,
        }
    }

    pub fn len(&self) -> usize {
        self.char_end - self.char_start
    }

    pub fn is_empty(&self) -> bool {
        self.char_start == self.char_end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenizeError {
    #[error("region {0:?} overlaps the previous region")]
    RegionOverlap(Region),
    #[error("region {0:?} is out of order; expected prompt < reasoning < code")]
    RegionOrder(Region),
    #[error("region {0:?} lies outside the text")]
    RegionOutOfBounds(Region),
    #[error("invalid UTF-8 at byte {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("span [{start}, {end}) is out of bounds for a source of {len} bytes")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("span [{start}, {end}) covers tokens outside the code region")]
    SpanCrossesRegion { start: usize, end: usize },
}

/// A tokenized record: ids with their surfaces, source offsets and regions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub surfaces: Vec<String>,
    pub offsets: Vec<(usize, usize)>,
    pub regions: Vec<RegionKind>,
    /// Byte length of the source text.
    pub source_len: usize,
    /// Fingerprint of the vocabulary the ids refer to.
    pub vocab_id: u64,
}

impl TokenSequence {
    pub(crate) fn with_capacity(n: usize, source_len: usize, vocab_id: u64) -> Self {
        TokenSequence {
            tokens: Vec::with_capacity(n),
            surfaces: Vec::with_capacity(n),
            offsets: Vec::with_capacity(n),
            regions: Vec::with_capacity(n),
            source_len,
            vocab_id,
        }
    }

    pub(crate) fn push(&mut self, id: u32, surface: &str, offset: (usize, usize), region: RegionKind) {
        self.tokens.push(id);
        self.surfaces.push(surface.to_string());
        self.offsets.push(offset);
        self.regions.push(region);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Indices of the tokens in `kind`.
    pub fn positions(&self, kind: RegionKind) -> impl Iterator<Item = usize> + '_ {
        self.regions
            .iter()
            .enumerate()
            .filter(move |(_, &k)| k == kind)
            .map(|(i, _)| i)
    }

    /// Half-open token range of a region (regions are contiguous).
    pub fn region_range(&self, kind: RegionKind) -> std::ops::Range<usize> {
        let start = self.regions.iter().position(|&k| k == kind);
        match start {
            Some(s) => {
                let len = self.regions[s..].iter().take_while(|&&k| k == kind).count();
                s..s + len
            }
            None => 0..0,
        }
    }

    /// Checks the structural invariants of the sequence against its source.
    pub fn check(&self, text: &str) -> Result<(), String> {
        let n = self.tokens.len();
        if self.surfaces.len() != n || self.offsets.len() != n || self.regions.len() != n {
            return Err("parallel arrays differ in length".to_string());
        }
        let mut prev_end = 0;
        for (i, &(s, e)) in self.offsets.iter().enumerate() {
            if s >= e || s < prev_end {
                return Err(format!("token {i} offsets ({s}, {e}) unsorted or empty"));
            }
            if text.get(s..e) != Some(self.surfaces[i].as_str()) {
                return Err(format!("token {i} surface does not match its source text"));
            }
            prev_end = e;
        }
        Ok(())
    }
}

/// A labelled half-open token interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize, label: Label) -> Self {
        TokenSpan { start, end, label }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn contains(&self, other: &TokenSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &TokenSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}
