use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, THINK_CLOSE_ID, THINK_OPEN_ID};
use super::{Region, RegionKind, TokenSequence, TokenizeError};
use crate::parser::{lex, LexemeKind};

/// Text plus its region segmentation; the unit that gets tokenized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub text: String,
    pub regions: Vec<Region>,
}

impl Document {
    /// The whole text as one region. Empty text gets no regions.
    pub fn single(text: &str, kind: RegionKind) -> Self {
        let regions = if text.is_empty() {
            Vec::new()
        } else {
            vec![Region::new(kind, 0, text.len())]
        };
        Document {
            text: text.to_string(),
            regions,
        }
    }
}

/// A token boundary before vocabulary lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Piece {
    pub start: usize,
    pub end: usize,
    pub kind: RegionKind,
    pub special: Option<u32>,
}

const DELIMITERS: [(&str, u32); 2] = [("</think>", THINK_CLOSE_ID), ("<think>", THINK_OPEN_ID)];

pub(crate) fn validate_regions(text: &str, regions: &[Region]) -> Result<(), TokenizeError> {
    let mut prev_end = 0;
    let mut prev_kind: Option<RegionKind> = None;
    for region in regions {
        if region.kind == RegionKind::Delimiter
            || region.char_start > region.char_end
            || region.char_end > text.len()
        {
            return Err(TokenizeError::RegionOutOfBounds(*region));
        }
        if !text.is_char_boundary(region.char_start) || !text.is_char_boundary(region.char_end) {
            return Err(TokenizeError::InvalidUtf8 {
                offset: region.char_start,
            });
        }
        if region.char_start < prev_end {
            return Err(TokenizeError::RegionOverlap(*region));
        }
        if prev_kind.is_some_and(|k| k >= region.kind) {
            return Err(TokenizeError::RegionOrder(*region));
        }
        prev_end = region.char_end;
        prev_kind = Some(region.kind);
    }
    Ok(())
}

/// Splits text into token pieces, region by region.
pub(crate) fn segment(text: &str, regions: &[Region]) -> Result<Vec<Piece>, TokenizeError> {
    validate_regions(text, regions)?;
    let mut pieces = Vec::new();
    let mut pos = 0;
    for region in regions {
        delimiter_pieces(text, pos, region.char_start, &mut pieces);
        let slice = &text[region.char_start..region.char_end];
        let spans = match region.kind {
            RegionKind::Code => code_pieces(slice),
            _ => prose_pieces(slice),
        };
        pieces.extend(spans.into_iter().map(|(s, e)| Piece {
            start: region.char_start + s,
            end: region.char_start + e,
            kind: region.kind,
            special: None,
        }));
        pos = region.char_end;
    }
    delimiter_pieces(text, pos, text.len(), &mut pieces);
    Ok(pieces)
}

/// Text between regions: tag strings become special tokens, anything else
/// is split like prose. All of it is marked `Delimiter`.
fn delimiter_pieces(text: &str, from: usize, to: usize, out: &mut Vec<Piece>) {
    let mut pos = from;
    while pos < to {
        let rest = &text[pos..to];
        let next_tag = DELIMITERS
            .iter()
            .filter_map(|(tag, id)| rest.find(tag).map(|at| (at, *tag, *id)))
            .min_by_key(|(at, _, _)| *at);
        let plain_end = next_tag.map_or(to, |(at, _, _)| pos + at);
        for (s, e) in prose_pieces(&text[pos..plain_end]) {
            out.push(Piece {
                start: pos + s,
                end: pos + e,
                kind: RegionKind::Delimiter,
                special: None,
            });
        }
        match next_tag {
            Some((at, tag, id)) => {
                let start = pos + at;
                out.push(Piece {
                    start,
                    end: start + tag.len(),
                    kind: RegionKind::Delimiter,
                    special: Some(id),
                });
                pos = start + tag.len();
            }
            None => pos = to,
        }
    }
}

/// Words (alphanumeric or `_` runs) and single punctuation characters.
pub(crate) fn prose_pieces(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        let is_word = c.is_alphanumeric() || c == '_';
        if is_word {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = word_start.take() {
            out.push((s, i));
        }
        if !c.is_whitespace() {
            out.push((i, i + c.len_utf8()));
        }
    }
    if let Some(s) = word_start {
        out.push((s, text.len()));
    }
    out
}

/// Lexeme-aligned pieces for code, plus layout: each `\n` and each run of
/// leading indentation is its own token. Code that does not lex falls back
/// to prose splitting with the same layout tokens.
pub(crate) fn code_pieces(code: &str) -> Vec<(usize, usize)> {
    let base: Vec<(usize, usize)> = match lex(code) {
        Ok(lexemes) => lexemes
            .iter()
            .filter(|l| {
                !matches!(
                    l.kind,
                    LexemeKind::Newline | LexemeKind::Indent | LexemeKind::Dedent
                )
            })
            .map(|l| (l.char_start, l.char_end))
            .collect(),
        Err(_) => prose_pieces(code),
    };
    let bytes = code.as_bytes();
    let mut out = Vec::with_capacity(base.len() * 2);
    let mut gap_start = 0;
    for &(start, end) in base.iter().chain(std::iter::once(&(code.len(), code.len()))) {
        let mut line_start = gap_start == 0;
        for (i, &b) in bytes.iter().enumerate().take(start).skip(gap_start) {
            if b == b'\n' {
                out.push((i, i + 1));
                line_start = true;
            } else if b != b' ' {
                line_start = false;
            }
        }
        if line_start && start < code.len() {
            // spaces directly before the token, back to the line start
            let indent_start = bytes[gap_start..start]
                .iter()
                .rposition(|&b| b != b' ')
                .map_or(gap_start, |p| gap_start + p + 1);
            if indent_start < start {
                out.push((indent_start, start));
            }
        }
        if start < end {
            out.push((start, end));
        }
        gap_start = end;
    }
    out
}

/// Tokenizes `text` under `regions`. Gaps between regions hold delimiter
/// tags; every piece there is tagged `Delimiter`.
pub fn encode(text: &str, regions: &[Region], vocab: &Vocabulary) -> Result<TokenSequence, TokenizeError> {
    let pieces = segment(text, regions)?;
    let mut seq = TokenSequence::with_capacity(pieces.len(), text.len(), vocab.fingerprint());
    for piece in pieces {
        let surface = &text[piece.start..piece.end];
        let id = piece.special.unwrap_or_else(|| vocab.encode_surface(surface));
        seq.push(id, surface, (piece.start, piece.end), piece.kind);
    }
    Ok(seq)
}

/// [`encode`] for raw bytes.
pub fn encode_bytes(
    bytes: &[u8],
    regions: &[Region],
    vocab: &Vocabulary,
) -> Result<TokenSequence, TokenizeError> {
    let text = std::str::from_utf8(bytes).map_err(|e| TokenizeError::InvalidUtf8 {
        offset: e.valid_up_to(),
    })?;
    encode(text, regions, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::vocab::{MASK_ID, UNK_ID};

    fn vocab_for(docs: &[Document]) -> Vocabulary {
        Vocabulary::build(docs, 1000).unwrap()
    }

    #[test]
    fn assignment_tokens_and_offsets() {
        let doc = Document::single("x = 1", RegionKind::Code);
        let vocab = vocab_for(std::slice::from_ref(&doc));
        let seq = encode(&doc.text, &doc.regions, &vocab).unwrap();
        assert_eq!(seq.surfaces, vec!["x", "=", "1"]);
        assert_eq!(seq.offsets, vec![(0, 1), (2, 3), (4, 5)]);
        assert!(seq.regions.iter().all(|&k| k == RegionKind::Code));
    }

    #[test]
    fn empty_text_is_empty_sequence() {
        let vocab = vocab_for(&[Document::single("x", RegionKind::Code)]);
        let seq = encode("", &[], &vocab).unwrap();
        assert!(seq.is_empty());
    }

    #[test]
    fn mask_literal_is_never_the_mask_id() {
        let doc = Document::single("say [MASK] now", RegionKind::Reasoning);
        let vocab = vocab_for(std::slice::from_ref(&doc));
        let seq = encode(&doc.text, &doc.regions, &vocab).unwrap();
        assert!(!seq.tokens.contains(&MASK_ID));
        assert!(seq.surfaces.contains(&"MASK".to_string()));
        let code = encode("y = [MASK]", &[Region::new(RegionKind::Code, 0, 10)], &vocab).unwrap();
        assert!(!code.tokens.contains(&MASK_ID));
    }

    #[test]
    fn layout_tokens_inside_code() {
        let text = "if x > 0:\n    y = 2\n\nz = 3";
        let doc = Document::single(text, RegionKind::Code);
        let seq = encode(text, &doc.regions, &vocab_for(std::slice::from_ref(&doc))).unwrap();
        assert_eq!(
            seq.surfaces,
            vec!["if", "x", ">", "0", ":", "\n", "    ", "y", "=", "2", "\n", "\n", "z", "=", "3"]
        );
    }

    #[test]
    fn delimiters_are_special_and_prose_splits_punctuation() {
        let text = "Add two numbers.\n<think>\nuse +\n</think>\nx = a + b";
        let p_end = 16;
        let r_start = text.find("use").unwrap();
        let r_end = r_start + 5;
        let c_start = text.find("x =").unwrap();
        let regions = [
            Region::new(RegionKind::Prompt, 0, p_end),
            Region::new(RegionKind::Reasoning, r_start, r_end),
            Region::new(RegionKind::Code, c_start, text.len()),
        ];
        let doc = Document {
            text: text.to_string(),
            regions: regions.to_vec(),
        };
        let vocab = vocab_for(std::slice::from_ref(&doc));
        let seq = encode(text, &regions, &vocab).unwrap();
        let kinds: Vec<_> = seq.regions.clone();
        assert_eq!(&seq.surfaces[..4], &["Add", "two", "numbers", "."]);
        assert_eq!(seq.tokens[4], THINK_OPEN_ID);
        assert_eq!(kinds[4], RegionKind::Delimiter);
        assert_eq!(seq.tokens[7], THINK_CLOSE_ID);
        assert_eq!(&seq.surfaces[8..], &["x", "=", "a", "+", "b"]);
        assert!(!seq.tokens.contains(&UNK_ID));
        for (i, &(s, e)) in seq.offsets.iter().enumerate() {
            assert_eq!(&text[s..e], seq.surfaces[i]);
        }
    }

    #[test]
    fn region_validation() {
        let vocab = vocab_for(&[Document::single("x", RegionKind::Code)]);
        let overlap = [
            Region::new(RegionKind::Prompt, 0, 5),
            Region::new(RegionKind::Code, 3, 8),
        ];
        assert!(matches!(
            encode("abcdefgh", &overlap, &vocab),
            Err(TokenizeError::RegionOverlap(_))
        ));
        let order = [
            Region::new(RegionKind::Code, 0, 2),
            Region::new(RegionKind::Prompt, 3, 5),
        ];
        assert!(matches!(
            encode("abcdefgh", &order, &vocab),
            Err(TokenizeError::RegionOrder(_))
        ));
        assert!(matches!(
            encode("é", &[Region::new(RegionKind::Prompt, 1, 2)], &vocab),
            Err(TokenizeError::InvalidUtf8 { .. })
        ));
        assert!(matches!(
            encode_bytes(&[b'a', 0xff], &[], &vocab),
            Err(TokenizeError::InvalidUtf8 { offset: 1 })
        ));
    }
}
