//! Indentation-aware lexer for the mini language.
//!
//! Offsets are byte offsets into the source. `INDENT`, `DEDENT` and the
//! end-of-input `NEWLINE` are zero-width markers; every other lexeme covers
//! exactly its source text.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved words. `True`, `False` and `None` lex as keywords and parse as constants.
pub const KEYWORDS: &[&str] = &[
    "def", "if", "elif", "else", "for", "in", "while", "return", "pass", "break", "continue", "and", "or",
    "not", "True", "False", "None",
];

const OPERATORS: &[&str] = &[
    "==", "!=", "<=", ">=", "<", ">", "=", "+", "-", "*", "/", "%", "(", ")", ",", ":",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LexemeKind {
    Name,
    Number,
    String,
    Op,
    Keyword,
    Newline,
    Indent,
    Dedent,
}

impl LexemeKind {
    /// Layout markers synthesized from indentation rather than read from text.
    pub fn is_synthetic(self) -> bool {
        matches!(self, LexemeKind::Indent | LexemeKind::Dedent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexeme {
    pub kind: LexemeKind,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl Lexeme {
    fn new(kind: LexemeKind, source: &str, start: usize, end: usize) -> Self {
        Lexeme {
            kind,
            text: source[start..end].to_string(),
            char_start: start,
            char_end: end,
        }
    }

    fn marker(kind: LexemeKind, at: usize) -> Self {
        Lexeme {
            kind,
            text: String::new(),
            char_start: at,
            char_end: at,
        }
    }

    pub fn is(&self, kind: LexemeKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexErrorKind {
    #[error("illegal character {0:?}")]
    IllegalCharacter(char),
    #[error("unindent does not match any outer indentation level")]
    InconsistentIndentation,
    #[error("tab characters are not allowed in indentation")]
    TabIndentation,
    #[error("unterminated string literal")]
    UnterminatedString,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("lex error at byte {offset}: {kind}")]
pub struct LexError {
    pub offset: usize,
    pub kind: LexErrorKind,
}

impl LexError {
    fn new(offset: usize, kind: LexErrorKind) -> Self {
        LexError { offset, kind }
    }
}

impl fmt::Display for LexemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LexemeKind::Name => "NAME",
            LexemeKind::Number => "NUMBER",
            LexemeKind::String => "STRING",
            LexemeKind::Op => "OP",
            LexemeKind::Keyword => "KEYWORD",
            LexemeKind::Newline => "NEWLINE",
            LexemeKind::Indent => "INDENT",
            LexemeKind::Dedent => "DEDENT",
        };
        f.write_str(s)
    }
}

/// Splits `source` into lexemes.
///
/// Blank and comment-only lines produce nothing. Newlines inside brackets are
/// treated as whitespace. Every logical line ends with a `NEWLINE`; if the
/// source does not end with `\n` that final `NEWLINE` is zero-width.
pub fn lex(source: &str) -> Result<Vec<Lexeme>, LexError> {
    Lexer::new(source).run()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    out: Vec<Lexeme>,
    indents: Vec<usize>,
    depth: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            out: Vec::new(),
            indents: vec![0],
            depth: 0,
        }
    }

    fn run(mut self) -> Result<Vec<Lexeme>, LexError> {
        let mut at_line_start = true;
        while self.pos < self.bytes.len() {
            if at_line_start && self.depth == 0 {
                if !self.line_indentation()? {
                    // blank or comment-only line fully consumed
                    continue;
                }
                at_line_start = false;
            }
            let b = self.bytes[self.pos];
            match b {
                b' ' | b'\t' | b'\r' => self.pos += 1,
                b'#' => self.skip_comment(),
                b'\n' => {
                    if self.depth == 0 {
                        self.push(LexemeKind::Newline, self.pos, self.pos + 1);
                        at_line_start = true;
                    }
                    self.pos += 1;
                }
                b'0'..=b'9' => self.number(),
                b'"' | b'\'' => self.string(b)?,
                c if c == b'_' || c.is_ascii_alphabetic() => self.word(),
                _ => self.operator()?,
            }
        }
        let end = self.bytes.len();
        if self.out.last().is_some_and(|l| l.kind != LexemeKind::Newline) {
            self.out.push(Lexeme::marker(LexemeKind::Newline, end));
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.out.push(Lexeme::marker(LexemeKind::Dedent, end));
        }
        Ok(self.out)
    }

    /// Measures leading spaces of a physical line and emits INDENT/DEDENT.
    /// Returns false if the line was blank or a comment and has been consumed.
    fn line_indentation(&mut self) -> Result<bool, LexError> {
        let start = self.pos;
        let mut col = 0;
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' => col += 1,
                b'\t' => return Err(LexError::new(self.pos, LexErrorKind::TabIndentation)),
                b'\r' => {}
                _ => break,
            }
            self.pos += 1;
        }
        match self.bytes.get(self.pos) {
            None => return Ok(false),
            Some(b'\n') => {
                self.pos += 1;
                return Ok(false);
            }
            Some(b'#') => {
                self.skip_comment();
                if self.pos < self.bytes.len() {
                    self.pos += 1;
                }
                return Ok(false);
            }
            _ => {}
        }
        let current = *self.indents.last().expect("indent stack is never empty");
        if col > current {
            self.indents.push(col);
            self.out.push(Lexeme::marker(LexemeKind::Indent, self.pos));
        } else if col < current {
            while *self.indents.last().expect("indent stack is never empty") > col {
                self.indents.pop();
                self.out.push(Lexeme::marker(LexemeKind::Dedent, self.pos));
            }
            if *self.indents.last().expect("indent stack is never empty") != col {
                return Err(LexError::new(start, LexErrorKind::InconsistentIndentation));
            }
        }
        Ok(true)
    }

    fn skip_comment(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
            self.pos += 1;
        }
    }

    fn number(&mut self) {
        let start = self.pos;
        self.eat_digits();
        if self.bytes.get(self.pos) == Some(&b'.')
            && self.bytes.get(self.pos + 1).is_some_and(u8::is_ascii_digit)
        {
            self.pos += 1;
            self.eat_digits();
        }
        self.push(LexemeKind::Number, start, self.pos);
    }

    fn eat_digits(&mut self) {
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
    }

    fn string(&mut self, quote: u8) -> Result<(), LexError> {
        let start = self.pos;
        self.pos += 1;
        loop {
            match self.bytes.get(self.pos) {
                None | Some(b'\n') => return Err(LexError::new(start, LexErrorKind::UnterminatedString)),
                Some(b'\\') => {
                    // an escape may not swallow the line break
                    if matches!(self.bytes.get(self.pos + 1), None | Some(b'\n')) {
                        return Err(LexError::new(start, LexErrorKind::UnterminatedString));
                    }
                    self.pos += 1;
                    let ch = self.src[self.pos..].chars().next().expect("checked above");
                    self.pos += ch.len_utf8();
                }
                Some(&b) if b == quote => {
                    self.pos += 1;
                    break;
                }
                Some(_) => {
                    let ch = self.src[self.pos..].chars().next().expect("in bounds");
                    self.pos += ch.len_utf8();
                }
            }
        }
        self.push(LexemeKind::String, start, self.pos);
        Ok(())
    }

    fn word(&mut self) {
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|&c| c == b'_' || c.is_ascii_alphanumeric())
        {
            self.pos += 1;
        }
        let kind = if KEYWORDS.contains(&&self.src[start..self.pos]) {
            LexemeKind::Keyword
        } else {
            LexemeKind::Name
        };
        self.push(kind, start, self.pos);
    }

    fn operator(&mut self) -> Result<(), LexError> {
        let rest = &self.src[self.pos..];
        let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) else {
            let ch = rest.chars().next().expect("pos is in bounds");
            return Err(LexError::new(self.pos, LexErrorKind::IllegalCharacter(ch)));
        };
        match *op {
            "(" => self.depth += 1,
            ")" => self.depth = self.depth.saturating_sub(1),
            _ => {}
        }
        let start = self.pos;
        self.pos += op.len();
        self.push(LexemeKind::Op, start, self.pos);
        Ok(())
    }

    fn push(&mut self, kind: LexemeKind, start: usize, end: usize) {
        self.out.push(Lexeme::new(kind, self.src, start, end));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use LexemeKind::{Dedent, Indent, Keyword, Name, Newline, Number, Op};

    fn kinds(src: &str) -> Vec<(LexemeKind, String)> {
        lex(src).unwrap().into_iter().map(|l| (l.kind, l.text)).collect()
    }

    #[test]
    fn empty_source_has_no_lexemes() {
        assert!(lex("").unwrap().is_empty());
        assert!(lex("\n\n   \n# only a comment\n").unwrap().is_empty());
    }

    #[test]
    fn simple_assignment() {
        let lexemes = lex("x = 1").unwrap();
        let got: Vec<_> = lexemes.iter().map(|l| (l.kind, l.text.as_str())).collect();
        assert_eq!(got, vec![(Name, "x"), (Op, "="), (Number, "1"), (Newline, "")]);
        assert_eq!((lexemes[2].char_start, lexemes[2].char_end), (4, 5));
        assert_eq!((lexemes[3].char_start, lexemes[3].char_end), (5, 5));
    }

    #[test]
    fn if_block_hand_lexed() {
        // "if x > 0:\n    y = 2"
        //  0123456789 0123456789
        let lexemes = lex("if x > 0:\n    y = 2").unwrap();
        let expected = [
            (Keyword, "if", 0, 2),
            (Name, "x", 3, 4),
            (Op, ">", 5, 6),
            (Number, "0", 7, 8),
            (Op, ":", 8, 9),
            (Newline, "\n", 9, 10),
            (Indent, "", 14, 14),
            (Name, "y", 14, 15),
            (Op, "=", 16, 17),
            (Number, "2", 18, 19),
            (Newline, "", 19, 19),
            (Dedent, "", 19, 19),
        ];
        let got: Vec<_> = lexemes
            .iter()
            .map(|l| (l.kind, l.text.as_str(), l.char_start, l.char_end))
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn texts_plus_skipped_whitespace_rebuild_source() {
        let src = "def f(a, b):\n    # note\n    return a + b  # tail\n\nf(1, 'two')\n";
        let lexemes = lex(src).unwrap();
        let mut rebuilt = String::new();
        let mut pos = 0;
        for l in lexemes.iter().filter(|l| !l.kind.is_synthetic()) {
            let gap = &src[pos..l.char_start];
            assert!(gap
                .lines()
                .all(|line| line.trim().is_empty() || line.trim_start().starts_with('#')));
            rebuilt.push_str(gap);
            rebuilt.push_str(&l.text);
            pos = l.char_end;
        }
        rebuilt.push_str(&src[pos..]);
        assert_eq!(rebuilt, src);
    }

    #[test]
    fn dedents_close_every_level() {
        let got = kinds("if a:\n    if b:\n        c = 1\nd = 2\n");
        let dedents = got.iter().filter(|(k, _)| *k == Dedent).count();
        let indents = got.iter().filter(|(k, _)| *k == Indent).count();
        assert_eq!(indents, 2);
        assert_eq!(dedents, 2);
    }

    #[test]
    fn newlines_inside_parentheses_are_ignored() {
        let got = kinds("f(1,\n  2)\n");
        assert_eq!(got.iter().filter(|(k, _)| *k == Newline).count(), 1);
        assert!(!got.iter().any(|(k, _)| *k == Indent));
    }

    #[test]
    fn illegal_character_reports_offset() {
        let err = lex("x = 1 $ 2").unwrap_err();
        assert_eq!(err.offset, 6);
        assert_eq!(err.kind, LexErrorKind::IllegalCharacter('$'));
        let err = lex("x = é").unwrap_err();
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn inconsistent_dedent_is_an_error() {
        let err = lex("if a:\n    b = 1\n  c = 2\n").unwrap_err();
        assert_eq!(err.kind, LexErrorKind::InconsistentIndentation);
        assert_eq!(err.offset, 16);
    }

    #[test]
    fn strings_keep_quotes_and_escapes() {
        let got = kinds(r#"s = "a \"b\" é""#);
        assert_eq!(got[2], (LexemeKind::String, r#""a \"b\" é""#.to_string()));
        assert_eq!(
            lex("s = 'abc").unwrap_err().kind,
            LexErrorKind::UnterminatedString
        );
    }

    #[test]
    fn lexemes_are_sorted_and_disjoint() {
        let lexemes = lex("while i < 10:\n    i = i + 1\n    if i == 5:\n        break\n").unwrap();
        for pair in lexemes.windows(2) {
            assert!(pair[0].char_end <= pair[1].char_start);
        }
        for l in &lexemes {
            if !matches!(l.kind, Newline | Indent | Dedent) {
                assert!(l.char_start < l.char_end);
            }
        }
    }
}
