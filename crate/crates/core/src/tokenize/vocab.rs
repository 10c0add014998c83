use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::encode::{segment, Document};

/// Reserved vocabulary entries. Their ids are their positions in this list
/// and they occupy the first lines of a saved vocabulary file.
pub const SPECIAL_TOKENS: [&str; 4] = ["[MASK]", "[UNK]", "<think>", "</think>"];
pub const MASK_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const THINK_OPEN_ID: u32 = 2;
pub const THINK_CLOSE_ID: u32 = 3;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary file header does not match the special token block at line {line}")]
    BadHeader { line: usize },
    #[error("vocabulary line {line}: {message}")]
    BadEntry { line: usize, message: String },
    #[error(transparent)]
    Tokenize(#[from] super::TokenizeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Surface ↔ id map. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    ids: HashMap<String, u32>,
    fingerprint: u64,
}

impl Vocabulary {
    /// Keeps the `max_size` most frequent surfaces of the corpus; ties go to
    /// the lexicographically smaller surface. Specials are always present.
    pub fn build<'a>(
        corpus: impl IntoIterator<Item = &'a Document>,
        max_size: usize,
    ) -> Result<Self, VocabError> {
        let mut counts: HashMap<&'a str, u64> = HashMap::new();
        let mut seen = false;
        for doc in corpus {
            seen = true;
            for piece in segment(&doc.text, &doc.regions)? {
                if piece.special.is_none() {
                    *counts.entry(&doc.text[piece.start..piece.end]).or_default() += 1;
                }
            }
        }
        if !seen {
            return Err(VocabError::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);
        Ok(Self::from_surfaces(
            ranked.into_iter().map(|(s, _)| s.to_string()).collect(),
        ))
    }

    fn from_surfaces(regular: Vec<String>) -> Self {
        let mut surfaces: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        surfaces.extend(regular);
        let ids = surfaces
            .iter()
            .enumerate()
            .skip(SPECIAL_TOKENS.len())
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        let mut hasher = Sha256::new();
        for s in &surfaces {
            hasher.update(s.as_bytes());
            hasher.update([0u8]);
        }
        let digest = hasher.finalize();
        let fingerprint = u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"));
        Vocabulary {
            surfaces,
            ids,
            fingerprint,
        }
    }

    /// Id of an ordinary surface. Special surfaces are never returned here, so
    /// text that happens to spell `[MASK]` cannot encode to the mask id.
    pub fn id_of(&self, surface: &str) -> Option<u32> {
        self.ids.get(surface).copied()
    }

    pub fn encode_surface(&self, surface: &str) -> u32 {
        self.id_of(surface).unwrap_or(UNK_ID)
    }

    pub fn surface_of(&self, id: u32) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < SPECIAL_TOKENS.len()
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    /// Stable content hash; stored in every encoded sequence.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn write_to(&self, mut out: impl Write) -> io::Result<()> {
        for s in &self.surfaces {
            writeln!(out, "{}", escape(s))?;
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<Self, VocabError> {
        let mut regular = Vec::new();
        let mut lines_read = 0;
        for (line_no, line) in input.lines().enumerate() {
            let line = line?;
            lines_read += 1;
            if line_no < SPECIAL_TOKENS.len() {
                if line != SPECIAL_TOKENS[line_no] {
                    return Err(VocabError::BadHeader { line: line_no });
                }
                continue;
            }
            let surface = unescape(&line).ok_or_else(|| VocabError::BadEntry {
                line: line_no,
                message: format!("bad escape in {line:?}"),
            })?;
            if surface.is_empty() || SPECIAL_TOKENS.contains(&surface.as_str()) {
                return Err(VocabError::BadEntry {
                    line: line_no,
                    message: format!("reserved or empty surface {surface:?}"),
                });
            }
            regular.push(surface);
        }
        if lines_read < SPECIAL_TOKENS.len() {
            return Err(VocabError::BadHeader { line: lines_read });
        }
        let vocab = Self::from_surfaces(regular);
        if vocab.ids.len() + SPECIAL_TOKENS.len() != vocab.surfaces.len() {
            return Err(VocabError::BadEntry {
                line: 0,
                message: "duplicate surfaces".to_string(),
            });
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VocabError> {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let file = fs::File::open(path)?;
        Self::read_from(io::BufReader::new(file))
    }
}

// Surfaces may be whitespace (newline and indentation tokens), so the file
// format escapes backslash, control whitespace and space.
fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            ' ' => out.push_str("\\s"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            'n' => '\n',
            'r' => '\r',
            't' => '\t',
            's' => ' ',
            _ => return None,
        });
    }
    Some(out)
}
