use serde::{Deserialize, Serialize};

use super::CorruptError;
use crate::tokenize::{RegionKind, TokenSequence, MASK_ID};

/// Which step of the engine masked a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    None,
    /// Whole-span masking.
    Span,
    /// Top-up or token-wise fallback when spans cannot supply the budget.
    Fallback,
    /// Independent token-level masking (random and node-type strategies).
    Token,
}

impl Phase {
    pub fn code(self) -> u8 {
        match self {
            Phase::None => 0,
            Phase::Span => 1,
            Phase::Fallback => 2,
            Phase::Token => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Phase> {
        Some(match code {
            0 => Phase::None,
            1 => Phase::Span,
            2 => Phase::Fallback,
            3 => Phase::Token,
            _ => return None,
        })
    }
}

/// Binary mask with per-position attribution.
///
/// `masked_count` always equals the number of set bits and a position has a
/// phase other than `None` exactly when its bit is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskVector {
    bits: Vec<bool>,
    phase: Vec<Phase>,
    masked_count: usize,
    /// Spans accepted by the span phase, in acceptance order.
    accepted: Vec<(usize, usize)>,
}

impl MaskVector {
    pub fn zeros(len: usize) -> Self {
        MaskVector {
            bits: vec![false; len],
            phase: vec![Phase::None; len],
            masked_count: 0,
            accepted: Vec::new(),
        }
    }

    /// Rebuilds a mask from stored bits and phase codes.
    pub fn from_parts(bits: &[u8], phases: &[u8]) -> Result<Self, CorruptError> {
        if bits.len() != phases.len() {
            return Err(CorruptError::LengthMismatch {
                expected: bits.len(),
                actual: phases.len(),
            });
        }
        let mut mask = MaskVector::zeros(bits.len());
        for (i, (&b, &p)) in bits.iter().zip(phases).enumerate() {
            let phase = Phase::from_code(p).ok_or(CorruptError::InvalidMask(i))?;
            if (b == 1) != (phase != Phase::None) || b > 1 {
                return Err(CorruptError::InvalidMask(i));
            }
            if b == 1 {
                mask.set(i, phase);
            }
        }
        Ok(mask)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phase
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn phase_of(&self, i: usize) -> Phase {
        self.phase[i]
    }

    pub fn masked_count(&self) -> usize {
        self.masked_count
    }

    pub fn count_phase(&self, phase: Phase) -> usize {
        self.phase.iter().filter(|&&p| p == phase).count()
    }

    pub fn accepted_spans(&self) -> &[(usize, usize)] {
        &self.accepted
    }

    /// Masks position `i`. A position that is already masked keeps its count
    /// and takes the newer phase.
    pub fn set(&mut self, i: usize, phase: Phase) {
        debug_assert!(phase != Phase::None);
        if !self.bits[i] {
            self.bits[i] = true;
            self.masked_count += 1;
        }
        self.phase[i] = phase;
    }

    pub(crate) fn set_span(&mut self, start: usize, end: usize) {
        for i in start..end {
            self.set(i, Phase::Span);
        }
        self.accepted.push((start, end));
    }

    /// Ors another mask into this one. Used to combine per-region masks,
    /// which never overlap.
    pub fn merge(&mut self, other: &MaskVector) {
        debug_assert_eq!(self.len(), other.len());
        for i in 0..other.len() {
            if other.bits[i] {
                self.set(i, other.phase[i]);
            }
        }
        self.accepted.extend_from_slice(&other.accepted);
    }

    pub fn bits_u8(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| u8::from(b)).collect()
    }

    pub fn phase_codes(&self) -> Vec<u8> {
        self.phase.iter().map(|p| p.code()).collect()
    }

    /// Maximal runs of consecutive positions attributed to `phase`.
    pub fn runs(&self, phase: Phase) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &p) in self.phase.iter().enumerate() {
            match (p == phase, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push((s, i));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s, self.phase.len()));
        }
        runs
    }
}

/// Positions a strategy may mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Eligibility {
    allowed: Vec<bool>,
    count: usize,
}

impl Eligibility {
    pub fn all(len: usize) -> Self {
        Eligibility {
            allowed: vec![true; len],
            count: len,
        }
    }

    pub fn from_flags(allowed: Vec<bool>) -> Self {
        let count = allowed.iter().filter(|&&a| a).count();
        Eligibility { allowed, count }
    }

    /// The tokens of one region.
    pub fn of_region(seq: &TokenSequence, kind: RegionKind) -> Self {
        Self::from_flags(seq.regions.iter().map(|&k| k == kind).collect())
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    /// Number of maskable positions (L_eff).
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn allows(&self, i: usize) -> bool {
        self.allowed[i]
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.allowed
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i)
    }
}

/// Replaces masked positions with the mask id; everything else is copied.
pub fn apply_mask(seq: &TokenSequence, mask: &MaskVector) -> Result<Vec<u32>, CorruptError> {
    apply_mask_ids(&seq.tokens, mask)
}

pub fn apply_mask_ids(tokens: &[u32], mask: &MaskVector) -> Result<Vec<u32>, CorruptError> {
    if tokens.len() != mask.len() {
        return Err(CorruptError::LengthMismatch {
            expected: tokens.len(),
            actual: mask.len(),
        });
    }
    Ok(tokens
        .iter()
        .zip(mask.bits())
        .map(|(&tok, &masked)| if masked { MASK_ID } else { tok })
        .collect())
}
