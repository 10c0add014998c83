//! The masking kernels. All of them take an explicit RNG and the set of
//! positions they may touch, and return a fresh [`MaskVector`].

use rand::Rng;

use super::mask::{Eligibility, MaskVector, Phase};
use super::policy::NodeTypeTable;
use super::{CorruptError, Rate};
use crate::rng::{bernoulli, index_below, shuffle};
use crate::tokenize::TokenSpan;

/// Probability of masking a whole span of `length` tokens so that it matches
/// the chance that token-wise masking at `epsilon` hits at least one of them:
/// `1 - (1 - epsilon)^length`.
pub fn span_mask_probability(epsilon: f64, length: usize) -> Result<f64, CorruptError> {
    if !(0.0..=1.0).contains(&epsilon) || length < 1 {
        return Err(CorruptError::Domain(format!(
            "need 0 <= epsilon <= 1 and length >= 1, got epsilon={epsilon}, length={length}"
        )));
    }
    Ok(span_probability(epsilon, length))
}

fn span_probability(epsilon: f64, length: usize) -> f64 {
    match i32::try_from(length) {
        Ok(n) => 1.0 - (1.0 - epsilon).powi(n),
        Err(_) => 1.0 - (1.0 - epsilon).powf(length as f64),
    }
}

/// Target masked-token count ⌊ε·L_eff⌋.
pub fn budget(epsilon: Rate, eligible_count: usize) -> usize {
    (epsilon.get() * eligible_count as f64).floor() as usize
}

/// Independent Bernoulli(ε) per eligible position.
pub fn random_token_mask(eligible: &Eligibility, epsilon: Rate, rng: &mut impl Rng) -> MaskVector {
    bernoulli_mask(eligible, epsilon.get(), Phase::Token, rng)
}

fn bernoulli_mask(eligible: &Eligibility, p: f64, phase: Phase, rng: &mut impl Rng) -> MaskVector {
    let mut mask = MaskVector::zeros(eligible.len());
    for i in eligible.positions() {
        if bernoulli(rng, p) {
            mask.set(i, phase);
        }
    }
    mask
}

/// Per-token probabilities from the node-type table: each token takes the
/// probability of its innermost enclosing span whose label is in the table,
/// or the table default when there is none.
pub fn node_type_probabilities(len: usize, spans: &[TokenSpan], table: &NodeTypeTable) -> Vec<f64> {
    let mut probs = vec![table.default_prob; len];
    let mut ordered: Vec<&TokenSpan> = spans
        .iter()
        .filter(|s| table.probs.contains_key(&s.label))
        .collect();
    // outer spans first so inner ones overwrite; stable for equal ranges,
    // where the later (deeper) node wins
    ordered.sort_by_key(|s| std::cmp::Reverse(s.len()));
    for span in ordered {
        let p = table.probs[&span.label];
        for slot in &mut probs[span.start.min(len)..span.end.min(len)] {
            *slot = p;
        }
    }
    probs
}

/// Token-level masking with construct-dependent probabilities.
pub fn node_type_token_mask(
    eligible: &Eligibility,
    spans: &[TokenSpan],
    table: &NodeTypeTable,
    rng: &mut impl Rng,
) -> MaskVector {
    let probs = node_type_probabilities(eligible.len(), spans, table);
    let mut mask = MaskVector::zeros(eligible.len());
    for i in eligible.positions() {
        if bernoulli(rng, probs[i]) {
            mask.set(i, Phase::Token);
        }
    }
    mask
}

/// Budgeted AST span masking.
///
/// 1. Shuffle the spans; visit them while fewer than N = ⌊ε·L_eff⌋ tokens are
///    masked. Each visited span draws Bernoulli(1 − (1 − ε)^ℓ) and is masked
///    whole if accepted and disjoint from everything masked so far.
/// 2. If the count is still below N, mask N − c further positions chosen
///    uniformly from the unmasked eligible ones, by selection sampling.
///
/// The result satisfies N ≤ c ≤ N + ℓ_max − 1, and accepted spans never
/// overlap. Runs in O(n log L + L).
pub fn ast_span_mask_budgeted(
    eligible: &Eligibility,
    spans: &[TokenSpan],
    epsilon: Rate,
    rng: &mut impl Rng,
) -> MaskVector {
    let len = eligible.len();
    let target = budget(epsilon, eligible.count());
    let mut mask = MaskVector::zeros(len);

    // shuffling the bounds themselves keeps the visit order sequential in memory
    let mut order: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
    shuffle(&mut order, rng);
    let mut accepted_starts = Fenwick::new(len);
    for &(start, end) in &order {
        if mask.masked_count() >= target {
            break;
        }
        debug_assert!(start < end && end <= len);
        let p = span_probability(epsilon.get(), end - start);
        if !bernoulli(rng, p) {
            continue;
        }
        // accepted spans are disjoint, so one intersects [s, e) iff it covers
        // s or starts strictly inside (s, e)
        let free = !mask.is_masked(start) && accepted_starts.range_sum(start + 1, end) == 0;
        if free {
            mask.set_span(start, end);
            accepted_starts.add(start);
        }
    }

    let masked = mask.masked_count();
    if masked < target {
        // selection sampling: one pass, each candidate taken with probability
        // needed / remaining, which gives a uniform subset of the right size
        let mut remaining = eligible.positions().filter(|&i| !mask.is_masked(i)).count();
        let mut needed = (target - masked).min(remaining);
        for i in 0..len {
            if needed == 0 {
                break;
            }
            if !eligible.allows(i) || mask.is_masked(i) {
                continue;
            }
            if index_below(rng, remaining) < needed {
                mask.set(i, Phase::Fallback);
                needed -= 1;
            }
            remaining -= 1;
        }
    }
    mask
}

/// Budget-free AST span masking: every span is accepted independently with
/// probability 1 − (1 − ε)^ℓ and masked whole; overlaps simply re-mask.
/// Without spans this degrades to token-wise Bernoulli(ε), attributed to
/// the fallback phase.
pub fn ast_span_mask_free(
    eligible: &Eligibility,
    spans: &[TokenSpan],
    epsilon: Rate,
    rng: &mut impl Rng,
) -> MaskVector {
    if spans.is_empty() {
        return bernoulli_mask(eligible, epsilon.get(), Phase::Fallback, rng);
    }
    let mut mask = MaskVector::zeros(eligible.len());
    for span in spans {
        let p = span_probability(epsilon.get(), span.len());
        if bernoulli(rng, p) {
            mask.set_span(span.start, span.end);
        }
    }
    mask
}

/// Fenwick tree of counts over positions.
struct Fenwick {
    tree: Vec<u32>,
}

impl Fenwick {
    fn new(len: usize) -> Self {
        Fenwick {
            tree: vec![0; len + 1],
        }
    }

    fn add(&mut self, pos: usize) {
        let mut i = pos + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `< end`.
    fn prefix(&self, end: usize) -> u32 {
        let mut i = end.min(self.tree.len() - 1);
        let mut sum = 0;
        while i > 0 {
            sum += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        sum
    }

    /// Sum over positions in `[start, end)`.
    fn range_sum(&self, start: usize, end: usize) -> u32 {
        if start >= end {
            return 0;
        }
        self.prefix(end) - self.prefix(start)
    }
}
