//! Forward corruption: masks a token sequence region by region.

pub mod mask;
pub mod policy;
pub mod strategies;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;
use crate::schedule::{Schedule, ScheduleError};
use crate::tokenize::{RegionKind, TokenSequence, TokenSpan};

pub use mask::{apply_mask, apply_mask_ids, Eligibility, MaskVector, Phase};
pub use policy::{CorruptionPolicy, NodeTypeTable, RegionRule, RegionRules, Strategy};
pub use strategies::{
    ast_span_mask_budgeted, ast_span_mask_free, budget, node_type_probabilities, node_type_token_mask,
    random_token_mask, span_mask_probability,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorruptError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("inconsistent mask at position {0}")]
    InvalidMask(usize),
    #[error("span [{start}, {end}) is empty or outside a sequence of {len} tokens")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// A corruption rate in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct Rate(f64);

impl Rate {
    pub fn new(value: f64) -> Result<Rate, CorruptError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Rate(value))
        } else {
            Err(CorruptError::Domain(format!("rate {value} outside [0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<Rate> for f64 {
    fn from(r: Rate) -> f64 {
        r.0
    }
}

impl TryFrom<f64> for Rate {
    type Error = CorruptError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Rate::new(value)
    }
}

/// A sequence and the spans available for masking it.
#[derive(Debug, Clone, Copy)]
pub struct CorruptionInput<'a> {
    pub seq: &'a TokenSequence,
    /// Filtered spans for the span strategies.
    pub spans: &'a [TokenSpan],
    /// Unfiltered labelled spans for the node-type baseline, which needs
    /// the innermost construct of every token.
    pub label_spans: &'a [TokenSpan],
}

impl<'a> CorruptionInput<'a> {
    pub fn new(seq: &'a TokenSequence, spans: &'a [TokenSpan]) -> Self {
        CorruptionInput {
            seq,
            spans,
            label_spans: spans,
        }
    }

    pub fn with_label_spans(mut self, label_spans: &'a [TokenSpan]) -> Self {
        self.label_spans = label_spans;
        self
    }

    fn check(&self) -> Result<(), CorruptError> {
        let len = self.seq.len();
        for s in self.spans.iter().chain(self.label_spans) {
            if s.start >= s.end || s.end > len {
                return Err(CorruptError::InvalidSpan {
                    start: s.start,
                    end: s.end,
                    len,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptedExample {
    pub x0: TokenSequence,
    pub xt: Vec<u32>,
    pub mask: MaskVector,
    pub t: u32,
    pub epsilon: f64,
    /// Id of the policy that produced the example.
    pub policy: String,
    pub seed: u64,
}

/// RNG stream used for a region's draws.
pub fn region_stream(kind: RegionKind) -> u64 {
    match kind {
        RegionKind::Prompt => 1,
        RegionKind::Reasoning => 2,
        RegionKind::Code => 3,
        RegionKind::Delimiter => 4,
    }
}

/// Masks each region with its own rule and stream, then ors the masks.
pub fn corruption_mask(
    input: CorruptionInput<'_>,
    epsilon: Rate,
    policy: &CorruptionPolicy,
    seed: u64,
) -> Result<MaskVector, CorruptError> {
    input.check()?;
    policy.validate()?;
    let seq = input.seq;
    let mut mask = MaskVector::zeros(seq.len());
    for kind in [RegionKind::Prompt, RegionKind::Reasoning, RegionKind::Code] {
        let Some(strategy) = policy.regions.rule(kind).resolve(policy.strategy) else {
            continue;
        };
        let eligible = Eligibility::of_region(seq, kind);
        if eligible.count() == 0 {
            continue;
        }
        let in_region = |spans: &[TokenSpan]| -> Vec<TokenSpan> {
            spans
                .iter()
                .filter(|s| s.range().all(|i| eligible.allows(i)))
                .copied()
                .collect()
        };
        let mut rng = stream_rng(seed, region_stream(kind));
        let region_mask = match strategy {
            Strategy::RandomToken => random_token_mask(&eligible, epsilon, &mut rng),
            Strategy::NodeTypeToken => node_type_token_mask(
                &eligible,
                &in_region(input.label_spans),
                &policy.node_probs,
                &mut rng,
            ),
            Strategy::AstSpanBudgeted => {
                ast_span_mask_budgeted(&eligible, &in_region(input.spans), epsilon, &mut rng)
            }
            Strategy::AstSpanFree => {
                ast_span_mask_free(&eligible, &in_region(input.spans), epsilon, &mut rng)
            }
        };
        mask.merge(&region_mask);
    }
    Ok(mask)
}

/// Corrupts `input` at rate `epsilon`. The result depends only on the
/// arguments.
pub fn corrupt(
    input: CorruptionInput<'_>,
    t: u32,
    epsilon: Rate,
    policy: &CorruptionPolicy,
    seed: u64,
) -> Result<CorruptedExample, CorruptError> {
    let mask = corruption_mask(input, epsilon, policy, seed)?;
    let xt = apply_mask(input.seq, &mask)?;
    Ok(CorruptedExample {
        x0: input.seq.clone(),
        xt,
        mask,
        t,
        epsilon: epsilon.get(),
        policy: policy.id(),
        seed,
    })
}

/// Corrupts at the rate the schedule assigns to timestep `t` (and training
/// step `step` for curricula).
pub fn corrupt_scheduled(
    input: CorruptionInput<'_>,
    t: u32,
    step: Option<u64>,
    policy: &CorruptionPolicy,
    schedule: &Schedule,
    seed: u64,
) -> Result<CorruptedExample, CorruptError> {
    let epsilon = Rate::new(schedule.epsilon(t, step)?)?;
    corrupt(input, t, epsilon, policy, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::{encode, Document, Region, Vocabulary, MASK_ID};

    fn record() -> (TokenSequence, Vec<TokenSpan>) {
        let prompt = "add two numbers";
        let reasoning = "use plus";
        let code = "x = a + b\nprint(x)\n";
        let text = format!("{prompt}\n<think>\n{reasoning}\n</think>\n{code}");
        let r0 = prompt.len();
        let r1 = r0 + "\n<think>\n".len();
        let r2 = r1 + reasoning.len();
        let c0 = r2 + "\n</think>\n".len();
        let regions = vec![
            Region::new(RegionKind::Prompt, 0, r0),
            Region::new(RegionKind::Reasoning, r1, r2),
            Region::new(RegionKind::Code, c0, text.len()),
        ];
        let doc = Document {
            text: text.clone(),
            regions: regions.clone(),
        };
        let vocab = Vocabulary::build([&doc], 1000).unwrap();
        let seq = encode(&text, &regions, &vocab).unwrap();
        let code_range = seq.region_range(RegionKind::Code);
        let spans = vec![TokenSpan::new(
            code_range.start,
            code_range.start + 5,
            crate::parser::Label::Assign,
        )];
        (seq, spans)
    }

    #[test]
    fn full_rate_masks_reasoning_and_code_only() {
        let (seq, spans) = record();
        let policy = CorruptionPolicy::new(Strategy::AstSpanBudgeted, 0);
        let ex = corrupt(
            CorruptionInput::new(&seq, &spans),
            5,
            Rate::new(1.0).unwrap(),
            &policy,
            42,
        )
        .unwrap();
        for i in 0..seq.len() {
            let expect = matches!(seq.regions[i], RegionKind::Reasoning | RegionKind::Code);
            assert_eq!(ex.mask.is_masked(i), expect, "position {i}");
            assert_eq!(ex.xt[i] == MASK_ID, expect);
        }
    }

    #[test]
    fn all_prompt_sequence_is_untouched() {
        let text = "just a prompt here";
        let doc = Document::single(text, RegionKind::Prompt);
        let vocab = Vocabulary::build([&doc], 100).unwrap();
        let seq = encode(text, &doc.regions, &vocab).unwrap();
        for strategy in Strategy::ALL {
            let policy = CorruptionPolicy::new(strategy, 0);
            let ex = corrupt(
                CorruptionInput::new(&seq, &[]),
                1,
                Rate::new(1.0).unwrap(),
                &policy,
                1,
            )
            .unwrap();
            assert_eq!(ex.xt, seq.tokens);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (seq, spans) = record();
        let policy = CorruptionPolicy::new(Strategy::AstSpanFree, 0);
        let eps = Rate::new(0.4).unwrap();
        let a = corrupt(CorruptionInput::new(&seq, &spans), 3, eps, &policy, 42).unwrap();
        let b = corrupt(CorruptionInput::new(&seq, &spans), 3, eps, &policy, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_spans_and_rates() {
        let (seq, _) = record();
        let bad = [TokenSpan::new(0, seq.len() + 1, crate::parser::Label::Call)];
        let policy = CorruptionPolicy::new(Strategy::AstSpanFree, 0);
        assert!(matches!(
            corrupt(
                CorruptionInput::new(&seq, &bad),
                1,
                Rate::new(0.5).unwrap(),
                &policy,
                0
            ),
            Err(CorruptError::InvalidSpan { .. })
        ));
        assert!(Rate::new(1.01).is_err());
        let sched = Schedule::linear(10);
        assert!(matches!(
            corrupt_scheduled(CorruptionInput::new(&seq, &[]), 11, None, &policy, &sched, 0),
            Err(CorruptError::Schedule(_))
        ));
    }
}
