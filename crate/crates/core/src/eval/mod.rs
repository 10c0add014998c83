//! Verification at desk scale: an exact oracle for span masking, Monte Carlo
//! checks, a count-based denoiser and reconstruction metrics.

mod denoiser;
mod metrics;
mod oracle;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corrupt::{corrupt_scheduled, CorruptionPolicy, MaskVector, Strategy};
use crate::parser::{parse, ProgramGenerator};
use crate::pipeline::{
    assemble_document, holdout_indices, record_document, sample_timestep, Assembled, RawRecord,
};
use crate::rng::record_seed;
use crate::schedule::Schedule;
use crate::tokenize::{Document, RegionKind, SpanFilter, TokenSequence, Vocabulary};

pub use denoiser::{
    iterative_denoise, sequence_fingerprint, train_denoiser, training_seed, ContextEntry, DenoiserModel,
    ModelFile, Prediction, TrainConfig,
};
pub use metrics::{pass_at_1, PassAt1};
pub use oracle::{
    brute_force_masked_count_distribution, monte_carlo_check, trial_count, trial_seed, CountDistribution,
    McParams, McReport, McStrategy, MAX_ORACLE_SPANS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{0} spans is too many to enumerate (limit {MAX_ORACLE_SPANS})")]
    TooManySpans(usize),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("no results to score")]
    EmptyResults,
    #[error("{0}")]
    Invalid(String),
}

/// Scores for one model under one corruption policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    pub records: u64,
    pub exact: u64,
    pub valid: u64,
    pub exact_reconstruction_rate: f64,
    pub syntactic_validity_rate: f64,
    /// Solved means exact reconstruction of the code region.
    pub pass_at_1: PassAt1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub exact_reconstruction_rate: f64,
    pub syntactic_validity_rate: f64,
    pub pass_at_1: f64,
    /// Rows of the comparison table, keyed by strategy name.
    pub per_strategy: BTreeMap<String, StrategyMetrics>,
    /// Held-out records that also appear in the model's training data.
    pub heldout_overlap: u64,
}

impl EvalReport {
    fn single(name: &str, m: StrategyMetrics, heldout_overlap: u64) -> Self {
        EvalReport {
            exact_reconstruction_rate: m.exact_reconstruction_rate,
            syntactic_validity_rate: m.syntactic_validity_rate,
            pass_at_1: m.pass_at_1.value(),
            per_strategy: [(name.to_string(), m)].into_iter().collect(),
            heldout_overlap,
        }
    }

    /// Fixed-width table, one row per strategy.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>12} {:>12} {:>8}",
            "strategy", "records", "exact", "valid", "pass@1"
        );
        for (name, m) in &self.per_strategy {
            let _ = writeln!(
                out,
                "{:<12} {:>8} {:>11.2}% {:>11.2}% {:>8}",
                name,
                m.records,
                100.0 * m.exact_reconstruction_rate,
                100.0 * m.syntactic_validity_rate,
                m.pass_at_1.to_string()
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Denoising rounds per record.
    pub steps: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { steps: 8, seed: 0 }
    }
}

/// Renders the code region of `ids`. Masked positions use the vocabulary
/// surface of the predicted id, the rest keep their source text. Tokens are
/// joined by single spaces except around line breaks and indentation.
pub fn render_code(seq: &TokenSequence, ids: &[u32], mask: &MaskVector, vocab: &Vocabulary) -> String {
    let mut out = String::new();
    let mut prev_layout = true;
    for i in seq.region_range(RegionKind::Code) {
        let surface = if mask.is_masked(i) {
            vocab.surface_of(ids[i]).unwrap_or("[UNK]")
        } else {
            seq.surfaces[i].as_str()
        };
        let is_break = surface == "\n";
        let is_indent = !surface.is_empty() && surface.bytes().all(|b| b == b' ');
        if !prev_layout && !is_break && !is_indent {
            out.push(' ');
        }
        out.push_str(surface);
        prev_layout = is_break || is_indent;
    }
    out
}

/// Outcome for one held-out record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOutcome {
    pub exact: bool,
    pub valid: bool,
    pub masked: usize,
}

/// Seed of held-out record `index`.
pub fn eval_seed(seed: u64, index: usize) -> u64 {
    record_seed(seed, &format!("eval:{index}"))
}

/// Corrupts, denoises and scores each held-out record.
pub fn evaluate_records(
    model: &DenoiserModel,
    heldout: &[Assembled],
    vocab: &Vocabulary,
    policy: &CorruptionPolicy,
    schedule: &Schedule,
    config: &EvalConfig,
) -> Result<Vec<RecordOutcome>, EvalError> {
    heldout
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let seed = eval_seed(config.seed, i);
            let t = sample_timestep(seed, schedule.timesteps);
            let ex = corrupt_scheduled(rec.input(), t, None, policy, schedule, seed)
                .map_err(|e| EvalError::Invalid(e.to_string()))?;
            let out = iterative_denoise(model, &ex.xt, &ex.mask, config.steps);
            let code = rec.seq.region_range(RegionKind::Code);
            let exact = out[code.clone()] == rec.seq.tokens[code];
            let valid = parse(&render_code(&rec.seq, &out, &ex.mask, vocab)).is_ok();
            Ok(RecordOutcome {
                exact,
                valid,
                masked: ex.mask.masked_count(),
            })
        })
        .collect()
}

pub fn metrics_of(outcomes: &[RecordOutcome]) -> Result<StrategyMetrics, EvalError> {
    let solved: Vec<bool> = outcomes.iter().map(|o| o.exact).collect();
    let pass = pass_at_1(&solved)?;
    let n = outcomes.len() as u64;
    let valid = outcomes.iter().filter(|o| o.valid).count() as u64;
    Ok(StrategyMetrics {
        records: n,
        exact: pass.solved,
        valid,
        exact_reconstruction_rate: pass.value(),
        syntactic_validity_rate: valid as f64 / n as f64,
        pass_at_1: pass,
    })
}

/// Scores `model` on `heldout` under `policy`. Held-out records the model
/// was trained on are counted and logged but still scored.
pub fn evaluate(
    model: &DenoiserModel,
    heldout: &[Assembled],
    vocab: &Vocabulary,
    policy: &CorruptionPolicy,
    schedule: &Schedule,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let overlap = heldout
        .iter()
        .filter(|r| model.has_trained_on(&r.seq.tokens))
        .count() as u64;
    if overlap > 0 {
        log::warn!("{overlap} held-out records were seen in training");
    }
    let outcomes = evaluate_records(model, heldout, vocab, policy, schedule, config)?;
    Ok(EvalReport::single(
        policy.strategy.as_str(),
        metrics_of(&outcomes)?,
        overlap,
    ))
}

/// Generated programs as records with empty prompt and reasoning.
pub fn synthetic_records(n: usize, seed: u64) -> Vec<RawRecord> {
    let mut generator = ProgramGenerator::with_seed(seed);
    (0..n)
        .map(|i| RawRecord::new(format!("synthetic-{i}"), "", "", &generator.program()))
        .collect()
}

/// Train and held-out parts of a corpus, tokenized with a vocabulary built
/// from the training part.
pub struct Split {
    pub vocab: Vocabulary,
    pub train: Vec<Assembled>,
    pub heldout: Vec<Assembled>,
}

pub fn split_corpus(
    records: &[RawRecord],
    holdout: usize,
    seed: u64,
    vocab_size: usize,
) -> Result<Split, EvalError> {
    let held = holdout_indices(records, holdout, seed);
    let docs: Vec<(bool, Document)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (held.contains(&i), record_document(r)))
        .collect();
    let vocab = Vocabulary::build(docs.iter().filter(|(h, _)| !h).map(|(_, d)| d), vocab_size)
        .map_err(|_| EvalError::EmptyCorpus)?;
    let mut train = Vec::new();
    let mut heldout = Vec::new();
    for (h, doc) in &docs {
        let a = assemble_document(doc, &vocab, &SpanFilter::default())
            .map_err(|e| EvalError::Invalid(e.to_string()))?;
        if *h {
            heldout.push(a);
        } else {
            train.push(a);
        }
    }
    Ok(Split {
        vocab,
        train,
        heldout,
    })
}

/// Trains one model per training strategy and scores each under the same
/// evaluation policy. Rows are keyed by training strategy.
pub fn compare_training_strategies(
    split: &Split,
    strategies: &[Strategy],
    train_schedule: &Schedule,
    eval_policy: &CorruptionPolicy,
    eval_schedule: &Schedule,
    train: &TrainConfig,
    eval: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let mut per_strategy = BTreeMap::new();
    let mut first: Option<StrategyMetrics> = None;
    let mut overlap = 0;
    for &strategy in strategies {
        let policy = CorruptionPolicy {
            strategy,
            ..eval_policy.clone()
        };
        let model = train_denoiser(&split.train, &policy, train_schedule, split.vocab.len(), train)?;
        let report = evaluate(
            &model,
            &split.heldout,
            &split.vocab,
            eval_policy,
            eval_schedule,
            eval,
        )?;
        overlap = overlap.max(report.heldout_overlap);
        let row = report.per_strategy.into_values().next().expect("one row");
        first.get_or_insert_with(|| row.clone());
        per_strategy.insert(strategy.as_str().to_string(), row);
    }
    let first = first.ok_or(EvalError::EmptyResults)?;
    Ok(EvalReport {
        exact_reconstruction_rate: first.exact_reconstruction_rate,
        syntactic_validity_rate: first.syntactic_validity_rate,
        pass_at_1: first.pass_at_1.value(),
        per_strategy,
        heldout_overlap: overlap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrupt::{Phase, RegionRules};

    #[test]
    fn render_keeps_layout() {
        let src = "def f(x):\n    return x + 1\n";
        let doc = Document::single(src, RegionKind::Code);
        let vocab = Vocabulary::build([&doc], 100).unwrap();
        let a = assemble_document(&doc, &vocab, &SpanFilter::default()).unwrap();
        let text = render_code(&a.seq, &a.seq.tokens, &MaskVector::zeros(a.seq.len()), &vocab);
        assert_eq!(text, "def f ( x ) :\n    return x + 1\n");
        assert!(parse(&text).is_ok());

        let mut mask = MaskVector::zeros(a.seq.len());
        mask.set(0, Phase::Token);
        let mut ids = a.seq.tokens.clone();
        ids[0] = vocab.id_of("return").unwrap();
        assert!(!parse(&render_code(&a.seq, &ids, &mask, &vocab)).is_ok());
    }

    #[test]
    fn zero_rate_scores_perfectly() {
        let records = synthetic_records(60, 3);
        let split = split_corpus(&records, 10, 3, 10_000).unwrap();
        let mut policy = CorruptionPolicy::new(Strategy::AstSpanBudgeted, 0);
        policy.regions = RegionRules::default();
        let model = train_denoiser(
            &split.train,
            &policy,
            &Schedule::constant(0.3),
            split.vocab.len(),
            &TrainConfig::default(),
        )
        .unwrap();
        let report = evaluate(
            &model,
            &split.heldout,
            &split.vocab,
            &policy,
            &Schedule::constant(0.0),
            &EvalConfig::default(),
        )
        .unwrap();
        assert_eq!(report.exact_reconstruction_rate, 1.0);
        assert_eq!(report.syntactic_validity_rate, 1.0);
        assert_eq!(report.heldout_overlap, 0);
        assert!(report.table().contains("100.00%"));
    }

    #[test]
    fn training_data_as_heldout_is_flagged() {
        let records = synthetic_records(20, 1);
        let split = split_corpus(&records, 0, 1, 10_000).unwrap();
        let policy = CorruptionPolicy::new(Strategy::RandomToken, 0);
        let sched = Schedule::constant(0.2);
        let model = train_denoiser(
            &split.train,
            &policy,
            &sched,
            split.vocab.len(),
            &TrainConfig::default(),
        )
        .unwrap();
        let report = evaluate(
            &model,
            &split.train,
            &split.vocab,
            &policy,
            &sched,
            &EvalConfig::default(),
        )
        .unwrap();
        assert!(report.heldout_overlap > 0);
    }
}
