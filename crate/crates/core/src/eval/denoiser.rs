use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corrupt::{corrupt_scheduled, CorruptionPolicy, MaskVector};
use crate::pipeline::{sample_timestep, Assembled};
use crate::rng::{record_seed, stable_hash};
use crate::schedule::{Schedule, ScheduleKind};
use crate::tokenize::{MASK_ID, UNK_ID};

/// Context id used beyond either end of the sequence.
const PAD: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
struct TokenCounts {
    total: u64,
    counts: HashMap<u32, u64>,
}

impl TokenCounts {
    fn add(&mut self, token: u32, n: u64) {
        self.total += n;
        *self.counts.entry(token).or_default() += n;
    }

    /// Most frequent token other than the mask; ties go to the lower id.
    fn argmax(&self) -> Option<(u32, u64)> {
        self.counts
            .iter()
            .filter(|(&tok, _)| tok != MASK_ID)
            .map(|(&tok, &c)| (tok, c))
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
    }
}

type Table = HashMap<Vec<u32>, TokenCounts>;

/// Context-count model: for every radius `r ≤ window`, counts of the true
/// token given the `r` tokens on each side in the corrupted input.
/// Prediction backs off from the widest context that has been seen.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    pub window: usize,
    pub smoothing: f64,
    /// Vocabulary size used by the smoothing denominator.
    pub vocab_size: usize,
    tables: Vec<Table>,
    trained_on: BTreeSet<u64>,
}

/// A predicted token with its smoothed probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub token: u32,
    pub prob: f64,
    /// Radius of the context that produced the prediction.
    pub radius: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub window: usize,
    pub smoothing: f64,
    /// Corruption draws per training sequence.
    pub passes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            window: 2,
            smoothing: 0.01,
            passes: 4,
            seed: 0,
        }
    }
}

fn context(seq: &[u32], pos: usize, radius: usize) -> Vec<u32> {
    let mut key = Vec::with_capacity(2 * radius);
    for d in (1..=radius).rev() {
        key.push(pos.checked_sub(d).map_or(PAD, |i| seq[i]));
    }
    for d in 1..=radius {
        key.push(seq.get(pos + d).copied().unwrap_or(PAD));
    }
    key
}

pub fn sequence_fingerprint(tokens: &[u32]) -> u64 {
    let bytes: Vec<u8> = tokens.iter().flat_map(|t| t.to_le_bytes()).collect();
    stable_hash(&bytes)
}

impl DenoiserModel {
    pub fn empty(window: usize, smoothing: f64, vocab_size: usize) -> Self {
        DenoiserModel {
            window,
            smoothing,
            vocab_size,
            tables: vec![Table::new(); window + 1],
            trained_on: BTreeSet::new(),
        }
    }

    /// Records that `target` sits at `pos` of the corrupted sequence `xt`.
    pub fn observe(&mut self, xt: &[u32], pos: usize, target: u32) {
        for r in 0..=self.window {
            self.tables[r]
                .entry(context(xt, pos, r))
                .or_default()
                .add(target, 1);
        }
    }

    /// Adds another model's counts. Addition is commutative, so merge order
    /// never changes the result.
    pub fn merge(&mut self, other: DenoiserModel) {
        debug_assert_eq!(self.window, other.window);
        for (mine, theirs) in self.tables.iter_mut().zip(other.tables) {
            for (key, counts) in theirs {
                let entry = mine.entry(key).or_default();
                for (tok, n) in counts.counts {
                    entry.add(tok, n);
                }
            }
        }
        self.trained_on.extend(other.trained_on);
    }

    /// Number of distinct contexts per radius.
    pub fn context_counts(&self) -> Vec<usize> {
        self.tables.iter().map(|t| t.len()).collect()
    }

    pub fn has_trained_on(&self, tokens: &[u32]) -> bool {
        self.trained_on.contains(&sequence_fingerprint(tokens))
    }

    /// Smoothed probability of `token` at `pos` under the widest seen context.
    pub fn probability(&self, seq: &[u32], pos: usize, token: u32) -> f64 {
        let v = self.vocab_size.max(1) as f64;
        for r in (0..=self.window).rev() {
            if let Some(c) = self.tables[r].get(&context(seq, pos, r)) {
                if c.total > 0 {
                    let n = c.counts.get(&token).copied().unwrap_or(0) as f64;
                    return (n + self.smoothing) / (c.total as f64 + self.smoothing * v);
                }
            }
        }
        1.0 / v
    }

    pub fn predict(&self, seq: &[u32], pos: usize) -> Prediction {
        let v = self.vocab_size.max(1) as f64;
        for r in (0..=self.window).rev() {
            let Some(counts) = self.tables[r].get(&context(seq, pos, r)) else {
                continue;
            };
            if let Some((token, n)) = counts.argmax() {
                let prob = (n as f64 + self.smoothing) / (counts.total as f64 + self.smoothing * v);
                return Prediction {
                    token,
                    prob,
                    radius: r,
                };
            }
        }
        Prediction {
            token: UNK_ID,
            prob: 0.0,
            radius: 0,
        }
    }

    pub fn to_file(&self) -> ModelFile {
        let mut entries: Vec<ContextEntry> = self
            .tables
            .iter()
            .enumerate()
            .flat_map(|(r, table)| {
                table.iter().map(move |(key, counts)| {
                    let mut c: Vec<(u32, u64)> = counts.counts.iter().map(|(&t, &n)| (t, n)).collect();
                    c.sort_unstable();
                    ContextEntry {
                        radius: r,
                        context: key.clone(),
                        counts: c,
                    }
                })
            })
            .collect();
        entries.sort_by(|a, b| (a.radius, &a.context).cmp(&(b.radius, &b.context)));
        ModelFile {
            window: self.window,
            smoothing: self.smoothing,
            vocab_size: self.vocab_size,
            trained_on: self.trained_on.iter().copied().collect(),
            entries,
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self, EvalError> {
        let mut model = DenoiserModel::empty(file.window, file.smoothing, file.vocab_size);
        for e in file.entries {
            if e.radius > file.window || e.context.len() != 2 * e.radius {
                return Err(EvalError::Invalid(format!(
                    "context of radius {} has {} ids",
                    e.radius,
                    e.context.len()
                )));
            }
            let slot = model.tables[e.radius].entry(e.context).or_default();
            for (tok, n) in e.counts {
                slot.add(tok, n);
            }
        }
        model.trained_on = file.trained_on.into_iter().collect();
        Ok(model)
    }
}

/// Serialized form of a [`DenoiserModel`], sorted so equal models give
/// identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub window: usize,
    pub smoothing: f64,
    pub vocab_size: usize,
    pub trained_on: Vec<u64>,
    pub entries: Vec<ContextEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub radius: usize,
    pub context: Vec<u32>,
    pub counts: Vec<(u32, u64)>,
}

/// Seed of the `pass`-th corruption of training example `index`.
pub fn training_seed(seed: u64, index: usize, pass: usize) -> u64 {
    record_seed(seed, &format!("train:{index}:{pass}"))
}

/// Corrupts every example `passes` times and counts the true token at each
/// masked position against its corrupted context. Deterministic for a given
/// seed whatever the thread count.
pub fn train_denoiser(
    corpus: &[Assembled],
    policy: &CorruptionPolicy,
    schedule: &Schedule,
    vocab_size: usize,
    config: &TrainConfig,
) -> Result<DenoiserModel, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let empty = || DenoiserModel::empty(config.window, config.smoothing, vocab_size);
    let curriculum = schedule.kind == ScheduleKind::CosineCurriculum;
    let total = (corpus.len() * config.passes) as u64;
    corpus
        .par_iter()
        .enumerate()
        .try_fold(empty, |mut model, (i, example)| {
            model.trained_on.insert(sequence_fingerprint(&example.seq.tokens));
            for pass in 0..config.passes {
                let seed = training_seed(config.seed, i, pass);
                let t = sample_timestep(seed, schedule.timesteps);
                // passes sweep the corpus in order, so step = pass · |corpus| + i
                let step = curriculum.then(|| {
                    let s = (pass * corpus.len() + i) as u64;
                    s * schedule.total_steps / total.max(1)
                });
                let ex = corrupt_scheduled(example.input(), t, step, policy, schedule, seed)
                    .map_err(|e| EvalError::Invalid(e.to_string()))?;
                for pos in 0..ex.xt.len() {
                    if ex.mask.is_masked(pos) {
                        model.observe(&ex.xt, pos, example.seq.tokens[pos]);
                    }
                }
            }
            Ok::<_, EvalError>(model)
        })
        .try_reduce(empty, |mut a, b| {
            a.merge(b);
            Ok(a)
        })
}

/// Fills masked positions over `steps` rounds. Each round predicts every
/// remaining masked position from the current sequence and commits the
/// ⌈remaining / rounds left⌉ most confident ones (ties to the lower index).
/// Unmasked positions are never changed. `steps = 0` is treated as 1.
pub fn iterative_denoise(model: &DenoiserModel, xt: &[u32], mask: &MaskVector, steps: usize) -> Vec<u32> {
    let mut seq = xt.to_vec();
    let mut remaining: Vec<usize> = (0..seq.len().min(mask.len()))
        .filter(|&i| mask.is_masked(i))
        .collect();
    let steps = steps.max(1);
    for round in 0..steps {
        if remaining.is_empty() {
            break;
        }
        let rounds_left = steps - round;
        let take = remaining.len().div_ceil(rounds_left);
        let mut scored: Vec<(usize, Prediction)> =
            remaining.iter().map(|&i| (i, model.predict(&seq, i))).collect();
        scored.sort_by(|a, b| b.1.prob.total_cmp(&a.1.prob).then(a.0.cmp(&b.0)));
        for (i, p) in &scored[..take] {
            seq[*i] = p.token;
        }
        let filled: BTreeSet<usize> = scored[..take].iter().map(|(i, _)| *i).collect();
        remaining.retain(|i| !filled.contains(i));
    }
    seq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrupt::{Phase, Strategy};
    use crate::pipeline::assemble_document;
    use crate::tokenize::{Document, RegionKind, SpanFilter, Vocabulary};

    fn code_example(src: &str) -> (Assembled, Vocabulary) {
        let doc = Document::single(src, RegionKind::Code);
        let vocab = Vocabulary::build([&doc], 100).unwrap();
        (
            assemble_document(&doc, &vocab, &SpanFilter::default()).unwrap(),
            vocab,
        )
    }

    fn code_policy(strategy: Strategy) -> CorruptionPolicy {
        let mut p = CorruptionPolicy::new(strategy, 0);
        p.regions = crate::corrupt::RegionRules::uniform();
        p
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let err = train_denoiser(
            &[],
            &code_policy(Strategy::RandomToken),
            &Schedule::constant(0.3),
            10,
            &TrainConfig::default(),
        );
        assert!(matches!(err, Err(EvalError::EmptyCorpus)));
    }

    #[test]
    fn window_zero_is_unigram() {
        let mut m = DenoiserModel::empty(0, 0.0, 10);
        m.observe(&[5, 6, 7], 0, 5);
        m.observe(&[5, 6, 7], 1, 6);
        m.observe(&[9, 9, 9], 2, 6);
        for pos in 0..3 {
            let p = m.predict(&[1, 2, 3], pos);
            assert_eq!(p.token, 6);
            assert!((p.prob - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut m = DenoiserModel::empty(1, 0.5, 8);
        m.observe(&[4, 5, 6], 1, 5);
        m.observe(&[4, 0, 6], 1, 7);
        let total: f64 = (0..8).map(|tok| m.probability(&[4, 0, 6], 1, tok)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_sequence_is_learned_and_reconstructed() {
        let (ex, vocab) = code_example("x = 1\n");
        let corpus = vec![ex.clone(); 50];
        let model = train_denoiser(
            &corpus,
            &code_policy(Strategy::RandomToken),
            &Schedule::constant(0.9),
            vocab.len(),
            &TrainConfig {
                passes: 4,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        // fully masked: x = 1 \n
        let n = ex.seq.len();
        let mut mask = MaskVector::zeros(n);
        (0..n).for_each(|i| mask.set(i, Phase::Token));
        let xt = vec![MASK_ID; n];
        for steps in [1, 2, n] {
            assert_eq!(iterative_denoise(&model, &xt, &mask, steps), ex.seq.tokens);
        }
        let p = model.predict(&xt, 0);
        assert_eq!(p.token, ex.seq.tokens[0]);
        assert!(p.prob > 0.9);
        assert!(model.has_trained_on(&ex.seq.tokens));
    }

    #[test]
    fn denoise_identity_and_single_fill() {
        let mut m = DenoiserModel::empty(1, 0.0, 10);
        m.observe(&[3, MASK_ID, 4], 1, 8);
        let xt = [3, 5, 4];
        assert_eq!(iterative_denoise(&m, &xt, &MaskVector::zeros(3), 3), xt);
        let mut mask = MaskVector::zeros(3);
        mask.set(1, Phase::Token);
        assert_eq!(iterative_denoise(&m, &[3, MASK_ID, 4], &mask, 1), vec![3, 8, 4]);
    }

    #[test]
    fn training_is_thread_count_independent_and_serializes() {
        let (ex, vocab) = code_example("def f(n):\n    return n + 1\n");
        let corpus = vec![ex; 20];
        let policy = code_policy(Strategy::AstSpanBudgeted);
        let train = || {
            train_denoiser(
                &corpus,
                &policy,
                &Schedule::constant(0.4),
                vocab.len(),
                &TrainConfig::default(),
            )
            .unwrap()
        };
        let a = train();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(train);
        assert_eq!(a, b);
        let back = DenoiserModel::from_file(a.to_file()).unwrap();
        assert_eq!(back, a);
        assert_eq!(
            serde_json::to_string(&a.to_file()).unwrap(),
            serde_json::to_string(&b.to_file()).unwrap()
        );
    }
}
