//! JSONL ingestion, region assembly and batch corruption.
//!
//! Input lines are objects with `prompt`, `reasoning` and `solution` (plus an
//! optional `id`). Each record is laid out as
//!
//! ```text
//! <prompt>\n<think>\n<reasoning>\n</think>\n<solution>
//! ```
//!
//! and written back as one line of
//! `{id, x0, xt, mask, phase, t, epsilon, seed}`.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corrupt::{
    apply_mask_ids, corrupt_scheduled, CorruptError, CorruptionInput, CorruptionPolicy, MaskVector, Phase,
};
use crate::parser::{collect_char_spans, parse, CharSpan, LabelFilter};
use crate::rng::{index_below, record_seed, stable_hash, stream_rng, TIMESTEP_STREAM};
use crate::schedule::{Schedule, ScheduleKind};
use crate::tokenize::{
    filter_token_spans, map_char_spans, Document, Region, RegionKind, SpanFilter, TokenSequence, TokenSpan,
    TokenizeError, VocabError, Vocabulary,
};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Corrupt(#[from] CorruptError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("{0}")]
    Runtime(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub prompt: String,
    /// Reasoning text with any enclosing think tags removed.
    pub reasoning: String,
    pub solution: String,
    /// Whether the input reasoning was wrapped in think tags.
    #[serde(default)]
    pub think_tagged: bool,
}

impl RawRecord {
    pub fn new(id: impl Into<String>, prompt: &str, reasoning: &str, solution: &str) -> Self {
        RawRecord {
            id: id.into(),
            prompt: prompt.to_string(),
            reasoning: reasoning.to_string(),
            solution: solution.to_string(),
            think_tagged: false,
        }
    }

    /// Parses one input line. `line` is 1-based and names records without an id.
    pub fn from_json_line(text: &str, line: usize) -> Result<RawRecord, PipelineError> {
        let malformed = |message: String| PipelineError::MalformedRecord { line, message };
        let value: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| malformed("expected a JSON object".into()))?;
        let field = |names: &[&str]| -> Result<Option<String>, PipelineError> {
            for name in names {
                match obj.get(*name) {
                    None | Some(Value::Null) => continue,
                    Some(Value::String(s)) => return Ok(Some(s.clone())),
                    Some(_) => return Err(malformed(format!("field {name:?} is not a string"))),
                }
            }
            Ok(None)
        };
        let solution = field(&["solution"])?.ok_or_else(|| malformed("missing solution".into()))?;
        if solution.is_empty() {
            return Err(malformed("empty solution".into()));
        }
        let prompt = field(&["prompt", "input"])?.unwrap_or_default();
        let reasoning = field(&["reasoning"])?.unwrap_or_default();
        let id = match obj.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            None | Some(Value::Null) => format!("line-{line}"),
            Some(_) => return Err(malformed("id must be a string or number".into())),
        };
        let (reasoning, think_tagged) = match strip_think_tags(&reasoning) {
            Some(inner) => (inner.to_string(), true),
            None => (reasoning, false),
        };
        Ok(RawRecord {
            id,
            prompt,
            reasoning,
            solution,
            think_tagged,
        })
    }

    pub fn to_json_line(&self) -> String {
        let reasoning = if self.think_tagged {
            format!("{THINK_OPEN}{}{THINK_CLOSE}", self.reasoning)
        } else {
            self.reasoning.clone()
        };
        serde_json::json!({
            "id": self.id,
            "prompt": self.prompt,
            "reasoning": reasoning,
            "solution": self.solution,
        })
        .to_string()
    }
}

/// Content between a leading `<think>` and a trailing `</think>`, ignoring
/// whitespace outside the tags.
pub fn strip_think_tags(text: &str) -> Option<&str> {
    text.trim().strip_prefix(THINK_OPEN)?.strip_suffix(THINK_CLOSE)
}

/// Lines of a record file. Malformed lines come out as errors so callers can
/// count them and carry on.
pub struct RecordReader<R> {
    lines: io::Lines<R>,
    line: usize,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(input: R) -> Self {
        RecordReader {
            lines: input.lines(),
            line: 0,
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<RawRecord, PipelineError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(text) => text,
                Err(e) => {
                    self.line += 1;
                    return Some(Err(PipelineError::MalformedRecord {
                        line: self.line,
                        message: e.to_string(),
                    }));
                }
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(RawRecord::from_json_line(&text, self.line));
        }
    }
}

pub fn read_records(path: impl AsRef<Path>) -> Result<RecordReader<BufReader<File>>, PipelineError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => PipelineError::FileNotFound(path.to_path_buf()),
        _ => io_err(path)(e),
    })?;
    Ok(RecordReader::new(BufReader::new(file)))
}

/// Lays the record out as one text with prompt, reasoning and code regions.
pub fn record_document(record: &RawRecord) -> Document {
    let mut text =
        String::with_capacity(record.prompt.len() + record.reasoning.len() + record.solution.len() + 20);
    text.push_str(&record.prompt);
    let p_end = text.len();
    text.push('\n');
    text.push_str(THINK_OPEN);
    text.push('\n');
    let r_start = text.len();
    text.push_str(&record.reasoning);
    let r_end = text.len();
    text.push('\n');
    text.push_str(THINK_CLOSE);
    text.push('\n');
    let c_start = text.len();
    text.push_str(&record.solution);
    Document {
        regions: vec![
            Region::new(RegionKind::Prompt, 0, p_end),
            Region::new(RegionKind::Reasoning, r_start, r_end),
            Region::new(RegionKind::Code, c_start, text.len()),
        ],
        text,
    }
}

/// A tokenized record with its span candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembled {
    pub seq: TokenSequence,
    /// Filtered spans for span masking.
    pub spans: Vec<TokenSpan>,
    /// Every mapped span, unfiltered, for the node-type baseline.
    pub label_spans: Vec<TokenSpan>,
    pub parse_ok: bool,
}

impl Assembled {
    pub fn input(&self) -> CorruptionInput<'_> {
        CorruptionInput::new(&self.seq, &self.spans).with_label_spans(&self.label_spans)
    }
}

/// Tokenizes a document and, when its code region parses, maps the AST
/// spans onto tokens. Unparseable code yields no spans.
pub fn assemble_document(
    doc: &Document,
    vocab: &Vocabulary,
    filter: &SpanFilter,
) -> Result<Assembled, PipelineError> {
    let seq = crate::tokenize::encode(&doc.text, &doc.regions, vocab)?;
    let code = doc.regions.iter().find(|r| r.kind == RegionKind::Code);
    let (label_spans, parse_ok) = match code {
        Some(region) => {
            let source = &doc.text[region.char_start..region.char_end];
            let parsed = parse(source);
            if parsed.is_ok() {
                let shifted: Vec<CharSpan> = collect_char_spans(&parsed.root, &LabelFilter::default())
                    .into_iter()
                    .map(|s| CharSpan {
                        start: s.start + region.char_start,
                        end: s.end + region.char_start,
                        label: s.label,
                    })
                    .collect();
                (map_char_spans(&shifted, &seq)?, true)
            } else {
                (Vec::new(), false)
            }
        }
        None => (Vec::new(), false),
    };
    let spans = filter_token_spans(&label_spans, filter);
    Ok(Assembled {
        seq,
        spans,
        label_spans,
        parse_ok,
    })
}

pub fn assemble(record: &RawRecord, vocab: &Vocabulary) -> Result<Assembled, PipelineError> {
    assemble_document(&record_document(record), vocab, &SpanFilter::default())
}

/// One line of pipeline output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputLine {
    pub id: String,
    pub x0: Vec<u32>,
    pub xt: Vec<u32>,
    pub mask: Vec<u8>,
    pub phase: Vec<u8>,
    pub t: u32,
    pub epsilon: f64,
    pub seed: u64,
}

impl OutputLine {
    pub fn mask_vector(&self) -> Result<MaskVector, CorruptError> {
        MaskVector::from_parts(&self.mask, &self.phase)
    }

    /// Rebuilds `xt` from `x0`, the mask and the phases and compares.
    pub fn verify(&self) -> Result<(), CorruptError> {
        let mask = self.mask_vector()?;
        let rebuilt = apply_mask_ids(&self.x0, &mask)?;
        match rebuilt.iter().zip(&self.xt).position(|(a, b)| a != b) {
            None if rebuilt.len() == self.xt.len() => Ok(()),
            None => Err(CorruptError::LengthMismatch {
                expected: rebuilt.len(),
                actual: self.xt.len(),
            }),
            Some(i) => Err(CorruptError::InvalidMask(i)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    /// Records corrupted in this run.
    pub records_in: u64,
    pub parse_successes: u64,
    pub parse_failures: u64,
    /// Input lines skipped as malformed.
    pub malformed: u64,
    /// Records already present in the output and skipped on resume.
    pub resumed: u64,
    /// Records routed to the holdout file.
    pub holdout: u64,
    /// span count → number of records.
    pub spans_per_record: BTreeMap<usize, u64>,
    /// Ten equal bins of per-record masked fraction over [0, 1].
    pub masked_fraction_histogram: [u64; 10],
    pub masked_fraction_mean: f64,
    pub epsilon_mean: f64,
    pub eligible_tokens: u64,
    pub masked_tokens: u64,
    pub fallback_tokens: u64,
    /// Share of masked tokens attributed to the fallback phase.
    pub fallback_usage: f64,
}

impl Default for PipelineStats {
    fn default() -> Self {
        PipelineStats {
            records_in: 0,
            parse_successes: 0,
            parse_failures: 0,
            malformed: 0,
            resumed: 0,
            holdout: 0,
            spans_per_record: BTreeMap::new(),
            masked_fraction_histogram: [0; 10],
            masked_fraction_mean: 0.0,
            epsilon_mean: 0.0,
            eligible_tokens: 0,
            masked_tokens: 0,
            fallback_tokens: 0,
            fallback_usage: 0.0,
        }
    }
}

impl PipelineStats {
    fn record(&mut self, r: &Processed) {
        self.records_in += 1;
        if r.parse_ok {
            self.parse_successes += 1;
        } else {
            self.parse_failures += 1;
        }
        *self.spans_per_record.entry(r.spans).or_default() += 1;
        let fraction = if r.eligible == 0 {
            0.0
        } else {
            r.masked as f64 / r.eligible as f64
        };
        let bin = ((fraction * 10.0) as usize).min(9);
        self.masked_fraction_histogram[bin] += 1;
        // running sums; turned into means by `finish`
        self.masked_fraction_mean += fraction;
        self.epsilon_mean += r.line.epsilon;
        self.eligible_tokens += r.eligible as u64;
        self.masked_tokens += r.masked as u64;
        self.fallback_tokens += r.fallback as u64;
    }

    fn finish(&mut self) {
        if self.records_in > 0 {
            self.masked_fraction_mean /= self.records_in as f64;
            self.epsilon_mean /= self.records_in as f64;
        }
        if self.masked_tokens > 0 {
            self.fallback_usage = self.fallback_tokens as f64 / self.masked_tokens as f64;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineOptions {
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    /// Number of records held out, uncorrupted, for evaluation.
    pub holdout: usize,
    /// Skip records whose id already appears in the output.
    pub resume: bool,
    pub vocab_size: usize,
    pub span_filter: SpanFilter,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            jobs: 0,
            holdout: 0,
            resume: false,
            vocab_size: 32_768,
            span_filter: SpanFilter::default(),
        }
    }
}

pub fn stats_path(output: &Path) -> PathBuf {
    sibling(output, "stats.json")
}

pub fn vocab_path(output: &Path) -> PathBuf {
    sibling(output, "vocab")
}

pub fn holdout_path(output: &Path) -> PathBuf {
    sibling(output, "holdout.jsonl")
}

fn sibling(output: &Path, suffix: &str) -> PathBuf {
    let mut name = output.as_os_str().to_os_string();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

/// Indices of the `k` records whose seeded id hash is smallest.
pub fn holdout_indices(records: &[RawRecord], k: usize, seed: u64) -> HashSet<usize> {
    let mut keyed: Vec<(u64, usize)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (stable_hash(format!("holdout:{seed}:{}", r.id).as_bytes()), i))
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Samples the timestep for a record from its own stream.
pub fn sample_timestep(seed: u64, timesteps: u32) -> u32 {
    let mut rng = stream_rng(seed, TIMESTEP_STREAM);
    1 + index_below(&mut rng, timesteps as usize) as u32
}

struct Processed {
    line: OutputLine,
    parse_ok: bool,
    spans: usize,
    eligible: usize,
    masked: usize,
    fallback: usize,
}

fn process(
    record: &RawRecord,
    step: u64,
    vocab: &Vocabulary,
    policy: &CorruptionPolicy,
    schedule: &Schedule,
    filter: &SpanFilter,
) -> Result<Processed, PipelineError> {
    let assembled = assemble_document(&record_document(record), vocab, filter)?;
    let seed = record_seed(policy.seed, &record.id);
    let t = sample_timestep(seed, schedule.timesteps);
    let step = (schedule.kind == ScheduleKind::CosineCurriculum).then_some(step);
    let ex = corrupt_scheduled(assembled.input(), t, step, policy, schedule, seed)?;
    let eligible = assembled
        .seq
        .regions
        .iter()
        .filter(|&&k| policy.regions.rule(k).resolve(policy.strategy).is_some())
        .count();
    Ok(Processed {
        parse_ok: assembled.parse_ok,
        spans: assembled.spans.len(),
        eligible,
        masked: ex.mask.masked_count(),
        fallback: ex.mask.count_phase(Phase::Fallback),
        line: OutputLine {
            id: record.id.clone(),
            x0: ex.x0.tokens,
            xt: ex.xt,
            mask: ex.mask.bits_u8(),
            phase: ex.mask.phase_codes(),
            t: ex.t,
            epsilon: ex.epsilon,
            seed,
        },
    })
}

/// Ids of the complete lines already in `output`. A trailing partial line
/// (from an interrupted run) is cut off.
fn existing_ids(output: &Path) -> Result<HashSet<String>, PipelineError> {
    let mut ids = HashSet::new();
    let mut file = match OpenOptions::new().read(true).write(true).open(output) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(ids),
        Err(e) => return Err(io_err(output)(e)),
    };
    let mut content = Vec::new();
    file.read_to_end(&mut content).map_err(io_err(output))?;
    let complete = content.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    if complete < content.len() {
        log::warn!("{}: dropping incomplete final line", output.display());
        file.set_len(complete as u64).map_err(io_err(output))?;
        file.seek(SeekFrom::End(0)).map_err(io_err(output))?;
    }
    #[derive(Deserialize)]
    struct IdOnly {
        id: String,
    }
    for line in content[..complete].split(|&b| b == b'\n') {
        if line.is_empty() {
            continue;
        }
        match serde_json::from_slice::<IdOnly>(line) {
            Ok(r) => {
                ids.insert(r.id);
            }
            Err(e) => log::warn!("{}: unreadable output line: {e}", output.display()),
        }
    }
    Ok(ids)
}

const CHUNK: usize = 512;

/// Reads `input`, corrupts every record and writes `output` plus the stats,
/// vocabulary and (when requested) holdout files next to it. Output order
/// and content do not depend on `options.jobs`.
pub fn run_pipeline(
    input: &Path,
    output: &Path,
    policy: &CorruptionPolicy,
    schedule: &Schedule,
    options: &PipelineOptions,
) -> Result<PipelineStats, PipelineError> {
    policy.validate()?;
    schedule
        .validate()
        .map_err(|e| PipelineError::Corrupt(e.into()))?;
    let mut stats = PipelineStats::default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for item in read_records(input)? {
        match item {
            Ok(r) => {
                if !seen.insert(r.id.clone()) {
                    log::warn!("duplicate record id {:?}", r.id);
                }
                records.push(r);
            }
            Err(PipelineError::MalformedRecord { line, message }) => {
                log::warn!("{}:{line}: skipped: {message}", input.display());
                stats.malformed += 1;
            }
            Err(e) => return Err(e),
        }
    }

    let held = holdout_indices(&records, options.holdout, policy.seed);
    stats.holdout = held.len() as u64;
    type Indexed<'a> = Vec<(usize, &'a RawRecord)>;
    let (train, holdout): (Indexed, Indexed) =
        records.iter().enumerate().partition(|(i, _)| !held.contains(i));
    if options.holdout > 0 {
        let path = holdout_path(output);
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        for (_, r) in &holdout {
            writeln!(w, "{}", r.to_json_line()).map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }

    let docs: Vec<Document> = train.iter().map(|(_, r)| record_document(r)).collect();
    let vocab = if docs.is_empty() {
        Vocabulary::build([&Document::single("", RegionKind::Code)], options.vocab_size)?
    } else {
        Vocabulary::build(&docs, options.vocab_size)?
    };
    drop(docs);
    vocab.save(vocab_path(output))?;

    let done = if options.resume {
        existing_ids(output)?
    } else {
        HashSet::new()
    };
    let todo: Vec<(u64, &RawRecord)> = train
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| !done.contains(&r.id))
        .map(|(ordinal, (_, r))| (ordinal as u64, *r))
        .collect();
    stats.resumed = (train.len() - todo.len()) as u64;

    let file = if options.resume {
        OpenOptions::new().create(true).append(true).open(output)
    } else {
        File::create(output)
    }
    .map_err(io_err(output))?;
    let mut writer = BufWriter::new(file);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| PipelineError::Runtime(e.to_string()))?;
    for chunk in todo.chunks(CHUNK) {
        let results: Vec<Result<Processed, PipelineError>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&(step, r)| process(r, step, &vocab, policy, schedule, &options.span_filter))
                .collect()
        });
        for result in results {
            let processed = result?;
            stats.record(&processed);
            serde_json::to_writer(&mut writer, &processed.line).map_err(|e| io_err(output)(e.into()))?;
            writer.write_all(b"\n").map_err(io_err(output))?;
        }
    }
    writer.flush().map_err(io_err(output))?;
    stats.finish();

    let path = stats_path(output);
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(stats)
}

/// Reads a pipeline output file.
pub fn read_output(path: &Path) -> Result<Vec<OutputLine>, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.is_empty()))
        .map(|(i, line)| {
            let line = line.map_err(io_err(path))?;
            serde_json::from_str(&line).map_err(|e| PipelineError::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
