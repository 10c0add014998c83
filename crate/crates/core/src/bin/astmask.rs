//! Command-line front end. Exit status: 0 success, 1 invalid arguments or
//! configuration, 2 runtime failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use astmask::config::Config;
use astmask::corrupt::{corrupt, CorruptionPolicy, Phase, Rate, RegionRules, Strategy};
use astmask::eval::{
    self, compare_training_strategies, split_corpus, synthetic_records, DenoiserModel, EvalConfig, McParams,
    McStrategy, ModelFile, TrainConfig,
};
use astmask::parser::{collect_char_spans, parse, Label, LabelFilter};
use astmask::pipeline::{self, run_pipeline, sample_timestep, PipelineOptions, RawRecord};
use astmask::rng::record_seed;
use astmask::schedule::{Schedule, ScheduleKind};
use astmask::tokenize::{Document, RegionKind, SpanFilter, TokenSpan, Vocabulary};

#[derive(Parser)]
#[command(
    name = "astmask",
    version,
    about = "AST-guided span corruption for code diffusion training data"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with [policy] and [schedule] sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Constant corruption rate (replaces the configured schedule)
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// random | nodetype | budgeted | free
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    /// Number of diffusion timesteps T
    #[arg(long, global = true)]
    timesteps: Option<u32>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output path (stdout when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a source file and print its tree or spans
    Parse {
        file: PathBuf,
        /// Print the (start, end, label) byte-span table instead of the tree
        #[arg(long)]
        dump_spans: bool,
    },
    /// Tokenize a source file and print its token spans
    Spans {
        file: PathBuf,
        /// Keep length-1 and duplicate spans
        #[arg(long)]
        no_filter: bool,
    },
    /// Corrupt one source file and print the result as JSON
    Corrupt {
        file: PathBuf,
        /// Timestep (sampled from the seed when absent)
        #[arg(long)]
        t: Option<u32>,
    },
    /// Corrupt a JSONL record file
    Pipeline {
        input: PathBuf,
        /// Records held out uncorrupted in <out>.holdout.jsonl
        #[arg(long, default_value_t = 0)]
        holdout: usize,
        /// Skip records already present in the output
        #[arg(long)]
        resume: bool,
        #[arg(long, default_value_t = 32_768)]
        vocab_size: usize,
    },
    /// Monte Carlo check of a masking kernel against the exact oracle
    Verify {
        /// Comma-separated start:end pairs, or `fixture` for 0:4,4:8,8:12
        #[arg(long, default_value = "fixture")]
        spans: String,
        /// Sequence length (defaults to the end of the last span)
        #[arg(long)]
        len: Option<usize>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
    },
    /// Train the count denoiser on a JSONL record file
    Train {
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        holdout: usize,
        #[arg(long, default_value_t = 2)]
        window: usize,
        #[arg(long, default_value_t = 4)]
        passes: usize,
        #[arg(long, default_value_t = 0.01)]
        smoothing: f64,
    },
    /// Score a trained model, or compare training strategies
    Evaluate {
        /// JSONL records; generated programs are used when absent
        input: Option<PathBuf>,
        /// Model written by `train`; its vocabulary is read from <model>.vocab
        #[arg(long, conflicts_with = "compare")]
        model: Option<PathBuf>,
        /// Training strategies to compare, e.g. random,ast-span
        #[arg(long, value_delimiter = ',')]
        compare: Vec<Strategy>,
        #[arg(long, default_value_t = 100)]
        holdout: usize,
        /// Generated corpus size when no input is given
        #[arg(long, default_value_t = 1000)]
        synthetic: usize,
        #[arg(long, default_value_t = 8)]
        steps: usize,
        #[arg(long, default_value_t = 2)]
        window: usize,
        #[arg(long, default_value_t = 4)]
        passes: usize,
    },
    /// Print the corruption rate over timesteps or training steps
    ScheduleDump {
        /// Number of rows
        #[arg(long, default_value_t = 11)]
        points: u64,
    },
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

type Outcome = Result<(), Failure>;

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Config file first, then flags on top.
fn resolve(common: &Common) -> Result<Config, Failure> {
    let mut config = match &common.config {
        Some(path) => Config::load(path).map_err(invalid)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = Some(seed);
        config.policy.seed = seed;
    }
    if let Some(strategy) = common.strategy {
        config.policy.strategy = strategy;
    }
    if let Some(eps) = common.epsilon {
        config.schedule = Schedule {
            timesteps: config.schedule.timesteps,
            ..Schedule::constant(eps)
        };
    }
    if let Some(t) = common.timesteps {
        config.schedule.timesteps = t;
    }
    config.validate().map_err(invalid)?;
    if common.jobs > 0 {
        // ignore the error if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(common.jobs)
            .build_global();
    }
    Ok(config)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(runtime),
    }
}

fn read_source(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| {
        let msg = format!("{}: {e}", path.display());
        if e.kind() == io::ErrorKind::NotFound {
            invalid(msg)
        } else {
            runtime(msg)
        }
    })
}

fn run(cli: Cli) -> Outcome {
    let config = resolve(&cli.common)?;
    let out = &cli.common.out;
    match cli.command {
        Command::Parse { file, dump_spans } => cmd_parse(&file, dump_spans, out),
        Command::Spans { file, no_filter } => cmd_spans(&file, no_filter, out),
        Command::Corrupt { file, t } => cmd_corrupt(&file, t, &config, out),
        Command::Pipeline {
            input,
            holdout,
            resume,
            vocab_size,
        } => {
            let out = out.as_ref().ok_or_else(|| invalid("pipeline needs --out"))?;
            let options = PipelineOptions {
                jobs: cli.common.jobs,
                holdout,
                resume,
                vocab_size,
                ..PipelineOptions::default()
            };
            let stats = run_pipeline(&input, out, &config.policy, &config.schedule, &options).map_err(
                |e| match e {
                    pipeline::PipelineError::FileNotFound(_) => invalid(e),
                    other => runtime(other),
                },
            )?;
            eprintln!(
                "{} records, {} parse failures, {} malformed, masked fraction {:.4}, fallback usage {:.4}",
                stats.records_in,
                stats.parse_failures,
                stats.malformed,
                stats.masked_fraction_mean,
                stats.fallback_usage
            );
            Ok(())
        }
        Command::Verify { spans, len, trials } => cmd_verify(&spans, len, trials, &config, out),
        Command::Train {
            input,
            holdout,
            window,
            passes,
            smoothing,
        } => {
            let out = out.as_ref().ok_or_else(|| invalid("train needs --out"))?;
            let records = load_records(&input)?;
            let seed = config.policy.seed;
            let split = split_corpus(&records, holdout, seed, 32_768).map_err(runtime)?;
            let train = TrainConfig {
                window,
                smoothing,
                passes,
                seed,
            };
            let model = eval::train_denoiser(
                &split.train,
                &config.policy,
                &config.schedule,
                split.vocab.len(),
                &train,
            )
            .map_err(runtime)?;
            let json = serde_json::to_string(&model.to_file()).map_err(runtime)?;
            fs::write(out, json).map_err(runtime)?;
            split.vocab.save(pipeline::vocab_path(out)).map_err(runtime)?;
            eprintln!(
                "trained on {} sequences; contexts per radius {:?}",
                split.train.len(),
                model.context_counts()
            );
            Ok(())
        }
        Command::Evaluate {
            input,
            model,
            compare,
            holdout,
            synthetic,
            steps,
            window,
            passes,
        } => {
            let seed = config.policy.seed;
            let records = match &input {
                Some(path) => load_records(path)?,
                None => synthetic_records(synthetic, seed),
            };
            let eval_config = EvalConfig { steps, seed };
            let report = match model {
                Some(model_path) => {
                    let file: ModelFile =
                        serde_json::from_str(&read_source(&model_path)?).map_err(invalid)?;
                    let model = DenoiserModel::from_file(file).map_err(invalid)?;
                    let vocab = Vocabulary::load(pipeline::vocab_path(&model_path)).map_err(runtime)?;
                    let heldout: Vec<_> = records
                        .iter()
                        .map(|r| pipeline::assemble(r, &vocab))
                        .collect::<Result<_, _>>()
                        .map_err(runtime)?;
                    eval::evaluate(
                        &model,
                        &heldout,
                        &vocab,
                        &config.policy,
                        &config.schedule,
                        &eval_config,
                    )
                    .map_err(runtime)?
                }
                None => {
                    let strategies = if compare.is_empty() {
                        vec![Strategy::AstSpanBudgeted, Strategy::RandomToken]
                    } else {
                        compare
                    };
                    let split = split_corpus(&records, holdout, seed, 32_768).map_err(runtime)?;
                    let train = TrainConfig {
                        window,
                        passes,
                        seed,
                        ..TrainConfig::default()
                    };
                    compare_training_strategies(
                        &split,
                        &strategies,
                        &config.schedule,
                        &config.policy,
                        &config.schedule,
                        &train,
                        &eval_config,
                    )
                    .map_err(runtime)?
                }
            };
            print!("{}", report.table());
            if let Some(path) = out {
                let json = serde_json::to_string_pretty(&report).map_err(runtime)?;
                fs::write(path, json + "\n").map_err(runtime)?;
            }
            Ok(())
        }
        Command::ScheduleDump { points } => cmd_schedule(&config.schedule, points, out),
    }
}

fn load_records(path: &Path) -> Result<Vec<RawRecord>, Failure> {
    let reader = pipeline::read_records(path).map_err(invalid)?;
    let mut records = Vec::new();
    for item in reader {
        match item {
            Ok(r) => records.push(r),
            Err(e) => log::warn!("{}: {e}", path.display()),
        }
    }
    Ok(records)
}

fn cmd_parse(file: &Path, dump_spans: bool, out: &Option<PathBuf>) -> Outcome {
    let source = read_source(file)?;
    let result = parse(&source);
    for d in &result.diagnostics {
        eprintln!("{}:{}: {}", file.display(), d.offset, d.message);
    }
    let text = if dump_spans {
        let mut text = format!("{:>6} {:>6}  {}\n", "start", "end", "label");
        for s in collect_char_spans(&result.root, &LabelFilter::default()) {
            text.push_str(&format!("{:>6} {:>6}  {}\n", s.start, s.end, s.label));
        }
        text
    } else {
        format!("{}\n", result.root.to_sexpr())
    };
    emit(out, &text)?;
    if result.is_ok() {
        Ok(())
    } else {
        Err(runtime(format!("{} syntax error(s)", result.diagnostics.len())))
    }
}

fn code_input(source: &str, filter: &SpanFilter) -> Result<(Vocabulary, pipeline::Assembled), Failure> {
    let doc = Document::single(source, RegionKind::Code);
    let vocab = Vocabulary::build([&doc], usize::MAX).map_err(runtime)?;
    let assembled = pipeline::assemble_document(&doc, &vocab, filter).map_err(runtime)?;
    Ok((vocab, assembled))
}

fn cmd_spans(file: &Path, no_filter: bool, out: &Option<PathBuf>) -> Outcome {
    let filter = if no_filter {
        SpanFilter::none()
    } else {
        SpanFilter::default()
    };
    let (_, a) = code_input(&read_source(file)?, &filter)?;
    if !a.parse_ok {
        eprintln!("{}: does not parse; no spans", file.display());
    }
    let mut text = format!("{:>5} {:>5}  {:<12} {}\n", "start", "end", "label", "tokens");
    for s in &a.spans {
        let surface: Vec<&str> = a.seq.surfaces[s.range()]
            .iter()
            .map(|t| if t == "\n" { "⏎" } else { t.as_str() })
            .collect();
        text.push_str(&format!(
            "{:>5} {:>5}  {:<12} {}\n",
            s.start,
            s.end,
            s.label,
            surface.join(" ")
        ));
    }
    emit(out, &text)
}

fn cmd_corrupt(file: &Path, t: Option<u32>, config: &Config, out: &Option<PathBuf>) -> Outcome {
    let (vocab, a) = code_input(&read_source(file)?, &SpanFilter::default())?;
    let seed = record_seed(config.policy.seed, &file.display().to_string());
    let t = t.unwrap_or_else(|| sample_timestep(seed, config.schedule.timesteps));
    let epsilon = config.schedule.epsilon(t, None).map_err(invalid)?;
    let policy = CorruptionPolicy {
        regions: RegionRules::uniform(),
        ..config.policy.clone()
    };
    let ex = corrupt(a.input(), t, Rate::new(epsilon).map_err(invalid)?, &policy, seed).map_err(runtime)?;
    let xt: Vec<&str> = ex
        .xt
        .iter()
        .map(|&id| vocab.surface_of(id).unwrap_or("[UNK]"))
        .collect();
    let phase: Vec<u8> = ex.mask.phase_codes();
    let json = serde_json::json!({
        "t": ex.t,
        "epsilon": ex.epsilon,
        "seed": ex.seed,
        "policy": ex.policy,
        "x0": ex.x0.surfaces,
        "xt": xt,
        "mask": ex.mask.bits_u8(),
        "phase": phase,
        "masked": ex.mask.masked_count(),
        "span_tokens": ex.mask.count_phase(Phase::Span),
        "fallback_tokens": ex.mask.count_phase(Phase::Fallback),
    });
    emit(out, &format!("{json}\n"))
}

fn parse_span_list(text: &str) -> Result<Vec<TokenSpan>, Failure> {
    if text == "fixture" {
        return Ok(vec![
            TokenSpan::new(0, 4, Label::Assign),
            TokenSpan::new(4, 8, Label::Assign),
            TokenSpan::new(8, 12, Label::Assign),
        ]);
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (s, e) = pair
                .trim()
                .split_once(':')
                .ok_or_else(|| invalid(format!("span {pair:?} is not start:end")))?;
            let s: usize = s.parse().map_err(invalid)?;
            let e: usize = e.parse().map_err(invalid)?;
            if s >= e {
                return Err(invalid(format!("span {pair:?} is empty")));
            }
            Ok(TokenSpan::new(s, e, Label::Assign))
        })
        .collect()
}

fn cmd_verify(
    spans: &str,
    len: Option<usize>,
    trials: u64,
    config: &Config,
    out: &Option<PathBuf>,
) -> Outcome {
    let spans = parse_span_list(spans)?;
    let len = len.unwrap_or_else(|| spans.iter().map(|s| s.end).max().unwrap_or(0));
    if spans.iter().any(|s| s.end > len) {
        return Err(invalid("a span extends past --len"));
    }
    let strategy = match config.policy.strategy {
        Strategy::RandomToken => McStrategy::Random,
        Strategy::AstSpanBudgeted => McStrategy::Budgeted,
        Strategy::AstSpanFree => McStrategy::Free,
        Strategy::NodeTypeToken => return Err(invalid("verify supports random, budgeted and free")),
    };
    let epsilon = match config.schedule.kind {
        ScheduleKind::Constant => config.schedule.eps_max,
        _ => 0.5,
    };
    let params = McParams {
        len,
        spans,
        epsilon,
        seed: config.policy.seed,
    };
    let r = eval::monte_carlo_check(strategy, trials, &params).map_err(invalid)?;
    let text = format!(
        "strategy        {}\nepsilon         {}\nlength          {}\ntrials          {}\nmean count      {:.6}\nmean fraction   {:.6}\nstd error       {:.6}\noracle mean     {:.6} ({})\ngap             {:+.6} ({:.2} std errors)\n",
        config.policy.strategy,
        epsilon,
        len,
        r.trials,
        r.mean_count,
        r.mean_fraction,
        r.std_error,
        r.oracle_mean,
        if r.oracle_is_exact { "exact" } else { "ε·L" },
        r.gap,
        r.gap_in_std_errors,
    );
    emit(out, &text)
}

fn cmd_schedule(schedule: &Schedule, points: u64, out: &Option<PathBuf>) -> Outcome {
    let points = points.max(2);
    let mut text = String::new();
    match schedule.kind {
        ScheduleKind::CosineCurriculum => {
            text.push_str(&format!("{:>10} {:>10}\n", "step", "epsilon"));
            for i in 0..points {
                let step = i * schedule.total_steps / (points - 1);
                let eps = schedule
                    .epsilon(schedule.timesteps, Some(step))
                    .map_err(invalid)?;
                text.push_str(&format!("{step:>10} {eps:>10.6}\n"));
            }
        }
        _ => {
            text.push_str(&format!("{:>10} {:>10}\n", "t", "epsilon"));
            let last = u64::from(schedule.timesteps);
            for i in 0..points {
                let t = (1 + i * (last - 1) / (points - 1)) as u32;
                let eps = schedule.epsilon_at_timestep(t).map_err(invalid)?;
                text.push_str(&format!("{t:>10} {eps:>10.6}\n"));
            }
        }
    }
    emit(out, &text)
}
