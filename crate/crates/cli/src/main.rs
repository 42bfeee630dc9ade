//! `picky`: train, apply and evaluate tokenizers from the shell.
//!
//! Exit codes: 1 usage, 2 I/O, 3 validation.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use picky_bpe::corpus::{CorpusBuilder, Lines, DEFAULT_BOUNDARY_MARKER, DEFAULT_COVERAGE};
use picky_bpe::eval;
use picky_bpe::{
    Error, Execution, InferenceMode, PreTokenizerConfig, TokenId, Tokenizer, TokenizerModel,
    Trainer, TrainerConfig,
};
use serde::Serialize;

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

/// Encode lines in batches of this size so output can stream.
const ENCODE_BATCH: usize = 4096;

#[derive(Parser)]
#[command(
    name = "picky",
    version,
    about = "BPE tokenizer with intermediate-token removal"
)]
struct Cli {
    /// Emit machine-readable JSON instead of plain text.
    #[arg(long, global = true)]
    json: bool,

    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from plain-text files (one document per line).
    Train(TrainArgs),
    /// Tokenize stdin line by line.
    Encode(EncodeArgs),
    /// Turn id lines (JSON arrays) from stdin back into text.
    Decode(DecodeArgs),
    /// Compare a model against a baseline on held-out text.
    Eval(EvalArgs),
    /// Vocabulary difference between two models.
    Diff(DiffArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    vocab_size: usize,
    #[arg(long, default_value_t = 0.9)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_COVERAGE)]
    coverage: f64,
    #[arg(long, default_value_t = DEFAULT_BOUNDARY_MARKER.to_string())]
    marker: String,
    #[arg(long)]
    lowercase: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    EventOrder,
    PostRemoval,
}

impl From<Mode> for InferenceMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::EventOrder => InferenceMode::EventOrder,
            Mode::PostRemoval => InferenceMode::PostRemoval,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Surfaces,
    Ids,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "event-order")]
    mode: Mode,
    #[arg(long, value_enum, default_value = "surfaces")]
    format: Format,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    baseline: PathBuf,
    model: PathBuf,
    #[arg(required = true)]
    text: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "event-order")]
    mode: Mode,
    /// Also write the token-frequency histogram as CSV.
    #[arg(long)]
    histogram_csv: Option<PathBuf>,
}

#[derive(Args)]
struct DiffArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = match cli.command {
        Command::Train(a) => train(a, cli.json, exec),
        Command::Encode(a) => encode(a, exec),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => evaluate(a, cli.json, exec),
        Command::Diff(a) => diff(a, cli.json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_VALIDATION })
        }
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))).into())
}

fn load_model(path: &Path) -> CliResult<TokenizerModel> {
    open(path)?;
    Ok(TokenizerModel::load(path)?)
}

fn read_lines(paths: &[PathBuf]) -> CliResult<Vec<String>> {
    let mut out = Vec::new();
    for p in paths {
        for line in Lines::new(open(p)?) {
            out.push(line?);
        }
    }
    Ok(out)
}

fn print_json<T: Serialize>(value: &T) -> CliResult {
    let s = serde_json::to_string_pretty(value).map_err(Error::Json)?;
    println!("{s}");
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    vocab_size: usize,
    merges: usize,
    removals: usize,
    restores: usize,
    removed_tokens: usize,
    output: String,
}

fn train(a: TrainArgs, json: bool, exec: Execution) -> CliResult {
    let mut marker = a.marker.chars();
    let boundary_marker = match (marker.next(), marker.next()) {
        (Some(c), None) => c,
        _ => {
            return Err(Failure::Usage(
                "--marker must be exactly one character".into(),
            ))
        }
    };
    let pre = PreTokenizerConfig {
        boundary_marker,
        coverage: a.coverage,
        lowercase: a.lowercase,
    };
    pre.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let config = TrainerConfig::new(a.threshold, a.vocab_size).with_execution(exec);
    config
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;

    let mut builder = CorpusBuilder::new(pre)?.with_execution(exec);
    for p in &a.input {
        for line in Lines::new(open(p)?) {
            builder.push_line(line?);
        }
    }
    let corpus = builder.finish()?;
    let mut trainer = Trainer::new(&corpus, config)?;
    trainer.run()?;
    let model = trainer.finish()?;
    model.save(&a.output)?;

    let s = trainer.summary();
    let summary = TrainSummary {
        vocab_size: s.vocab_size,
        merges: s.merges,
        removals: s.removals,
        restores: s.restores,
        removed_tokens: eval::removed_token_report(&model).removed_count,
        output: a.output.display().to_string(),
    };
    eprintln!("trained in {:.2?}", s.elapsed);
    if json {
        print_json(&summary)
    } else {
        print!(
            "{}",
            eval::table(&[
                ("vocab size", summary.vocab_size.to_string()),
                ("merges", summary.merges.to_string()),
                ("removals", summary.removals.to_string()),
                ("restores", summary.restores.to_string()),
                ("removed tokens", summary.removed_tokens.to_string()),
                ("output", summary.output),
            ])
        );
        Ok(())
    }
}

fn encode(a: EncodeArgs, exec: Execution) -> CliResult {
    let model = load_model(&a.model)?;
    let tk = Tokenizer::new(&model);
    let mode = a.mode.into();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut batch = Vec::with_capacity(ENCODE_BATCH);
    let flush = |batch: &mut Vec<String>, out: &mut BufWriter<_>| -> CliResult {
        for ids in tk.encode_lines(batch, mode, exec) {
            match a.format {
                Format::Surfaces => {
                    let s: Vec<&str> = ids.iter().map(|&i| model.surface(i)).collect();
                    writeln!(out, "{}", s.join(" "))?;
                }
                Format::Ids => {
                    writeln!(out, "{}", serde_json::to_string(&ids).map_err(Error::Json)?)?
                }
            }
        }
        batch.clear();
        Ok(())
    };
    for line in Lines::new(io::stdin().lock()) {
        batch.push(line?);
        if batch.len() >= ENCODE_BATCH {
            flush(&mut batch, &mut out)?;
        }
    }
    flush(&mut batch, &mut out)?;
    out.flush()?;
    Ok(())
}

fn decode(a: DecodeArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let stdin = io::stdin();
    let mut reader = stdin.lock();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            writeln!(out)?;
            continue;
        }
        let ids: Vec<TokenId> = serde_json::from_str(trimmed)
            .map_err(|e| Error::Config(format!("expected a JSON array of token ids: {e}")))?;
        writeln!(out, "{}", picky_bpe::decode(&model, &ids)?)?;
    }
    out.flush()?;
    Ok(())
}

fn evaluate(a: EvalArgs, json: bool, exec: Execution) -> CliResult {
    let model = load_model(&a.model)?;
    let baseline = load_model(&a.baseline)?;
    let lines = read_lines(&a.text)?;
    let report = eval::evaluate(&model, &baseline, &lines, a.mode.into(), exec)?;
    if let Some(p) = &a.histogram_csv {
        std::fs::write(p, report.histogram.to_csv())?;
    }
    if json {
        print_json(&report)
    } else {
        print!("{}", report.to_table());
        Ok(())
    }
}

fn diff(a: DiffArgs, json: bool) -> CliResult {
    let ma = load_model(&a.a)?;
    let mb = load_model(&a.b)?;
    let report = eval::diff_report(&ma, &mb)?;
    if json {
        print_json(&report)
    } else {
        print!("{}", report.to_table());
        Ok(())
    }
}
