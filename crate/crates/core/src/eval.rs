//! Intrinsic tokenizer metrics and vocabulary comparisons.

use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::inference::{InferenceMode, Tokenizer};
use crate::model::{removal_expansion, EventKind, Token, TokenId, TokenizerModel};
use crate::trainer::{Trainer, TrainerConfig};

/// Width of a histogram bin in log10-probability units.
pub const DEFAULT_BIN_WIDTH: f64 = 0.5;

/// Corpus token count: tokens needed to encode every line.
pub fn corpus_token_count<S: AsRef<str> + Sync>(
    tokenizer: &Tokenizer<'_>,
    lines: &[S],
    mode: InferenceMode,
    exec: Execution,
) -> Result<u64> {
    if lines.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let counts = exec.map(lines, |l| tokenizer.encode(l.as_ref(), mode).len() as u64);
    Ok(counts.into_iter().sum())
}

pub fn relative_ctc(ctc: u64, baseline_ctc: u64) -> f64 {
    ctc as f64 / baseline_ctc as f64
}

/// Rounds to three decimals for reporting.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Surfaces active in `a` but not in `b`, and vice versa.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VocabDiff {
    pub only_in_a: Vec<String>,
    pub only_in_b: Vec<String>,
}

pub fn vocab_diff(a: &TokenizerModel, b: &TokenizerModel) -> VocabDiff {
    let only = |x: &TokenizerModel, y: &TokenizerModel| -> Vec<String> {
        x.active_tokens()
            .filter(|t| y.id_of(&t.surface).is_none_or(|id| !y.is_active(id)))
            .map(|t| t.surface.clone())
            .collect()
    };
    VocabDiff {
        only_in_a: only(a, b),
        only_in_b: only(b, a),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordInitialStats {
    /// Share of the model's active vocabulary, in percent.
    pub overall: f64,
    /// Share among tokens active in the baseline only; `None` if there are none.
    pub dropped: Option<f64>,
    /// Share among tokens active in the model only; `None` if there are none.
    pub added: Option<f64>,
    pub dropped_count: usize,
    pub added_count: usize,
}

fn pct(part: usize, whole: usize) -> Option<f64> {
    (whole > 0).then(|| 100.0 * part as f64 / whole as f64)
}

pub fn word_initial_stats(
    model: &TokenizerModel,
    baseline: &TokenizerModel,
) -> Result<WordInitialStats> {
    if model.pretokenizer() != baseline.pretokenizer() {
        return Err(Error::Mismatch("pre-tokenizer settings differ".into()));
    }
    if model.config().vocab_size != baseline.config().vocab_size {
        return Err(Error::Mismatch(format!(
            "vocab sizes differ: {} vs {}",
            model.config().vocab_size,
            baseline.config().vocab_size
        )));
    }
    let marker = model.pretokenizer().boundary_marker;
    let initial = |s: &String| s.starts_with(marker);
    let diff = vocab_diff(model, baseline);
    let overall = model
        .active_tokens()
        .filter(|t| model.is_word_initial(t))
        .count();
    Ok(WordInitialStats {
        overall: pct(overall, model.active_count()).unwrap_or(0.0),
        dropped: pct(
            diff.only_in_b.iter().filter(|s| initial(s)).count(),
            diff.only_in_b.len(),
        ),
        added: pct(
            diff.only_in_a.iter().filter(|s| initial(s)).count(),
            diff.only_in_a.len(),
        ),
        dropped_count: diff.only_in_b.len(),
        added_count: diff.only_in_a.len(),
    })
}

/// Mean length of active tokens in symbols, boundary markers not counted.
pub fn mean_token_length(model: &TokenizerModel) -> f64 {
    let (sum, n) = model.active_tokens().fold((0usize, 0usize), |(s, n), t| {
        (s + model.symbol_len(t.id), n + 1)
    });
    sum as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RemovedTokenReport {
    /// Tokens whose latest event is a removal.
    pub removed_count: usize,
    pub merge_events: usize,
    pub remove_events: usize,
    pub restore_events: usize,
    pub removed: Vec<String>,
}

pub fn removed_token_report(model: &TokenizerModel) -> RemovedTokenReport {
    let counts = model.events().counts();
    let removed: Vec<String> = model
        .tokens()
        .iter()
        .filter(|t| !t.active)
        .map(|t| t.surface.clone())
        .collect();
    RemovedTokenReport {
        removed_count: removed.len(),
        merge_events: counts.merges,
        remove_events: counts.removes,
        restore_events: counts.restores,
        removed,
    }
}

/// Occurrences of every token id when encoding `lines`.
pub fn token_frequencies<S: AsRef<str> + Sync>(
    tokenizer: &Tokenizer<'_>,
    lines: &[S],
    mode: InferenceMode,
    exec: Execution,
) -> Vec<u64> {
    let n = tokenizer.model().tokens().len();
    exec.fold_chunks(
        lines,
        || vec![0u64; n],
        |mut acc, l| {
            for id in tokenizer.encode(l.as_ref(), mode) {
                acc[id as usize] += 1;
            }
            acc
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    )
}

/// Occurrences of every token id in the weighted word table.
pub fn corpus_token_frequencies(
    tokenizer: &Tokenizer<'_>,
    corpus: &Corpus,
    mode: InferenceMode,
) -> Vec<u64> {
    let mut freq = vec![0u64; tokenizer.model().tokens().len()];
    for (word, f) in corpus.entries() {
        for id in tokenizer.tokenize_symbols(word.clone(), mode) {
            freq[id as usize] += f;
        }
    }
    freq
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Distribution of log10 token probabilities over the active vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyHistogram {
    pub bin_width: f64,
    /// Active tokens that never occur.
    pub zero_count: usize,
    pub bins: Vec<HistogramBin>,
}

impl FrequencyHistogram {
    pub fn total(&self) -> usize {
        self.zero_count + self.bins.iter().map(|b| b.count).sum::<usize>()
    }

    /// `bin_low,bin_high,count`; the zero bin is written with `-inf` bounds.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_low,bin_high,count\n");
        writeln!(s, "-inf,-inf,{}", self.zero_count).unwrap();
        for b in &self.bins {
            writeln!(s, "{},{},{}", b.low, b.high, b.count).unwrap();
        }
        s
    }
}

pub fn frequency_histogram(
    model: &TokenizerModel,
    freqs: &[u64],
    bin_width: f64,
) -> FrequencyHistogram {
    let total: u64 = model.active_tokens().map(|t| freqs[t.id as usize]).sum();
    let mut zero_count = 0;
    let mut logs = Vec::new();
    for t in model.active_tokens() {
        let f = freqs[t.id as usize];
        if f == 0 || total == 0 {
            zero_count += 1;
        } else {
            logs.push((f as f64 / total as f64).log10());
        }
    }
    let mut bins = Vec::new();
    if !logs.is_empty() {
        let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
        let first = (lo / bin_width).floor() as i64;
        let nbins = ((0.0 - first as f64 * bin_width) / bin_width)
            .ceil()
            .max(1.0) as usize;
        bins = (0..nbins)
            .map(|i| HistogramBin {
                low: (first + i as i64) as f64 * bin_width,
                high: (first + i as i64 + 1) as f64 * bin_width,
                count: 0,
            })
            .collect();
        for l in logs {
            let i = (((l / bin_width).floor() as i64) - first).clamp(0, nbins as i64 - 1) as usize;
            bins[i].count += 1;
        }
    }
    FrequencyHistogram {
        bin_width,
        zero_count,
        bins,
    }
}

/// Vanilla BPE trained `extra` merges past `target_size`, then trimmed back
/// by removing the least frequent merged tokens on the training corpus.
pub fn post_trim_baseline(
    corpus: &Corpus,
    target_size: usize,
    extra: usize,
    exec: Execution,
) -> Result<TokenizerModel> {
    let mut trainer = Trainer::new(
        corpus,
        TrainerConfig::new(1.0, target_size + extra).with_execution(exec),
    )?;
    trainer.run()?;
    let vanilla = trainer.finish()?;
    if extra == 0 {
        return Ok(vanilla);
    }

    let mut freq = vec![0u64; vanilla.tokens().len()];
    for (word, f) in trainer.corpus().iter() {
        for &t in word {
            freq[t as usize] += f;
        }
    }
    let mut candidates: Vec<&Token> = vanilla
        .active_tokens()
        .filter(|t| !t.is_alphabet())
        .collect();
    if extra > candidates.len() {
        return Err(Error::Config(format!(
            "cannot trim {extra} tokens: only {} merged tokens exist",
            candidates.len()
        )));
    }
    candidates.sort_by(|a, b| {
        freq[a.id as usize]
            .cmp(&freq[b.id as usize])
            .then(b.id.cmp(&a.id))
    });
    let victims: Vec<TokenId> = candidates[..extra].iter().map(|t| t.id).collect();

    let mut tokens = vanilla.tokens().to_vec();
    let mut events = vanilla.events().clone();
    let mut last = rustc_hash::FxHashMap::default();
    for id in victims {
        let expansion = removal_expansion(&tokens, &last, id);
        events.push(EventKind::Remove {
            token_id: id,
            expansion: expansion.clone(),
        });
        tokens[id as usize].active = false;
        last.insert(id, expansion);
    }
    let mut config = *vanilla.config();
    config.vocab_size = target_size;
    TokenizerModel::new(config, tokens, events)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: InferenceMode,
    pub ctc: u64,
    pub baseline_ctc: u64,
    pub relative_ctc: f64,
    pub word_initial: WordInitialStats,
    pub mean_token_length: f64,
    pub baseline_mean_token_length: f64,
    pub removed_count: usize,
    pub histogram: FrequencyHistogram,
}

/// Full comparison of `model` against `baseline` on `lines`.
pub fn evaluate<S: AsRef<str> + Sync>(
    model: &TokenizerModel,
    baseline: &TokenizerModel,
    lines: &[S],
    mode: InferenceMode,
    exec: Execution,
) -> Result<EvalReport> {
    let tk = Tokenizer::new(model);
    let base_tk = Tokenizer::new(baseline);
    let freqs = token_frequencies(&tk, lines, mode, exec);
    if lines.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let ctc: u64 = freqs.iter().sum();
    let baseline_ctc = corpus_token_count(&base_tk, lines, mode, exec)?;
    Ok(EvalReport {
        mode,
        ctc,
        baseline_ctc,
        relative_ctc: round3(relative_ctc(ctc, baseline_ctc)),
        word_initial: word_initial_stats(model, baseline)?,
        mean_token_length: mean_token_length(model),
        baseline_mean_token_length: mean_token_length(baseline),
        removed_count: removed_token_report(model).removed_count,
        histogram: frequency_histogram(model, &freqs, DEFAULT_BIN_WIDTH),
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
}

impl EvalReport {
    /// Aligned two-column table.
    pub fn to_table(&self) -> String {
        let rows = [
            ("mode", self.mode.to_string()),
            ("corpus token count", self.ctc.to_string()),
            ("baseline token count", self.baseline_ctc.to_string()),
            ("relative CTC", format!("{:.3}", self.relative_ctc)),
            ("removed tokens", self.removed_count.to_string()),
            (
                "word-initial overall %",
                format!("{:.1}", self.word_initial.overall),
            ),
            ("word-initial dropped %", opt(self.word_initial.dropped)),
            ("word-initial added %", opt(self.word_initial.added)),
            (
                "mean token length",
                format!("{:.2}", self.mean_token_length),
            ),
            (
                "baseline mean token length",
                format!("{:.2}", self.baseline_mean_token_length),
            ),
        ];
        table(&rows)
    }
}

/// Renders key/value rows with the keys left-aligned.
pub fn table(rows: &[(&str, String)]) -> String {
    let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in rows {
        writeln!(s, "{k:<w$}  {v}").unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffReport {
    pub added: usize,
    pub dropped: usize,
    pub word_initial: WordInitialStats,
    pub only_in_a: Vec<String>,
    pub only_in_b: Vec<String>,
}

/// Compares `a` against `b`: "added" tokens are active in `a` only.
pub fn diff_report(a: &TokenizerModel, b: &TokenizerModel) -> Result<DiffReport> {
    let word_initial = word_initial_stats(a, b)?;
    let d = vocab_diff(a, b);
    Ok(DiffReport {
        added: d.only_in_a.len(),
        dropped: d.only_in_b.len(),
        word_initial,
        only_in_a: d.only_in_a,
        only_in_b: d.only_in_b,
    })
}

impl DiffReport {
    pub fn to_table(&self) -> String {
        let mut s = table(&[
            ("added", self.added.to_string()),
            ("dropped", self.dropped.to_string()),
            (
                "word-initial overall %",
                format!("{:.1}", self.word_initial.overall),
            ),
            ("word-initial dropped %", opt(self.word_initial.dropped)),
            ("word-initial added %", opt(self.word_initial.added)),
        ]);
        for t in &self.only_in_a {
            writeln!(s, "+ {t}").unwrap();
        }
        for t in &self.only_in_b {
            writeln!(s, "- {t}").unwrap();
        }
        s
    }
}
