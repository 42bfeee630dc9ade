//! Raw text to weighted word table.
//!
//! Words are whitespace-separated runs. Each word is prefixed with the
//! boundary marker and split into Unicode scalar values; symbols that fall
//! outside the coverage cut are replaced by `<unk>`.

use std::collections::BTreeMap;
use std::io::BufRead;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

pub const DEFAULT_BOUNDARY_MARKER: char = '\u{2581}';
pub const DEFAULT_COVERAGE: f64 = 0.9999;
pub const UNK_SURFACE: &str = "<unk>";
/// `<unk>` always takes the first id.
pub const UNK_ID: u32 = 0;

const LINE_BATCH: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreTokenizerConfig {
    pub boundary_marker: char,
    pub coverage: f64,
    pub lowercase: bool,
}

impl Default for PreTokenizerConfig {
    fn default() -> Self {
        Self {
            boundary_marker: DEFAULT_BOUNDARY_MARKER,
            coverage: DEFAULT_COVERAGE,
            lowercase: false,
        }
    }
}

impl PreTokenizerConfig {
    pub fn with_coverage(mut self, coverage: f64) -> Self {
        self.coverage = coverage;
        self
    }

    pub fn with_marker(mut self, marker: char) -> Self {
        self.boundary_marker = marker;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::Config(format!(
                "coverage must be in (0, 1], got {}",
                self.coverage
            )));
        }
        if self.boundary_marker.is_whitespace() {
            return Err(Error::Config(
                "boundary marker must not be whitespace".into(),
            ));
        }
        Ok(())
    }

    /// Applies normalization and splits a line into words.
    pub fn words<'a>(&self, line: &'a str) -> impl Iterator<Item = std::borrow::Cow<'a, str>> {
        let lowered: Option<Vec<String>> = self
            .lowercase
            .then(|| line.split_whitespace().map(str::to_lowercase).collect());
        let plain = (!self.lowercase).then(|| line.split_whitespace());
        lowered
            .into_iter()
            .flatten()
            .map(std::borrow::Cow::Owned)
            .chain(plain.into_iter().flatten().map(std::borrow::Cow::Borrowed))
    }
}

/// Weighted word table over a fixed alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    config: PreTokenizerConfig,
    /// Surface of every symbol id; index 0 is `<unk>`.
    symbols: Vec<String>,
    marker_id: u32,
    /// Sorted by symbol sequence.
    entries: Vec<(Vec<u32>, u64)>,
}

impl Corpus {
    pub fn config(&self) -> &PreTokenizerConfig {
        &self.config
    }

    pub fn entries(&self) -> &[(Vec<u32>, u64)] {
        &self.entries
    }

    /// Symbol surfaces indexed by id, `<unk>` included.
    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn unk_id(&self) -> u32 {
        UNK_ID
    }

    pub fn marker_id(&self) -> u32 {
        self.marker_id
    }

    /// Retained alphabet including the boundary marker, excluding `<unk>`.
    pub fn alphabet(&self) -> impl Iterator<Item = &str> {
        self.symbols[1..].iter().map(String::as_str)
    }

    pub fn symbol_id(&self, c: char) -> Option<u32> {
        let mut buf = [0u8; 4];
        let s = c.encode_utf8(&mut buf);
        self.symbols[1..]
            .iter()
            .position(|x| x == s)
            .map(|p| p as u32 + 1)
    }

    /// Total weighted word count.
    pub fn total_words(&self) -> u64 {
        self.entries.iter().map(|(_, f)| f).sum()
    }

    /// Renders a symbol sequence back to text.
    pub fn render(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.symbols[i as usize].as_str())
            .collect()
    }

    /// Frequency of the word with the given rendered surface (marker included).
    pub fn frequency_of(&self, surface: &str) -> Option<u64> {
        self.entries
            .iter()
            .find(|(w, _)| self.render(w) == surface)
            .map(|&(_, f)| f)
    }
}

/// Incremental word counter; feed lines, then call [`CorpusBuilder::finish`].
#[derive(Debug)]
pub struct CorpusBuilder {
    config: PreTokenizerConfig,
    exec: Execution,
    words: FxHashMap<String, u64>,
    pending: Vec<String>,
}

impl CorpusBuilder {
    pub fn new(config: PreTokenizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            exec: Execution::default(),
            words: FxHashMap::default(),
            pending: Vec::new(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn push_line(&mut self, line: impl Into<String>) {
        self.pending.push(line.into());
        if self.pending.len() >= LINE_BATCH {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let cfg = self.config;
        let counts = self.exec.fold_chunks(
            &self.pending,
            FxHashMap::<String, u64>::default,
            |mut acc, line| {
                for w in cfg.words(line) {
                    *acc.entry(w.into_owned()).or_insert(0) += 1;
                }
                acc
            },
            |mut a, b| {
                for (w, c) in b {
                    *a.entry(w).or_insert(0) += c;
                }
                a
            },
        );
        for (w, c) in counts {
            *self.words.entry(w).or_insert(0) += c;
        }
        self.pending.clear();
    }

    pub fn finish(mut self) -> Result<Corpus> {
        self.flush();
        if self.words.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let marker = self.config.boundary_marker;

        let mut char_counts: FxHashMap<char, u64> = FxHashMap::default();
        let mut marker_count = 0u64;
        for (w, &f) in &self.words {
            marker_count += f;
            for c in w.chars() {
                if c == marker {
                    marker_count += f;
                } else {
                    *char_counts.entry(c).or_insert(0) += f;
                }
            }
        }

        let mut ranked: Vec<(char, u64)> = char_counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let retained = coverage_cut(&ranked, self.config.coverage);

        let mut alphabet: Vec<(char, u64)> = ranked[..retained].to_vec();
        alphabet.push((marker, marker_count));
        alphabet.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut symbols = vec![UNK_SURFACE.to_string()];
        let mut id_of: FxHashMap<char, u32> = FxHashMap::default();
        for (c, _) in &alphabet {
            id_of.insert(*c, symbols.len() as u32);
            symbols.push(c.to_string());
        }
        let marker_id = id_of[&marker];

        let mut table: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
        for (w, f) in self.words {
            let mut ids = Vec::with_capacity(w.len() + 1);
            ids.push(marker_id);
            ids.extend(w.chars().map(|c| id_of.get(&c).copied().unwrap_or(UNK_ID)));
            *table.entry(ids).or_insert(0) += f;
        }

        Ok(Corpus {
            config: self.config,
            symbols,
            marker_id,
            entries: table.into_iter().collect(),
        })
    }
}

/// Number of leading ranked symbols to keep so that their share of the
/// occurrence mass reaches `coverage`.
fn coverage_cut(ranked: &[(char, u64)], coverage: f64) -> usize {
    let total: u64 = ranked.iter().map(|r| r.1).sum();
    if total == 0 {
        return 0;
    }
    let mut cum = 0u64;
    for (i, (_, c)) in ranked.iter().enumerate() {
        cum += c;
        if cum as f64 / total as f64 >= coverage {
            return i + 1;
        }
    }
    ranked.len()
}

pub fn build_corpus<I, S>(lines: I, config: PreTokenizerConfig) -> Result<Corpus>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut builder = CorpusBuilder::new(config)?;
    for line in lines {
        builder.push_line(line);
    }
    builder.finish()
}

/// Builds a corpus from a UTF-8 byte stream, reporting the byte offset of
/// the first invalid sequence.
pub fn build_corpus_from_reader<R: BufRead>(
    reader: R,
    config: PreTokenizerConfig,
) -> Result<Corpus> {
    let mut builder = CorpusBuilder::new(config)?;
    for line in Lines::new(reader) {
        builder.push_line(line?);
    }
    builder.finish()
}

/// Line iterator over a byte stream that validates UTF-8 and tracks offsets.
pub struct Lines<R> {
    reader: R,
    offset: u64,
    buf: Vec<u8>,
}

impl<R: BufRead> Lines<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            offset: 0,
            buf: Vec::new(),
        }
    }
}

impl<R: BufRead> Iterator for Lines<R> {
    type Item = Result<String>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.reader.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(n) => {
                let start = self.offset;
                self.offset += n as u64;
                let bytes = std::mem::take(&mut self.buf);
                match String::from_utf8(bytes) {
                    Ok(mut s) => {
                        if s.ends_with('\n') {
                            s.pop();
                            if s.ends_with('\r') {
                                s.pop();
                            }
                        }
                        Some(Ok(s))
                    }
                    Err(e) => Some(Err(Error::Decode {
                        offset: start + e.utf8_error().valid_up_to() as u64,
                    })),
                }
            }
            Err(e) => Some(Err(e.into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> PreTokenizerConfig {
        PreTokenizerConfig::default().with_coverage(1.0)
    }

    fn rendered(c: &Corpus) -> Vec<(String, u64)> {
        let mut v: Vec<_> = c.entries().iter().map(|(w, f)| (c.render(w), *f)).collect();
        v.sort();
        v
    }

    #[test]
    fn full_coverage_keeps_everything() {
        let c = build_corpus(["ab ab a"], full()).unwrap();
        assert_eq!(rendered(&c), vec![("▁a".into(), 1), ("▁ab".into(), 2)]);
        let mut alpha: Vec<_> = c.alphabet().collect();
        alpha.sort();
        assert_eq!(alpha, vec!["a", "b", "▁"]);
    }

    #[test]
    fn rare_symbol_becomes_unk() {
        // a:3 b:1 z:1 over 5 non-marker occurrences; dropping z keeps 0.8.
        let c = build_corpus(["aaab z"], full().with_coverage(0.8)).unwrap();
        assert_eq!(
            rendered(&c),
            vec![("▁<unk>".into(), 1), ("▁aaab".into(), 1)]
        );
        assert!(c.symbol_id('z').is_none());
        assert!(c.symbol_id('b').is_some());
    }

    #[test]
    fn ids_by_descending_frequency_then_symbol() {
        let c = build_corpus(["ba ca"], full()).unwrap();
        // a:2 ▁:2 b:1 c:1
        assert_eq!(c.symbols(), &["<unk>", "a", "▁", "b", "c"]);
        assert_eq!(c.marker_id(), 2);
    }

    #[test]
    fn empty_stream_is_rejected() {
        assert!(matches!(
            build_corpus(Vec::<String>::new(), full()),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(
            build_corpus(["   ", ""], full()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn decode_error_reports_offset() {
        let data: &[u8] = b"ok line\nbad \xff here\n";
        let err = build_corpus_from_reader(data, full()).unwrap_err();
        assert!(matches!(err, Error::Decode { offset: 12 }), "{err:?}");
    }

    #[test]
    fn invalid_coverage() {
        assert!(CorpusBuilder::new(full().with_coverage(0.0)).is_err());
        assert!(CorpusBuilder::new(full().with_coverage(1.5)).is_err());
    }

    #[test]
    fn lowercase_merges_case_variants() {
        let cfg = PreTokenizerConfig {
            lowercase: true,
            ..full()
        };
        let c = build_corpus(["The the THE"], cfg).unwrap();
        assert_eq!(rendered(&c), vec![("▁the".into(), 3)]);
    }

    #[test]
    fn tie_at_cut_keeps_lexicographically_smaller() {
        // a:2 x:1 y:1; coverage 0.75 keeps a plus exactly one of x/y.
        let c = build_corpus(["aa y x"], full().with_coverage(0.75)).unwrap();
        assert!(c.symbol_id('x').is_some());
        assert!(c.symbol_id('y').is_none());
    }
}
