//! Incremental token and adjacent-pair frequencies over the weighted corpus.
//!
//! Counts are kept exact under merges and removals by recounting only the
//! words that contain the affected pair or token: each touched word has its
//! old contribution subtracted and its new one added, scaled by the word's
//! frequency. Self-pairs `(x, x)` count non-overlapping occurrences scanned
//! left to right, so `x x x x` contributes two.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Pair, TokenId};

/// Current segmentation of every corpus word, mutated during training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingCorpus {
    words: Vec<Vec<TokenId>>,
    freqs: Vec<u64>,
}

impl TrainingCorpus {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let (words, freqs) = corpus.entries().iter().cloned().unzip();
        Self { words, freqs }
    }

    pub fn from_words(words: Vec<(Vec<TokenId>, u64)>) -> Self {
        let (words, freqs) = words.into_iter().unzip();
        Self { words, freqs }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[Vec<TokenId>] {
        &self.words
    }

    pub fn freqs(&self) -> &[u64] {
        &self.freqs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[TokenId], u64)> {
        self.words
            .iter()
            .map(Vec::as_slice)
            .zip(self.freqs.iter().copied())
    }
}

/// Non-overlapping adjacent pairs of `word`, in scan order.
pub fn word_pairs(word: &[TokenId]) -> impl Iterator<Item = Pair> + '_ {
    let mut last_self_end = usize::MAX;
    word.windows(2).enumerate().filter_map(move |(i, w)| {
        if w[0] == w[1] {
            if last_self_end == i {
                last_self_end = usize::MAX;
                return None;
            }
            last_self_end = i + 1;
        }
        Some((w[0], w[1]))
    })
}

/// Replaces every non-overlapping `(left, right)` adjacency, greedily from
/// the left. Returns whether anything changed.
pub fn merge_in_word(
    word: &mut Vec<TokenId>,
    left: TokenId,
    right: TokenId,
    result: TokenId,
) -> bool {
    if word.len() < 2 {
        return false;
    }
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    let mut changed = false;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == left && word[i + 1] == right {
            out.push(result);
            i += 2;
            changed = true;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    if changed {
        *word = out;
    }
    changed
}

/// Replaces every occurrence of `token` with `expansion`.
pub fn expand_in_word(word: &mut Vec<TokenId>, token: TokenId, expansion: &[TokenId]) -> bool {
    if !word.contains(&token) {
        return false;
    }
    let mut out = Vec::with_capacity(word.len() + expansion.len());
    for &t in word.iter() {
        if t == token {
            out.extend_from_slice(expansion);
        } else {
            out.push(t);
        }
    }
    *word = out;
    true
}

fn tally<T: Ord + Copy>(mut items: Vec<T>) -> Vec<(T, i64)> {
    items.sort_unstable();
    let mut out: Vec<(T, i64)> = Vec::with_capacity(items.len());
    for x in items {
        match out.last_mut() {
            Some((y, c)) if *y == x => *c += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

#[derive(Debug, Default)]
struct WordCounts {
    pairs: Vec<(Pair, i64)>,
    tokens: Vec<(TokenId, i64)>,
}

impl WordCounts {
    fn of(word: &[TokenId]) -> Self {
        Self {
            pairs: tally(word_pairs(word).collect()),
            tokens: tally(word.to_vec()),
        }
    }
}

struct WordUpdate {
    idx: u32,
    before: WordCounts,
    after: WordCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HeapEntry {
    count: i64,
    pair: Pair,
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.count, Reverse(self.pair.0), Reverse(self.pair.1)).cmp(&(
            other.count,
            Reverse(other.pair.0),
            Reverse(other.pair.1),
        ))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Token and pair frequencies with a lazily-invalidated max-heap of pairs.
#[derive(Debug)]
pub struct PairStatistics {
    token_freq: Vec<i64>,
    pair_freq: FxHashMap<Pair, i64>,
    heap: BinaryHeap<HeapEntry>,
    suspended: FxHashSet<Pair>,
    // Supersets: a word is listed once it contains the pair/token and is
    // never unlisted, so lookups re-check the word itself.
    pair_words: FxHashMap<Pair, Vec<u32>>,
    token_words: Vec<Vec<u32>>,
    exec: Execution,
}

impl PairStatistics {
    /// Counts everything in `corpus`. `num_tokens` bounds the ids in use.
    pub fn new(corpus: &TrainingCorpus, num_tokens: usize, exec: Execution) -> Self {
        let mut stats = Self {
            token_freq: vec![0; num_tokens],
            pair_freq: FxHashMap::default(),
            heap: BinaryHeap::new(),
            suspended: FxHashSet::default(),
            pair_words: FxHashMap::default(),
            token_words: vec![Vec::new(); num_tokens],
            exec,
        };
        let per_word = exec.map(corpus.words(), |w| WordCounts::of(w));
        for (idx, (counts, &freq)) in per_word.iter().zip(corpus.freqs()).enumerate() {
            let f = freq as i64;
            for &(p, c) in &counts.pairs {
                *stats.pair_freq.entry(p).or_insert(0) += c * f;
                stats.pair_words.entry(p).or_default().push(idx as u32);
            }
            for &(t, c) in &counts.tokens {
                stats.ensure_token(t);
                stats.token_freq[t as usize] += c * f;
                stats.token_words[t as usize].push(idx as u32);
            }
        }
        let entries: Vec<HeapEntry> = stats
            .pair_freq
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&pair, &count)| HeapEntry { count, pair })
            .collect();
        stats.heap = BinaryHeap::from(entries);
        stats
    }

    fn ensure_token(&mut self, id: TokenId) {
        let need = id as usize + 1;
        if self.token_freq.len() < need {
            self.token_freq.resize(need, 0);
            self.token_words.resize_with(need, Vec::new);
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.token_freq.len()
    }

    pub fn token_freq(&self, id: TokenId) -> u64 {
        self.token_freq.get(id as usize).copied().unwrap_or(0) as u64
    }

    pub fn pair_freq(&self, pair: Pair) -> u64 {
        self.pair_freq.get(&pair).copied().unwrap_or(0) as u64
    }

    /// All pairs with a positive count.
    pub fn pair_counts(&self) -> impl Iterator<Item = (Pair, u64)> + '_ {
        self.pair_freq
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&p, &c)| (p, c as u64))
    }

    /// All tokens with a positive count.
    pub fn token_counts(&self) -> impl Iterator<Item = (TokenId, u64)> + '_ {
        self.token_freq
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(t, &c)| (t as TokenId, c as u64))
    }

    /// Highest-count pair that is not suspended, ties broken by lower left
    /// id then lower right id.
    pub fn peek_best(&mut self) -> Option<(Pair, u64)> {
        while let Some(&top) = self.heap.peek() {
            let current = self.pair_freq.get(&top.pair).copied().unwrap_or(0);
            if current != top.count || current <= 0 || self.suspended.contains(&top.pair) {
                self.heap.pop();
                continue;
            }
            return Some((top.pair, current as u64));
        }
        None
    }

    pub fn most_frequent_pair(&mut self) -> Result<Pair> {
        self.peek_best()
            .map(|(p, _)| p)
            .ok_or(Error::TrainingExhausted)
    }

    /// Excludes `pair` from selection until [`PairStatistics::resume`].
    pub fn suspend(&mut self, pair: Pair) {
        self.suspended.insert(pair);
    }

    pub fn resume(&mut self, pair: Pair) {
        if self.suspended.remove(&pair) {
            if let Some(&count) = self.pair_freq.get(&pair) {
                if count > 0 {
                    self.heap.push(HeapEntry { count, pair });
                }
            }
        }
    }

    fn check_id(&self, id: TokenId) -> Result<()> {
        if (id as usize) < self.token_freq.len() {
            Ok(())
        } else {
            Err(Error::UnknownToken(id))
        }
    }

    /// Rewrites every `(left, right)` adjacency to `result` and updates the
    /// counts. `result` may be a fresh id one past the current range.
    /// Returns the weighted number of replacements.
    pub fn apply_merge(
        &mut self,
        corpus: &mut TrainingCorpus,
        left: TokenId,
        right: TokenId,
        result: TokenId,
    ) -> Result<u64> {
        self.check_id(left)?;
        self.check_id(right)?;
        if result as usize > self.token_freq.len() {
            return Err(Error::UnknownToken(result));
        }
        self.ensure_token(result);
        let pair = (left, right);
        let mut candidates = self.pair_words.remove(&pair).unwrap_or_default();
        candidates.sort_unstable();
        candidates.dedup();
        let before = self.pair_freq(pair);
        self.rewrite(corpus, candidates, |w| {
            merge_in_word(w, left, right, result)
        });
        Ok(before - self.pair_freq(pair))
    }

    /// Replaces every standalone occurrence of `token` with `expansion` and
    /// updates the counts. Returns the weighted number of replacements.
    pub fn apply_removal(
        &mut self,
        corpus: &mut TrainingCorpus,
        token: TokenId,
        expansion: &[TokenId],
    ) -> Result<u64> {
        self.check_id(token)?;
        for &t in expansion {
            self.check_id(t)?;
        }
        let mut candidates = std::mem::take(&mut self.token_words[token as usize]);
        candidates.sort_unstable();
        candidates.dedup();
        let before = self.token_freq(token);
        self.rewrite(corpus, candidates, |w| expand_in_word(w, token, expansion));
        Ok(before - self.token_freq(token))
    }

    fn rewrite<F>(&mut self, corpus: &mut TrainingCorpus, candidates: Vec<u32>, edit: F)
    where
        F: Fn(&mut Vec<TokenId>) -> bool + Sync + Send,
    {
        let mut taken: Vec<(u32, Vec<TokenId>)> = candidates
            .into_iter()
            .map(|i| (i, std::mem::take(&mut corpus.words[i as usize])))
            .collect();
        let updates: Vec<Option<WordUpdate>> = self.exec.map_mut(&mut taken, |(idx, word)| {
            let before = WordCounts::of(word);
            if !edit(word) {
                return None;
            }
            Some(WordUpdate {
                idx: *idx,
                before,
                after: WordCounts::of(word),
            })
        });
        for (idx, word) in taken {
            corpus.words[idx as usize] = word;
        }

        let mut touched: FxHashSet<Pair> = FxHashSet::default();
        for u in updates.into_iter().flatten() {
            let f = corpus.freqs[u.idx as usize] as i64;
            for &(p, c) in &u.before.pairs {
                *self.pair_freq.get_mut(&p).expect("counted pair") -= c * f;
                touched.insert(p);
            }
            for &(p, c) in &u.after.pairs {
                *self.pair_freq.entry(p).or_insert(0) += c * f;
                touched.insert(p);
                if u.before.pairs.binary_search_by(|x| x.0.cmp(&p)).is_err() {
                    self.pair_words.entry(p).or_default().push(u.idx);
                }
            }
            for &(t, c) in &u.before.tokens {
                self.token_freq[t as usize] -= c * f;
            }
            for &(t, c) in &u.after.tokens {
                self.ensure_token(t);
                self.token_freq[t as usize] += c * f;
                if u.before.tokens.binary_search_by(|x| x.0.cmp(&t)).is_err() {
                    self.token_words[t as usize].push(u.idx);
                }
            }
        }
        for p in touched {
            match self.pair_freq.get(&p).copied() {
                Some(count) if count > 0 => self.heap.push(HeapEntry { count, pair: p }),
                Some(_) => {
                    self.pair_freq.remove(&p);
                }
                None => {}
            }
        }
    }
}
