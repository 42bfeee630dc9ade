//! Encoding and decoding against a trained model.
//!
//! [`InferenceMode::EventOrder`] replays the training event log on each
//! word: at every point the earliest applicable event at or after the
//! cursor fires, and the cursor moves past it. Because training applies the
//! same events in the same order to every word, this reproduces the final
//! training segmentation exactly.
//!
//! [`InferenceMode::PostRemoval`] is the baseline that runs every merge
//! first (removed tokens included) and only then splits tokens that are no
//! longer in the vocabulary into the shortest sequence of active tokens.

use std::str::FromStr;
use std::sync::RwLock;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{EventKind, Pair, TokenId, TokenizerModel};
use crate::statistics::{expand_in_word, merge_in_word};

const CACHE_LIMIT: usize = 1 << 20;

type WordCache = FxHashMap<Box<str>, Box<[TokenId]>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    #[default]
    EventOrder,
    PostRemoval,
}

impl FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "event-order" => Ok(Self::EventOrder),
            "post-removal" => Ok(Self::PostRemoval),
            other => Err(Error::Config(format!(
                "unknown inference mode {other:?} (expected event-order or post-removal)"
            ))),
        }
    }
}

impl std::fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::EventOrder => "event-order",
            Self::PostRemoval => "post-removal",
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Merge {
        left: TokenId,
        right: TokenId,
        result: TokenId,
    },
    Remove {
        token: TokenId,
    },
}

/// Compiled lookup tables over a model plus a per-word cache. Safe to share
/// between threads.
pub struct Tokenizer<'m> {
    model: &'m TokenizerModel,
    actions: Vec<Action>,
    expansions: FxHashMap<usize, Vec<TokenId>>,
    merges_by_pair: FxHashMap<Pair, Vec<usize>>,
    removes_by_token: FxHashMap<TokenId, Vec<usize>>,
    /// Shortest active decomposition of every inactive token.
    splits: FxHashMap<TokenId, Vec<TokenId>>,
    caches: [RwLock<WordCache>; 2],
}

impl<'m> Tokenizer<'m> {
    pub fn new(model: &'m TokenizerModel) -> Self {
        let mut actions = Vec::with_capacity(model.events().len());
        let mut expansions = FxHashMap::default();
        let mut merges_by_pair: FxHashMap<Pair, Vec<usize>> = FxHashMap::default();
        let mut removes_by_token: FxHashMap<TokenId, Vec<usize>> = FxHashMap::default();
        for e in model.events().iter() {
            match &e.kind {
                EventKind::Remove {
                    token_id,
                    expansion,
                } => {
                    removes_by_token.entry(*token_id).or_default().push(e.index);
                    expansions.insert(e.index, expansion.clone());
                    actions.push(Action::Remove { token: *token_id });
                }
                _ => {
                    let ((left, right), result) = e.merge_pair().expect("merge or restore");
                    merges_by_pair
                        .entry((left, right))
                        .or_default()
                        .push(e.index);
                    actions.push(Action::Merge {
                        left,
                        right,
                        result,
                    });
                }
            }
        }
        let splits = shortest_splits(model);
        Self {
            model,
            actions,
            expansions,
            merges_by_pair,
            removes_by_token,
            splits,
            caches: Default::default(),
        }
    }

    pub fn model(&self) -> &'m TokenizerModel {
        self.model
    }

    /// Maps a pre-tokenized word (no marker) to its initial symbol sequence.
    pub fn symbols(&self, word: &str) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(word.len() + 1);
        out.push(self.model.marker_id());
        out.extend(
            word.chars()
                .map(|c| self.model.symbol_id(c).unwrap_or(self.model.unk_id())),
        );
        out
    }

    /// Tokenizes one pre-tokenized word.
    pub fn tokenize_word(&self, word: &str, mode: InferenceMode) -> Vec<TokenId> {
        let cache = &self.caches[mode as usize];
        if let Some(hit) = cache.read().expect("cache lock").get(word) {
            return hit.to_vec();
        }
        let out = self.tokenize_symbols(self.symbols(word), mode);
        let mut guard = cache.write().expect("cache lock");
        if guard.len() < CACHE_LIMIT {
            guard.insert(word.into(), out.clone().into_boxed_slice());
        }
        out
    }

    pub fn tokenize_symbols(&self, symbols: Vec<TokenId>, mode: InferenceMode) -> Vec<TokenId> {
        match mode {
            InferenceMode::EventOrder => self.replay(symbols, true).0,
            InferenceMode::PostRemoval => {
                let merged = self.replay(symbols, false).0;
                let mut out = Vec::with_capacity(merged.len());
                for t in merged {
                    match self.splits.get(&t) {
                        Some(split) => out.extend_from_slice(split),
                        None => out.push(t),
                    }
                }
                out
            }
        }
    }

    /// Event-order tokenization that also returns the indices of the events
    /// performed, in order.
    pub fn trace(&self, symbols: Vec<TokenId>) -> (Vec<TokenId>, Vec<usize>) {
        self.replay(symbols, true)
    }

    fn next_event(&self, word: &[TokenId], cursor: usize, with_removals: bool) -> Option<usize> {
        let first_at_or_after = |v: &Vec<usize>| {
            let i = v.partition_point(|&x| x < cursor);
            v.get(i).copied()
        };
        let mut best: Option<usize> = None;
        let mut consider = |c: Option<usize>| {
            if let Some(c) = c {
                if best.is_none_or(|b| c < b) {
                    best = Some(c);
                }
            }
        };
        for w in word.windows(2) {
            consider(
                self.merges_by_pair
                    .get(&(w[0], w[1]))
                    .and_then(first_at_or_after),
            );
        }
        if with_removals {
            for t in word {
                consider(self.removes_by_token.get(t).and_then(first_at_or_after));
            }
        }
        best
    }

    fn replay(&self, mut word: Vec<TokenId>, with_removals: bool) -> (Vec<TokenId>, Vec<usize>) {
        let mut cursor = 0;
        let mut performed = Vec::new();
        while let Some(index) = self.next_event(&word, cursor, with_removals) {
            match self.actions[index] {
                Action::Merge {
                    left,
                    right,
                    result,
                } => {
                    merge_in_word(&mut word, left, right, result);
                }
                Action::Remove { token } => {
                    expand_in_word(&mut word, token, &self.expansions[&index]);
                }
            }
            performed.push(index);
            cursor = index + 1;
        }
        (word, performed)
    }

    /// Encodes a line of text.
    pub fn encode(&self, text: &str, mode: InferenceMode) -> Vec<TokenId> {
        let mut out = Vec::new();
        for w in self.model.pretokenizer().words(text) {
            out.extend(self.tokenize_word(&w, mode));
        }
        out
    }

    /// Encodes many lines, preserving order.
    pub fn encode_lines<S: AsRef<str> + Sync>(
        &self,
        lines: &[S],
        mode: InferenceMode,
        exec: Execution,
    ) -> Vec<Vec<TokenId>> {
        exec.map(lines, |l| self.encode(l.as_ref(), mode))
    }

    /// Concatenates surfaces and turns boundary markers back into spaces.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        decode(self.model, ids)
    }
}

pub fn decode(model: &TokenizerModel, ids: &[TokenId]) -> Result<String> {
    let marker = model.pretokenizer().boundary_marker;
    let mut s = String::new();
    for &id in ids {
        let t = model.token(id).ok_or(Error::UnknownToken(id))?;
        s.push_str(&t.surface);
    }
    let s = s.replace(marker, " ");
    Ok(s.strip_prefix(' ').map(str::to_string).unwrap_or(s))
}

/// For every inactive token: the fewest active tokens spelling it, choosing
/// the longest first token among equally short splits.
fn shortest_splits(model: &TokenizerModel) -> FxHashMap<TokenId, Vec<TokenId>> {
    let inactive: Vec<TokenId> = model
        .tokens()
        .iter()
        .filter(|t| !t.active)
        .map(|t| t.id)
        .collect();
    if inactive.is_empty() {
        return FxHashMap::default();
    }
    let active_by_symbols: FxHashMap<Vec<TokenId>, TokenId> = model
        .active_tokens()
        .map(|t| (model.alphabet_symbols(t.id), t.id))
        .collect();
    let max_len = active_by_symbols.keys().map(Vec::len).max().unwrap_or(1);

    let mut out = FxHashMap::default();
    for id in inactive {
        let syms = model.alphabet_symbols(id);
        let n = syms.len();
        // cost[i] = fewest tokens covering syms[i..]; next[i] = end of first token.
        let mut cost = vec![usize::MAX; n + 1];
        let mut next = vec![0usize; n + 1];
        cost[n] = 0;
        for i in (0..n).rev() {
            for j in ((i + 1)..=n.min(i + max_len)).rev() {
                if cost[j] == usize::MAX {
                    continue;
                }
                if active_by_symbols.contains_key(&syms[i..j]) && cost[j] + 1 < cost[i] {
                    cost[i] = cost[j] + 1;
                    next[i] = j;
                }
            }
        }
        let mut split = Vec::new();
        let mut i = 0;
        while i < n {
            let j = next[i];
            split.push(active_by_symbols[&syms[i..j]]);
            i = j;
        }
        out.insert(id, split);
    }
    out
}

/// Tokenizes a single word without keeping a [`Tokenizer`] around.
pub fn tokenize_word(word: &str, model: &TokenizerModel) -> Vec<TokenId> {
    Tokenizer::new(model).tokenize_word(word, InferenceMode::EventOrder)
}

pub fn tokenize_word_postremoval(word: &str, model: &TokenizerModel) -> Vec<TokenId> {
    Tokenizer::new(model).tokenize_word(word, InferenceMode::PostRemoval)
}

pub fn encode(text: &str, model: &TokenizerModel, mode: InferenceMode) -> Vec<TokenId> {
    Tokenizer::new(model).encode(text, mode)
}
