//! Vocabulary, event log, and the versioned JSON model file.
//!
//! The event log is the single source of truth: replaying it from the
//! alphabet reconstructs which tokens are active, and inference walks it in
//! order. Every model that leaves this module has passed [`validate`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::corpus::{PreTokenizerConfig, UNK_ID, UNK_SURFACE};
use crate::error::{Error, Result};

pub type TokenId = u32;
pub type Pair = (TokenId, TokenId);

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    pub surface: String,
    pub active: bool,
    /// The pair whose merge first produced this token; `None` for alphabet
    /// symbols and `<unk>`.
    pub children: Option<Pair>,
    pub created_by_event: Option<usize>,
}

impl Token {
    pub fn is_alphabet(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Merge {
        left_id: TokenId,
        right_id: TokenId,
        result_id: TokenId,
    },
    Remove {
        token_id: TokenId,
        expansion: Vec<TokenId>,
    },
    /// Re-activates a removed token by merging `left_id` and `right_id`.
    /// The pair may differ from the token's original children.
    Restore {
        token_id: TokenId,
        left_id: TokenId,
        right_id: TokenId,
        original_merge_index: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub index: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    /// The pair this event merges, for Merge and Restore events.
    pub fn merge_pair(&self) -> Option<(Pair, TokenId)> {
        match self.kind {
            EventKind::Merge {
                left_id,
                right_id,
                result_id,
            } => Some(((left_id, right_id), result_id)),
            EventKind::Restore {
                token_id,
                left_id,
                right_id,
                ..
            } => Some(((left_id, right_id), token_id)),
            EventKind::Remove { .. } => None,
        }
    }
}

/// Chronological Merge / Remove / Restore record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLog(Vec<Event>);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub merges: usize,
    pub removes: usize,
    pub restores: usize,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Event] {
        &self.0
    }

    /// Appends an event with the next dense index and returns that index.
    pub fn push(&mut self, kind: EventKind) -> usize {
        let index = self.0.len();
        self.0.push(Event { index, kind });
        index
    }

    pub fn counts(&self) -> EventCounts {
        let mut c = EventCounts::default();
        for e in &self.0 {
            match e.kind {
                EventKind::Merge { .. } => c.merges += 1,
                EventKind::Remove { .. } => c.removes += 1,
                EventKind::Restore { .. } => c.restores += 1,
            }
        }
        c
    }
}

impl From<Vec<Event>> for EventLog {
    fn from(v: Vec<Event>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub threshold: f64,
    pub vocab_size: usize,
    #[serde(flatten)]
    pub pretokenizer: PreTokenizerConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u64,
    config: ModelConfig,
    tokens: Vec<Token>,
    events: EventLog,
}

/// Trained tokenizer: vocabulary, event log, and configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerModel {
    config: ModelConfig,
    tokens: Vec<Token>,
    events: EventLog,
    by_surface: FxHashMap<String, TokenId>,
    marker_id: TokenId,
}

impl TokenizerModel {
    /// Assembles and validates a model.
    pub fn new(config: ModelConfig, tokens: Vec<Token>, events: EventLog) -> Result<Self> {
        validate(&config, &tokens, &events)?;
        let by_surface = tokens
            .iter()
            .map(|t| (t.surface.clone(), t.id))
            .collect::<FxHashMap<_, _>>();
        let marker = config.pretokenizer.boundary_marker.to_string();
        let marker_id = by_surface[&marker];
        Ok(Self {
            config,
            tokens,
            events,
            by_surface,
            marker_id,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn pretokenizer(&self) -> &PreTokenizerConfig {
        &self.config.pretokenizer
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&Token> {
        self.tokens.get(id as usize)
    }

    pub fn surface(&self, id: TokenId) -> &str {
        &self.tokens[id as usize].surface
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    pub fn id_of(&self, surface: &str) -> Option<TokenId> {
        self.by_surface.get(surface).copied()
    }

    /// Alphabet id of a single symbol, if it was retained.
    pub fn symbol_id(&self, c: char) -> Option<TokenId> {
        let mut buf = [0u8; 4];
        self.id_of(c.encode_utf8(&mut buf))
            .filter(|&id| self.tokens[id as usize].is_alphabet())
    }

    pub fn unk_id(&self) -> TokenId {
        UNK_ID
    }

    pub fn marker_id(&self) -> TokenId {
        self.marker_id
    }

    pub fn is_active(&self, id: TokenId) -> bool {
        self.tokens.get(id as usize).is_some_and(|t| t.active)
    }

    pub fn active_tokens(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.active)
    }

    pub fn active_count(&self) -> usize {
        self.active_tokens().count()
    }

    /// Starts with the boundary marker.
    pub fn is_word_initial(&self, token: &Token) -> bool {
        token
            .surface
            .starts_with(self.config.pretokenizer.boundary_marker)
    }

    /// Symbols of `id` excluding boundary markers.
    pub fn symbol_len(&self, id: TokenId) -> usize {
        self.alphabet_symbols(id)
            .into_iter()
            .filter(|&s| s != self.marker_id)
            .count()
    }

    /// Flattens a token into its alphabet-symbol sequence.
    pub fn alphabet_symbols(&self, id: TokenId) -> Vec<TokenId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(t) = stack.pop() {
            match self.tokens[t as usize].children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(t),
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            config: self.config,
            tokens: self.tokens.clone(),
            events: self.events.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        Self::from_value(value)
    }

    fn from_value(value: serde_json::Value) -> Result<Self> {
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::InvalidModel("missing format_version".into()))?;
        if found != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        Self::new(file.config, file.tokens, file.events)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_json()?.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let value: serde_json::Value = serde_json::from_reader(r)?;
        Self::from_value(value)
    }
}

/// Expands a token that is about to be removed into tokens active at this
/// moment: each inactive child is replaced by its own latest expansion,
/// recursively.
pub(crate) fn removal_expansion(
    tokens: &[Token],
    last_expansion: &FxHashMap<TokenId, Vec<TokenId>>,
    id: TokenId,
) -> Vec<TokenId> {
    let (l, r) = tokens[id as usize]
        .children
        .expect("alphabet tokens are never removed");
    let mut out = Vec::new();
    let mut stack = vec![r, l];
    while let Some(t) = stack.pop() {
        if tokens[t as usize].active {
            out.push(t);
        } else {
            let exp = &last_expansion[&t];
            stack.extend(exp.iter().rev());
        }
    }
    out
}

fn validate(config: &ModelConfig, tokens: &[Token], events: &EventLog) -> Result<()> {
    config.pretokenizer.validate()?;
    if !(config.threshold > 0.0 && config.threshold <= 1.0) {
        return Err(Error::InvalidModel(format!(
            "threshold must be in (0, 1], got {}",
            config.threshold
        )));
    }

    for (pos, t) in tokens.iter().enumerate() {
        if t.id as usize != pos {
            return Err(Error::InvalidModel(format!(
                "token ids not dense: position {pos} holds id {}",
                t.id
            )));
        }
    }
    let unk = tokens
        .first()
        .ok_or_else(|| Error::InvalidModel("empty vocabulary".into()))?;
    if unk.surface != UNK_SURFACE || !unk.is_alphabet() {
        return Err(Error::InvalidModel(
            "token 0 must be the <unk> symbol".into(),
        ));
    }

    let mut active_surfaces: FxHashSet<&str> = FxHashSet::default();
    for t in tokens.iter().filter(|t| t.active) {
        if !active_surfaces.insert(&t.surface) {
            return Err(Error::InvalidModel(format!(
                "duplicate active surface {:?} at token {}",
                t.surface, t.id
            )));
        }
    }
    let n = tokens.len();
    for t in tokens {
        match t.children {
            None => {
                if t.id != UNK_ID && t.surface.chars().count() != 1 {
                    return Err(Error::InvalidModel(format!(
                        "alphabet token {} must be a single symbol",
                        t.id
                    )));
                }
                if !t.active {
                    return Err(Error::InvalidModel(format!(
                        "alphabet token {} must be active",
                        t.id
                    )));
                }
                if t.created_by_event.is_some() {
                    return Err(Error::InvalidModel(format!(
                        "alphabet token {} cannot be created by an event",
                        t.id
                    )));
                }
            }
            Some((l, r)) => {
                for c in [l, r] {
                    if c as usize >= n || c == t.id {
                        return Err(Error::InvalidModel(format!(
                            "dangling child id {c} in token {}",
                            t.id
                        )));
                    }
                }
                let joined = format!(
                    "{}{}",
                    tokens[l as usize].surface, tokens[r as usize].surface
                );
                if joined != t.surface {
                    return Err(Error::InvalidModel(format!(
                        "token {} surface {:?} does not match its children {:?}",
                        t.id, t.surface, joined
                    )));
                }
            }
        }
    }
    let mut seen_surfaces: FxHashSet<&str> = FxHashSet::default();
    for t in tokens {
        if !seen_surfaces.insert(&t.surface) {
            return Err(Error::InvalidModel(format!(
                "duplicate surface {:?} at token {}",
                t.surface, t.id
            )));
        }
    }
    let marker = config.pretokenizer.boundary_marker.to_string();
    if !tokens
        .iter()
        .any(|t| t.is_alphabet() && t.surface == marker)
    {
        return Err(Error::InvalidModel(
            "boundary marker missing from alphabet".into(),
        ));
    }

    for (pos, e) in events.iter().enumerate() {
        if e.index != pos {
            return Err(Error::NonDenseEvents {
                position: pos,
                found: e.index,
            });
        }
    }

    replay(tokens, events)?;

    let active = tokens.iter().filter(|t| t.active).count();
    if active != config.vocab_size {
        return Err(Error::InvalidModel(format!(
            "{active} active tokens but vocab_size is {}",
            config.vocab_size
        )));
    }
    Ok(())
}

/// Replays the log from the alphabet and checks every event against the
/// state at its time, then compares the final active set to the stored flags.
fn replay(tokens: &[Token], events: &EventLog) -> Result<()> {
    let n = tokens.len();
    let mut active: Vec<bool> = tokens.iter().map(Token::is_alphabet).collect();
    let mut created: Vec<bool> = active.clone();
    let mut open_remove = vec![false; n];
    let mut by_surface: FxHashMap<&str, TokenId> = FxHashMap::default();
    for t in tokens.iter().filter(|t| t.is_alphabet()) {
        by_surface.insert(&t.surface, t.id);
    }
    let check_id = |index: usize, id: TokenId| -> Result<()> {
        if id as usize >= n {
            Err(Error::event(index, format!("unknown token id {id}")))
        } else {
            Ok(())
        }
    };
    let check_active_surface =
        |by_surface: &FxHashMap<&str, TokenId>, active: &[bool], index: usize, id: TokenId| {
            match by_surface.get(tokens[id as usize].surface.as_str()) {
                Some(&other) if other != id && active[other as usize] => Err(Error::event(
                    index,
                    format!("duplicate active surface {:?}", tokens[id as usize].surface),
                )),
                _ => Ok(()),
            }
        };

    for e in events.iter() {
        let index = e.index;
        match &e.kind {
            &EventKind::Merge {
                left_id,
                right_id,
                result_id,
            } => {
                for id in [left_id, right_id, result_id] {
                    check_id(index, id)?;
                }
                if !active[left_id as usize] || !active[right_id as usize] {
                    return Err(Error::event(index, "merge of an inactive token"));
                }
                let t = &tokens[result_id as usize];
                if created[result_id as usize] {
                    return Err(Error::event(
                        index,
                        format!("token {result_id} created twice"),
                    ));
                }
                if t.children != Some((left_id, right_id)) {
                    return Err(Error::event(
                        index,
                        format!("merge result {result_id} has different children"),
                    ));
                }
                if t.created_by_event != Some(index) {
                    return Err(Error::event(
                        index,
                        format!("token {result_id} records a different creating event"),
                    ));
                }
                check_active_surface(&by_surface, &active, index, result_id)?;
                created[result_id as usize] = true;
                active[result_id as usize] = true;
                by_surface.insert(&t.surface, result_id);
            }
            EventKind::Remove {
                token_id,
                expansion,
            } => {
                let token_id = *token_id;
                check_id(index, token_id)?;
                if tokens[token_id as usize].is_alphabet() {
                    return Err(Error::event(index, "alphabet tokens cannot be removed"));
                }
                if !active[token_id as usize] {
                    return Err(Error::event(
                        index,
                        format!("removal of inactive token {token_id}"),
                    ));
                }
                if expansion.len() < 2 {
                    return Err(Error::event(index, "bad expansion: fewer than two tokens"));
                }
                let mut joined = String::new();
                for &x in expansion {
                    check_id(index, x)?;
                    if x == token_id || !active[x as usize] {
                        return Err(Error::event(
                            index,
                            format!("bad expansion: token {x} is not active"),
                        ));
                    }
                    joined.push_str(&tokens[x as usize].surface);
                }
                if joined != tokens[token_id as usize].surface {
                    return Err(Error::event(
                        index,
                        format!(
                            "bad expansion: {:?} does not spell {:?}",
                            joined, tokens[token_id as usize].surface
                        ),
                    ));
                }
                active[token_id as usize] = false;
                open_remove[token_id as usize] = true;
            }
            &EventKind::Restore {
                token_id,
                left_id,
                right_id,
                original_merge_index,
            } => {
                for id in [token_id, left_id, right_id] {
                    check_id(index, id)?;
                }
                if !open_remove[token_id as usize] {
                    return Err(Error::event(
                        index,
                        format!("restore of token {token_id} without a prior removal"),
                    ));
                }
                if !active[left_id as usize] || !active[right_id as usize] {
                    return Err(Error::event(index, "restore from an inactive token"));
                }
                let joined = format!(
                    "{}{}",
                    tokens[left_id as usize].surface, tokens[right_id as usize].surface
                );
                if joined != tokens[token_id as usize].surface {
                    return Err(Error::event(index, "restore pair does not spell the token"));
                }
                if tokens[token_id as usize].created_by_event != Some(original_merge_index) {
                    return Err(Error::event(
                        index,
                        "restore names the wrong original merge",
                    ));
                }
                check_active_surface(&by_surface, &active, index, token_id)?;
                open_remove[token_id as usize] = false;
                active[token_id as usize] = true;
            }
        }
    }

    for t in tokens {
        if !created[t.id as usize] {
            return Err(Error::InvalidModel(format!(
                "token {} is never created by the event log",
                t.id
            )));
        }
        if active[t.id as usize] != t.active {
            return Err(Error::InvalidModel(format!(
                "replaying the event log leaves token {} {} but it is stored as {}",
                t.id,
                if active[t.id as usize] {
                    "active"
                } else {
                    "removed"
                },
                if t.active { "active" } else { "removed" },
            )));
        }
    }
    Ok(())
}
