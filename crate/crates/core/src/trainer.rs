//! Training loop: merge the most frequent pair, then drop either side of the
//! pair if almost all of its occurrences were inside that pair.
//!
//! A token is removed when `f_p(x1, x2) / f_t(x)` (intersection over self)
//! reaches the threshold, using counts from before the merge is applied. A
//! removed token that later wins pair selection again is restored rather
//! than recreated.

use std::time::{Duration, Instant};

use rustc_hash::FxHashMap;

use crate::corpus::{Corpus, UNK_ID};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{
    removal_expansion, EventKind, EventLog, ModelConfig, Pair, Token, TokenId, TokenizerModel,
};
use crate::statistics::{PairStatistics, TrainingCorpus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    /// IoS cutoff in (0, 1]; 1 disables removal.
    pub threshold: f64,
    /// Active tokens in the final vocabulary, `<unk>` and the marker included.
    pub target_vocab_size: usize,
    pub execution: Execution,
}

impl TrainerConfig {
    pub fn new(threshold: f64, target_vocab_size: usize) -> Self {
        Self {
            threshold,
            target_vocab_size,
            execution: Execution::default(),
        }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.target_vocab_size == 0 {
            return Err(Error::Config("vocab size must be positive".into()));
        }
        Ok(())
    }

    fn removal_enabled(&self) -> bool {
        self.threshold < 1.0
    }
}

/// Intersection over self of `member` within `(left, right)`.
pub fn compute_ios(
    stats: &PairStatistics,
    member: TokenId,
    left: TokenId,
    right: TokenId,
) -> Result<f64> {
    if member != left && member != right {
        return Err(Error::Config(format!(
            "token {member} is not part of the pair ({left}, {right})"
        )));
    }
    let own = stats.token_freq(member);
    if own == 0 {
        return Err(Error::Config(format!("token {member} has zero frequency")));
    }
    Ok(stats.pair_freq((left, right)) as f64 / own as f64)
}

/// Events produced by one call to [`Trainer::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub pair: Pair,
    pub result: TokenId,
    pub restored: bool,
    pub removed: Vec<TokenId>,
    pub pair_frequency: u64,
    /// Indices of the events appended by this step.
    pub events: std::ops::Range<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainingSummary {
    pub vocab_size: usize,
    pub steps: usize,
    pub merges: usize,
    pub removals: usize,
    pub restores: usize,
    pub elapsed: Duration,
}

/// Mutable training state. Drive with [`Trainer::step`] or [`Trainer::run`],
/// then assemble the model with [`Trainer::finish`].
pub struct Trainer {
    config: TrainerConfig,
    model_config: ModelConfig,
    corpus: TrainingCorpus,
    stats: PairStatistics,
    tokens: Vec<Token>,
    by_surface: FxHashMap<String, TokenId>,
    events: EventLog,
    last_expansion: FxHashMap<TokenId, Vec<TokenId>>,
    /// Pairs skipped because their result spells an active token, keyed by
    /// that token.
    blocked: FxHashMap<TokenId, Vec<Pair>>,
    active: usize,
    max_active: usize,
    steps: usize,
    elapsed: Duration,
}

impl Trainer {
    pub fn new(corpus: &Corpus, config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        let tokens: Vec<Token> = corpus
            .symbols()
            .iter()
            .enumerate()
            .map(|(id, s)| Token {
                id: id as TokenId,
                surface: s.clone(),
                active: true,
                children: None,
                created_by_event: None,
            })
            .collect();
        let minimum = tokens.len();
        if config.target_vocab_size < minimum {
            return Err(Error::VocabBelowAlphabet {
                requested: config.target_vocab_size,
                minimum,
            });
        }
        let start = Instant::now();
        let training = TrainingCorpus::from_corpus(corpus);
        let stats = PairStatistics::new(&training, tokens.len(), config.execution);
        let by_surface = tokens.iter().map(|t| (t.surface.clone(), t.id)).collect();
        Ok(Self {
            config,
            model_config: ModelConfig {
                threshold: config.threshold,
                vocab_size: config.target_vocab_size,
                pretokenizer: *corpus.config(),
            },
            corpus: training,
            stats,
            tokens,
            by_surface,
            events: EventLog::new(),
            last_expansion: FxHashMap::default(),
            blocked: FxHashMap::default(),
            active: minimum,
            max_active: minimum,
            steps: 0,
            elapsed: start.elapsed(),
        })
    }

    pub fn corpus(&self) -> &TrainingCorpus {
        &self.corpus
    }

    pub fn statistics(&self) -> &PairStatistics {
        &self.stats
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    pub fn active_count(&self) -> usize {
        self.active
    }

    pub fn is_done(&self) -> bool {
        self.active >= self.config.target_vocab_size
    }

    fn removable(&self, id: TokenId) -> bool {
        id != UNK_ID && !self.tokens[id as usize].is_alphabet()
    }

    /// Picks the best pair whose result does not spell an active token.
    fn select_pair(&mut self) -> Result<(Pair, u64, String)> {
        loop {
            let (pair, freq) = self.stats.peek_best().ok_or(Error::TrainingExhausted)?;
            let surface = format!(
                "{}{}",
                self.tokens[pair.0 as usize].surface, self.tokens[pair.1 as usize].surface
            );
            match self.by_surface.get(&surface) {
                Some(&id) if self.tokens[id as usize].active => {
                    self.stats.suspend(pair);
                    self.blocked.entry(id).or_default().push(pair);
                }
                _ => return Ok((pair, freq, surface)),
            }
        }
    }

    /// One merge, plus any removals it triggers.
    pub fn step(&mut self) -> Result<StepReport> {
        let start = Instant::now();
        let ((x1, x2), pair_frequency, surface) = self.select_pair()?;
        let first_event = self.events.len();

        // IoS with pre-merge counts.
        let ios = |stats: &PairStatistics, member: TokenId| {
            pair_frequency as f64 / stats.token_freq(member) as f64
        };
        let remove_x1 = self.config.removal_enabled()
            && self.removable(x1)
            && ios(&self.stats, x1) >= self.config.threshold;
        let remove_x2 = self.config.removal_enabled()
            && x2 != x1
            && self.removable(x2)
            && ios(&self.stats, x2) >= self.config.threshold;

        let (result, restored) = match self.by_surface.get(&surface) {
            Some(&id) => {
                let original_merge_index = self.tokens[id as usize]
                    .created_by_event
                    .expect("removed tokens come from merges");
                self.events.push(EventKind::Restore {
                    token_id: id,
                    left_id: x1,
                    right_id: x2,
                    original_merge_index,
                });
                self.tokens[id as usize].active = true;
                (id, true)
            }
            None => {
                let id = self.tokens.len() as TokenId;
                let index = self.events.push(EventKind::Merge {
                    left_id: x1,
                    right_id: x2,
                    result_id: id,
                });
                self.tokens.push(Token {
                    id,
                    surface: surface.clone(),
                    active: true,
                    children: Some((x1, x2)),
                    created_by_event: Some(index),
                });
                self.by_surface.insert(surface, id);
                (id, false)
            }
        };
        self.active += 1;

        let mut removed = Vec::new();
        for (fire, token) in [(remove_x1, x1), (remove_x2, x2)] {
            if !fire {
                continue;
            }
            let expansion = removal_expansion(&self.tokens, &self.last_expansion, token);
            self.events.push(EventKind::Remove {
                token_id: token,
                expansion: expansion.clone(),
            });
            self.tokens[token as usize].active = false;
            self.last_expansion.insert(token, expansion);
            self.active -= 1;
            removed.push(token);
        }

        self.stats.apply_merge(&mut self.corpus, x1, x2, result)?;
        for &token in &removed {
            let expansion = &self.last_expansion[&token];
            self.stats
                .apply_removal(&mut self.corpus, token, expansion)?;
            if let Some(pairs) = self.blocked.remove(&token) {
                for p in pairs {
                    self.stats.resume(p);
                }
            }
        }

        self.max_active = self.max_active.max(self.active);
        self.steps += 1;
        self.elapsed += start.elapsed();
        Ok(StepReport {
            pair: (x1, x2),
            result,
            restored,
            removed,
            pair_frequency,
            events: first_event..self.events.len(),
        })
    }

    /// Steps until the active vocabulary reaches the target size.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            match self.step() {
                Ok(_) => {}
                Err(Error::TrainingExhausted) => {
                    return Err(Error::TargetUnreachable {
                        target: self.config.target_vocab_size,
                        reached: self.active,
                        max_achievable: self.max_active,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> TrainingSummary {
        let counts = self.events.counts();
        TrainingSummary {
            vocab_size: self.active,
            steps: self.steps,
            merges: counts.merges,
            removals: counts.removes,
            restores: counts.restores,
            elapsed: self.elapsed,
        }
    }

    /// Assembles the model from the current state.
    pub fn finish(&self) -> Result<TokenizerModel> {
        let mut config = self.model_config;
        config.vocab_size = self.active;
        TokenizerModel::new(config, self.tokens.clone(), self.events.clone())
    }
}

pub fn train(corpus: &Corpus, config: TrainerConfig) -> Result<TokenizerModel> {
    let mut trainer = Trainer::new(corpus, config)?;
    trainer.run()?;
    trainer.finish()
}
