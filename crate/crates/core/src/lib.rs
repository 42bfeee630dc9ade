//! Byte-pair encoding that prunes its own intermediate tokens.
//!
//! Training follows ordinary BPE, but after each merge it checks how often
//! each side of the merged pair occurred outside that pair. A token that is
//! almost always part of the pair (its *intersection over self* reaches the
//! threshold) is removed from the vocabulary on the spot. Merges, removals
//! and restorations are recorded in one event log, and inference replays
//! that log word by word, so encoding a training word reproduces exactly
//! the segmentation training ended with.
//!
//! ```
//! use picky_bpe::{build_corpus, train, InferenceMode, PreTokenizerConfig, Tokenizer, TrainerConfig};
//!
//! let corpus = build_corpus(
//!     ["should would could should would could"],
//!     PreTokenizerConfig::default().with_coverage(1.0),
//! )?;
//! let model = train(&corpus, TrainerConfig::new(0.9, 14))?;
//! let tokenizer = Tokenizer::new(&model);
//! let ids = tokenizer.encode("would could", InferenceMode::EventOrder);
//! assert_eq!(tokenizer.decode(&ids)?, "would could");
//! # Ok::<(), picky_bpe::Error>(())
//! ```
//!
//! The `parallel` feature (on by default) lets corpus counting, statistics
//! initialization, large rewrite batches and batch encoding run on rayon.
//! Results are identical either way.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod exec;
pub mod inference;
pub mod model;
pub mod statistics;
pub mod trainer;

pub use corpus::{
    build_corpus, build_corpus_from_reader, Corpus, CorpusBuilder, PreTokenizerConfig,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use inference::{
    decode, encode, tokenize_word, tokenize_word_postremoval, InferenceMode, Tokenizer,
};
pub use model::{Event, EventKind, EventLog, ModelConfig, Pair, Token, TokenId, TokenizerModel};
pub use statistics::{PairStatistics, TrainingCorpus};
pub use trainer::{compute_ios, train, StepReport, Trainer, TrainerConfig};
