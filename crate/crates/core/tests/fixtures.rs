mod common;

use common::{corpus_of, full_coverage};
use picky_bpe::{
    build_corpus, compute_ios, Corpus, Error, EventKind, Execution, InferenceMode, PairStatistics,
    Tokenizer, TokenizerModel, Trainer, TrainerConfig, TrainingCorpus,
};

fn repeated(words: &[(&str, usize)]) -> Corpus {
    let lines: Vec<String> = words
        .iter()
        .flat_map(|&(w, n)| std::iter::repeat_n(w.to_string(), n))
        .collect();
    build_corpus(lines, full_coverage()).unwrap()
}

fn surfaces(model: &TokenizerModel, ids: &[u32]) -> Vec<String> {
    ids.iter().map(|&i| model.surface(i).to_string()).collect()
}

/// Steps until every training word is a single token.
fn train_until_whole(corpus: &Corpus, threshold: f64) -> (Trainer, Vec<picky_bpe::StepReport>) {
    let mut trainer = Trainer::new(corpus, TrainerConfig::new(threshold, 1000)).unwrap();
    let mut reports = Vec::new();
    while trainer.corpus().words().iter().any(|w| w.len() > 1) {
        reports.push(trainer.step().unwrap());
    }
    (trainer, reports)
}

fn should_would_could() -> Corpus {
    repeated(&[("should", 10), ("would", 9), ("could", 8)])
}

#[test]
fn ould_is_removed_once_after_the_last_word() {
    let corpus = should_would_could();
    let (trainer, reports) = train_until_whole(&corpus, 0.9);
    let ould = trainer
        .tokens()
        .iter()
        .find(|t| t.surface == "ould")
        .expect("ould merged")
        .id;
    let removals: Vec<usize> = trainer
        .events()
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Remove { token_id, .. } if token_id == ould))
        .map(|e| e.index)
        .collect();
    assert_eq!(removals.len(), 1);

    let step = reports
        .iter()
        .find(|r| r.events.contains(&removals[0]))
        .unwrap();
    let done = |w: &str| {
        let id = trainer.tokens().iter().find(|t| t.surface == w).unwrap().id;
        reports.iter().position(|r| r.result == id).unwrap()
    };
    let completing = [done("▁should"), done("▁would"), done("▁could")];
    let last = *completing.iter().max().unwrap();
    assert!(std::ptr::eq(step, &reports[last]));
    assert!(!trainer.tokens()[ould as usize].active);
}

#[test]
fn ould_survives_without_removal() {
    let (trainer, _) = train_until_whole(&should_would_could(), 1.0);
    let ould = trainer
        .tokens()
        .iter()
        .find(|t| t.surface == "ould")
        .unwrap();
    assert!(ould.active);
    assert_eq!(trainer.events().counts().removes, 0);
}

#[test]
fn entucky_has_high_ios_inside_kentucky() {
    // ids: 0 k, 1 entucky, 2 l
    let corpus = TrainingCorpus::from_words(vec![(vec![0, 1], 19), (vec![2, 1], 1)]);
    let stats = PairStatistics::new(&corpus, 3, Execution::Sequential);
    let ios = compute_ios(&stats, 1, 0, 1).unwrap();
    assert!((ios - 0.95).abs() < 1e-12);
    assert!(ios >= 0.9);
}

/// A corpus whose training starts with Merge(h,e), later removes "he", and
/// then merges (e, r). "there" itself is never seen during training.
fn appendix_corpus() -> Corpus {
    repeated(&[
        ("she", 100),
        ("he", 5),
        ("ta", 40),
        ("to", 40),
        ("t", 10),
        ("ber", 30),
    ])
}

fn appendix_model() -> TokenizerModel {
    let corpus = appendix_corpus();
    let mut trainer = Trainer::new(&corpus, TrainerConfig::new(0.9, 1000)).unwrap();
    let er = loop {
        let r = trainer.step().unwrap();
        if trainer.tokens()[r.result as usize].surface == "er" {
            break r.result;
        }
    };
    let he = trainer.tokens().iter().find(|t| t.surface == "he").unwrap();
    let merged = he.created_by_event.unwrap();
    let removed = trainer
        .events()
        .iter()
        .find(|e| matches!(e.kind, EventKind::Remove { token_id, .. } if token_id == he.id))
        .unwrap()
        .index;
    let er_index = trainer.tokens()[er as usize].created_by_event.unwrap();
    assert_eq!(merged, 0, "h+e should be the first merge");
    assert!(merged < removed && removed < er_index);
    trainer.finish().unwrap()
}

#[test]
fn event_order_and_post_removal_diverge_on_there() {
    let model = appendix_model();
    let tk = Tokenizer::new(&model);
    let event = tk.tokenize_word("there", InferenceMode::EventOrder);
    let post = tk.tokenize_word("there", InferenceMode::PostRemoval);
    assert_eq!(surfaces(&model, &event), ["▁t", "h", "er", "e"]);
    assert_eq!(surfaces(&model, &post), ["▁t", "h", "e", "r", "e"]);
}

#[test]
fn vocab_below_alphabet_is_rejected() {
    let corpus = corpus_of(&["abc"]);
    let err = Trainer::new(&corpus, TrainerConfig::new(0.9, 3))
        .err()
        .unwrap();
    assert!(matches!(err, Error::VocabBelowAlphabet { minimum: 5, .. }));
    assert!(err.to_string().contains("vocab size below alphabet"));
}

#[test]
fn empty_corpus_is_rejected() {
    let err = build_corpus(Vec::<String>::new(), full_coverage()).unwrap_err();
    assert!(matches!(err, Error::EmptyCorpus));
}
