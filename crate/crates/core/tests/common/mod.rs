//! Shared helpers for the integration tests: a deliberately naive vanilla
//! BPE, from-scratch recounts, corpus generators and the desk corpus.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::sync::OnceLock;

use flate2::read::GzDecoder;
use picky_bpe::{build_corpus, Corpus, PreTokenizerConfig, TrainingCorpus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Vanilla BPE written the slow way: every iteration recounts all pairs
/// from scratch and rewrites every word.
pub struct NaiveBpe {
    pub surfaces: Vec<String>,
    /// `(left, right, result)` in merge order.
    pub merges: Vec<(u32, u32, u32)>,
    /// Final segmentation of each corpus entry, same order as the corpus.
    pub words: Vec<Vec<u32>>,
    rank: HashMap<(u32, u32), (usize, u32)>,
}

/// Adds the non-overlapping `(a, b)` occurrences of one word, times
/// `weight`. Distinct pairs cannot overlap with themselves; a run of a
/// single symbol of length k holds k / 2 self-pairs.
fn add_pairs(word: &[u32], weight: u64, out: &mut HashMap<(u32, u32), u64>) {
    for w in word.windows(2) {
        if w[0] != w[1] {
            *out.entry((w[0], w[1])).or_insert(0) += weight;
        }
    }
    let mut i = 0;
    while i < word.len() {
        let mut j = i;
        while j < word.len() && word[j] == word[i] {
            j += 1;
        }
        let run = (j - i) as u64;
        if run >= 2 {
            *out.entry((word[i], word[i])).or_insert(0) += run / 2 * weight;
        }
        i = j;
    }
}

fn merge_left_to_right(word: &[u32], a: u32, b: u32, c: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == a && word[i + 1] == b {
            out.push(c);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    out
}

impl NaiveBpe {
    /// Trains until `target` tokens exist or no pair is left.
    pub fn train(corpus: &Corpus, target: usize) -> Self {
        let mut surfaces: Vec<String> = corpus.symbols().to_vec();
        let mut known: HashSet<String> = surfaces.iter().cloned().collect();
        let mut words: Vec<Vec<u32>> = corpus.entries().iter().map(|(w, _)| w.clone()).collect();
        let freqs: Vec<u64> = corpus.entries().iter().map(|(_, f)| *f).collect();
        let mut merges = Vec::new();
        let mut excluded: HashSet<(u32, u32)> = HashSet::new();
        while surfaces.len() < target {
            let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
            for (w, &f) in words.iter().zip(&freqs) {
                add_pairs(w, f, &mut counts);
            }
            // A pair spelling an existing token is never merged; surfaces
            // only grow, so once excluded it stays excluded.
            let best = loop {
                let best = counts
                    .iter()
                    .filter(|(p, _)| !excluded.contains(*p))
                    .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0)))
                    .map(|(&p, _)| p);
                match best {
                    Some(p)
                        if known.contains(&format!(
                            "{}{}",
                            surfaces[p.0 as usize], surfaces[p.1 as usize]
                        )) =>
                    {
                        excluded.insert(p);
                    }
                    other => break other,
                }
            };
            let Some((a, b)) = best else { break };
            let c = surfaces.len() as u32;
            let joined = format!("{}{}", surfaces[a as usize], surfaces[b as usize]);
            known.insert(joined.clone());
            surfaces.push(joined);
            merges.push((a, b, c));
            for w in words.iter_mut() {
                *w = merge_left_to_right(w, a, b, c);
            }
        }
        let rank = merges
            .iter()
            .enumerate()
            .map(|(r, &(a, b, c))| ((a, b), (r, c)))
            .collect();
        Self {
            surfaces,
            merges,
            words,
            rank,
        }
    }

    /// Classic rank-driven encoding: repeatedly merge the lowest-ranked
    /// adjacent pair present in the word.
    pub fn encode(&self, mut word: Vec<u32>) -> Vec<u32> {
        loop {
            let best = word
                .windows(2)
                .filter_map(|w| {
                    self.rank
                        .get(&(w[0], w[1]))
                        .map(|&(r, c)| (r, w[0], w[1], c))
                })
                .min();
            match best {
                Some((_, a, b, c)) => word = merge_left_to_right(&word, a, b, c),
                None => return word,
            }
        }
    }
}

/// Token frequencies recounted from the current corpus state.
pub fn recount_tokens(corpus: &TrainingCorpus) -> HashMap<u32, u64> {
    let mut out = HashMap::new();
    for (w, f) in corpus.iter() {
        for &t in w {
            *out.entry(t).or_insert(0) += f;
        }
    }
    out
}

/// Non-overlapping pair frequencies recounted from the current corpus state.
pub fn recount_pairs(corpus: &TrainingCorpus) -> HashMap<(u32, u32), u64> {
    let mut out = HashMap::new();
    for (w, f) in corpus.iter() {
        add_pairs(w, f, &mut out);
    }
    out
}

/// Random text over a small alphabet with a skewed word distribution and
/// at most `max_types` distinct words.
pub fn random_lines(seed: u64, max_types: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet: Vec<char> = "abcdeeeiinorstu".chars().collect();
    let n_alpha = rng.gen_range(3..=alphabet.len());
    let n_types = rng.gen_range(2..=max_types);
    let mut vocab = Vec::with_capacity(n_types);
    for _ in 0..n_types {
        let len = rng.gen_range(1..=9);
        let w: String = (0..len)
            .map(|_| alphabet[rng.gen_range(0..n_alpha)])
            .collect();
        vocab.push(w);
    }
    let n_lines = rng.gen_range(5..60);
    (0..n_lines)
        .map(|_| {
            let n = rng.gen_range(1..12);
            (0..n)
                .map(|_| {
                    // Squaring skews towards the front of the list.
                    let u: f64 = rng.gen();
                    vocab[((u * u) * vocab.len() as f64) as usize].as_str()
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

pub fn full_coverage() -> PreTokenizerConfig {
    PreTokenizerConfig::default().with_coverage(1.0)
}

pub fn corpus_of(lines: &[&str]) -> Corpus {
    build_corpus(lines.iter().copied(), full_coverage()).expect("corpus")
}

/// Every line of the bundled desk corpus.
pub fn desk_lines() -> &'static [String] {
    static LINES: OnceLock<Vec<String>> = OnceLock::new();
    LINES.get_or_init(|| {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/desk_corpus.txt.gz");
        let file = std::fs::File::open(path).expect("desk corpus present");
        BufReader::new(GzDecoder::new(file))
            .lines()
            .map(|l| l.expect("desk corpus is UTF-8"))
            .collect()
    })
}

/// Training and held-out halves of the desk corpus: every tenth line is
/// held out.
pub fn desk_split() -> (Vec<&'static str>, Vec<&'static str>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, l) in desk_lines().iter().enumerate() {
        if i % 10 == 9 {
            held.push(l.as_str());
        } else {
            train.push(l.as_str());
        }
    }
    (train, held)
}

/// Leading lines of the desk corpus adding up to roughly `bytes`.
pub fn desk_prefix(bytes: usize) -> Vec<&'static str> {
    let mut total = 0;
    desk_lines()
        .iter()
        .take_while(|l| {
            total += l.len() + 1;
            total <= bytes
        })
        .map(String::as_str)
        .collect()
}

/// Applies up to `n_events` random merges and removals to a random corpus
/// with at most 50 word types, comparing the incremental counts with a
/// recount after every event. Returns the number of events applied.
pub fn check_statistics(seed: u64, n_events: usize) -> Result<usize, String> {
    use picky_bpe::{Execution, PairStatistics};

    let lines = random_lines(seed, 50);
    let corpus = build_corpus(lines, full_coverage()).map_err(|e| e.to_string())?;
    let mut words = TrainingCorpus::from_corpus(&corpus);
    let exec = if seed.is_multiple_of(2) {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let mut stats = PairStatistics::new(&words, corpus.symbols().len(), exec);
    let mut children: Vec<Option<(u32, u32)>> = vec![None; corpus.symbols().len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);

    for applied in 0..n_events {
        let mut pairs: Vec<(u32, u32)> = recount_pairs(&words).into_keys().collect();
        pairs.sort_unstable();
        let tokens = recount_tokens(&words);
        let mut removable: Vec<u32> = tokens
            .keys()
            .copied()
            .filter(|&t| children[t as usize].is_some())
            .collect();
        removable.sort_unstable();

        let merge = !pairs.is_empty() && (removable.is_empty() || rng.gen_bool(0.7));
        if merge {
            let (a, b) = pairs[rng.gen_range(0..pairs.len())];
            let c = children.len() as u32;
            children.push(Some((a, b)));
            stats
                .apply_merge(&mut words, a, b, c)
                .map_err(|e| e.to_string())?;
        } else if let Some(&t) = removable.get(rng.gen_range(0..removable.len().max(1))) {
            let (a, b) = children[t as usize].unwrap();
            stats
                .apply_removal(&mut words, t, &[a, b])
                .map_err(|e| e.to_string())?;
        } else {
            return Ok(applied);
        }

        let want_pairs = recount_pairs(&words);
        let got_pairs: HashMap<(u32, u32), u64> = stats.pair_counts().collect();
        if want_pairs != got_pairs {
            return Err(format!(
                "seed {seed}: pair counts diverge after event {applied}"
            ));
        }
        let want_tokens = recount_tokens(&words);
        let got_tokens: HashMap<u32, u64> = stats.token_counts().collect();
        if want_tokens != got_tokens {
            return Err(format!(
                "seed {seed}: token counts diverge after event {applied}"
            ));
        }
        let best = want_pairs
            .iter()
            .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0)))
            .map(|(&p, &n)| (p, n));
        if stats.peek_best() != best {
            return Err(format!(
                "seed {seed}: best pair diverges after event {applied}"
            ));
        }
    }
    Ok(n_events)
}

/// Trains with removal disabled and compares merge order and encodings
/// with [`NaiveBpe`]. `extra` words are encoded too, to cover unseen input.
pub fn compare_with_oracle(corpus: &Corpus, size: usize, extra: &[&str]) -> Result<(), String> {
    use picky_bpe::{EventKind, InferenceMode, Tokenizer, TrainerConfig};

    let oracle = NaiveBpe::train(corpus, size);
    let size = size.min(oracle.surfaces.len());
    let model =
        picky_bpe::train(corpus, TrainerConfig::new(1.0, size)).map_err(|e| e.to_string())?;
    let merges: Vec<(u32, u32, u32)> = model
        .events()
        .iter()
        .map(|e| match e.kind {
            EventKind::Merge {
                left_id,
                right_id,
                result_id,
            } => Ok((left_id, right_id, result_id)),
            _ => Err(format!("unexpected event {e:?}")),
        })
        .collect::<Result<_, _>>()?;
    if merges != oracle.merges {
        let at = merges.iter().zip(&oracle.merges).position(|(a, b)| a != b);
        return Err(format!("merge sequences differ at {at:?}"));
    }
    let tk = Tokenizer::new(&model);
    for ((symbols, _), seg) in corpus.entries().iter().zip(&oracle.words) {
        let got = tk.tokenize_symbols(symbols.clone(), InferenceMode::EventOrder);
        if &got != seg || oracle.encode(symbols.clone()) != got {
            return Err(format!("encodings differ on {:?}", corpus.render(symbols)));
        }
    }
    for w in extra {
        let symbols = tk.symbols(w);
        if tk.tokenize_symbols(symbols.clone(), InferenceMode::EventOrder) != oracle.encode(symbols)
        {
            return Err(format!("encodings differ on unseen {w:?}"));
        }
    }
    Ok(())
}
