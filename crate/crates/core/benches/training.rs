//! Sequential vs parallel execution for corpus building, training and
//! encoding. Uses the first megabyte of the bundled test corpus.

use std::io::{BufRead, BufReader};

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flate2::read::GzDecoder;
use picky_bpe::{
    CorpusBuilder, Execution, InferenceMode, PreTokenizerConfig, Tokenizer, Trainer, TrainerConfig,
};

const STRATEGIES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn lines() -> Vec<String> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/desk_corpus.txt.gz");
    let reader = BufReader::new(GzDecoder::new(std::fs::File::open(path).unwrap()));
    let mut total = 0;
    reader
        .lines()
        .map(Result::unwrap)
        .take_while(|l| {
            total += l.len() + 1;
            total <= 1_000_000
        })
        .collect()
}

fn build(lines: &[String], exec: Execution) -> picky_bpe::Corpus {
    let mut b = CorpusBuilder::new(PreTokenizerConfig::default())
        .unwrap()
        .with_execution(exec);
    for l in lines {
        b.push_line(l.as_str());
    }
    b.finish().unwrap()
}

fn benches(c: &mut Criterion) {
    let lines = lines();

    let mut g = c.benchmark_group("corpus");
    for (name, exec) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| build(&lines, exec))
        });
    }
    g.finish();

    let corpus = build(&lines, Execution::Parallel);
    let mut g = c.benchmark_group("train_2000_t0.7");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                let mut t =
                    Trainer::new(&corpus, TrainerConfig::new(0.7, 2000).with_execution(exec))
                        .unwrap();
                t.run().unwrap();
                t.active_count()
            })
        });
    }
    g.finish();

    let model = picky_bpe::train(&corpus, TrainerConfig::new(0.7, 2000)).unwrap();
    let mut g = c.benchmark_group("encode");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            // Fresh tokenizer per iteration so the word cache starts empty.
            b.iter(|| {
                Tokenizer::new(&model)
                    .encode_lines(&lines, InferenceMode::EventOrder, exec)
                    .len()
            })
        });
    }
    g.finish();
}

criterion_group!(training, benches);
criterion_main!(training);
