//! Parallel and sequential paths on the two hot loops: batched beam search
//! and the λ-weighted backward pass.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use seqreward::decoding::{beam_search_batch, BeamConfig};
use seqreward::model::{init_params, weighted_nll_backward, ScoreKind, WeightedItem};
use seqreward::par;
use seqreward::synthdata::{generate_corpus, Split, TaskSpec};

fn setup() -> (seqreward::model::ModelParams, Vec<seqreward::synthdata::SequencePair>) {
    let corpus = generate_corpus(&TaskSpec {
        corpus_size: 400,
        ..TaskSpec::default()
    })
    .unwrap();
    let params = init_params(corpus.vocab.size, 32, 32, 1).unwrap();
    (params, corpus.split_pairs(Split::Train).into_iter().take(64).collect())
}

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", true), ("sequential", false)]
}

fn beam(c: &mut Criterion) {
    let (params, pairs) = setup();
    let sources: Vec<_> = pairs.iter().map(|p| p.source.clone()).collect();
    let cfg = BeamConfig::new(10, 10, true);
    let mut group = c.benchmark_group("beam_search_batch");
    group.sample_size(10);
    for (name, on) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::set_parallel(on);
            b.iter(|| beam_search_batch(&params, &sources, &cfg).unwrap());
        });
    }
    group.finish();
    par::set_parallel(true);
}

fn backward(c: &mut Criterion) {
    let (params, pairs) = setup();
    let items: Vec<WeightedItem> = pairs
        .iter()
        .map(|p| WeightedItem::new(&p.source, &p.reference, -1.0, ScoreKind::Total))
        .collect();
    let mut group = c.benchmark_group("weighted_nll_backward");
    group.sample_size(10);
    for (name, on) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::set_parallel(on);
            b.iter(|| weighted_nll_backward(&params, &items).unwrap());
        });
    }
    group.finish();
    par::set_parallel(true);
}

criterion_group!(benches, beam, backward);
criterion_main!(benches);
