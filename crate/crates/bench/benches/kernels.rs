use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ragpipe_bench::{page, reservoir, result_groups, words};
use ragpipe_core::retriever::bm25::tokenize;
use ragpipe_core::retriever::distill::distill_text;
use ragpipe_core::retriever::{arrange, bm25_score, ArrangementOrder, Bm25Params, CorpusStats};
use ragpipe_core::{Embedder, HashingEmbedder, TriggerConfig};

fn bm25(c: &mut Criterion) {
    let params = Bm25Params::default();
    let passages: Vec<Vec<String>> = (0..200).map(|i| tokenize(&words(36, i))).collect();
    let stats = CorpusStats::from_passages(&passages);
    let query = tokenize("castle river founder");
    c.bench_function("bm25/score_200_passages", |b| {
        b.iter(|| {
            passages
                .iter()
                .map(|p| bm25_score(black_box(&query), p, &stats, &params))
                .sum::<f64>()
        })
    });

    let mut group = c.benchmark_group("bm25/distill");
    for n in [50, 500] {
        let text = page(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &text, |b, text| {
            b.iter(|| distill_text(black_box(text), "castle river founder", &params).unwrap())
        });
    }
    group.finish();
}

fn arrangement(c: &mut Criterion) {
    let groups = result_groups(3, 10);
    for order in [ArrangementOrder::Sequential, ArrangementOrder::Mixed] {
        c.bench_function(&format!("arrange/{}_3x10_cap15", order.as_str()), |b| {
            b.iter(|| arrange(black_box(&groups), order, 15))
        });
    }
}

fn popularity(c: &mut Criterion) {
    let cfg = TriggerConfig::default();
    let mut group = c.benchmark_group("reservoir/popularity");
    for n in [100, 1000, 10_000] {
        let r = reservoir(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &r, |b, r| {
            b.iter(|| r.lookup(black_box("castle river founder"), &cfg))
        });
    }
    group.finish();
}

fn embed(c: &mut Criterion) {
    let e = HashingEmbedder::default();
    let short = words(6, 1);
    let long = words(300, 2);
    c.bench_function("embed/hashing_6_words", |b| b.iter(|| e.embed(black_box(&short)).unwrap()));
    c.bench_function("embed/hashing_300_words", |b| b.iter(|| e.embed(black_box(&long)).unwrap()));
}

criterion_group!(benches, bm25, arrangement, popularity, embed);
criterion_main!(benches);
