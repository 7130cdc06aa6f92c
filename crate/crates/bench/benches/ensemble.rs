use std::collections::{BTreeMap, BTreeSet};

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dner_bench::{arbitration_inputs, graph, predictions, random_entity, rng};
use dner_core::arbiter::{
    arbitrate_all, build_prompt, canonicalize_inputs, ArbiterSettings, ArbitrationRequest,
    MockClient, MockPolicy, PromptConfig,
};
use dner_core::evaluation::score_records;
use dner_core::formats::{resolve_fragment_graph, ResolveMode};
use dner_core::{vote_record, Entity, VoteConfig};

fn voting(c: &mut Criterion) {
    let mut r = rng(1);
    let sets = predictions(&mut r, "r", 5, 50, 40);
    c.bench_function("vote_record 5x50", |b| {
        b.iter(|| vote_record(&sets, &VoteConfig::default()).unwrap())
    });
}

fn prompt(c: &mut Criterion) {
    let mut r = rng(2);
    let inputs = arbitration_inputs(&mut r, 1, 5, 30);
    let config = PromptConfig::default();
    let input = &inputs[0];
    c.bench_function("canonicalize + build_prompt", |b| {
        b.iter(|| {
            let req =
                ArbitrationRequest::new(&input.record_id, &input.sentence, &input.predictions)
                    .unwrap();
            build_prompt(&canonicalize_inputs(&req), &config).unwrap()
        })
    });
}

fn graphs(c: &mut Criterion) {
    let mut r = rng(3);
    let g = graph(&mut r, 10, 0.5);
    c.bench_function("resolve components n=10", |b| {
        b.iter(|| resolve_fragment_graph(&g, ResolveMode::Components).unwrap())
    });
    c.bench_function("resolve cliques n=10", |b| {
        b.iter(|| resolve_fragment_graph(&g, ResolveMode::Cliques).unwrap())
    });
}

fn scoring(c: &mut Criterion) {
    let mut r = rng(4);
    let mut gold: BTreeMap<String, BTreeSet<Entity>> = BTreeMap::new();
    let mut pred = BTreeMap::new();
    for i in 0..1000 {
        let g: BTreeSet<Entity> = (0..3).map(|_| random_entity(&mut r, 25)).collect();
        let p: BTreeSet<Entity> = g
            .iter()
            .take(2)
            .cloned()
            .chain([random_entity(&mut r, 25)])
            .collect();
        gold.insert(format!("d:{i}"), g);
        pred.insert(format!("d:{i}"), p);
    }
    c.bench_function("score_records 1000", |b| {
        b.iter(|| score_records(&gold, &pred).unwrap())
    });
}

fn arbitration(c: &mut Criterion) {
    let mut r = rng(5);
    let inputs = arbitration_inputs(&mut r, 200, 5, 25);
    let settings = ArbiterSettings::default();
    c.bench_function("arbitrate_all 200 records, mock majority", |b| {
        b.iter_batched(
            || MockClient::policy(MockPolicy::Majority),
            |client| arbitrate_all(&inputs, &settings, &client).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, voting, prompt, graphs, scoring, arbitration);
criterion_main!(benches);
