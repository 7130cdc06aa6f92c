//! Synthetic workloads for the benchmarks.

use std::collections::BTreeSet;

use dner_core::arbiter::ArbitrationInput;
use dner_core::formats::FragmentGraph;
use dner_core::{Entity, Fragment, PredictionSet, Sentence};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn sentence(len: usize) -> Sentence {
    Sentence::from_tokens((0..len).map(|i| format!("tok{i}"))).expect("non-empty tokens")
}

/// An entity of one to three short fragments inside `len` tokens.
pub fn random_entity(rng: &mut StdRng, len: usize) -> Entity {
    let parts = rng.random_range(1..=3);
    let mut ix = BTreeSet::new();
    for _ in 0..parts {
        let start = rng.random_range(0..len);
        let width = rng.random_range(1..=3);
        ix.extend(start..(start + width).min(len));
    }
    Entity::from_index_set("ADE", ix).expect("non-empty index set")
}

/// `models` prediction sets for one record, each keeping a random share of a
/// common pool of `pool` candidates.
pub fn predictions(
    rng: &mut StdRng,
    record_id: &str,
    models: usize,
    pool: usize,
    len: usize,
) -> Vec<PredictionSet> {
    let candidates: Vec<Entity> = (0..pool).map(|_| random_entity(rng, len)).collect();
    (0..models)
        .map(|m| {
            let keep = candidates.iter().filter(|_| rng.random_bool(0.6)).cloned();
            PredictionSet::with_entities(format!("m{m}"), record_id, keep)
        })
        .collect()
}

pub fn arbitration_inputs(
    rng: &mut StdRng,
    records: usize,
    models: usize,
    len: usize,
) -> Vec<ArbitrationInput> {
    let s = sentence(len);
    (0..records)
        .map(|r| {
            let id = format!("doc:{r}");
            ArbitrationInput {
                predictions: predictions(rng, &id, models, 6, len),
                record_id: id,
                sentence: s.clone(),
            }
        })
        .collect()
}

/// A graph over `n` single-token fragments with edge probability `p`.
pub fn graph(rng: &mut StdRng, n: usize, p: f64) -> FragmentGraph {
    let nodes = (0..n)
        .map(|i| {
            (
                Fragment::new(2 * i, 2 * i).expect("valid"),
                "ADE".to_string(),
            )
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    FragmentGraph::new(nodes, &edges).expect("edges within range")
}
