use std::collections::{BTreeMap, BTreeSet};

use dner_core::formats::{
    parse_gold, parse_model_output, resolve_fragment_graph, FragmentGraph, ModelFormatKind,
    ParseOptions, ResolveMode,
};
use dner_core::{tally, vote, vote_record, Entity, Fragment, PredictionSet, TieRule, VoteConfig};
use proptest::prelude::*;

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (0usize..=10).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .collect();
        let m = pairs.len();
        (Just(n), prop::collection::vec(any::<bool>(), m)).prop_map(move |(n, keep)| {
            let edges = pairs
                .iter()
                .zip(keep)
                .filter(|(_, k)| *k)
                .map(|(e, _)| *e)
                .collect();
            (n, edges)
        })
    })
}

/// Node i covers tokens [3i, 3i+1].
fn build(n: usize, edges: &[(usize, usize)]) -> FragmentGraph {
    let nodes = (0..n)
        .map(|i| (Fragment::new(3 * i, 3 * i + 1).unwrap(), "ADE".to_string()))
        .collect();
    FragmentGraph::new(nodes, edges).unwrap()
}

fn entity_of(members: &[usize]) -> Entity {
    Entity::from_index_set("ADE", members.iter().flat_map(|&i| [3 * i, 3 * i + 1])).unwrap()
}

fn find(parent: &mut [usize], x: usize) -> usize {
    if parent[x] != x {
        let root = find(parent, parent[x]);
        parent[x] = root;
    }
    parent[x]
}

fn union_find_oracle(n: usize, edges: &[(usize, usize)]) -> Vec<Entity> {
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Entity> = groups.values().map(|g| entity_of(g)).collect();
    out.sort();
    out
}

fn clique_oracle(n: usize, edges: &[(usize, usize)]) -> Vec<Entity> {
    let adj: BTreeSet<(usize, usize)> = edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    let is_clique = |mask: u32| {
        (0..n).all(|a| {
            (0..n).all(|b| {
                a == b || mask & (1 << a) == 0 || mask & (1 << b) == 0 || adj.contains(&(a, b))
            })
        })
    };
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        if !is_clique(mask) {
            continue;
        }
        let maximal = (0..n).all(|v| mask & (1 << v) != 0 || !is_clique(mask | (1 << v)));
        if maximal {
            let members: Vec<usize> = (0..n).filter(|&v| mask & (1 << v) != 0).collect();
            out.push(entity_of(&members));
        }
    }
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn components_match_union_find((n, edges) in graph_strategy()) {
        let mut got = resolve_fragment_graph(&build(n, &edges), ResolveMode::Components).unwrap();
        got.sort();
        prop_assert_eq!(got, union_find_oracle(n, &edges));
    }

    #[test]
    fn cliques_match_brute_force((n, edges) in graph_strategy()) {
        let mut got = resolve_fragment_graph(&build(n, &edges), ResolveMode::Cliques).unwrap();
        got.sort();
        prop_assert_eq!(got, clique_oracle(n, &edges));
    }
}

fn candidates() -> Vec<Entity> {
    // Eight distinct entities over an eight-token sentence.
    [
        &[0][..],
        &[1, 2],
        &[0, 2],
        &[3],
        &[3, 4, 5],
        &[5, 7],
        &[6],
        &[1, 6, 7],
    ]
    .iter()
    .map(|ix| Entity::from_indices("ADE", ix).unwrap())
    .collect()
}

fn predictions_strategy() -> impl Strategy<Value = Vec<Vec<bool>>> {
    prop::collection::vec(prop::collection::vec(any::<bool>(), 8), 1..=5)
}

fn to_sets(picks: &[Vec<bool>]) -> Vec<PredictionSet> {
    let pool = candidates();
    picks
        .iter()
        .enumerate()
        .map(|(m, row)| {
            let ents = pool
                .iter()
                .zip(row)
                .filter(|(_, k)| **k)
                .map(|(e, _)| e.clone());
            PredictionSet::with_entities(format!("m{m}"), "r", ents)
        })
        .collect()
}

fn membership_oracle(
    picks: &[Vec<bool>],
    threshold: usize,
    include_half: bool,
) -> BTreeSet<Entity> {
    let pool = candidates();
    let m = picks.len();
    (0..pool.len())
        .filter(|&c| {
            let count = picks.iter().filter(|row| row[c]).count();
            count > 0 && (count >= threshold || (include_half && 2 * count == m))
        })
        .map(|c| pool[c].clone())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn majority_matches_oracle(picks in predictions_strategy()) {
        let sets = to_sets(&picks);
        let m = sets.len();
        let got = vote(&tally(&sets).unwrap(), &VoteConfig::default(), m);
        prop_assert_eq!(got, membership_oracle(&picks, m / 2 + 1, false));
    }

    #[test]
    fn explicit_threshold_and_tie_rule(picks in predictions_strategy(), t in 1usize..=5, include in any::<bool>()) {
        let sets = to_sets(&picks);
        let mut cfg = VoteConfig::with_threshold(t).unwrap();
        cfg.tie_rule = if include { TieRule::Include } else { TieRule::Exclude };
        if t > sets.len() {
            prop_assert!(vote_record(&sets, &cfg).is_err());
        } else {
            let got = vote_record(&sets, &cfg).unwrap();
            prop_assert_eq!(got, membership_oracle(&picks, t, include));
        }
    }

    #[test]
    fn raising_threshold_shrinks_output(picks in predictions_strategy(), t in 1usize..5) {
        let sets = to_sets(&picks);
        let tallies = tally(&sets).unwrap();
        let lo = vote(&tallies, &VoteConfig::with_threshold(t).unwrap(), sets.len());
        let hi = vote(&tallies, &VoteConfig::with_threshold(t + 1).unwrap(), sets.len());
        prop_assert!(hi.is_subset(&lo));
    }

    #[test]
    fn model_order_is_irrelevant(picks in predictions_strategy(), seed in any::<u64>()) {
        let sets = to_sets(&picks);
        let mut shuffled = sets.clone();
        let len = shuffled.len();
        shuffled.rotate_left((seed as usize) % len);
        if seed % 2 == 1 {
            shuffled.reverse();
        }
        prop_assert_eq!(
            vote_record(&sets, &VoteConfig::default()).unwrap(),
            vote_record(&shuffled, &VoteConfig::default()).unwrap()
        );
    }
}

fn options() -> ParseOptions {
    ParseOptions {
        default_label: "ADE".into(),
        resolve_mode: ResolveMode::Components,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn gold_parser_never_panics(text in "(#doc [a-z]{1,3}\n)?([a-z ,.]{0,12}\n([0-9, |A-Z]{0,12})?\n\n?){0,4}") {
        let _ = parse_gold(text.as_bytes(), "ADE");
    }

    #[test]
    fn prediction_parsers_never_panic(
        text in r#"\{("record_id": "r[0-9]", )?"(entities|ner|relations|entity_list|word2char_span|text)": (\[\[?[0-9, \-]{0,8}\]?\]|"[a-z ]{0,6}"|\[\{"(index|spans|type|char_spans)": \[[0-9, \[\]]{0,8}\]\}\])\}"#,
        k in 0usize..5,
    ) {
        let _ = parse_model_output(ModelFormatKind::ALL[k], text.as_bytes(), "m", &options());
    }

    #[test]
    fn prediction_parsers_accept_or_reject_bytes(bytes in prop::collection::vec(any::<u8>(), 0..64), k in 0usize..5) {
        let _ = parse_model_output(ModelFormatKind::ALL[k], bytes.as_slice(), "m", &options());
    }
}
