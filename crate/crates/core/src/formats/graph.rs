//! Fragment graphs: nodes are labelled token spans, edges link spans that
//! belong to the same entity.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::model::{Entity, Fragment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolveMode {
    /// Every connected component is one entity.
    #[default]
    Components,
    /// Every maximal clique is one entity.
    Cliques,
}

impl FromStr for ResolveMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "components" => Ok(Self::Components),
            "cliques" => Ok(Self::Cliques),
            other => Err(format!(
                "unknown resolve mode {other:?} (expected components or cliques)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentGraph {
    nodes: Vec<(Fragment, String)>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl FragmentGraph {
    pub fn new(
        nodes: Vec<(Fragment, String)>,
        edges: &[(usize, usize)],
    ) -> Result<Self, FormatError> {
        let mut adjacency = vec![BTreeSet::new(); nodes.len()];
        for &(a, b) in edges {
            if a >= nodes.len() || b >= nodes.len() {
                return Err(FormatError::Graph(format!(
                    "edge ({a},{b}) references a missing node (have {})",
                    nodes.len()
                )));
            }
            if a == b {
                return Err(FormatError::Graph(format!("self-loop on node {a}")));
            }
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        Ok(Self { nodes, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn neighbors(&self, node: usize) -> &BTreeSet<usize> {
        &self.adjacency[node]
    }

    /// Connected components as sorted node lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        for root in 0..self.nodes.len() {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let mut stack = vec![root];
            let mut members = Vec::new();
            while let Some(n) = stack.pop() {
                members.push(n);
                for &m in &self.adjacency[n] {
                    if !seen[m] {
                        seen[m] = true;
                        stack.push(m);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Maximal cliques (Bron–Kerbosch with pivoting), each sorted, in
    /// lexicographic order.
    pub fn maximal_cliques(&self) -> Vec<Vec<usize>> {
        let mut cliques = Vec::new();
        if self.nodes.is_empty() {
            return cliques;
        }
        let candidates: BTreeSet<usize> = (0..self.nodes.len()).collect();
        self.bron_kerbosch(&mut Vec::new(), candidates, BTreeSet::new(), &mut cliques);
        for clique in &mut cliques {
            clique.sort_unstable();
        }
        cliques.sort();
        cliques
    }

    fn bron_kerbosch(
        &self,
        current: &mut Vec<usize>,
        mut candidates: BTreeSet<usize>,
        mut excluded: BTreeSet<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if candidates.is_empty() {
            if excluded.is_empty() {
                out.push(current.clone());
            }
            return;
        }
        let pivot = candidates
            .union(&excluded)
            .copied()
            .max_by_key(|&u| candidates.intersection(&self.adjacency[u]).count())
            .expect("candidates is non-empty");
        let branch: Vec<usize> = candidates
            .difference(&self.adjacency[pivot])
            .copied()
            .collect();
        for v in branch {
            let neighbors = &self.adjacency[v];
            current.push(v);
            self.bron_kerbosch(
                current,
                candidates.intersection(neighbors).copied().collect(),
                excluded.intersection(neighbors).copied().collect(),
                out,
            );
            current.pop();
            candidates.remove(&v);
            excluded.insert(v);
        }
    }

    fn entity_from_nodes(&self, members: &[usize]) -> Result<Entity, FormatError> {
        let label = &self.nodes[members[0]].1;
        let indices = members.iter().flat_map(|&n| self.nodes[n].0.indices());
        Ok(Entity::from_index_set(label.clone(), indices)?)
    }
}

/// Turns a fragment graph into entities. Labels must agree inside every
/// connected component in both modes.
pub fn resolve_fragment_graph(
    graph: &FragmentGraph,
    mode: ResolveMode,
) -> Result<Vec<Entity>, FormatError> {
    let components = graph.components();
    for comp in &components {
        let labels: BTreeSet<&str> = comp.iter().map(|&n| graph.nodes[n].1.as_str()).collect();
        if labels.len() > 1 {
            let mut it = labels.iter();
            let a = it.next().unwrap().to_string();
            let b = it.next().unwrap().to_string();
            return Err(FormatError::LabelConflict(a, b));
        }
    }
    let groups = match mode {
        ResolveMode::Components => components,
        ResolveMode::Cliques => graph.maximal_cliques(),
    };
    groups.iter().map(|g| graph.entity_from_nodes(g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(s: usize, e: usize) -> (Fragment, String) {
        (Fragment::new(s, e).unwrap(), "ADE".to_string())
    }

    fn abc(edges: &[(usize, usize)]) -> FragmentGraph {
        FragmentGraph::new(vec![node(0, 0), node(2, 2), node(4, 4)], edges).unwrap()
    }

    #[test]
    fn empty_graph_has_no_entities() {
        let g = FragmentGraph::new(vec![], &[]).unwrap();
        assert!(g.maximal_cliques().is_empty());
        assert!(resolve_fragment_graph(&g, ResolveMode::Cliques)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn triangle_is_one_entity_in_both_modes() {
        let g = abc(&[(0, 1), (1, 2), (0, 2)]);
        let expected = vec![Entity::from_indices("ADE", &[0, 2, 4]).unwrap()];
        assert_eq!(
            resolve_fragment_graph(&g, ResolveMode::Components).unwrap(),
            expected
        );
        assert_eq!(
            resolve_fragment_graph(&g, ResolveMode::Cliques).unwrap(),
            expected
        );
    }

    #[test]
    fn path_splits_into_two_cliques() {
        let g = abc(&[(0, 1), (1, 2)]);
        assert_eq!(
            resolve_fragment_graph(&g, ResolveMode::Cliques).unwrap(),
            vec![
                Entity::from_indices("ADE", &[0, 2]).unwrap(),
                Entity::from_indices("ADE", &[2, 4]).unwrap(),
            ]
        );
        assert_eq!(
            resolve_fragment_graph(&g, ResolveMode::Components)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn isolated_node_is_singleton() {
        let g = FragmentGraph::new(vec![node(3, 5)], &[]).unwrap();
        for mode in [ResolveMode::Components, ResolveMode::Cliques] {
            assert_eq!(
                resolve_fragment_graph(&g, mode).unwrap(),
                vec![Entity::from_indices("ADE", &[3, 4, 5]).unwrap()]
            );
        }
    }

    #[test]
    fn label_conflict_detected() {
        let nodes = vec![
            node(0, 0),
            (Fragment::new(2, 2).unwrap(), "Disorder".into()),
        ];
        let g = FragmentGraph::new(nodes, &[(0, 1)]).unwrap();
        assert!(matches!(
            resolve_fragment_graph(&g, ResolveMode::Components),
            Err(FormatError::LabelConflict(..))
        ));
    }

    #[test]
    fn invalid_edges_rejected() {
        assert!(FragmentGraph::new(vec![node(0, 0)], &[(0, 0)]).is_err());
        assert!(FragmentGraph::new(vec![node(0, 0)], &[(0, 1)]).is_err());
    }

    #[test]
    fn adjacent_fragments_merge() {
        let g = FragmentGraph::new(vec![node(0, 1), node(2, 3)], &[(0, 1)]).unwrap();
        let got = resolve_fragment_graph(&g, ResolveMode::Components).unwrap();
        assert_eq!(got[0].fragments().len(), 1);
    }
}
