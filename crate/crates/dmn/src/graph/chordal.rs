//! Chordality recognition and maximal clique enumeration.
//!
//! Recognition runs maximum cardinality search (ties broken by lowest node
//! index, so the ordering is deterministic) and then verifies the reversed
//! visit order as a perfect elimination ordering. A graph is chordal exactly
//! when the check passes. [`oracle_is_chordal`] is an intentionally separate
//! route for tests: it enumerates induced subgraphs and looks for a
//! chordless cycle directly.

use super::{Graph, GraphError};

/// Returns a perfect elimination ordering when the graph is chordal, `None`
/// otherwise.
pub fn is_chordal(g: &Graph) -> Option<Vec<u32>> {
    let order = mcs_elimination_order(g);
    if verify_elimination_order(g, &order) {
        Some(order)
    } else {
        None
    }
}

/// Maximum cardinality search. Visits the node with the most already-visited
/// neighbors (lowest index on ties); the elimination order is the reverse of
/// the visit order.
fn mcs_elimination_order(g: &Graph) -> Vec<u32> {
    let n = g.node_count();
    let adj = g.adjacency();
    let mut weight = vec![0usize; n];
    let mut visited = vec![false; n];
    let mut visit_order = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<usize> = None;
        for v in 0..n {
            if !visited[v] && best.map_or(true, |b| weight[v] > weight[b]) {
                best = Some(v);
            }
        }
        let v = best.expect("unvisited node exists");
        visited[v] = true;
        visit_order.push(v as u32);
        for &w in &adj[v] {
            if !visited[w as usize] {
                weight[w as usize] += 1;
            }
        }
    }
    visit_order.reverse();
    visit_order
}

/// Checks that `order` (a permutation of the nodes) is a perfect elimination
/// ordering: for each node, its later neighbors minus the earliest of them
/// must all be adjacent to that earliest one.
fn verify_elimination_order(g: &Graph, order: &[u32]) -> bool {
    let n = g.node_count();
    if order.len() != n {
        return false;
    }
    let mut position = vec![usize::MAX; n];
    for (i, &v) in order.iter().enumerate() {
        if position[v as usize] != usize::MAX {
            return false;
        }
        position[v as usize] = i;
    }
    if position.iter().any(|&p| p == usize::MAX) {
        return false;
    }
    let adj = g.adjacency();
    for &v in order {
        let mut later: Vec<u32> = adj[v as usize]
            .iter()
            .copied()
            .filter(|&w| position[w as usize] > position[v as usize])
            .collect();
        if later.len() < 2 {
            continue;
        }
        later.sort_unstable_by_key(|&w| position[w as usize]);
        let u = later[0];
        for &w in &later[1..] {
            if !g.contains(u, w) {
                return false;
            }
        }
    }
    true
}

/// Brute-force chordality check for graphs of at most 10 nodes: a graph is
/// chordal iff no vertex subset induces a cycle of length four or more
/// (connected, every induced degree exactly two).
pub fn oracle_is_chordal(g: &Graph) -> Result<bool, GraphError> {
    let n = g.node_count();
    if n > 10 {
        return Err(GraphError::TooLargeForOracle(n));
    }
    for mask in 0u32..(1 << n) {
        let nodes: Vec<u32> = (0..n as u32).filter(|&v| mask & (1 << v) != 0).collect();
        if nodes.len() < 4 {
            continue;
        }
        if induces_cycle(g, &nodes) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn induces_cycle(g: &Graph, nodes: &[u32]) -> bool {
    let mut degree = vec![0usize; nodes.len()];
    let mut edges = 0usize;
    for (i, &u) in nodes.iter().enumerate() {
        for (j, &v) in nodes.iter().enumerate().skip(i + 1) {
            if g.contains(u, v) {
                degree[i] += 1;
                degree[j] += 1;
                edges += 1;
            }
        }
    }
    if edges != nodes.len() || degree.iter().any(|&d| d != 2) {
        return false;
    }
    // Degree-2 with |E| = |V|: a disjoint union of cycles; connected means
    // exactly one cycle.
    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut reached = 1;
    while let Some(i) = stack.pop() {
        for (j, &v) in nodes.iter().enumerate() {
            if !seen[j] && g.contains(nodes[i], v) {
                seen[j] = true;
                reached += 1;
                stack.push(j);
            }
        }
    }
    reached == nodes.len()
}

/// Maximal cliques of a chordal graph, from a perfect elimination ordering.
/// Each clique is sorted ascending and the clique list is sorted
/// lexicographically, so output is deterministic. Errors if `order` is not a
/// perfect elimination ordering of `g`.
pub fn maximal_cliques(g: &Graph, order: &[u32]) -> Result<Vec<Vec<u32>>, GraphError> {
    if !verify_elimination_order(g, order) {
        return Err(GraphError::InvalidEliminationOrder);
    }
    let n = g.node_count();
    let adj = g.adjacency();
    let mut position = vec![0usize; n];
    for (i, &v) in order.iter().enumerate() {
        position[v as usize] = i;
    }
    let mut candidates: Vec<Vec<u32>> = Vec::with_capacity(n);
    for &v in order {
        let mut clique: Vec<u32> = adj[v as usize]
            .iter()
            .copied()
            .filter(|&w| position[w as usize] > position[v as usize])
            .collect();
        clique.push(v);
        clique.sort_unstable();
        candidates.push(clique);
    }
    // Prune candidates contained in another; the survivors are exactly the
    // maximal cliques.
    candidates.sort_unstable_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    let mut cliques: Vec<Vec<u32>> = Vec::new();
    'next: for cand in candidates {
        for kept in &cliques {
            if is_subset(&cand, kept) {
                continue 'next;
            }
        }
        cliques.push(cand);
    }
    cliques.sort_unstable();
    Ok(cliques)
}

/// `a` and `b` sorted ascending; true when every element of `a` is in `b`.
pub(crate) fn is_subset(a: &[u32], b: &[u32]) -> bool {
    if a.len() > b.len() {
        return false;
    }
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            return false;
        }
        j += 1;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn graph(n: usize, links: &[(u32, u32)]) -> Graph {
        Graph::from_links(n, links.iter().copied()).unwrap()
    }

    #[test]
    fn four_cycle_is_not_chordal() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert!(is_chordal(&g).is_none());
        assert!(!oracle_is_chordal(&g).unwrap());
    }

    #[test]
    fn complete_graph_is_chordal() {
        let mut links = Vec::new();
        for u in 0..4u32 {
            for v in (u + 1)..4 {
                links.push((u, v));
            }
        }
        let g = graph(4, &links);
        assert!(is_chordal(&g).is_some());
        assert!(oracle_is_chordal(&g).unwrap());
    }

    #[test]
    fn trees_are_chordal() {
        let g = graph(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]);
        assert!(is_chordal(&g).is_some());
        assert!(oracle_is_chordal(&g).unwrap());
    }

    #[test]
    fn five_cycle_with_one_chord_keeps_a_chordless_square() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]);
        assert!(!oracle_is_chordal(&g).unwrap());
        assert!(is_chordal(&g).is_none());
    }

    #[test]
    fn oracle_rejects_large_graphs() {
        let g = Graph::empty(11);
        assert!(matches!(
            oracle_is_chordal(&g),
            Err(GraphError::TooLargeForOracle(11))
        ));
    }

    fn random_graph(n: usize, edge_prob: f64, rng: &mut CounterRng) -> Graph {
        let mut links = Vec::new();
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if rng.next_bool(edge_prob) {
                    links.push((u, v));
                }
            }
        }
        Graph::from_links(n, links).unwrap()
    }

    #[test]
    fn recognition_matches_oracle_on_random_six_node_graphs() {
        let mut rng = CounterRng::new(6);
        for i in 0..156 {
            let p = 0.15 + 0.7 * (i as f64 / 156.0);
            let g = random_graph(6, p, &mut rng);
            assert_eq!(
                is_chordal(&g).is_some(),
                oracle_is_chordal(&g).unwrap(),
                "disagreement on {g}"
            );
        }
    }

    #[test]
    fn recognition_matches_oracle_exhaustively_on_four_nodes() {
        for mask in 0u32..(1 << 6) {
            let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
            let links: Vec<(u32, u32)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &l)| l)
                .collect();
            let g = Graph::from_links(4, links).unwrap();
            assert_eq!(is_chordal(&g).is_some(), oracle_is_chordal(&g).unwrap());
        }
    }

    #[test]
    fn cliques_of_simple_graphs() {
        let g = Graph::empty(4);
        let order = is_chordal(&g).unwrap();
        assert_eq!(
            maximal_cliques(&g, &order).unwrap(),
            vec![vec![0], vec![1], vec![2], vec![3]]
        );

        let g = graph(4, &[(0, 1), (0, 2), (1, 2), (2, 3)]);
        let order = is_chordal(&g).unwrap();
        assert_eq!(
            maximal_cliques(&g, &order).unwrap(),
            vec![vec![0, 1, 2], vec![2, 3]]
        );
    }

    #[test]
    fn cliques_of_two_triangles_sharing_an_edge() {
        // Edges 0-1, 0-2, 1-2, 1-3, 2-3: cliques {0,1,2} and {1,2,3}.
        let g = graph(4, &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]);
        let order = is_chordal(&g).unwrap();
        assert_eq!(
            maximal_cliques(&g, &order).unwrap(),
            vec![vec![0, 1, 2], vec![1, 2, 3]]
        );
    }

    #[test]
    fn cliques_reject_bad_order() {
        let g = graph(4, &[(0, 1), (0, 2), (1, 2), (2, 3)]);
        let bad = vec![3, 2, 1, 0, 0];
        assert!(matches!(
            maximal_cliques(&g, &bad),
            Err(GraphError::InvalidEliminationOrder)
        ));
    }

    #[test]
    fn every_edge_in_some_clique_and_cliques_not_nested() {
        let mut rng = CounterRng::new(88);
        let mut checked = 0;
        while checked < 50 {
            let g = random_graph(7, 0.45, &mut rng);
            let Some(order) = is_chordal(&g) else {
                continue;
            };
            checked += 1;
            let cliques = maximal_cliques(&g, &order).unwrap();
            for (u, v) in g.edges() {
                assert!(
                    cliques.iter().any(|c| is_subset(&[u, v], c)),
                    "edge {u}-{v} missing from cliques of {g}"
                );
            }
            for (i, a) in cliques.iter().enumerate() {
                for (j, b) in cliques.iter().enumerate() {
                    if i != j {
                        assert!(!is_subset(a, b), "nested cliques in {g}");
                    }
                }
            }
        }
    }
}
