//! Junction forests over the maximal cliques of a chordal graph, and the
//! single-clique implication test that gates candidate link sets.

use super::chordal::{is_subset, maximal_cliques};
use super::{is_chordal, Graph, GraphError, LinkSet};

/// A forest over clique indices whose tree edges carry sepsets (the
/// intersection of the two cliques). Satisfies the running intersection
/// property: for any two cliques in one tree, their intersection is
/// contained in every clique on the path between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JunctionForest {
    cliques: Vec<Vec<u32>>,
    edges: Vec<(usize, usize, Vec<u32>)>,
}

impl JunctionForest {
    /// Builds the forest for a graph: chordality check, maximal cliques,
    /// then [`junction_forest`].
    pub fn of(g: &Graph) -> Result<JunctionForest, GraphError> {
        let order = is_chordal(g).ok_or(GraphError::NotChordal)?;
        let cliques = maximal_cliques(g, &order)?;
        junction_forest(&cliques)
    }

    /// Cliques in lexicographic order.
    pub fn cliques(&self) -> &[Vec<u32>] {
        &self.cliques
    }

    /// Tree edges as `(clique index, clique index, sepset)`.
    pub fn edges(&self) -> &[(usize, usize, Vec<u32>)] {
        &self.edges
    }

    pub fn sepsets(&self) -> impl Iterator<Item = &[u32]> {
        self.edges.iter().map(|(_, _, s)| s.as_slice())
    }

    /// Indices of the tree each clique belongs to (labels are the smallest
    /// clique index in the component).
    pub fn tree_labels(&self) -> Vec<usize> {
        let mut dsu = Dsu::new(self.cliques.len());
        for &(a, b, _) in &self.edges {
            dsu.union(a, b);
        }
        (0..self.cliques.len()).map(|i| dsu.find(i)).collect()
    }
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // Root at the smaller index so component labels are stable.
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

fn intersect_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Builds a junction forest as a maximum-weight spanning forest of the
/// clique graph, edge weight being the intersection size. Ties break by the
/// lower clique index pair, so the forest is deterministic; only nonempty
/// intersections become tree edges. Errors if the cliques cannot satisfy the
/// running intersection property.
pub fn junction_forest(cliques: &[Vec<u32>]) -> Result<JunctionForest, GraphError> {
    let mut cliques: Vec<Vec<u32>> = cliques
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.sort_unstable();
            c.dedup();
            c
        })
        .collect();
    cliques.sort_unstable();

    let mut candidate_edges: Vec<(usize, usize, Vec<u32>)> = Vec::new();
    for i in 0..cliques.len() {
        for j in (i + 1)..cliques.len() {
            let sep = intersect_sorted(&cliques[i], &cliques[j]);
            if !sep.is_empty() {
                candidate_edges.push((i, j, sep));
            }
        }
    }
    // Weight descending, then lexicographic index pair.
    candidate_edges.sort_unstable_by(|a, b| {
        b.2.len()
            .cmp(&a.2.len())
            .then_with(|| (a.0, a.1).cmp(&(b.0, b.1)))
    });
    let mut dsu = Dsu::new(cliques.len());
    let mut edges = Vec::new();
    for (i, j, sep) in candidate_edges {
        if dsu.union(i, j) {
            edges.push((i, j, sep));
        }
    }

    // Running intersection holds iff every node appears in exactly
    // (occurrences - 1) sepset slots, i.e. its cliques form a connected
    // subtree. Equivalent count form: sum of clique sizes minus sum of
    // sepset sizes equals the number of distinct nodes.
    let clique_size: usize = cliques.iter().map(|c| c.len()).sum();
    let sepset_size: usize = edges.iter().map(|(_, _, s)| s.len()).sum();
    let mut nodes: Vec<u32> = cliques.iter().flatten().copied().collect();
    nodes.sort_unstable();
    nodes.dedup();
    if clique_size - sepset_size != nodes.len() {
        return Err(GraphError::RipViolation);
    }
    Ok(JunctionForest { cliques, edges })
}

/// Looks for a maximal clique of `g_star` of size at most `max_clique` that
/// contains both endpoints of every link in `links`. Returns the first
/// qualifying clique in the deterministic clique order; which witness is
/// returned does not affect scoring. `g_star` must already contain the
/// links (it is the candidate graph) and be chordal.
pub fn implied_by_single_clique(
    g_star: &Graph,
    links: &LinkSet,
    max_clique: usize,
) -> Option<Vec<u32>> {
    let order = is_chordal(g_star)?;
    let cliques = maximal_cliques(g_star, &order).ok()?;
    implied_in_cliques(&cliques, links, max_clique).map(|i| cliques[i].clone())
}

/// Same test against a precomputed clique list; returns the clique index.
pub(crate) fn implied_in_cliques(
    cliques: &[Vec<u32>],
    links: &LinkSet,
    max_clique: usize,
) -> Option<usize> {
    let endpoints = links.endpoints();
    cliques
        .iter()
        .position(|c| c.len() <= max_clique && is_subset(&endpoints, c))
}
