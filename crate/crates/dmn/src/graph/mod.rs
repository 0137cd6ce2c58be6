//! Undirected graph structure, chordality recognition, maximal cliques, and
//! junction forests. Nodes are indices `0..n` aligned with a data scheme.

mod chordal;
mod forest;

pub use chordal::{is_chordal, maximal_cliques, oracle_is_chordal};
pub use forest::{implied_by_single_clique, junction_forest, JunctionForest};
pub(crate) use forest::implied_in_cliques;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("self-loop on node {0}")]
    SelfLoop(u32),
    #[error("node {0} out of range for graph of {1} nodes")]
    NodeOutOfRange(u32, usize),
    #[error("link {0}-{1} listed twice")]
    DuplicateLink(u32, u32),
    #[error("link {0}-{1} already present in the graph")]
    LinkAlreadyPresent(u32, u32),
    #[error("graph is not chordal")]
    NotChordal,
    #[error("not a perfect elimination ordering")]
    InvalidEliminationOrder,
    #[error("oracle limited to 10 nodes; graph has {0}")]
    TooLargeForOracle(usize),
    #[error("cliques do not admit a junction forest (running intersection unsatisfiable)")]
    RipViolation,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// An unordered node pair, stored with the smaller index first.
pub type Link = (u32, u32);

fn normalize_link(u: u32, v: u32) -> Link {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// A simple undirected graph over nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<Link>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_links<I>(n: usize, links: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = Link>,
    {
        let mut g = Graph::empty(n);
        for (u, v) in links {
            g.check_link(u, v)?;
            let link = normalize_link(u, v);
            if !g.edges.insert(link) {
                return Err(GraphError::DuplicateLink(link.0, link.1));
            }
        }
        Ok(g)
    }

    fn check_link(&self, u: u32, v: u32) -> Result<(), GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        for w in [u, v] {
            if w as usize >= self.n {
                return Err(GraphError::NodeOutOfRange(w, self.n));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, u: u32, v: u32) -> bool {
        self.edges.contains(&normalize_link(u, v))
    }

    /// Edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = Link> + '_ {
        self.edges.iter().copied()
    }

    /// A copy of the graph with the given links added. Errors if any link is
    /// already present, violating the `L` disjoint from `E` contract.
    pub fn with_links(&self, links: &LinkSet) -> Result<Graph, GraphError> {
        let mut g = self.clone();
        for &(u, v) in links.links() {
            g.check_link(u, v)?;
            if !g.edges.insert((u, v)) {
                return Err(GraphError::LinkAlreadyPresent(u, v));
            }
        }
        Ok(g)
    }

    /// Node pairs absent from the edge set, in lexicographic order.
    pub fn non_edges(&self) -> Vec<Link> {
        let mut out = Vec::new();
        for u in 0..self.n as u32 {
            for v in (u + 1)..self.n as u32 {
                if !self.edges.contains(&(u, v)) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        adj
    }

    /// Text form: `dmn-graph v1`, the node count, then one sorted `u v` pair
    /// per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("dmn-graph v1\n{}\n", self.n);
        for (u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Graph, GraphError> {
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, message: &str| GraphError::Parse {
            line: line + 1,
            message: message.to_string(),
        };
        let (i, magic) = lines.next().ok_or_else(|| parse_err(0, "empty file"))?;
        if magic.trim() != "dmn-graph v1" {
            return Err(parse_err(i, "expected `dmn-graph v1`"));
        }
        let (i, count) = lines.next().ok_or_else(|| parse_err(1, "missing node count"))?;
        let n: usize = count
            .trim()
            .parse()
            .map_err(|_| parse_err(i, "bad node count"))?;
        let mut links = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let u: u32 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(i, "bad edge line"))?;
            let v: u32 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(i, "bad edge line"))?;
            if parts.next().is_some() {
                return Err(parse_err(i, "trailing tokens on edge line"));
            }
            links.push((u, v));
        }
        Graph::from_links(n, links)
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self.edges.iter().map(|(u, v)| format!("{u}-{v}")).collect();
        write!(f, "graph(n={}, edges=[{}])", self.n, edges.join(","))
    }
}

/// A candidate set of links, all expected to be absent from the base graph.
/// Links are normalized and sorted; the set size is the lookahead level.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LinkSet {
    links: Vec<Link>,
}

impl LinkSet {
    pub fn new<I>(links: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = Link>,
    {
        let mut links: Vec<Link> = links
            .into_iter()
            .map(|(u, v)| {
                if u == v {
                    Err(GraphError::SelfLoop(u))
                } else {
                    Ok(normalize_link(u, v))
                }
            })
            .collect::<Result<_, _>>()?;
        links.sort_unstable();
        for w in links.windows(2) {
            if w[0] == w[1] {
                return Err(GraphError::DuplicateLink(w[0].0, w[0].1));
            }
        }
        Ok(LinkSet { links })
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Every node touched by some link, deduplicated and sorted.
    pub fn endpoints(&self) -> Vec<u32> {
        let mut nodes: Vec<u32> = self.links.iter().flat_map(|&(u, v)| [u, v]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }
}

impl fmt::Display for LinkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.links.is_empty() {
            return write!(f, "-");
        }
        let parts: Vec<String> = self.links.iter().map(|(u, v)| format!("{u}-{v}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_and_validation() {
        assert!(matches!(
            Graph::from_links(3, vec![(1, 1)]),
            Err(GraphError::SelfLoop(1))
        ));
        assert!(matches!(
            Graph::from_links(3, vec![(0, 5)]),
            Err(GraphError::NodeOutOfRange(5, 3))
        ));
        assert!(matches!(
            Graph::from_links(3, vec![(0, 1), (1, 0)]),
            Err(GraphError::DuplicateLink(0, 1))
        ));
        let g = Graph::from_links(4, vec![(2, 0), (1, 3)]).unwrap();
        assert!(g.contains(0, 2) && g.contains(3, 1));
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn non_edges_are_lexicographic() {
        let g = Graph::from_links(4, vec![(0, 1)]).unwrap();
        assert_eq!(g.non_edges(), vec![(0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn with_links_rejects_overlap() {
        let g = Graph::from_links(3, vec![(0, 1)]).unwrap();
        let ls = LinkSet::new(vec![(1, 0)]).unwrap();
        assert!(matches!(
            g.with_links(&ls),
            Err(GraphError::LinkAlreadyPresent(0, 1))
        ));
    }

    #[test]
    fn text_round_trip() {
        let g = Graph::from_links(5, vec![(3, 1), (0, 4), (2, 3)]).unwrap();
        let text = g.to_text();
        assert!(text.starts_with("dmn-graph v1\n5\n"));
        assert_eq!(Graph::from_text(&text).unwrap(), g);
        assert!(Graph::from_text("dmn-graph v2\n1\n").is_err());
    }

    #[test]
    fn link_set_normalizes() {
        let ls = LinkSet::new(vec![(3, 1), (0, 2)]).unwrap();
        assert_eq!(ls.links(), &[(0, 2), (1, 3)]);
        assert_eq!(ls.endpoints(), vec![0, 1, 2, 3]);
        assert_eq!(ls.to_string(), "0-2,1-3");
        assert!(LinkSet::new(vec![(1, 2), (2, 1)]).is_err());
    }
}
