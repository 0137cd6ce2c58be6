//! The multi-link lookahead search.
//!
//! Starting from the empty graph, the search proceeds in levels: at level
//! `i`, every pass enumerates all sets of `i` absent links, keeps the sets
//! whose addition leaves the graph chordal with the new links implied by a
//! single clique of bounded size, scores them by entropy decrement, and
//! adopts the best if it beats the threshold. A level ends with the first
//! pass that adopts nothing; the search ends after the last level.
//!
//! Candidate evaluation is delegated to a [`PassExecutor`], whose contract
//! is to return exactly what in-order sequential evaluation returns. The
//! parallel executors live in [`crate::runtime`]; their outputs are
//! byte-identical to [`SequentialExecutor`].

use std::sync::Arc;

use thiserror::Error;

use crate::data::{DataError, FrequencyTable};
use crate::graph::{
    implied_in_cliques, is_chordal, junction_forest, maximal_cliques, Graph, GraphError,
    JunctionForest, Link, LinkSet,
};
use crate::score::{
    decrement_between_forests, is_significant, EntropyCache, LocalMarginals, MarginalSource,
    ScoreError, Threshold,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("pass would enumerate {total} candidates, above the cap of {cap}")]
    CandidateCap { total: u64, cap: u64 },
    #[error("candidate space of {0} sets cannot be indexed")]
    CandidateOverflow(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("worker runtime failed: {0}")]
    Runtime(String),
}

/// Search parameters: the clique-size bound, the deepest lookahead level,
/// the significance threshold in bits, and an optional cap on candidates
/// per pass as a safety valve for explosive levels.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    max_clique: usize,
    lookahead: usize,
    threshold: Threshold,
    candidate_cap: Option<u64>,
}

impl SearchConfig {
    pub fn new(
        max_clique: usize,
        lookahead: usize,
        threshold: Threshold,
    ) -> Result<Self, SearchError> {
        if max_clique < 2 {
            return Err(SearchError::Config(format!(
                "max clique size must be at least 2, got {max_clique}"
            )));
        }
        let limit = max_clique * (max_clique - 1) / 2;
        if lookahead < 1 || lookahead > limit {
            return Err(SearchError::Config(format!(
                "lookahead must be in 1..={limit} for clique size {max_clique}, got {lookahead}"
            )));
        }
        Ok(SearchConfig {
            max_clique,
            lookahead,
            threshold,
            candidate_cap: None,
        })
    }

    pub fn with_candidate_cap(mut self, cap: u64) -> Self {
        self.candidate_cap = Some(cap);
        self
    }

    pub fn max_clique(&self) -> usize {
        self.max_clique
    }

    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    pub fn threshold(&self) -> &Threshold {
        &self.threshold
    }

    pub fn candidate_cap(&self) -> Option<u64> {
        self.candidate_cap
    }
}

/// A scored candidate: the link set, its position in the deterministic
/// enumeration, and the entropy decrement when the candidate is valid
/// (chordal and clique-implied).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMove {
    pub index: u64,
    pub links: LinkSet,
    pub dh: Option<f64>,
}

impl CandidateMove {
    pub fn is_valid(&self) -> bool {
        self.dh.is_some()
    }
}

fn choose(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for j in 0..k {
        out = out.saturating_mul((n - j) as u128) / (j + 1) as u128;
    }
    out
}

/// All `level`-subsets of the non-edges of a graph, in lexicographic order
/// by sorted link pairs. Nothing is materialized; candidates are unranked
/// from their index, so any worker can enumerate any index range.
#[derive(Debug, Clone)]
pub struct CandidateSpace {
    non_edges: Vec<Link>,
    level: usize,
    total: u64,
}

impl CandidateSpace {
    pub fn new(graph: &Graph, level: usize) -> Result<Self, SearchError> {
        let non_edges = graph.non_edges();
        let total = choose(non_edges.len() as u64, level as u64);
        if total > u64::MAX as u128 {
            return Err(SearchError::CandidateOverflow(total as f64));
        }
        Ok(CandidateSpace {
            non_edges,
            level,
            total: total as u64,
        })
    }

    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// The candidate at a given rank.
    pub fn link_set(&self, index: u64) -> LinkSet {
        debug_assert!(index < self.total);
        let n = self.non_edges.len() as u64;
        let mut rank = index;
        let mut links = Vec::with_capacity(self.level);
        let mut x = 0u64;
        let mut left = self.level as u64;
        while left > 0 {
            let with_x = choose(n - 1 - x, left - 1);
            if (rank as u128) < with_x {
                links.push(self.non_edges[x as usize]);
                left -= 1;
            } else {
                rank -= with_x as u64;
            }
            x += 1;
        }
        LinkSet::new(links).expect("non-edge combinations are valid link sets")
    }

    /// Rank of a link set drawn from this space, if it is one.
    pub fn rank_of(&self, links: &LinkSet) -> Option<u64> {
        if links.len() != self.level {
            return None;
        }
        let n = self.non_edges.len() as u64;
        let mut positions = Vec::with_capacity(links.len());
        for link in links.links() {
            positions.push(self.non_edges.binary_search(link).ok()? as u64);
        }
        let mut rank: u128 = 0;
        let mut prev: i64 = -1;
        for (j, &p) in positions.iter().enumerate() {
            let left = (self.level - j) as u64;
            for x in (prev + 1) as u64..p {
                rank += choose(n - 1 - x, left - 1);
            }
            prev = p as i64;
        }
        Some(rank as u64)
    }

    pub fn iter(&self) -> impl Iterator<Item = LinkSet> + '_ {
        (0..self.total).map(|i| self.link_set(i))
    }
}

/// What one pass produced: the best positive candidate (before the
/// significance test), enumeration counts, and the smallest decrement seen
/// among valid candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct PassOutcome {
    pub best: Option<CandidateMove>,
    pub generated: u64,
    pub valid: u64,
    pub min_dh: Option<f64>,
}

impl PassOutcome {
    /// The pass's decrement in the bookkeeping sense: zero when no
    /// candidate improved on the empty move.
    pub fn best_dh(&self) -> f64 {
        self.best.as_ref().and_then(|m| m.dh).unwrap_or(0.0)
    }
}

/// Everything an executor needs to run one pass.
pub struct PassContext<'a> {
    pub graph: &'a Graph,
    pub forest: &'a JunctionForest,
    pub level: usize,
    pub config: &'a SearchConfig,
    pub data: &'a Arc<FrequencyTable>,
}

/// Runs one pass over the candidate space. Implementations must return the
/// same outcome as in-order sequential evaluation; ties on the decrement are
/// broken by the lowest candidate index.
pub trait PassExecutor {
    fn run_pass(&mut self, ctx: &PassContext<'_>) -> Result<PassOutcome, SearchError>;
}

/// In-process, in-order evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct SequentialExecutor;

impl PassExecutor for SequentialExecutor {
    fn run_pass(&mut self, ctx: &PassContext<'_>) -> Result<PassOutcome, SearchError> {
        let space = candidate_space_for(ctx)?;
        let mut cache = EntropyCache::new(LocalMarginals::new(ctx.data));
        let scan = scan_candidates(
            ctx.graph,
            ctx.forest,
            &space,
            0..space.len(),
            ctx.config.max_clique(),
            &mut cache,
        )?;
        Ok(PassOutcome {
            best: scan.best,
            generated: space.len(),
            valid: scan.valid,
            min_dh: scan.min_dh,
        })
    }
}

/// Builds the candidate space for a pass and applies the configured cap.
pub fn candidate_space_for(ctx: &PassContext<'_>) -> Result<CandidateSpace, SearchError> {
    let space = CandidateSpace::new(ctx.graph, ctx.level)?;
    if let Some(cap) = ctx.config.candidate_cap() {
        if space.len() > cap {
            return Err(SearchError::CandidateCap {
                total: space.len(),
                cap,
            });
        }
    }
    Ok(space)
}

/// Result of scanning a contiguous index range.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeScan {
    pub best: Option<CandidateMove>,
    pub valid: u64,
    pub min_dh: Option<f64>,
}

/// Scans the given candidate indices in order: validity check, then local
/// scoring of the valid ones. The shared path for the sequential executor
/// and every parallel worker, which is what makes their results identical.
/// Indices must arrive in ascending order for the lowest-index tie-break.
pub fn scan_candidates<S, I>(
    graph: &Graph,
    forest: &JunctionForest,
    space: &CandidateSpace,
    indices: I,
    max_clique: usize,
    cache: &mut EntropyCache<S>,
) -> Result<RangeScan, SearchError>
where
    S: MarginalSource,
    I: IntoIterator<Item = u64>,
{
    let mut best: Option<CandidateMove> = None;
    let mut valid = 0u64;
    let mut min_dh: Option<f64> = None;
    for index in indices {
        let links = space.link_set(index);
        let Some(new_forest) = validate_candidate(graph, &links, max_clique)? else {
            continue;
        };
        valid += 1;
        let dh = decrement_between_forests(forest, &new_forest, cache)?;
        min_dh = Some(min_dh.map_or(dh, |m: f64| m.min(dh)));
        if dh > best.as_ref().and_then(|b| b.dh).unwrap_or(0.0) {
            best = Some(CandidateMove {
                index,
                links,
                dh: Some(dh),
            });
        }
    }
    Ok(RangeScan {
        best,
        valid,
        min_dh,
    })
}

/// Chordality plus single-clique implication; returns the candidate graph's
/// junction forest when the candidate is valid.
pub(crate) fn validate_candidate(
    graph: &Graph,
    links: &LinkSet,
    max_clique: usize,
) -> Result<Option<JunctionForest>, SearchError> {
    let g_star = graph.with_links(links)?;
    let Some(order) = is_chordal(&g_star) else {
        return Ok(None);
    };
    let cliques = maximal_cliques(&g_star, &order)?;
    if implied_in_cliques(&cliques, links, max_clique).is_none() {
        return Ok(None);
    }
    Ok(Some(junction_forest(&cliques)?))
}

/// Stage-1 version of the check: validity only, no forest construction.
pub(crate) fn candidate_is_valid(
    graph: &Graph,
    links: &LinkSet,
    max_clique: usize,
) -> Result<bool, SearchError> {
    let g_star = graph.with_links(links)?;
    let Some(order) = is_chordal(&g_star) else {
        return Ok(false);
    };
    let cliques = maximal_cliques(&g_star, &order)?;
    Ok(implied_in_cliques(&cliques, links, max_clique).is_some())
}

/// Scores one candidate link set against a graph: invalid candidates come
/// back with no decrement, valid ones carry their local decrement.
pub fn evaluate_candidate(
    graph: &Graph,
    forest: &JunctionForest,
    links: &LinkSet,
    max_clique: usize,
    data: &FrequencyTable,
) -> Result<CandidateMove, SearchError> {
    let space = CandidateSpace::new(graph, links.len())?;
    let index = space.rank_of(links).ok_or_else(|| {
        SearchError::Config("links are not a candidate of this graph (overlap with edges?)".into())
    })?;
    let Some(new_forest) = validate_candidate(graph, links, max_clique)? else {
        return Ok(CandidateMove {
            index,
            links: links.clone(),
            dh: None,
        });
    };
    let mut cache = EntropyCache::new(LocalMarginals::new(data));
    let dh = decrement_between_forests(forest, &new_forest, &mut cache)?;
    Ok(CandidateMove {
        index,
        links: links.clone(),
        dh: Some(dh),
    })
}

/// One sequential pass, as a standalone operation: the best valid candidate
/// and the resulting graph when its decrement beats the threshold.
pub fn run_pass(
    graph: &Graph,
    forest: &JunctionForest,
    level: usize,
    config: &SearchConfig,
    data: &Arc<FrequencyTable>,
) -> Result<Option<(CandidateMove, Graph)>, SearchError> {
    let ctx = PassContext {
        graph,
        forest,
        level,
        config,
        data,
    };
    let outcome = SequentialExecutor.run_pass(&ctx)?;
    adopt(graph, &outcome, config)
}

/// Applies the significance test and produces the successor graph.
pub(crate) fn adopt(
    graph: &Graph,
    outcome: &PassOutcome,
    config: &SearchConfig,
) -> Result<Option<(CandidateMove, Graph)>, SearchError> {
    match &outcome.best {
        Some(best)
            if is_significant(best.dh.expect("best is valid"), config.threshold()) =>
        {
            let next = graph.with_links(&best.links)?;
            Ok(Some((best.clone(), next)))
        }
        _ => Ok(None),
    }
}

/// One line of the search trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PassRecord {
    pub level: usize,
    /// Links adopted this pass; empty when the pass ended its level.
    pub adopted: Vec<Link>,
    /// The pass's best decrement (0 when no candidate was positive).
    pub dh: f64,
    pub generated: u64,
    pub valid: u64,
    /// Smallest decrement among valid candidates, for invariant checks.
    pub min_dh: Option<f64>,
}

/// Full account of a search run: per-pass records plus the learned graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub passes: Vec<PassRecord>,
    pub final_graph: Graph,
}

impl SearchTrace {
    /// One line per pass, then the final graph in its text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.passes {
            let adopted = if p.adopted.is_empty() {
                "-".to_string()
            } else {
                p.adopted
                    .iter()
                    .map(|(u, v)| format!("{u}-{v}"))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            out.push_str(&format!(
                "level {} | adopted {} | dh {} | generated {} | valid {}\n",
                p.level, adopted, p.dh, p.generated, p.valid
            ));
        }
        out.push_str(&self.final_graph.to_text());
        out
    }
}

/// Learns a structure from data: levels `1..=lookahead`, each repeated while
/// passes keep adopting, starting from the empty graph. The trace is
/// deterministic for a given configuration and dataset, whichever executor
/// runs the passes.
pub fn learn(
    config: &SearchConfig,
    data: &Arc<FrequencyTable>,
    executor: &mut dyn PassExecutor,
) -> Result<(Graph, SearchTrace), SearchError> {
    let mut graph = Graph::empty(data.scheme().len());
    let mut forest = JunctionForest::of(&graph)?;
    let mut passes = Vec::new();
    for level in 1..=config.lookahead() {
        loop {
            let ctx = PassContext {
                graph: &graph,
                forest: &forest,
                level,
                config,
                data,
            };
            let outcome = executor.run_pass(&ctx)?;
            let adopted = adopt(&graph, &outcome, config)?;
            passes.push(PassRecord {
                level,
                adopted: adopted
                    .as_ref()
                    .map(|(m, _)| m.links.links().to_vec())
                    .unwrap_or_default(),
                dh: outcome.best_dh(),
                generated: outcome.generated,
                valid: outcome.valid,
                min_dh: outcome.min_dh,
            });
            match adopted {
                Some((_, next)) => {
                    graph = next;
                    forest = JunctionForest::of(&graph)?;
                }
                None => break,
            }
        }
    }
    let trace = SearchTrace {
        passes,
        final_graph: graph.clone(),
    };
    Ok((graph, trace))
}
