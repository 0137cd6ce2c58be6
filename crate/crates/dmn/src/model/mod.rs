//! Generative models for testing the learner: joint distributions specified
//! as cluster tables chained along a junction tree.
//!
//! A [`ClusterModel`] holds one probability table per cluster plus a forest
//! over the clusters. Adjacent clusters must agree on the marginal of their
//! shared variables, and every variable's clusters must form a connected
//! subtree; the model then defines a unique joint distribution as the
//! product of cluster tables divided by sepset tables. Exact marginals come
//! from factor elimination, deterministic datasets from [`expected_counts`],
//! and sampled datasets from seeded forward sampling along the tree.

mod io;
mod pi;
mod presets;

pub use io::{read_model, write_model};
pub use pi::{verify_pi, PairVerdict, PiReport};
pub use presets::{
    chain_model, parity_model, pim1_like, pim2_like, pim3_like, pim3_like_small, pim4_like,
    table1_model, ChainCluster, ClusterKind,
};

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::data::{DataError, FrequencyTable, Scheme};
use crate::rng::CounterRng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("noise level {0} out of range [0, 0.5)")]
    InvalidNoise(f64),
    #[error("need at least {want} variables, got {got}")]
    TooFewVariables { want: usize, got: usize },
    #[error("cluster {0} table sums to {1}; expected 1")]
    NotNormalized(usize, f64),
    #[error("cluster {0} has a negative or non-finite probability")]
    BadProbability(usize),
    #[error("cluster index {0} out of range")]
    BadClusterIndex(usize),
    #[error("tree edge ({0}, {1}) joins clusters with no shared variable")]
    EmptySepset(usize, usize),
    #[error("tree edges contain a cycle")]
    TreeCycle,
    #[error("clusters {a} and {b} disagree on their sepset marginal by {dev}")]
    SepsetMismatch { a: usize, b: usize, dev: f64 },
    #[error("variable {0} appears in clusters that do not form a connected subtree")]
    RipViolation(String),
    #[error("variable {0} is not covered by any cluster")]
    UncoveredVariable(String),
    #[error("state space of {0} configurations is too large to enumerate")]
    StateSpaceTooLarge(f64),
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("expected-count total must be positive")]
    BadTotal,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

const CONSISTENCY_TOL: f64 = 1e-9;
const ENUMERATION_LIMIT: f64 = (1u64 << 24) as f64;

/// A dense probability table over a sorted subset of scheme variables.
/// Values are indexed mixed-radix with the first variable most significant,
/// matching the canonical configuration order used everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable {
    vars: Vec<usize>,
    cards: Vec<u32>,
    values: Vec<f64>,
}

impl ProbTable {
    pub fn new(scheme: &Scheme, vars: &[usize], values: Vec<f64>) -> Result<Self, ModelError> {
        let vars = scheme.normalize_subset(vars).map_err(ModelError::Data)?;
        let cards: Vec<u32> = vars.iter().map(|&v| scheme.cardinality(v)).collect();
        let space: usize = cards.iter().map(|&c| c as usize).product();
        assert_eq!(values.len(), space, "table size must match the state space");
        Ok(ProbTable { vars, cards, values })
    }

    fn raw(vars: Vec<usize>, cards: Vec<u32>, values: Vec<f64>) -> Self {
        ProbTable { vars, cards, values }
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn space(&self) -> usize {
        self.values.len()
    }

    /// Flat index of a configuration given per-variable values aligned with
    /// `self.vars`.
    fn index_of(&self, config: &[u32]) -> usize {
        let mut idx = 0usize;
        for (j, &v) in config.iter().enumerate() {
            idx = idx * self.cards[j] as usize + v as usize;
        }
        idx
    }

    /// Configuration at a flat index, aligned with `self.vars`.
    pub fn config_at(&self, mut idx: usize) -> Vec<u32> {
        let mut cfg = vec![0u32; self.vars.len()];
        for j in (0..self.vars.len()).rev() {
            let c = self.cards[j] as usize;
            cfg[j] = (idx % c) as u32;
            idx /= c;
        }
        cfg
    }

    /// Probability of a configuration given as values aligned with `vars`.
    pub fn prob(&self, config: &[u32]) -> f64 {
        self.values[self.index_of(config)]
    }

    /// Value extracted from a full-scheme configuration.
    pub fn prob_in(&self, full_config: &[u32]) -> f64 {
        let cfg: Vec<u32> = self.vars.iter().map(|&v| full_config[v]).collect();
        self.prob(&cfg)
    }

    /// Marginalizes onto `keep` (a subset of this table's variables).
    pub fn marginalize(&self, keep: &[usize]) -> ProbTable {
        let keep: Vec<usize> = {
            let mut k = keep.to_vec();
            k.sort_unstable();
            k.dedup();
            k
        };
        let positions: Vec<usize> = keep
            .iter()
            .map(|v| {
                self.vars
                    .iter()
                    .position(|w| w == v)
                    .expect("keep must be a subset of the table variables")
            })
            .collect();
        let cards: Vec<u32> = positions.iter().map(|&p| self.cards[p]).collect();
        let space: usize = cards.iter().map(|&c| c as usize).product();
        let mut out = vec![0.0f64; space];
        for idx in 0..self.space() {
            let cfg = self.config_at(idx);
            let mut sub = 0usize;
            for (j, &p) in positions.iter().enumerate() {
                sub = sub * cards[j] as usize + cfg[p] as usize;
            }
            out[sub] += self.values[idx];
        }
        ProbTable::raw(keep, cards, out)
    }

    /// Pointwise product over the union of the two variable sets.
    pub fn multiply(&self, other: &ProbTable) -> ProbTable {
        let mut vars = self.vars.clone();
        vars.extend_from_slice(&other.vars);
        vars.sort_unstable();
        vars.dedup();
        let cards: Vec<u32> = vars
            .iter()
            .map(|v| {
                self.vars
                    .iter()
                    .position(|w| w == v)
                    .map(|p| self.cards[p])
                    .unwrap_or_else(|| {
                        let p = other.vars.iter().position(|w| w == v).unwrap();
                        other.cards[p]
                    })
            })
            .collect();
        let space: usize = cards.iter().map(|&c| c as usize).product();
        let pos_a: Vec<usize> = self
            .vars
            .iter()
            .map(|v| vars.iter().position(|w| w == v).unwrap())
            .collect();
        let pos_b: Vec<usize> = other
            .vars
            .iter()
            .map(|v| vars.iter().position(|w| w == v).unwrap())
            .collect();
        let mut values = vec![0.0f64; space];
        let mut cfg = vec![0u32; vars.len()];
        for (idx, slot) in values.iter_mut().enumerate() {
            let mut rest = idx;
            for j in (0..vars.len()).rev() {
                let c = cards[j] as usize;
                cfg[j] = (rest % c) as u32;
                rest /= c;
            }
            let a_cfg: Vec<u32> = pos_a.iter().map(|&p| cfg[p]).collect();
            let b_cfg: Vec<u32> = pos_b.iter().map(|&p| cfg[p]).collect();
            *slot = self.prob(&a_cfg) * other.prob(&b_cfg);
        }
        ProbTable::raw(vars, cards, values)
    }

    /// Sums out one variable.
    pub fn sum_out(&self, var: usize) -> ProbTable {
        let keep: Vec<usize> = self.vars.iter().copied().filter(|&v| v != var).collect();
        self.marginalize(&keep)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// A generative joint distribution: cluster probability tables plus a forest
/// over the clusters with consistent sepset marginals.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    scheme: Arc<Scheme>,
    clusters: Vec<ProbTable>,
    tree: Vec<(usize, usize)>,
    sepsets: Vec<Vec<usize>>,
    sepset_tables: Vec<ProbTable>,
}

impl ClusterModel {
    pub fn scheme(&self) -> &Arc<Scheme> {
        &self.scheme
    }

    pub fn clusters(&self) -> &[ProbTable] {
        &self.clusters
    }

    pub fn tree_edges(&self) -> &[(usize, usize)] {
        &self.tree
    }

    pub fn sepsets(&self) -> &[Vec<usize>] {
        &self.sepsets
    }

    /// Joint probability of a full configuration: product of cluster tables
    /// over product of sepset tables, with zero sepsets forcing zero mass.
    pub fn joint_prob(&self, config: &[u32]) -> f64 {
        let mut numer = 1.0;
        for c in &self.clusters {
            numer *= c.prob_in(config);
            if numer == 0.0 {
                return 0.0;
            }
        }
        let mut denom = 1.0;
        for s in &self.sepset_tables {
            denom *= s.prob_in(config);
        }
        if denom == 0.0 {
            return 0.0;
        }
        numer / denom
    }
}

/// Validates cluster tables and tree structure and assembles a model.
/// Rejects non-normalized tables, cyclic trees, empty sepsets, inconsistent
/// sepset marginals, uncovered variables, and variable placements that break
/// the running intersection property.
pub fn compose_model(
    scheme: Arc<Scheme>,
    clusters: Vec<ProbTable>,
    tree: Vec<(usize, usize)>,
) -> Result<ClusterModel, ModelError> {
    for (i, c) in clusters.iter().enumerate() {
        if c.values.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ModelError::BadProbability(i));
        }
        let sum = c.sum();
        if (sum - 1.0).abs() > CONSISTENCY_TOL {
            return Err(ModelError::NotNormalized(i, sum));
        }
    }

    let mut parent = (0..clusters.len()).collect::<Vec<_>>();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    let mut sepsets = Vec::with_capacity(tree.len());
    let mut sepset_tables = Vec::with_capacity(tree.len());
    for &(a, b) in &tree {
        for idx in [a, b] {
            if idx >= clusters.len() {
                return Err(ModelError::BadClusterIndex(idx));
            }
        }
        let sep: Vec<usize> = clusters[a]
            .vars
            .iter()
            .copied()
            .filter(|v| clusters[b].vars.contains(v))
            .collect();
        if sep.is_empty() {
            return Err(ModelError::EmptySepset(a, b));
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return Err(ModelError::TreeCycle);
        }
        parent[ra.max(rb)] = ra.min(rb);

        let from_a = clusters[a].marginalize(&sep);
        let from_b = clusters[b].marginalize(&sep);
        let dev = from_a
            .values
            .iter()
            .zip(&from_b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        if dev > CONSISTENCY_TOL {
            return Err(ModelError::SepsetMismatch { a, b, dev });
        }
        sepsets.push(sep.clone());
        sepset_tables.push(from_a);
    }

    // Every variable covered, and its clusters connected in the forest.
    // The clusters holding a variable, joined by the sepset edges holding
    // it, form an acyclic subgraph (it sits inside the forest); it is a
    // connected subtree exactly when it has one edge less than vertices.
    for v in 0..scheme.len() {
        let occurrences = clusters.iter().filter(|c| c.vars.contains(&v)).count();
        if occurrences == 0 {
            return Err(ModelError::UncoveredVariable(scheme.name(v).to_string()));
        }
        let sep_occurrences = sepsets.iter().filter(|s| s.contains(&v)).count();
        if sep_occurrences != occurrences - 1 {
            return Err(ModelError::RipViolation(scheme.name(v).to_string()));
        }
    }

    Ok(ClusterModel {
        scheme,
        clusters,
        tree,
        sepsets,
        sepset_tables,
    })
}

/// Rooted view of the model's forest: `(cluster, parent edge index)` pairs
/// in a deterministic traversal order, roots first per component.
fn rooted_order(model: &ClusterModel) -> Vec<(usize, Option<usize>)> {
    let k = model.clusters.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
    for (e, &(a, b)) in model.tree.iter().enumerate() {
        adj[a].push((b, e));
        adj[b].push((a, e));
    }
    for nbrs in &mut adj {
        nbrs.sort_unstable();
    }
    let mut seen = vec![false; k];
    let mut order = Vec::with_capacity(k);
    for root in 0..k {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([(root, None)]);
        while let Some((c, via)) = queue.pop_front() {
            order.push((c, via));
            for &(next, e) in &adj[c] {
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back((next, Some(e)));
                }
            }
        }
    }
    order
}

/// Exact marginal of the model's joint over a variable subset, computed by
/// eliminating all other variables along the cluster tree.
pub fn exact_marginal(model: &ClusterModel, subset: &[usize]) -> Result<ProbTable, ModelError> {
    let subset = model.scheme.normalize_subset(subset).map_err(ModelError::Data)?;

    // Factors: each root keeps its joint, every other cluster is divided by
    // the sepset marginal toward its parent, giving conditional factors
    // whose product is the joint (0/0 reads as 0).
    let mut factors: Vec<ProbTable> = Vec::with_capacity(model.clusters.len());
    for (c, via) in rooted_order(model) {
        let cluster = &model.clusters[c];
        match via {
            None => factors.push(cluster.clone()),
            Some(e) => {
                let sep = &model.sepset_tables[e];
                let mut cond = cluster.clone();
                let positions: Vec<usize> = sep
                    .vars
                    .iter()
                    .map(|v| cond.vars.iter().position(|w| w == v).unwrap())
                    .collect();
                for idx in 0..cond.space() {
                    let cfg = cond.config_at(idx);
                    let sep_cfg: Vec<u32> = positions.iter().map(|&p| cfg[p]).collect();
                    let d = sep.prob(&sep_cfg);
                    cond.values[idx] = if d == 0.0 { 0.0 } else { cond.values[idx] / d };
                }
                factors.push(cond);
            }
        }
    }

    let mut eliminate: Vec<usize> = (0..model.scheme.len())
        .filter(|v| !subset.contains(v))
        .collect();
    while let Some(&var) = eliminate.first() {
        // Greedy order: eliminate the variable whose combined factor is
        // smallest; ties go to the lowest index.
        let mut best: Option<(f64, usize)> = None;
        for &v in &eliminate {
            let mut vars: Vec<usize> = Vec::new();
            for f in factors.iter().filter(|f| f.vars.contains(&v)) {
                vars.extend_from_slice(&f.vars);
            }
            vars.sort_unstable();
            vars.dedup();
            let size: f64 = vars
                .iter()
                .map(|&w| model.scheme.cardinality(w) as f64)
                .product();
            if best.map_or(true, |(s, _)| size < s) {
                best = Some((size, v));
            }
        }
        let (_, var) = best.unwrap_or((0.0, var));
        eliminate.retain(|&v| v != var);

        let (touching, rest): (Vec<ProbTable>, Vec<ProbTable>) =
            factors.into_iter().partition(|f| f.vars.contains(&var));
        factors = rest;
        let mut product = touching
            .first()
            .cloned()
            .unwrap_or_else(|| ProbTable::raw(vec![], vec![], vec![1.0]));
        for f in touching.iter().skip(1) {
            if product.space() as f64 * f.space() as f64 > ENUMERATION_LIMIT {
                return Err(ModelError::StateSpaceTooLarge(
                    product.space() as f64 * f.space() as f64,
                ));
            }
            product = product.multiply(f);
        }
        factors.push(product.sum_out(var));
    }

    let mut result = ProbTable::raw(vec![], vec![], vec![1.0]);
    for f in &factors {
        if result.space() as f64 * f.space() as f64 > ENUMERATION_LIMIT {
            return Err(ModelError::StateSpaceTooLarge(
                result.space() as f64 * f.space() as f64,
            ));
        }
        result = result.multiply(f);
    }
    debug_assert_eq!(result.vars, subset);
    Ok(result)
}

/// Deterministic dataset: every configuration's count is its probability
/// times `total`. Stands in for sampling when tests need the distribution
/// itself. The full state space is enumerated, so this is for models of
/// modest size.
pub fn expected_counts(model: &ClusterModel, total: f64) -> Result<FrequencyTable, ModelError> {
    if !(total.is_finite() && total > 0.0) {
        return Err(ModelError::BadTotal);
    }
    let space = model.scheme.state_space();
    if space > ENUMERATION_LIMIT {
        return Err(ModelError::StateSpaceTooLarge(space));
    }
    let mut config = vec![0u32; model.scheme.len()];
    let mut rows: Vec<(Vec<u32>, f64)> = Vec::new();
    loop {
        let p = model.joint_prob(&config);
        if p > 0.0 {
            rows.push((config.clone(), snap_count(p * total)));
        }
        if !increment_config(&mut config, &model.scheme) {
            break;
        }
    }
    Ok(FrequencyTable::from_rows(Arc::clone(&model.scheme), rows)?)
}

/// Counts a hair away from an integer are snapped onto it. Decimal model
/// probabilities times a matching total are integers in exact arithmetic
/// but land an ulp off in floats; integral counts keep shard sums exactly
/// equal to whole-table sums, which downstream exactness checks rely on.
fn snap_count(count: f64) -> f64 {
    let nearest = count.round();
    if nearest > 0.0 && (count - nearest).abs() <= 1e-7 * nearest.max(1.0) {
        nearest
    } else {
        count
    }
}

/// Advances a configuration in canonical (last variable fastest) order;
/// false once the space wraps around.
fn increment_config(config: &mut [u32], scheme: &Scheme) -> bool {
    for j in (0..config.len()).rev() {
        config[j] += 1;
        if config[j] < scheme.cardinality(j) {
            return true;
        }
        config[j] = 0;
    }
    false
}

/// I.i.d. forward sampling along the cluster tree: root clusters sample
/// their joint, children sample their remaining variables conditioned on
/// the sepset already drawn. Deterministic given the seed.
pub fn sample(model: &ClusterModel, count: u64, seed: u64) -> Result<FrequencyTable, ModelError> {
    if count == 0 {
        return Err(ModelError::EmptySample);
    }
    let order = rooted_order(model);
    let mut rng = CounterRng::new(seed);
    let mut counts: std::collections::BTreeMap<Vec<u32>, f64> = std::collections::BTreeMap::new();
    let k = model.scheme.len();
    for _ in 0..count {
        let mut config = vec![u32::MAX; k];
        for &(c, via) in &order {
            let cluster = &model.clusters[c];
            match via {
                None => {
                    let u = rng.next_f64();
                    let mut cum = 0.0;
                    let mut picked = cluster.space() - 1;
                    for idx in 0..cluster.space() {
                        cum += cluster.values[idx];
                        if u < cum {
                            picked = idx;
                            break;
                        }
                    }
                    let cfg = cluster.config_at(picked);
                    for (j, &v) in cluster.vars.iter().enumerate() {
                        config[v] = cfg[j];
                    }
                }
                Some(e) => {
                    let sep = &model.sepsets[e];
                    let sep_cfg: Vec<u32> = sep.iter().map(|&v| config[v]).collect();
                    let sep_prob = model.sepset_tables[e].prob(&sep_cfg);
                    // Walk the slice of the cluster table consistent with
                    // the sepset assignment; CDF inversion over it.
                    let resid: Vec<usize> = cluster
                        .vars
                        .iter()
                        .copied()
                        .filter(|v| !sep.contains(v))
                        .collect();
                    let target = rng.next_f64() * sep_prob;
                    let mut cum = 0.0;
                    let mut chosen: Option<Vec<u32>> = None;
                    let mut last_positive: Option<Vec<u32>> = None;
                    let mut resid_cfg = vec![0u32; resid.len()];
                    'slice: loop {
                        let full_cfg: Vec<u32> = cluster
                            .vars
                            .iter()
                            .map(|v| {
                                if let Some(p) = resid.iter().position(|w| w == v) {
                                    resid_cfg[p]
                                } else {
                                    config[*v]
                                }
                            })
                            .collect();
                        let p = cluster.prob(&full_cfg);
                        if p > 0.0 {
                            last_positive = Some(resid_cfg.clone());
                        }
                        cum += p;
                        if target < cum {
                            chosen = Some(resid_cfg.clone());
                            break 'slice;
                        }
                        let mut j = resid.len();
                        loop {
                            if j == 0 {
                                break 'slice;
                            }
                            j -= 1;
                            resid_cfg[j] += 1;
                            if resid_cfg[j] < model.scheme.cardinality(resid[j]) {
                                break;
                            }
                            resid_cfg[j] = 0;
                        }
                    }
                    let cfg = chosen
                        .or(last_positive)
                        .expect("sepset assignment has positive mass");
                    for (j, &v) in resid.iter().enumerate() {
                        config[v] = cfg[j];
                    }
                }
            }
        }
        debug_assert!(config.iter().all(|&v| v != u32::MAX));
        *counts.entry(config).or_insert(0.0) += 1.0;
    }
    Ok(FrequencyTable::from_rows(
        Arc::clone(&model.scheme),
        counts.into_iter().collect::<Vec<_>>(),
    )?)
}
