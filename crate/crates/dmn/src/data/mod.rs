//! Discrete data: variable schemes, compressed frequency-table datasets,
//! marginal projection, and empirical entropy.
//!
//! A dataset is stored as the map from distinct case configurations to
//! occurrence counts. Counts are non-negative `f64`s so that deterministic
//! "expected-count" datasets (distribution times N) can stand in for sampled
//! data; on sampled data they are plain integers. All values are immutable
//! after construction and safe to share across threads.

mod io;

pub use io::{read_dataset, write_dataset, DatasetFormat};

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("scheme has no variables")]
    EmptyScheme,
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("variable `{0}` has cardinality {1}; need at least 2")]
    CardinalityTooSmall(String, u32),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable index {0} out of range for scheme of {1} variables")]
    VariableOutOfRange(usize, usize),
    #[error("duplicate variable index {0} in subset")]
    DuplicateSubsetVariable(usize),
    #[error("configuration has {got} values; scheme has {want} variables")]
    ConfigurationLength { got: usize, want: usize },
    #[error("value {value} out of range for variable {variable} (cardinality {cardinality})")]
    ValueOutOfRange {
        variable: usize,
        value: u32,
        cardinality: u32,
    },
    #[error("duplicate configuration row")]
    DuplicateRow,
    #[error("row count must be positive and finite, got {0}")]
    BadCount(f64),
    #[error("table has zero total; entropy undefined")]
    EmptyTable,
    #[error("marginal subsets or schemes differ; cannot merge")]
    SubsetMismatch,
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cardinality {0} exceeds 256; binary format stores one byte per value")]
    CardinalityTooLargeForBinary(u32),
    #[error("count {0} too large for the binary fixed-point encoding")]
    CountOverflow(f64),
}

/// An ordered list of named discrete variables with their cardinalities.
/// The order is canonical: configurations list one value index per variable
/// in this order, and projections keep it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheme {
    vars: Vec<(String, u32)>,
    by_name: HashMap<String, usize>,
}

impl Scheme {
    pub fn new<S: Into<String>>(vars: Vec<(S, u32)>) -> Result<Self, DataError> {
        if vars.is_empty() {
            return Err(DataError::EmptyScheme);
        }
        let vars: Vec<(String, u32)> = vars.into_iter().map(|(n, c)| (n.into(), c)).collect();
        let mut by_name = HashMap::new();
        for (i, (name, card)) in vars.iter().enumerate() {
            if *card < 2 {
                return Err(DataError::CardinalityTooSmall(name.clone(), *card));
            }
            if by_name.insert(name.clone(), i).is_some() {
                return Err(DataError::DuplicateVariable(name.clone()));
            }
        }
        Ok(Scheme { vars, by_name })
    }

    /// Convenience scheme `X1..Xk`, all with the same cardinality.
    pub fn uniform(k: usize, cardinality: u32) -> Result<Self, DataError> {
        Scheme::new((1..=k).map(|i| (format!("X{i}"), cardinality)).collect())
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.vars[i].0
    }

    pub fn cardinality(&self, i: usize) -> u32 {
        self.vars[i].1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn variables(&self) -> impl Iterator<Item = (&str, u32)> {
        self.vars.iter().map(|(n, c)| (n.as_str(), *c))
    }

    /// Number of joint configurations, as f64 (may be astronomically large).
    pub fn state_space(&self) -> f64 {
        self.vars.iter().map(|(_, c)| *c as f64).product()
    }

    /// log2 of the joint state space; finite even when the space overflows.
    pub fn log2_state_space(&self) -> f64 {
        self.vars.iter().map(|(_, c)| (*c as f64).log2()).sum()
    }

    /// Validates a variable subset and returns it sorted ascending.
    pub fn normalize_subset(&self, subset: &[usize]) -> Result<Vec<usize>, DataError> {
        let mut out = subset.to_vec();
        out.sort_unstable();
        for w in out.windows(2) {
            if w[0] == w[1] {
                return Err(DataError::DuplicateSubsetVariable(w[0]));
            }
        }
        if let Some(&bad) = out.iter().find(|&&v| v >= self.len()) {
            return Err(DataError::VariableOutOfRange(bad, self.len()));
        }
        Ok(out)
    }

    fn check_config(&self, config: &[u32]) -> Result<(), DataError> {
        if config.len() != self.len() {
            return Err(DataError::ConfigurationLength {
                got: config.len(),
                want: self.len(),
            });
        }
        for (i, &v) in config.iter().enumerate() {
            if v >= self.cardinality(i) {
                return Err(DataError::ValueOutOfRange {
                    variable: i,
                    value: v,
                    cardinality: self.cardinality(i),
                });
            }
        }
        Ok(())
    }
}

fn check_count(count: f64) -> Result<(), DataError> {
    if !(count.is_finite() && count > 0.0) {
        return Err(DataError::BadCount(count));
    }
    Ok(())
}

/// A compressed dataset: distinct configurations with their counts, in
/// canonical (lexicographic) configuration order. Zero-count rows are never
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    scheme: Arc<Scheme>,
    rows: Vec<(Box<[u32]>, f64)>,
    total: f64,
}

impl FrequencyTable {
    /// Builds a table from `(configuration, count)` rows. Rows need not be
    /// sorted; duplicates, out-of-range values, and non-positive counts are
    /// rejected.
    pub fn from_rows<I>(scheme: Arc<Scheme>, rows: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut collected: Vec<(Box<[u32]>, f64)> = Vec::new();
        for (config, count) in rows {
            scheme.check_config(&config)?;
            check_count(count)?;
            collected.push((config.into_boxed_slice(), count));
        }
        collected.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        for w in collected.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(DataError::DuplicateRow);
            }
        }
        let total = collected.iter().map(|(_, c)| *c).sum();
        Ok(FrequencyTable {
            scheme,
            rows: collected,
            total,
        })
    }

    /// The empty dataset over a scheme.
    pub fn empty(scheme: Arc<Scheme>) -> Self {
        FrequencyTable {
            scheme,
            rows: Vec::new(),
            total: 0.0,
        }
    }

    pub fn scheme(&self) -> &Arc<Scheme> {
        &self.scheme
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Rows in canonical configuration order.
    pub fn rows(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.rows.iter().map(|(k, c)| (k.as_ref(), *c))
    }

    /// Marginalizes onto a variable subset by summing counts over all rows
    /// consistent with each sub-configuration. The total is preserved.
    pub fn project(&self, subset: &[usize]) -> Result<MarginalTable, DataError> {
        let subset = self.scheme.normalize_subset(subset)?;
        // Dense accumulation keeps the hot path allocation-free; the result
        // is identical to map accumulation because rows are scanned in
        // canonical order either way.
        let space: f64 = subset
            .iter()
            .map(|&v| self.scheme.cardinality(v) as f64)
            .product();
        const DENSE_LIMIT: f64 = (1u64 << 22) as f64;
        let counts = if space <= DENSE_LIMIT {
            let space = space as usize;
            let mut strides = vec![0usize; subset.len()];
            let mut acc = 1usize;
            for (j, &v) in subset.iter().enumerate().rev() {
                strides[j] = acc;
                acc *= self.scheme.cardinality(v) as usize;
            }
            let mut dense = vec![0.0f64; space];
            for (config, count) in &self.rows {
                let mut idx = 0usize;
                for (j, &v) in subset.iter().enumerate() {
                    idx += config[v] as usize * strides[j];
                }
                dense[idx] += count;
            }
            let mut counts = Vec::new();
            for (idx, &c) in dense.iter().enumerate() {
                if c != 0.0 {
                    let mut cfg = vec![0u32; subset.len()];
                    let mut rest = idx;
                    for (j, &v) in subset.iter().enumerate() {
                        let _ = v;
                        cfg[j] = (rest / strides[j]) as u32;
                        rest %= strides[j];
                    }
                    counts.push((cfg.into_boxed_slice(), c));
                }
            }
            counts
        } else {
            let mut map = std::collections::BTreeMap::<Box<[u32]>, f64>::new();
            for (config, count) in &self.rows {
                let cfg: Box<[u32]> = subset.iter().map(|&v| config[v]).collect();
                *map.entry(cfg).or_insert(0.0) += count;
            }
            map.into_iter().filter(|(_, c)| *c != 0.0).collect()
        };
        Ok(MarginalTable {
            scheme: Arc::clone(&self.scheme),
            subset,
            counts,
            total: self.total,
        })
    }

    /// Splits the rows round-robin into `k` tables over the same scheme.
    /// Counts are additive, so the shards jointly carry the same
    /// information as the whole table.
    pub fn shard_rows(&self, k: usize) -> Vec<FrequencyTable> {
        assert!(k >= 1, "need at least one shard");
        let mut shards: Vec<Vec<(Box<[u32]>, f64)>> = vec![Vec::new(); k];
        for (i, row) in self.rows.iter().enumerate() {
            shards[i % k].push(row.clone());
        }
        shards
            .into_iter()
            .map(|rows| {
                let total = rows.iter().map(|(_, c)| *c).sum();
                FrequencyTable {
                    scheme: Arc::clone(&self.scheme),
                    rows,
                    total,
                }
            })
            .collect()
    }
}

/// A marginal over an ordered variable subset, produced by [`FrequencyTable::project`]
/// or by merging shard marginals. Configurations list values for the subset
/// variables in scheme order.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    scheme: Arc<Scheme>,
    subset: Vec<usize>,
    counts: Vec<(Box<[u32]>, f64)>,
    total: f64,
}

impl MarginalTable {
    /// The all-zero marginal: identity element of [`MarginalTable::merge`].
    pub fn zero(scheme: Arc<Scheme>, subset: &[usize]) -> Result<Self, DataError> {
        let subset = scheme.normalize_subset(subset)?;
        Ok(MarginalTable {
            scheme,
            subset,
            counts: Vec::new(),
            total: 0.0,
        })
    }

    pub fn scheme(&self) -> &Arc<Scheme> {
        &self.scheme
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn counts(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.counts.iter().map(|(k, c)| (k.as_ref(), *c))
    }

    pub fn count_for(&self, config: &[u32]) -> f64 {
        match self.counts.binary_search_by(|(k, _)| k.as_ref().cmp(config)) {
            Ok(i) => self.counts[i].1,
            Err(_) => 0.0,
        }
    }

    /// Pointwise count addition. Commutative and associative on the counts;
    /// both sides must agree on scheme and subset.
    pub fn merge(&self, other: &MarginalTable) -> Result<MarginalTable, DataError> {
        if self.subset != other.subset || self.scheme != other.scheme {
            return Err(DataError::SubsetMismatch);
        }
        let mut counts: Vec<(Box<[u32]>, f64)> = Vec::with_capacity(self.counts.len());
        let (mut i, mut j) = (0, 0);
        while i < self.counts.len() || j < other.counts.len() {
            let take_left = match (self.counts.get(i), other.counts.get(j)) {
                (Some(a), Some(b)) => match a.0.cmp(&b.0) {
                    std::cmp::Ordering::Less => Some(true),
                    std::cmp::Ordering::Greater => Some(false),
                    std::cmp::Ordering::Equal => None,
                },
                (Some(_), None) => Some(true),
                (None, Some(_)) => Some(false),
                (None, None) => unreachable!(),
            };
            match take_left {
                Some(true) => {
                    counts.push(self.counts[i].clone());
                    i += 1;
                }
                Some(false) => {
                    counts.push(other.counts[j].clone());
                    j += 1;
                }
                None => {
                    counts.push((self.counts[i].0.clone(), self.counts[i].1 + other.counts[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(MarginalTable {
            scheme: Arc::clone(&self.scheme),
            subset: self.subset.clone(),
            counts,
            total: self.total + other.total,
        })
    }

    /// Empirical entropy in bits: `-sum (c/total) log2 (c/total)`, with
    /// `0 log 0 = 0` (zero-count configurations are simply absent). Errors on
    /// an all-zero marginal.
    pub fn entropy_bits(&self) -> Result<f64, DataError> {
        if self.total <= 0.0 {
            return Err(DataError::EmptyTable);
        }
        let mut h = 0.0;
        for (_, c) in &self.counts {
            let p = c / self.total;
            if p > 0.0 {
                h -= p * p.log2();
            }
        }
        Ok(h)
    }
}

impl fmt::Display for MarginalTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.subset.iter().map(|&v| self.scheme.name(v)).collect();
        writeln!(f, "marginal over {}", names.join(","))?;
        for (cfg, c) in &self.counts {
            let vals: Vec<String> = cfg.iter().map(|v| v.to_string()).collect();
            writeln!(f, "  {} {}", vals.join(" "), c)?;
        }
        write!(f, "  total {}", self.total)
    }
}
