//! Ready-made test models: the four-variable distribution with an embedded
//! pairwise-independent triple, parity models, and chains of small clusters
//! with embedded parity submodels for larger domains.

use std::sync::Arc;

use super::{compose_model, ClusterModel, ModelError, ProbTable};
use crate::data::Scheme;

/// The four-variable fixture `table1.model`: binary X1..X4 with the joint
/// probabilities below. X1 is marginally independent of X2 and of X3 but
/// depends on them jointly, making {X1, X2, X3} an embedded
/// pseudo-independent triple; X1 and X4 are conditionally independent given
/// X2 and X3.
pub fn table1_model() -> ClusterModel {
    let scheme = Arc::new(Scheme::uniform(4, 2).unwrap());
    // Row order is canonical: (X1, X2, X3, X4) with X4 fastest.
    let values = vec![
        0.0225, 0.2025, 0.005, 0.02, // 0 0 * *
        0.0175, 0.0075, 0.135, 0.09, // 0 1 * *
        0.02, 0.18, 0.01, 0.04, //     1 0 * *
        0.035, 0.015, 0.12, 0.08, //   1 1 * *
    ];
    let table = ProbTable::new(&scheme, &[0, 1, 2, 3], values).unwrap();
    compose_model(scheme, vec![table], vec![]).expect("fixture model is valid")
}

/// Parity model over `k` binary variables: X1..X(k-1) independent fair
/// coins, Xk their XOR flipped with probability `flip`. Every proper subset
/// is fully independent; the whole set is collectively dependent.
pub fn parity_model(k: usize, flip: f64) -> Result<ClusterModel, ModelError> {
    if k < 3 {
        return Err(ModelError::TooFewVariables { want: 3, got: k });
    }
    check_flip(flip)?;
    let scheme = Arc::new(Scheme::uniform(k, 2)?);
    let space = 1usize << k;
    let base = 1.0 / (space >> 1) as f64;
    let mut values = vec![0.0f64; space];
    for (idx, slot) in values.iter_mut().enumerate() {
        let parity = (idx >> 1).count_ones() & 1;
        let last = (idx & 1) as u32;
        *slot = base * if last == parity { 1.0 - flip } else { flip };
    }
    let table = ProbTable::new(&scheme, &(0..k).collect::<Vec<_>>(), values)?;
    compose_model(scheme, vec![table], vec![])
}

fn check_flip(flip: f64) -> Result<(), ModelError> {
    if !(flip.is_finite() && (0.0..0.5).contains(&flip)) {
        return Err(ModelError::InvalidNoise(flip));
    }
    Ok(())
}

/// How one chain cluster relates its fresh variables to the shared one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterKind {
    /// Every fresh variable is a noisy copy of the shared variable
    /// (flipped independently with probability `flip`). All pairwise
    /// dependences inside the cluster are strong.
    Coupled { flip: f64 },
    /// Fresh variables are fair coins except the last, which is the XOR of
    /// all other cluster members flipped with probability `flip`. Pairwise
    /// independent, collectively dependent.
    Parity { flip: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct ChainCluster {
    /// Number of variables in the cluster, including the shared one.
    pub size: usize,
    pub kind: ClusterKind,
}

/// Builds a chain of clusters where consecutive clusters share exactly one
/// variable (the last of the previous cluster). Every single-variable
/// marginal is uniform by construction, so sepset consistency is exact.
/// Variable count is `sizes[0] + sum(size - 1)` over the rest.
pub fn chain_model(spec: &[ChainCluster]) -> Result<ClusterModel, ModelError> {
    if spec.is_empty() {
        return Err(ModelError::TooFewVariables { want: 1, got: 0 });
    }
    for c in spec {
        let min = match c.kind {
            ClusterKind::Coupled { .. } => 2,
            ClusterKind::Parity { .. } => 3,
        };
        if c.size < min {
            return Err(ModelError::TooFewVariables {
                want: min,
                got: c.size,
            });
        }
        match c.kind {
            ClusterKind::Coupled { flip } | ClusterKind::Parity { flip } => check_flip(flip)?,
        }
    }
    let total_vars = spec[0].size + spec[1..].iter().map(|c| c.size - 1).sum::<usize>();
    let scheme = Arc::new(Scheme::uniform(total_vars, 2)?);

    let mut clusters = Vec::with_capacity(spec.len());
    let mut tree = Vec::new();
    let mut start = 0usize;
    for (j, c) in spec.iter().enumerate() {
        let vars: Vec<usize> = (start..start + c.size).collect();
        let space = 1usize << c.size;
        let mut values = vec![0.0f64; space];
        for (idx, slot) in values.iter_mut().enumerate() {
            // Bit i of idx is the value of vars[i], first variable highest.
            let bit = |i: usize| (idx >> (c.size - 1 - i)) & 1;
            *slot = match c.kind {
                ClusterKind::Coupled { flip } => {
                    let shared = bit(0);
                    let mut p = 0.5;
                    for i in 1..c.size {
                        p *= if bit(i) == shared { 1.0 - flip } else { flip };
                    }
                    p
                }
                ClusterKind::Parity { flip } => {
                    let mut parity = 0usize;
                    for i in 0..c.size - 1 {
                        parity ^= bit(i);
                    }
                    let p_free = 0.5f64.powi(c.size as i32 - 1);
                    p_free * if bit(c.size - 1) == parity { 1.0 - flip } else { flip }
                }
            };
        }
        clusters.push(ProbTable::new(&scheme, &vars, values)?);
        if j > 0 {
            tree.push((j - 1, j));
        }
        start += c.size - 1;
    }
    compose_model(scheme, clusters, tree)
}

fn chain_with_parity(
    sizes: &[usize],
    parity_at: &[usize],
    coupled_flip: f64,
    parity_flip: f64,
) -> ClusterModel {
    let spec: Vec<ChainCluster> = sizes
        .iter()
        .enumerate()
        .map(|(i, &size)| ChainCluster {
            size,
            kind: if parity_at.contains(&i) {
                ClusterKind::Parity { flip: parity_flip }
            } else {
                ClusterKind::Coupled { flip: coupled_flip }
            },
        })
        .collect();
    chain_model(&spec).expect("preset chain is valid")
}

/// 26 binary variables, one embedded parity triple.
pub fn pim1_like() -> ClusterModel {
    let mut sizes = vec![3; 12];
    sizes.push(2);
    chain_with_parity(&sizes, &[5], 0.15, 0.05)
}

/// 30 binary variables, two embedded parity triples.
pub fn pim2_like() -> ClusterModel {
    let mut sizes = vec![3; 14];
    sizes.push(2);
    chain_with_parity(&sizes, &[4, 9], 0.15, 0.05)
}

/// 35 binary variables, two embedded parity triples: the `pim3-like.model`
/// fixture.
pub fn pim3_like() -> ClusterModel {
    chain_with_parity(&[3; 17], &[4, 12], 0.15, 0.05)
}

/// 9 binary variables, one embedded parity triple: a small stand-in for the
/// 35-variable chain, sized for fast equivalence matrices.
pub fn pim3_like_small() -> ClusterModel {
    chain_with_parity(&[3; 4], &[1], 0.15, 0.05)
}

/// 16 binary variables with one embedded four-variable parity cluster,
/// which needs a six-link lookahead to recover.
pub fn pim4_like() -> ClusterModel {
    chain_with_parity(&[3, 3, 3, 3, 3, 3, 4], &[6], 0.15, 0.05)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exact_marginal, expected_counts};

    #[test]
    fn table1_probabilities_pinned() {
        let m = table1_model();
        assert_eq!(m.scheme().len(), 4);
        assert_eq!(m.joint_prob(&[0, 0, 0, 0]), 0.0225);
        assert_eq!(m.joint_prob(&[1, 1, 1, 1]), 0.08);
        assert_eq!(m.joint_prob(&[0, 0, 0, 1]), 0.2025);
        assert_eq!(m.joint_prob(&[1, 0, 1, 0]), 0.01);
        let sum: f64 = (0..16u32)
            .map(|i| {
                let cfg: Vec<u32> = (0..4).map(|v| (i >> (3 - v)) & 1).collect();
                m.joint_prob(&cfg)
            })
            .sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table1_marginals() {
        let m = table1_model();
        for v in 0..3 {
            let marg = exact_marginal(&m, &[v]).unwrap();
            assert!((marg.prob(&[0]) - 0.5).abs() < 1e-12, "X{} not uniform", v + 1);
        }
        let x4 = exact_marginal(&m, &[3]).unwrap();
        assert!((x4.prob(&[0]) - 0.365).abs() < 1e-12);
        assert!((x4.prob(&[1]) - 0.635).abs() < 1e-12);
        // X1 and X2 marginally independent; same for X1 and X3.
        for other in [1usize, 2] {
            let joint = exact_marginal(&m, &[0, other]).unwrap();
            for a in 0..2u32 {
                for b in 0..2u32 {
                    assert!((joint.prob(&[a, b]) - 0.25).abs() < 1e-12);
                }
            }
        }
        // X2 and X3 are dependent: P(X2=0, X3=0) = 0.425.
        let x23 = exact_marginal(&m, &[1, 2]).unwrap();
        assert!((x23.prob(&[0, 0]) - 0.425).abs() < 1e-12);
    }

    #[test]
    fn table1_expected_counts_at_ten_thousand() {
        let m = table1_model();
        let t = expected_counts(&m, 10_000.0).unwrap();
        assert_eq!(t.total(), 10_000.0);
        let joint = t.project(&[0, 1, 2, 3]).unwrap();
        assert_eq!(joint.count_for(&[0, 0, 0, 0]), 225.0);
        assert_eq!(t.project(&[0]).unwrap().count_for(&[0]), 5_000.0);
        assert_eq!(t.project(&[3]).unwrap().count_for(&[0]), 3_650.0);
        assert_eq!(t.project(&[3]).unwrap().count_for(&[1]), 6_350.0);
        // Entropy of the X4 marginal, straight from the definition.
        let h = t.project(&[3]).unwrap().entropy_bits().unwrap();
        let expect = -(0.365f64 * 0.365f64.log2() + 0.635 * 0.635f64.log2());
        assert!((h - expect).abs() < 1e-12);
        assert!((h - 0.9468).abs() < 2e-4);
    }

    #[test]
    fn parity_model_probabilities() {
        let m = parity_model(3, 0.0).unwrap();
        assert_eq!(m.joint_prob(&[0, 0, 0]), 0.25);
        assert_eq!(m.joint_prob(&[0, 0, 1]), 0.0);
        assert_eq!(m.joint_prob(&[0, 1, 1]), 0.25);
        let m = parity_model(3, 0.1).unwrap();
        assert!((m.joint_prob(&[0, 0, 1]) - 0.025).abs() < 1e-15);
        assert!((m.joint_prob(&[0, 0, 0]) - 0.225).abs() < 1e-15);
        assert!(parity_model(2, 0.1).is_err());
        assert!(parity_model(3, 0.5).is_err());
        assert!(parity_model(3, -0.1).is_err());
    }

    #[test]
    fn parity_pairs_are_exactly_independent() {
        for flip in [0.0, 0.05, 0.3] {
            let m = parity_model(3, flip).unwrap();
            for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
                let joint = exact_marginal(&m, &[a, b]).unwrap();
                for ia in 0..2u32 {
                    for ib in 0..2u32 {
                        assert!(
                            (joint.prob(&[ia, ib]) - 0.25).abs() < 1e-12,
                            "pair ({a},{b}) at flip {flip}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn chain_presets_have_expected_shapes() {
        for (model, vars, clusters) in [
            (pim1_like(), 26, 13),
            (pim2_like(), 30, 15),
            (pim3_like(), 35, 17),
            (pim3_like_small(), 9, 4),
            (pim4_like(), 16, 7),
        ] {
            assert_eq!(model.scheme().len(), vars);
            assert_eq!(model.clusters().len(), clusters);
            // Uniform single-variable marginals throughout.
            for v in [0, vars / 2, vars - 1] {
                let marg = exact_marginal(&model, &[v]).unwrap();
                assert!((marg.prob(&[0]) - 0.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn embedded_parity_triple_is_pairwise_independent() {
        let m = pim3_like_small();
        // Cluster 1 is the parity triple over variables {2, 3, 4}.
        for (a, b) in [(2usize, 3usize), (2, 4), (3, 4)] {
            let joint = exact_marginal(&m, &[a, b]).unwrap();
            for ia in 0..2u32 {
                for ib in 0..2u32 {
                    assert!((joint.prob(&[ia, ib]) - 0.25).abs() < 1e-9);
                }
            }
        }
        // Whereas the coupled cluster 0 has dependent pairs.
        let joint = exact_marginal(&m, &[0, 1]).unwrap();
        assert!((joint.prob(&[0, 0]) - 0.25).abs() > 0.1);
    }
}
