//! Pseudo-independence verification: which pairs of a variable subset look
//! marginally independent, and whether the subset is collectively dependent
//! anyway.

use std::fmt;

use super::{exact_marginal, ClusterModel, ModelError, ProbTable};

/// Verdict for one variable pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairVerdict {
    pub a: String,
    pub b: String,
    /// Max-norm deviation of the pair joint from the product of marginals.
    pub deviation: f64,
    pub independent: bool,
}

/// Report over a variable subset: per-pair independence verdicts plus
/// whether some variable depends on the rest jointly beyond every proper
/// sub-conditioning.
#[derive(Debug, Clone)]
pub struct PiReport {
    pub subset: Vec<String>,
    pub pairs: Vec<PairVerdict>,
    pub collective: bool,
    /// A variable whose conditional on the rest differs from all of its
    /// sub-conditionals, when one exists.
    pub collective_witness: Option<String>,
    pub tolerance: f64,
}

impl PiReport {
    /// An (embedded) pseudo-independent submodel: collectively dependent
    /// while at least one pair is marginally independent.
    pub fn is_pi_submodel(&self) -> bool {
        self.collective && self.pairs.iter().any(|p| p.independent)
    }
}

impl fmt::Display for PiReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "subset: {}", self.subset.join(","))?;
        for p in &self.pairs {
            writeln!(
                f,
                "pair {},{}: {} (deviation {:.3e})",
                p.a,
                p.b,
                if p.independent { "independent" } else { "dependent" },
                p.deviation
            )?;
        }
        writeln!(
            f,
            "collective dependence: {}{}",
            self.collective,
            self.collective_witness
                .as_ref()
                .map(|w| format!(" (witness {w})"))
                .unwrap_or_default()
        )?;
        write!(
            f,
            "pseudo-independent submodel: {} (tolerance {:.1e})",
            self.is_pi_submodel(),
            self.tolerance
        )
    }
}

/// Checks a subset of at least three variables against the model's exact
/// marginals. A pair is independent when its joint deviates from the product
/// of marginals by at most `tol` in max norm. The subset is collectively
/// dependent when some variable's conditional given all the others differs
/// (beyond `tol`, on some positive-probability configuration) from its
/// conditional under every proper sub-conditioning.
pub fn verify_pi(
    model: &ClusterModel,
    subset: &[usize],
    tol: f64,
) -> Result<PiReport, ModelError> {
    let subset = model.scheme().normalize_subset(subset).map_err(ModelError::Data)?;
    if subset.len() < 3 {
        return Err(ModelError::TooFewVariables {
            want: 3,
            got: subset.len(),
        });
    }
    let joint = exact_marginal(model, &subset)?;

    let mut pairs = Vec::new();
    for (i, &a) in subset.iter().enumerate() {
        for &b in subset.iter().skip(i + 1) {
            let pair = joint.marginalize(&[a, b]);
            let ma = joint.marginalize(&[a]);
            let mb = joint.marginalize(&[b]);
            let mut deviation = 0.0f64;
            for idx in 0..pair.len() {
                let cfg = pair.config_at(idx);
                let product = ma.prob(&[cfg[0]]) * mb.prob(&[cfg[1]]);
                deviation = deviation.max((pair.values()[idx] - product).abs());
            }
            pairs.push(PairVerdict {
                a: model.scheme().name(a).to_string(),
                b: model.scheme().name(b).to_string(),
                deviation,
                independent: deviation <= tol,
            });
        }
    }

    let mut collective = false;
    let mut witness = None;
    for &v in &subset {
        if conditional_exceeds_every_subconditioning(&joint, v, &subset, tol) {
            collective = true;
            witness = Some(model.scheme().name(v).to_string());
            break;
        }
    }

    Ok(PiReport {
        subset: subset.iter().map(|&v| model.scheme().name(v).to_string()).collect(),
        pairs,
        collective,
        collective_witness: witness,
        tolerance: tol,
    })
}

/// True when `P(v | rest)` differs from `P(v | T)` by more than `tol` for
/// every proper subset `T` of the rest (including the empty conditioning).
fn conditional_exceeds_every_subconditioning(
    joint: &ProbTable,
    v: usize,
    subset: &[usize],
    tol: f64,
) -> bool {
    let rest: Vec<usize> = subset.iter().copied().filter(|&w| w != v).collect();
    let rest_marg = joint.marginalize(&rest);
    let rest_pos: Vec<usize> = rest
        .iter()
        .map(|w| subset.iter().position(|x| x == w).unwrap())
        .collect();

    // Proper subsets of `rest` by bitmask, the empty set included.
    for mask in 0..(1u32 << rest.len()) - 1 {
        let t: Vec<usize> = rest
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &w)| w)
            .collect();
        let mut cond_vars = t.clone();
        cond_vars.push(v);
        let sub_joint = joint.marginalize(&cond_vars);
        let sub_marg = if t.is_empty() {
            None
        } else {
            Some(joint.marginalize(&t))
        };

        let mut max_dev = 0.0f64;
        for idx in 0..joint.len() {
            let cfg = joint.config_at(idx);
            let rest_cfg: Vec<u32> = rest_pos.iter().map(|&p| cfg[p]).collect();
            let p_rest = rest_marg.prob(&rest_cfg);
            if p_rest <= 0.0 {
                continue;
            }
            let p_full = joint.values()[idx] / p_rest;

            // Conditional under the sub-conditioning T.
            let sub_cfg: Vec<u32> = sub_joint
                .vars()
                .iter()
                .map(|w| {
                    let p = subset.iter().position(|x| x == w).unwrap();
                    cfg[p]
                })
                .collect();
            let p_t = match &sub_marg {
                None => sub_joint.prob(&sub_cfg),
                Some(m) => {
                    let t_cfg: Vec<u32> = t
                        .iter()
                        .map(|w| {
                            let p = subset.iter().position(|x| x == w).unwrap();
                            cfg[p]
                        })
                        .collect();
                    let denom = m.prob(&t_cfg);
                    if denom <= 0.0 {
                        continue;
                    }
                    sub_joint.prob(&sub_cfg) / denom
                }
            };
            max_dev = max_dev.max((p_full - p_t).abs());
        }
        if max_dev <= tol {
            // Some proper sub-conditioning already explains v.
            return false;
        }
    }
    true
}
