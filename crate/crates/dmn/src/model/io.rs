//! Model spec files (`dmn-model v1`): variables with cardinalities, one
//! probability table per cluster (nonzero rows only), then the cluster tree
//! edges.
//!
//! ```text
//! dmn-model v1
//! vars 3
//! X1 2
//! X2 2
//! X3 2
//! clusters 2
//! cluster 2 X1 X2
//! rows 4
//! 0 0 0.4
//! ...
//! cluster 2 X2 X3
//! rows 4
//! ...
//! tree 1
//! 0 1
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{compose_model, ClusterModel, ModelError, ProbTable};
use crate::data::Scheme;

pub fn write_model(model: &ClusterModel, path: &Path) -> Result<(), ModelError> {
    fs::write(path, to_text(model))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<ClusterModel, ModelError> {
    from_text(&fs::read_to_string(path)?)
}

pub fn to_text(model: &ClusterModel) -> String {
    let scheme = model.scheme();
    let mut out = String::from("dmn-model v1\n");
    out.push_str(&format!("vars {}\n", scheme.len()));
    for (name, card) in scheme.variables() {
        out.push_str(&format!("{name} {card}\n"));
    }
    out.push_str(&format!("clusters {}\n", model.clusters().len()));
    for cluster in model.clusters() {
        let names: Vec<&str> = cluster.vars().iter().map(|&v| scheme.name(v)).collect();
        out.push_str(&format!("cluster {} {}\n", names.len(), names.join(" ")));
        let nonzero: Vec<(Vec<u32>, f64)> = (0..cluster.len())
            .filter(|&i| cluster.values()[i] != 0.0)
            .map(|i| (cluster.config_at(i), cluster.values()[i]))
            .collect();
        out.push_str(&format!("rows {}\n", nonzero.len()));
        for (cfg, p) in nonzero {
            for v in cfg {
                out.push_str(&format!("{v} "));
            }
            out.push_str(&format!("{p}\n"));
        }
    }
    out.push_str(&format!("tree {}\n", model.tree_edges().len()));
    for &(a, b) in model.tree_edges() {
        out.push_str(&format!("{a} {b}\n"));
    }
    out
}

struct Cursor<'a> {
    lines: std::str::Lines<'a>,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), ModelError> {
        self.line += 1;
        match self.lines.next() {
            Some(l) => Ok((self.line, l)),
            None => Err(ModelError::Parse {
                line: self.line,
                message: "unexpected end of file".into(),
            }),
        }
    }
}

pub fn from_text(text: &str) -> Result<ClusterModel, ModelError> {
    let mut lines = Cursor {
        lines: text.lines(),
        line: 0,
    };
    let parse_err = |line: usize, message: &str| ModelError::Parse {
        line,
        message: message.to_string(),
    };

    let (ln, magic) = lines.next()?;
    if magic.trim() != "dmn-model v1" {
        return Err(parse_err(ln, "expected `dmn-model v1`"));
    }
    let (ln, vars_line) = lines.next()?;
    let k: usize = vars_line
        .trim()
        .strip_prefix("vars ")
        .and_then(|r| r.trim().parse().ok())
        .ok_or_else(|| parse_err(ln, "expected `vars <k>`"))?;
    let mut vars = Vec::with_capacity(k);
    for _ in 0..k {
        let (ln, line) = lines.next()?;
        let mut parts = line.split_whitespace();
        let name = parts.next().ok_or_else(|| parse_err(ln, "missing name"))?;
        let card: u32 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(ln, "bad cardinality"))?;
        vars.push((name.to_string(), card));
    }
    let scheme = Arc::new(Scheme::new(vars)?);

    let (ln, clusters_line) = lines.next()?;
    let cluster_count: usize = clusters_line
        .trim()
        .strip_prefix("clusters ")
        .and_then(|r| r.trim().parse().ok())
        .ok_or_else(|| parse_err(ln, "expected `clusters <c>`"))?;

    let mut clusters = Vec::with_capacity(cluster_count);
    for _ in 0..cluster_count {
        let (ln, header) = lines.next()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("cluster") {
            return Err(parse_err(ln, "expected `cluster <m> <names...>`"));
        }
        let m: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(ln, "bad member count"))?;
        let mut members = Vec::with_capacity(m);
        for _ in 0..m {
            let name = parts
                .next()
                .ok_or_else(|| parse_err(ln, "missing member name"))?;
            let idx = scheme
                .index_of(name)
                .ok_or_else(|| parse_err(ln, "unknown cluster member"))?;
            members.push(idx);
        }
        members.sort_unstable();
        let (ln, rows_line) = lines.next()?;
        let row_count: usize = rows_line
            .trim()
            .strip_prefix("rows ")
            .and_then(|r| r.trim().parse().ok())
            .ok_or_else(|| parse_err(ln, "expected `rows <r>`"))?;
        let cards: Vec<u32> = members.iter().map(|&v| scheme.cardinality(v)).collect();
        let space: usize = cards.iter().map(|&c| c as usize).product();
        let mut values = vec![0.0f64; space];
        for _ in 0..row_count {
            let (ln, line) = lines.next()?;
            let mut parts = line.split_whitespace();
            let mut idx = 0usize;
            for &card in &cards {
                let v: u32 = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(ln, "bad value index"))?;
                if v >= card {
                    return Err(parse_err(ln, "value index out of range"));
                }
                idx = idx * card as usize + v as usize;
            }
            let p: f64 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(ln, "bad probability"))?;
            values[idx] = p;
        }
        clusters.push(ProbTable::new(&scheme, &members, values)?);
    }

    let (ln, tree_line) = lines.next()?;
    let edge_count: usize = tree_line
        .trim()
        .strip_prefix("tree ")
        .and_then(|r| r.trim().parse().ok())
        .ok_or_else(|| parse_err(ln, "expected `tree <t>`"))?;
    let mut tree = Vec::with_capacity(edge_count);
    for _ in 0..edge_count {
        let (ln, line) = lines.next()?;
        let mut parts = line.split_whitespace();
        let a: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(ln, "bad tree edge"))?;
        let b: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(ln, "bad tree edge"))?;
        tree.push((a, b));
    }

    compose_model(scheme, clusters, tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parity_model, pim3_like_small, table1_model};

    #[test]
    fn text_round_trips_preserve_the_joint() {
        for model in [
            table1_model(),
            parity_model(3, 0.05).unwrap(),
            pim3_like_small(),
        ] {
            let text = to_text(&model);
            let back = from_text(&text).unwrap();
            assert_eq!(back.scheme(), model.scheme());
            assert_eq!(back.clusters().len(), model.clusters().len());
            let k = model.scheme().len();
            if k <= 10 {
                let mut cfg = vec![0u32; k];
                loop {
                    assert_eq!(back.joint_prob(&cfg), model.joint_prob(&cfg));
                    if !super::super::increment_config(&mut cfg, model.scheme()) {
                        break;
                    }
                }
            }
            // Serialization is stable.
            assert_eq!(to_text(&back), text);
        }
    }

    #[test]
    fn deterministic_xor_model_omits_zero_rows() {
        let model = parity_model(3, 0.0).unwrap();
        let text = to_text(&model);
        assert!(text.contains("rows 4\n"));
        let back = from_text(&text).unwrap();
        assert_eq!(back.joint_prob(&[0, 0, 1]), 0.0);
        assert_eq!(back.joint_prob(&[0, 0, 0]), 0.25);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(matches!(
            from_text("dmn-model v2\n"),
            Err(ModelError::Parse { .. })
        ));
        let text = "dmn-model v1\nvars 1\nA 2\nclusters 1\ncluster 1 B\nrows 0\ntree 0\n";
        assert!(matches!(from_text(text), Err(ModelError::Parse { .. })));
        // An unnormalized cluster fails model validation, not parsing.
        let text = "dmn-model v1\nvars 1\nA 2\nclusters 1\ncluster 1 A\nrows 1\n0 0.4\ntree 0\n";
        assert!(matches!(from_text(text), Err(ModelError::NotNormalized(..))));
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        let model = table1_model();
        write_model(&model, &path).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(to_text(&back), to_text(&model));
    }
}
