//! Learned clip representations (attention context vectors), class means,
//! average-linkage agglomerative clustering and the export formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{euclidean, Matrix};
use crate::nn::{attention_forward, bilstm_forward, BiLstmAttentionModel};
use crate::pipeline::{FittedPipeline, LabeledFeatures};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub id: String,
    pub label: String,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.vector.len())
    }
}

pub fn context_vector(model: &BiLstmAttentionModel, input: &Matrix) -> Result<Vec<f64>> {
    let hs = bilstm_forward(&model.bilstm, input)?;
    Ok(attention_forward(&model.attention, &hs)?.context)
}

/// One row per clip, in input order.
pub fn extract_embeddings(pipeline: &FittedPipeline, clips: &[LabeledFeatures]) -> Result<EmbeddingSet> {
    if !pipeline.trained {
        return Err(Error::Untrained);
    }
    let rows = clips
        .par_iter()
        .map(|c| {
            let x = pipeline.front.prepare(&c.features)?;
            let label = pipeline.labels.get(c.label).cloned().ok_or(Error::LabelOutOfRange {
                label: c.label,
                classes: pipeline.labels.len(),
            })?;
            Ok(EmbeddingRow {
                id: c.id.clone(),
                label,
                vector: context_vector(&pipeline.model, &x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddingSet { rows })
}

/// Unweighted mean per label, labels in lexicographic order.
pub fn class_means(set: &EmbeddingSet) -> Result<Vec<(String, Vec<f64>)>> {
    if set.is_empty() {
        return Err(Error::Dataset("no embeddings to average".into()));
    }
    let dim = set.dim();
    let mut groups: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for r in &set.rows {
        if r.vector.len() != dim {
            return Err(Error::Shape("embedding vectors differ in length".into()));
        }
        groups.entry(&r.label).or_default().push(&r.vector);
    }
    Ok(groups
        .into_iter()
        .map(|(label, mut vs)| {
            // fixed summation order makes the mean independent of row order
            vs.sort_by(|a, b| {
                a.iter()
                    .zip(*b)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let n = vs.len() as f64;
            let mut mean = vec![0.0; dim];
            for v in &vs {
                for (m, x) in mean.iter_mut().zip(*v) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            (label.to_string(), mean)
        })
        .collect())
}

/// Leaves are numbered `0..n`; merge `k` creates node `n + k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
}

struct Cluster {
    node: usize,
    size: usize,
    /// Smallest leaf label, used for tie-breaking.
    key: String,
}

/// Average-linkage, Euclidean. Among equal distances the pair whose
/// (smaller, larger) minimum-label tuple is lexicographically first wins.
pub fn agglomerative(points: &[(String, Vec<f64>)]) -> Result<Dendrogram> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Dataset(format!("clustering needs at least 2 points, got {n}")));
    }
    let dim = points[0].1.len();
    if points
        .iter()
        .any(|p| p.1.len() != dim || p.1.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Shape("cluster points must be finite and equally long".into()));
    }
    let mut clusters: Vec<Cluster> = points
        .iter()
        .enumerate()
        .map(|(i, p)| Cluster {
            node: i,
            size: 1,
            key: p.0.clone(),
        })
        .collect();
    // sums[i][j]: total leaf-pair distance between active clusters i and j
    let mut sums: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| euclidean(&points[i].1, &points[j].1)).collect())
        .collect();
    let mut merges = Vec::with_capacity(n - 1);

    while clusters.len() > 1 {
        let mut best: Option<(f64, (String, String), usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let d = sums[i][j] / (clusters[i].size * clusters[j].size) as f64;
                let (a, b) = (&clusters[i].key, &clusters[j].key);
                let pair = if a <= b {
                    (a.clone(), b.clone())
                } else {
                    (b.clone(), a.clone())
                };
                let better = match &best {
                    None => true,
                    Some((bd, bp, _, _)) => d < *bd || (d == *bd && pair < *bp),
                };
                if better {
                    best = Some((d, pair, i, j));
                }
            }
        }
        let (distance, _, i, j) = best.expect("at least two clusters");
        let (ci, cj) = (&clusters[i], &clusters[j]);
        let (left, right) = if ci.key <= cj.key {
            (ci.node, cj.node)
        } else {
            (cj.node, ci.node)
        };
        let merged = Cluster {
            node: n + merges.len(),
            size: ci.size + cj.size,
            key: ci.key.clone().min(cj.key.clone()),
        };
        merges.push(Merge {
            left,
            right,
            distance,
            size: merged.size,
        });
        // fold j into i, then drop j
        for k in 0..clusters.len() {
            let s = sums[i][k] + sums[j][k];
            sums[i][k] = s;
            sums[k][i] = s;
        }
        sums[i][i] = 0.0;
        clusters[i] = merged;
        clusters.remove(j);
        sums.remove(j);
        for row in &mut sums {
            row.remove(j);
        }
    }
    Ok(Dendrogram {
        leaves: points.iter().map(|p| p.0.clone()).collect(),
        merges,
    })
}

impl Dendrogram {
    pub fn root(&self) -> usize {
        self.leaves.len() + self.merges.len() - 1
    }

    /// Merge height of a node; 0 for leaves.
    pub fn height(&self, node: usize) -> f64 {
        node.checked_sub(self.leaves.len())
            .map_or(0.0, |k| self.merges[k].distance)
    }

    /// Sorted leaf labels under `node`.
    pub fn members(&self, node: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            match x.checked_sub(self.leaves.len()) {
                None => out.push(self.leaves[x].clone()),
                Some(k) => stack.extend([self.merges[k].left, self.merges[k].right]),
            }
        }
        out.sort();
        out
    }

    pub fn to_json(&self) -> Value {
        self.node_json(self.root())
    }

    fn node_json(&self, node: usize) -> Value {
        match node.checked_sub(self.leaves.len()) {
            None => json!({ "label": self.leaves[node] }),
            Some(k) => {
                let m = &self.merges[k];
                json!({
                    "children": [self.node_json(m.left), self.node_json(m.right)],
                    "distance": m.distance,
                    "merge": k,
                })
            }
        }
    }

    /// Rebuilds the tree from [`Dendrogram::to_json`] output; leaves are
    /// numbered in depth-first order.
    pub fn from_json(v: &Value) -> Result<Self> {
        let mut leaves = Vec::new();
        let mut found: Vec<(usize, Value, Value, f64)> = Vec::new();
        collect(v, &mut leaves, &mut found)?;
        found.sort_by_key(|f| f.0);
        if found.iter().enumerate().any(|(i, f)| f.0 != i) || found.len() + 1 != leaves.len() {
            return Err(Error::Dataset("dendrogram JSON has inconsistent merge indices".into()));
        }
        let n = leaves.len();
        let mut ids: Vec<(Value, usize)> = Vec::new();
        for (i, l) in leaves.iter().enumerate() {
            ids.push((json!({ "label": l }), i));
        }
        let lookup = |ids: &[(Value, usize)], node: &Value| -> Result<usize> {
            let key = node
                .get("merge")
                .cloned()
                .map(|m| json!({ "merge": m }))
                .unwrap_or_else(|| node.clone());
            ids.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, id)| *id)
                .ok_or_else(|| Error::Dataset("dendrogram JSON references an unknown node".into()))
        };
        let mut merges = Vec::new();
        let mut sizes = vec![1; n];
        for (k, a, b, distance) in found {
            let (left, right) = (lookup(&ids, &a)?, lookup(&ids, &b)?);
            let size = sizes[left] + sizes[right];
            sizes.push(size);
            merges.push(Merge {
                left,
                right,
                distance,
                size,
            });
            ids.push((json!({ "merge": k }), n + k));
        }
        Ok(Self { leaves, merges })
    }

    /// Midpoint convention: a node sits at half its merge distance and each
    /// branch spans the height difference to its parent.
    pub fn to_newick(&self) -> String {
        let mut s = String::new();
        self.newick_node(self.root(), &mut s);
        s.push(';');
        s
    }

    fn newick_node(&self, node: usize, out: &mut String) {
        match node.checked_sub(self.leaves.len()) {
            None => out.push_str(&newick_label(&self.leaves[node])),
            Some(k) => {
                let m = &self.merges[k];
                let h = m.distance / 2.0;
                out.push('(');
                self.newick_node(m.left, out);
                write!(out, ":{}", h - self.height(m.left) / 2.0).expect("string write");
                out.push(',');
                self.newick_node(m.right, out);
                write!(out, ":{}", h - self.height(m.right) / 2.0).expect("string write");
                out.push(')');
            }
        }
    }
}

fn collect(v: &Value, leaves: &mut Vec<String>, found: &mut Vec<(usize, Value, Value, f64)>) -> Result<()> {
    let bad = || Error::Dataset("malformed dendrogram JSON node".into());
    if let Some(label) = v.get("label") {
        leaves.push(label.as_str().ok_or_else(bad)?.to_string());
        return Ok(());
    }
    let children = v.get("children").and_then(Value::as_array).ok_or_else(bad)?;
    if children.len() != 2 {
        return Err(bad());
    }
    collect(&children[0], leaves, found)?;
    collect(&children[1], leaves, found)?;
    let k = v.get("merge").and_then(Value::as_u64).ok_or_else(bad)? as usize;
    let d = v.get("distance").and_then(Value::as_f64).ok_or_else(bad)?;
    found.push((k, children[0].clone(), children[1].clone(), d));
    Ok(())
}

fn newick_label(label: &str) -> String {
    if label
        .chars()
        .all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.')
        && !label.is_empty()
    {
        label.to_string()
    } else {
        format!("'{}'", label.replace('\'', "''"))
    }
}

/// CSV `id,label,e0,…`; values use shortest round-trip formatting.
pub fn export_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if set.is_empty() {
        return Err(Error::Dataset("refusing to export an empty embedding set".into()));
    }
    let dim = set.dim();
    if set.rows.iter().any(|r| r.vector.len() != dim) {
        return Err(Error::Shape("embedding vectors differ in length".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..dim).map(|k| format!("e{k}")));
    w.write_record(&header)?;
    for r in &set.rows {
        let mut rec = vec![r.id.clone(), r.label.clone()];
        rec.extend(r.vector.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vector = rec
            .iter()
            .skip(2)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::format(path, format!("bad value {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(EmbeddingRow {
            id: rec.get(0).unwrap_or_default().to_string(),
            label: rec.get(1).unwrap_or_default().to_string(),
            vector,
        });
    }
    Ok(EmbeddingSet { rows })
}

/// Writes `<stem>.json` and `<stem>.nwk` next to each other; `path` may
/// carry either extension.
pub fn export_dendrogram(tree: &Dendrogram, path: impl AsRef<Path>) -> Result<()> {
    let json_path = path.as_ref().with_extension("json");
    let nwk_path = path.as_ref().with_extension("nwk");
    let text = serde_json::to_string_pretty(&tree.to_json())?;
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    fs::write(&nwk_path, tree.to_newick() + "\n").map_err(|e| Error::io(&nwk_path, e))
}
