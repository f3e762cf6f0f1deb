//! Attributed undirected graph model.
//!
//! Edges are stored once as canonical `(lo, hi)` pairs and materialized
//! symmetric on demand; self-loops are never stored (the encoder adds them
//! during adjacency normalization). Features are kept sparse — the citation
//! datasets are bag-of-words matrices that are overwhelmingly zero.

use std::sync::Arc;

use crate::linalg::CsrMatrix;
use crate::{Error, Result};

/// Train/val/test node index sets. Pairwise disjoint, all within `[0, N)`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Splits {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
}

/// Immutable attributed undirected graph.
#[derive(Debug, Clone)]
pub struct Graph {
    name: String,
    num_nodes: usize,
    edges: Vec<(u32, u32)>,
    features: Arc<CsrMatrix>,
    labels: Option<Vec<u32>>,
    num_classes: Option<usize>,
    splits: Option<Splits>,
}

impl Graph {
    /// Validates and constructs. `edges` may arrive in either endpoint order;
    /// they are canonicalized to `(lo, hi)` and sorted. Duplicates (in either
    /// orientation) and self-loops are rejected.
    pub fn new(
        name: impl Into<String>,
        num_nodes: usize,
        edges: Vec<(u32, u32)>,
        features: CsrMatrix,
        labels: Option<Vec<u32>>,
        num_classes: Option<usize>,
        splits: Option<Splits>,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let n = num_nodes as u32;
        let mut canon = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        for w in canon.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }

        if features.nrows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows for {num_nodes} nodes",
                features.nrows()
            )));
        }
        if let Some(ref l) = labels {
            if l.len() != num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "{} labels for {num_nodes} nodes",
                    l.len()
                )));
            }
            let c = num_classes.ok_or_else(|| {
                Error::InvalidGraph("labels present but num_classes missing".into())
            })?;
            if let Some((i, &y)) = l.iter().enumerate().find(|&(_, &y)| y as usize >= c) {
                return Err(Error::InvalidGraph(format!(
                    "label {y} at node {i} outside [0, {c})"
                )));
            }
        }
        if let Some(ref s) = splits {
            validate_splits(s, num_nodes)?;
        }

        Ok(Graph {
            name: name.into(),
            num_nodes,
            edges: canon,
            features: Arc::new(features),
            labels,
            num_classes,
            splits,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    /// Canonical `(lo, hi)` undirected edge list, sorted.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Arc<CsrMatrix> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn splits(&self) -> Option<&Splits> {
        self.splits.as_ref()
    }

    /// Node degrees (self-loops excluded, since none are stored).
    pub fn degrees(&self) -> Vec<f64> {
        degrees_from_edges(self.num_nodes, &self.edges)
    }

    /// Symmetric 0/1 adjacency with both orientations materialized.
    pub fn adjacency(&self) -> CsrMatrix {
        adjacency_from_edges(self.num_nodes, &self.edges)
    }

    /// Copy with features row-normalized to sum 1 (zero rows left as-is).
    /// Bag-of-words datasets are conventionally trained this way.
    pub fn with_row_normalized_features(&self) -> Self {
        let f = &self.features;
        let mut triplets = Vec::with_capacity(f.nnz());
        for i in 0..f.nrows() {
            let (cols, vals) = f.row(i);
            let sum: f64 = vals.iter().sum();
            let scale = if sum != 0.0 { 1.0 / sum } else { 1.0 };
            for (&j, &v) in cols.iter().zip(vals) {
                triplets.push((i as u32, j, v * scale));
            }
        }
        let features = CsrMatrix::from_triplets(f.nrows(), f.ncols(), triplets)
            .expect("re-normalizing an already-valid matrix");
        Graph {
            features: Arc::new(features),
            ..self.clone()
        }
    }
}

fn validate_splits(s: &Splits, num_nodes: usize) -> Result<()> {
    let mut seen = vec![false; num_nodes];
    for (part, ids) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
        for &i in ids {
            if i as usize >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "{part} split references node {i}, graph has {num_nodes} nodes"
                )));
            }
            if seen[i as usize] {
                return Err(Error::InvalidGraph(format!(
                    "node {i} appears in more than one split"
                )));
            }
            seen[i as usize] = true;
        }
    }
    Ok(())
}

/// Degrees of an edge list over `n` nodes.
pub fn degrees_from_edges(n: usize, edges: &[(u32, u32)]) -> Vec<f64> {
    let mut deg = vec![0.0; n];
    for &(u, v) in edges {
        deg[u as usize] += 1.0;
        deg[v as usize] += 1.0;
    }
    deg
}

/// Symmetric 0/1 adjacency (no self-loops) from an undirected edge list.
pub fn adjacency_from_edges(n: usize, edges: &[(u32, u32)]) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(edges.len() * 2);
    for &(u, v) in edges {
        triplets.push((u, v, 1.0));
        triplets.push((v, u, 1.0));
    }
    CsrMatrix::from_triplets(n, n, triplets).expect("canonical edge list is duplicate-free")
}
