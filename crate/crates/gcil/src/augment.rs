//! Stochastic view generation: independent edge dropping plus column-wise
//! feature masking, with full provenance of what was perturbed.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use crate::graph::{adjacency_from_edges, Graph};
use crate::linalg::CsrMatrix;
use crate::rng;
use crate::{Error, Result};

/// Random augmentation parameters. Rates live in `[0, 1)` — a rate of 1
/// would always produce an empty view, which is never what anyone means.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RandomAugConfig {
    pub edge_drop_rate: f64,
    pub feature_mask_rate: f64,
    pub rng_seed: u64,
}

impl RandomAugConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("edge_drop_rate", self.edge_drop_rate),
            ("feature_mask_rate", self.feature_mask_rate),
        ] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in [0, 1), got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Structural edits already applied to the adjacency a view is drawn from
/// (the output of soft-perturbation materialization).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InterventionRecord {
    pub added_edges: Vec<(u32, u32)>,
    pub deleted_edges: Vec<(u32, u32)>,
}

/// How a view came to differ from the original graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    /// Edges removed by random dropping.
    pub dropped_edges: Vec<(u32, u32)>,
    /// Edges inserted by the structural intervention, if any.
    pub added_edges: Vec<(u32, u32)>,
    /// Edges removed by the structural intervention, if any.
    pub deleted_edges: Vec<(u32, u32)>,
    /// Feature columns zeroed across all nodes, sorted.
    pub masked_columns: Vec<u32>,
}

/// One augmented view of a graph: perturbed edge set plus masked features.
///
/// Features are stored as the shared base matrix plus the column mask; the
/// encoder skips masked columns directly on the sparse representation, so
/// the N×F masked matrix never needs materializing on the hot path.
#[derive(Debug, Clone)]
pub struct View {
    num_nodes: usize,
    edges: Vec<(u32, u32)>,
    features: Arc<CsrMatrix>,
    feature_mask: Vec<bool>,
    provenance: Provenance,
}

impl View {
    /// The un-augmented graph as a view (identity transformation).
    pub fn identity(g: &Graph) -> View {
        View {
            num_nodes: g.num_nodes(),
            edges: g.edges().to_vec(),
            features: Arc::clone(g.features()),
            feature_mask: vec![false; g.num_features()],
            provenance: Provenance::default(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Surviving undirected edges, canonical order.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Symmetric 0/1 adjacency of the view.
    pub fn adjacency(&self) -> CsrMatrix {
        adjacency_from_edges(self.num_nodes, &self.edges)
    }

    /// Unmasked feature matrix shared with the source graph.
    pub fn features_base(&self) -> &Arc<CsrMatrix> {
        &self.features
    }

    /// `true` entries are masked (treated as zero).
    pub fn feature_mask(&self) -> &[bool] {
        &self.feature_mask
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Masked feature matrix, materialized dense. Test/debug convenience.
    pub fn features_dense(&self) -> Array2<f64> {
        let mut x = self.features.to_dense();
        for (j, &masked) in self.feature_mask.iter().enumerate() {
            if masked {
                x.column_mut(j).fill(0.0);
            }
        }
        x
    }
}

/// Draws a random view: each undirected edge survives independently with
/// probability `1 − edge_drop_rate`, and `round(feature_mask_rate · F)`
/// distinct feature columns are zeroed for every node. Deterministic given
/// `cfg.rng_seed`.
pub fn random_augment(
    num_nodes: usize,
    edges: &[(u32, u32)],
    features: &Arc<CsrMatrix>,
    cfg: &RandomAugConfig,
) -> Result<View> {
    random_augment_intervened(num_nodes, edges, features, cfg, None)
}

/// [`random_augment`] over an adjacency that already carries structural
/// edits; the edits are recorded in the view's provenance.
pub fn random_augment_intervened(
    num_nodes: usize,
    edges: &[(u32, u32)],
    features: &Arc<CsrMatrix>,
    cfg: &RandomAugConfig,
    intervention: Option<&InterventionRecord>,
) -> Result<View> {
    cfg.validate()?;
    let mut rng = rng::rng_for(cfg.rng_seed, rng::Stream::ViewA, 0);

    let mut kept = Vec::with_capacity(edges.len());
    let mut dropped = Vec::new();
    for &e in edges {
        if rng.gen::<f64>() < cfg.edge_drop_rate {
            dropped.push(e);
        } else {
            kept.push(e);
        }
    }

    let num_features = features.ncols();
    let k = (cfg.feature_mask_rate * num_features as f64).round() as usize;
    let mut mask = vec![false; num_features];
    let mut masked_columns: Vec<u32> = if k > 0 {
        rand::seq::index::sample(&mut rng, num_features, k)
            .into_iter()
            .map(|j| j as u32)
            .collect()
    } else {
        Vec::new()
    };
    masked_columns.sort_unstable();
    for &j in &masked_columns {
        mask[j as usize] = true;
    }

    let (added_edges, deleted_edges) = match intervention {
        Some(r) => (r.added_edges.clone(), r.deleted_edges.clone()),
        None => (Vec::new(), Vec::new()),
    };

    Ok(View {
        num_nodes,
        edges: kept,
        features: Arc::clone(features),
        feature_mask: mask,
        provenance: Provenance {
            dropped_edges: dropped,
            added_edges,
            deleted_edges,
            masked_columns,
        },
    })
}
