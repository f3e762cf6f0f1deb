//! Graph convolutional encoder.
//!
//! Propagation: `H^{(l+1)} = σ(Â H^{(l)} W^{(l)})` with `Â` the
//! symmetric-normalized adjacency with self-loops and σ a rectifier on every
//! layer except the last. The final layer stays linear so embedding
//! dimensions can take either sign — the objectives treat each dimension as
//! a centered variable, which clipping at zero would break.
//!
//! Backward passes are hand-rolled reverse-mode products: the whole model is
//! two sparse-dense multiplications per layer, and owning the gradient code
//! keeps the training path dependency-free and exactly reproducible.

use ndarray::Array2;
use rand::Rng;

use crate::augment::View;
use crate::linalg::CsrMatrix;
use crate::rng;
use crate::spectral::normalized_adjacency;
use crate::{Error, Result};

/// Node representation matrix, N×d.
pub type EmbeddingMatrix = Array2<f64>;

/// Architecture description: 1 or 2 graph-convolution layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 2,
            hidden_dim: 512,
            output_dim: 512,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.layers) {
            return Err(Error::InvalidConfig(format!(
                "encoder supports 1 or 2 layers, got {}",
                self.layers
            )));
        }
        if self.output_dim == 0 || (self.layers == 2 && self.hidden_dim == 0) {
            return Err(Error::InvalidConfig("encoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder weights. The activation between layers is a rectifier; it is part
/// of the architecture, not a tunable.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    layer_weights: Vec<Array2<f64>>,
}

impl EncoderParams {
    /// Glorot-uniform initialization, seed-controlled: each weight is drawn
    /// from `U(−lim, lim)` with `lim = √(6/(fan_in+fan_out))`.
    pub fn init(cfg: &EncoderConfig, input_dim: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidConfig("input dimension must be positive".into()));
        }
        let dims: Vec<usize> = if cfg.layers == 1 {
            vec![input_dim, cfg.output_dim]
        } else {
            vec![input_dim, cfg.hidden_dim, cfg.output_dim]
        };
        let mut layer_weights = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut r = rng::rng_for(seed, rng::Stream::EncoderInit, l as u64);
            layer_weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                r.gen_range(-lim..lim)
            }));
        }
        Ok(EncoderParams { layer_weights })
    }

    /// Constructs from explicit weight matrices (checkpoint loading, tests).
    pub fn from_weights(layer_weights: Vec<Array2<f64>>) -> Result<Self> {
        if layer_weights.is_empty() || layer_weights.len() > 2 {
            return Err(Error::InvalidConfig(format!(
                "encoder supports 1 or 2 layers, got {}",
                layer_weights.len()
            )));
        }
        for w in layer_weights.windows(2) {
            if w[0].ncols() != w[1].nrows() {
                return Err(Error::InvalidConfig(format!(
                    "layer dimensions do not chain: {}x{} then {}x{}",
                    w[0].nrows(),
                    w[0].ncols(),
                    w[1].nrows(),
                    w[1].ncols()
                )));
            }
        }
        Ok(EncoderParams { layer_weights })
    }

    pub fn layer_weights(&self) -> &[Array2<f64>] {
        &self.layer_weights
    }

    pub(crate) fn layer_weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.layer_weights
    }

    pub fn num_layers(&self) -> usize {
        self.layer_weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layer_weights.last().expect("at least one layer").ncols()
    }
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    /// Pre-activation `U_l = Â H_{l-1} W_l` for every layer but the last.
    pre_activations: Vec<Array2<f64>>,
    /// Post-activation inputs `H_l` for layers beyond the first.
    hidden: Vec<Array2<f64>>,
}

/// Encodes a view: builds the normalized adjacency (self-loops included) and
/// propagates the masked features through every layer.
pub fn encode(view: &View, params: &EncoderParams) -> Result<EmbeddingMatrix> {
    let a_hat = normalized_adjacency(view.num_nodes(), view.edges());
    let (z, _) = forward(&a_hat, view.features_base(), view.feature_mask(), params)?;
    Ok(z)
}

/// Gradients of `⟨upstream, Z⟩` with respect to every weight matrix, by
/// exact reverse-mode differentiation.
pub fn encoder_gradients(
    view: &View,
    params: &EncoderParams,
    upstream: &Array2<f64>,
) -> Result<Vec<Array2<f64>>> {
    let a_hat = normalized_adjacency(view.num_nodes(), view.edges());
    let (_, cache) = forward(&a_hat, view.features_base(), view.feature_mask(), params)?;
    backward(
        &a_hat,
        view.features_base(),
        view.feature_mask(),
        params,
        &cache,
        upstream,
    )
}

/// Forward pass against a prebuilt `Â`. The training loop uses this directly
/// so the adjacency is constructed once per view.
pub fn forward(
    a_hat: &CsrMatrix,
    features: &CsrMatrix,
    feature_mask: &[bool],
    params: &EncoderParams,
) -> Result<(EmbeddingMatrix, ForwardCache)> {
    if features.ncols() != params.input_dim() {
        return Err(Error::InvalidConfig(format!(
            "view has {} feature columns, encoder expects {}",
            features.ncols(),
            params.input_dim()
        )));
    }
    if a_hat.nrows() != features.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "adjacency is {}x{}, features have {} rows",
            a_hat.nrows(),
            a_hat.ncols(),
            features.nrows()
        )));
    }

    let num_layers = params.num_layers();
    let mut pre_activations = Vec::with_capacity(num_layers.saturating_sub(1));
    let mut hidden = Vec::with_capacity(num_layers.saturating_sub(1));

    // First layer reads the sparse masked features.
    let xw = features.matmul_dense_masked(&params.layer_weights[0], Some(feature_mask))?;
    let mut u = a_hat.matmul_dense(&xw)?;

    for l in 1..num_layers {
        let h = u.mapv(|x| x.max(0.0));
        pre_activations.push(u);
        let hw = h.dot(&params.layer_weights[l]);
        u = a_hat.matmul_dense(&hw)?;
        hidden.push(h);
    }

    Ok((u, ForwardCache { pre_activations, hidden }))
}

/// Reverse-mode pass matching [`forward`]: gradients of `⟨upstream, Z⟩`
/// with respect to each weight matrix.
pub fn backward(
    a_hat: &CsrMatrix,
    features: &CsrMatrix,
    feature_mask: &[bool],
    params: &EncoderParams,
    cache: &ForwardCache,
    upstream: &Array2<f64>,
) -> Result<Vec<Array2<f64>>> {
    let num_layers = params.num_layers();
    let mut grads: Vec<Array2<f64>> = Vec::with_capacity(num_layers);

    // d⟨upstream, Z⟩/dU_L = upstream; peel layers from the top.
    let mut d_u = upstream.clone();
    for l in (0..num_layers).rev() {
        // U_l = Â M_l with M_l = H_{l-1} W_l, so dM_l = Âᵀ dU_l = Â dU_l.
        let d_m = a_hat.matmul_dense(&d_u)?;
        if l == 0 {
            let d_w = features.transpose_matmul_dense_masked(&d_m, Some(feature_mask))?;
            grads.push(d_w);
        } else {
            let h_in = &cache.hidden[l - 1];
            grads.push(h_in.t().dot(&d_m));
            let mut d_h = d_m.dot(&params.layer_weights[l].t());
            // rectifier gate
            d_h.zip_mut_with(&cache.pre_activations[l - 1], |g, &u| {
                if u <= 0.0 {
                    *g = 0.0;
                }
            });
            d_u = d_h;
        }
    }
    grads.reverse();
    Ok(grads)
}
