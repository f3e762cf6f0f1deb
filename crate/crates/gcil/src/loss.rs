//! The dimension-level contrastive objective and its pieces.
//!
//! Both view embeddings are normalized per dimension (mean-centered, unit L2
//! norm), then three terms combine:
//!
//! - **invariance**: the per-dimension inner product between views, to be
//!   maximized (enters the total with weight −α);
//! - **std targeting**: `Σ |s_i − λ|` per view, where `s_i` is the
//!   pre-normalization sample standard deviation — pulls every dimension's
//!   scale toward λ and away from collapse;
//! - **independence**: the squared off-diagonal covariance entries of the
//!   normalized matrix, summed over both views — a linear-kernel HSIC
//!   reduction, verified against [`hsic_linear_oracle`].
//!
//! Gradients are hand-derived and exact; [`total_loss_with_grads`] is the
//! training path, and the finite-difference suite pins it down.

use ndarray::{Array1, Array2};

use crate::encoder::EmbeddingMatrix;
use crate::{Error, Result};

/// Columns with pre-normalization std below this are treated as collapsed:
/// they normalize to the zero column and receive a zero subgradient.
pub const DEGENERATE_STD: f64 = 1e-6;

/// Per-dimension normalized embeddings plus the scale that was removed.
#[derive(Debug, Clone)]
pub struct NormalizedEmbeddings {
    /// N×d; every column mean-centered and unit-L2 (or exactly zero where
    /// the source column was degenerate).
    pub z_tilde: Array2<f64>,
    /// Sample standard deviation (denominator N−1) of each source column.
    pub pre_norm_std: Vec<f64>,
}

/// Loss weights. `alpha` scales invariance, `beta` the std target term,
/// `gamma` independence; `lambda_target` is the std target λ.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossHyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda_target: f64,
}

impl LossHyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.alpha == 0.0 && self.beta == 0.0 && self.gamma == 0.0 {
            return Err(Error::InvalidConfig(
                "at least one of alpha, beta, gamma must be positive".into(),
            ));
        }
        if !(self.lambda_target > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda_target must be positive, got {}",
                self.lambda_target
            )));
        }
        Ok(())
    }
}

/// The three terms and their weighted combination.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    /// Σ_i Z̃_i^A · Z̃_i^B (pre-weight; enters total negated).
    pub invariance_term: f64,
    /// Σ_i |s_i^A − λ| + |s_i^B − λ|.
    pub std_term: f64,
    /// Off-diagonal squared covariance, summed over both views.
    pub independence_term: f64,
    /// −α·invariance + β·std + γ·independence.
    pub total: f64,
    pub hyperparams: LossHyperparams,
}

/// Centers each column and scales it to unit L2 norm, recording the
/// pre-normalization sample std. Degenerate columns (std below
/// [`DEGENERATE_STD`]) become zero columns instead of NaN.
pub fn normalize_dims(z: &EmbeddingMatrix) -> Result<NormalizedEmbeddings> {
    let (n, d) = z.dim();
    if n < 2 {
        return Err(Error::ShapeMismatch(format!(
            "normalization needs at least 2 rows, got {n}"
        )));
    }
    let sqrt_nm1 = ((n - 1) as f64).sqrt();
    let mut z_tilde = z.clone();
    let mut pre_norm_std = Vec::with_capacity(d);
    for j in 0..d {
        let mut col = z_tilde.column_mut(j);
        let mean = col.sum() / n as f64;
        col.mapv_inplace(|x| x - mean);
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        let s = norm / sqrt_nm1;
        pre_norm_std.push(s);
        if s < DEGENERATE_STD {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|x| x / norm);
        }
    }
    Ok(NormalizedEmbeddings { z_tilde, pre_norm_std })
}

/// Σ_i Z̃_i^A · Z̃_i^B — the per-dimension alignment between views, in
/// `[−d, d]`.
pub fn invariance_term(za: &NormalizedEmbeddings, zb: &NormalizedEmbeddings) -> Result<f64> {
    if za.z_tilde.dim() != zb.z_tilde.dim() {
        return Err(Error::ShapeMismatch(format!(
            "view shapes differ: {:?} vs {:?}",
            za.z_tilde.dim(),
            zb.z_tilde.dim()
        )));
    }
    Ok((&za.z_tilde * &zb.z_tilde).sum())
}

/// Σ_i |s_i^A − λ| + |s_i^B − λ|.
pub fn std_term(sa: &[f64], sb: &[f64], lambda_target: f64) -> f64 {
    sa.iter()
        .chain(sb)
        .map(|s| (s - lambda_target).abs())
        .sum()
}

/// Sum of squared off-diagonal covariance entries of `z_tilde`'s columns,
/// with the N−1 denominator. Columns are assumed mean-centered (which
/// [`normalize_dims`] guarantees).
pub fn independence_term(z_tilde: &Array2<f64>) -> f64 {
    let (n, _) = z_tilde.dim();
    let gram = z_tilde.t().dot(z_tilde);
    let denom = ((n - 1) as f64).powi(2);
    let mut acc = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            if i != j {
                acc += gram[[i, j]] * gram[[i, j]] / denom;
            }
        }
    }
    acc
}

/// Exact linear-kernel HSIC between two embedding dimensions, by direct
/// N×N construction: `HSIC = Tr(K_i H K_j H)/(N−1)²` with `K = z zᵀ` and
/// `H = I − 11ᵀ/N`. Verification oracle only — quadratic memory, never on
/// the training path; restricted to test scale.
pub fn hsic_linear_oracle(zi: &[f64], zj: &[f64]) -> f64 {
    let n = zi.len();
    assert_eq!(n, zj.len(), "dimension vectors must have equal length");
    assert!(n >= 2, "HSIC needs at least 2 samples");
    assert!(n <= 2000, "oracle is restricted to test scale");

    let zi = Array1::from_iter(zi.iter().copied());
    let zj = Array1::from_iter(zj.iter().copied());
    let ki = outer(&zi, &zi);
    let kj = outer(&zj, &zj);
    let h = Array2::from_shape_fn((n, n), |(r, c)| {
        let eye = if r == c { 1.0 } else { 0.0 };
        eye - 1.0 / n as f64
    });
    let kih = ki.dot(&h);
    let kjh = kj.dot(&h);
    // Tr(A·B) = Σ_ij A_ij B_ji
    let mut tr = 0.0;
    for i in 0..n {
        for j in 0..n {
            tr += kih[[i, j]] * kjh[[j, i]];
        }
    }
    tr / ((n - 1) as f64).powi(2)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let n = a.len();
    Array2::from_shape_fn((n, n), |(i, j)| a[i] * b[j])
}

/// Evaluates the full objective on raw embeddings.
pub fn total_loss(
    za: &EmbeddingMatrix,
    zb: &EmbeddingMatrix,
    hp: &LossHyperparams,
) -> Result<LossBreakdown> {
    let (breakdown, _, _) = total_loss_with_grads(za, zb, hp)?;
    Ok(breakdown)
}

/// Evaluates the objective and its exact gradients with respect to both raw
/// embedding matrices.
///
/// Derivation sketch, per column j with centered column c and z̃ = c/‖c‖:
/// upstream g on z̃ pulls back through the unit-norm map as
/// `(g − (z̃·g)z̃)/‖c‖`; the std term adds `β·sign(s−λ)·z̃/√(N−1)` directly on
/// c; centering then removes the per-column mean of the result. Degenerate
/// columns take the zero subgradient.
pub fn total_loss_with_grads(
    za: &EmbeddingMatrix,
    zb: &EmbeddingMatrix,
    hp: &LossHyperparams,
) -> Result<(LossBreakdown, Array2<f64>, Array2<f64>)> {
    hp.validate()?;
    if za.dim() != zb.dim() {
        return Err(Error::ShapeMismatch(format!(
            "view shapes differ: {:?} vs {:?}",
            za.dim(),
            zb.dim()
        )));
    }
    let na = normalize_dims(za)?;
    let nb = normalize_dims(zb)?;

    let inv = invariance_term(&na, &nb)?;
    let std_t = std_term(&na.pre_norm_std, &nb.pre_norm_std, hp.lambda_target);
    let ind_a = independence_term(&na.z_tilde);
    let ind_b = independence_term(&nb.z_tilde);
    let ind = ind_a + ind_b;
    let total = -hp.alpha * inv + hp.beta * std_t + hp.gamma * ind;

    let grad_a = side_gradient(za, &na, &nb.z_tilde, hp);
    let grad_b = side_gradient(zb, &nb, &na.z_tilde, hp);

    Ok((
        LossBreakdown {
            invariance_term: inv,
            std_term: std_t,
            independence_term: ind,
            total,
            hyperparams: *hp,
        },
        grad_a,
        grad_b,
    ))
}

/// Gradient of the total loss with respect to one raw view matrix.
fn side_gradient(
    z_raw: &Array2<f64>,
    norm: &NormalizedEmbeddings,
    other_tilde: &Array2<f64>,
    hp: &LossHyperparams,
) -> Array2<f64> {
    let (n, d) = z_raw.dim();
    let nm1 = (n - 1) as f64;
    let zt = &norm.z_tilde;

    // Upstream on z̃: invariance pulls toward the other view; independence
    // pushes along Z̃·G_off with G_off the off-diagonal covariance.
    let mut gram = zt.t().dot(zt);
    for i in 0..d {
        gram[[i, i]] = 0.0;
    }
    let mut g = zt.dot(&gram);
    g.mapv_inplace(|x| x * hp.gamma * 4.0 / (nm1 * nm1));
    g.scaled_add(-hp.alpha, other_tilde);

    let mut out = Array2::zeros((n, d));
    for j in 0..d {
        let s = norm.pre_norm_std[j];
        if s < DEGENERATE_STD {
            continue; // zero-column branch: zero subgradient
        }
        let col_norm = s * nm1.sqrt();
        let zt_col = zt.column(j);
        let g_col = g.column(j);
        let dot: f64 = zt_col.iter().zip(g_col.iter()).map(|(a, b)| a * b).sum();

        let sign = match s.partial_cmp(&hp.lambda_target) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => -1.0,
            _ => 0.0, // subgradient 0 at the kink
        };
        let std_coeff = hp.beta * sign / nm1.sqrt();

        // dC_j, before re-centering.
        let mut dc: Vec<f64> = zt_col
            .iter()
            .zip(g_col.iter())
            .map(|(&zt_v, &g_v)| (g_v - dot * zt_v) / col_norm + std_coeff * zt_v)
            .collect();
        let mean = dc.iter().sum::<f64>() / n as f64;
        for v in &mut dc {
            *v -= mean;
        }
        for (i, v) in dc.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    out
}
