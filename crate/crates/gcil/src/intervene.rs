//! Structural intervention on the graph spectrum.
//!
//! The perturbation is found by maximizing `⟨ΘL, Δ⟩² + ε·H(Δ)` over soft
//! matrices Δ whose row/column sums match the degree marginals, where L is
//! the graph Laplacian, Θ a parameter matrix, and `H(Δ) = −Σ Δ(log Δ − 1)`
//! the entropy regularizer. With the quadratic term linearized at the
//! max-entropy plan, this is exactly an entropy-regularized matching: the
//! optimum has the form `diag(u)·exp(S/ε)·diag(v)`, and alternating row and
//! column scaling (Sinkhorn iteration) recovers u, v.
//!
//! Additions (`Δ⁺`) draw candidates from non-edges, deletions (`Δ⁻`) from
//! existing edges with the score sign flipped. The soft plans are
//! materialized to discrete edge edits by deterministic top-k selection.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::InterventionRecord;
use crate::rng;
use crate::spectral::SpectralPrimitives;
use crate::{Error, Result};

/// Θ update policy. The fixed-random mode draws Θ once per run and keeps it;
/// the trained mode takes one ascent step on the quadratic objective every
/// `update_every_steps` encoder steps.
///
/// Serialized as a tagged table, e.g. `{ mode = "fixed-random" }` or
/// `{ mode = "trained", update_every_steps = 4, step_size = 0.01 }`. The
/// custom repr exists because internally-tagged serde enums ignore unknown
/// keys, and config typos should be hard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThetaModeRepr", into = "ThetaModeRepr")]
pub enum ThetaMode {
    FixedRandom,
    Trained {
        update_every_steps: usize,
        step_size: f64,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThetaModeRepr {
    mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    update_every_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_size: Option<f64>,
}

impl From<ThetaMode> for ThetaModeRepr {
    fn from(m: ThetaMode) -> Self {
        match m {
            ThetaMode::FixedRandom => ThetaModeRepr {
                mode: "fixed-random".into(),
                update_every_steps: None,
                step_size: None,
            },
            ThetaMode::Trained {
                update_every_steps,
                step_size,
            } => ThetaModeRepr {
                mode: "trained".into(),
                update_every_steps: Some(update_every_steps),
                step_size: Some(step_size),
            },
        }
    }
}

impl TryFrom<ThetaModeRepr> for ThetaMode {
    type Error = String;

    fn try_from(r: ThetaModeRepr) -> std::result::Result<Self, String> {
        match r.mode.as_str() {
            "fixed-random" => {
                if r.update_every_steps.is_some() || r.step_size.is_some() {
                    return Err(
                        "fixed-random theta mode takes no update_every_steps/step_size".into(),
                    );
                }
                Ok(ThetaMode::FixedRandom)
            }
            "trained" => match (r.update_every_steps, r.step_size) {
                (Some(update_every_steps), Some(step_size)) => Ok(ThetaMode::Trained {
                    update_every_steps,
                    step_size,
                }),
                _ => Err("trained theta mode requires update_every_steps and step_size".into()),
            },
            other => Err(format!(
                "unknown theta mode {other:?}; expected \"fixed-random\" or \"trained\""
            )),
        }
    }
}

/// Configuration of the spectral intervention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralInterventionConfig {
    pub epsilon: f64,
    pub sinkhorn_iters: usize,
    /// Edges materialized from Δ⁺ / Δ⁻. A zero budget is the identity edit.
    pub add_budget: usize,
    pub delete_budget: usize,
    pub theta_mode: ThetaMode,
}

impl SpectralInterventionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.sinkhorn_iters == 0 {
            return Err(Error::InvalidConfig("sinkhorn_iters must be positive".into()));
        }
        Ok(())
    }

    /// Budgets at the conventional default: 5% of the undirected edge count.
    pub fn default_budgets(num_edges: usize) -> usize {
        (num_edges as f64 * 0.05).round() as usize
    }
}

/// A solved soft perturbation plan.
#[derive(Debug, Clone)]
pub struct SoftPerturbation {
    /// Dense N×N mass, zero outside the candidate set, entries in `[0, 1]`.
    pub mass: Array2<f64>,
    /// Final marginal residual `‖Δ1 − a‖₁ + ‖Δᵀ1 − b‖₁`.
    pub residual: f64,
    /// Residual after each Sinkhorn round; non-increasing on feasible
    /// candidate sets. A plateau above zero diagnoses an infeasible support
    /// (the solver still returns its best iterate rather than failing).
    pub residual_history: Vec<f64>,
    pub iterations: usize,
}

/// Draws the Θ parameter: zero-mean, unit-variance entries (uniform on
/// `[−√3, √3]`), seed-controlled.
pub fn sample_theta(n: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::rng_for(seed, rng::Stream::Intervention, 0);
    let lim = 3.0f64.sqrt();
    Array2::from_shape_fn((n, n), |_| r.gen_range(-lim..lim))
}

/// One ascent step on `J(Θ) = ⟨ΘL, Δ⟩²`: `Θ += η · 2⟨ΘL, Δ⟩ · ΔLᵀ`.
/// Used by the trained Θ mode between refreshes.
pub fn theta_ascent_step(
    theta: &mut Array2<f64>,
    prim: &SpectralPrimitives,
    delta: &Array2<f64>,
    step_size: f64,
) -> Result<()> {
    let theta_l = theta_times_laplacian(theta, prim)?;
    let c: f64 = theta_l
        .iter()
        .zip(delta.iter())
        .map(|(s, d)| s * d)
        .sum();
    // ΔLᵀ = ΔL for the symmetric Laplacian; computed as (L Δᵀ)ᵀ.
    let delta_l = prim
        .laplacian
        .matmul_dense(&delta.t().to_owned())?
        .t()
        .to_owned();
    theta.scaled_add(step_size * 2.0 * c, &delta_l);
    Ok(())
}

/// Soft addition plan over non-edges (diagonal excluded).
pub fn solve_delta_plus(
    prim: &SpectralPrimitives,
    theta: &Array2<f64>,
    cfg: &SpectralInterventionConfig,
) -> Result<SoftPerturbation> {
    solve(prim, theta, cfg, CandidateSet::NonEdges, 1.0)
}

/// Soft deletion plan over existing edges, score sign flipped so the
/// highest-payoff deletions receive the most mass.
pub fn solve_delta_minus(
    prim: &SpectralPrimitives,
    theta: &Array2<f64>,
    cfg: &SpectralInterventionConfig,
) -> Result<SoftPerturbation> {
    solve(prim, theta, cfg, CandidateSet::Edges, -1.0)
}

#[derive(Clone, Copy)]
enum CandidateSet {
    NonEdges,
    Edges,
}

/// `ΘL` as a dense matrix, computed as `(L Θᵀ)ᵀ` so the sparse operand
/// drives the multiplication (L is symmetric).
fn theta_times_laplacian(theta: &Array2<f64>, prim: &SpectralPrimitives) -> Result<Array2<f64>> {
    Ok(prim
        .laplacian
        .matmul_dense(&theta.t().to_owned())?
        .t()
        .to_owned())
}

fn solve(
    prim: &SpectralPrimitives,
    theta: &Array2<f64>,
    cfg: &SpectralInterventionConfig,
    candidates: CandidateSet,
    sign: f64,
) -> Result<SoftPerturbation> {
    cfg.validate()?;
    let n = prim.laplacian.nrows();
    if theta.nrows() != n || theta.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "theta is {}x{}, graph has {n} nodes",
            theta.nrows(),
            theta.ncols()
        )));
    }
    if !theta.iter().all(|t| t.is_finite()) {
        return Err(Error::Transport("theta contains non-finite entries".into()));
    }
    let a = &prim.degree_out;
    let b = &prim.degree_in;

    // Candidate mask. The adjacency stores existing edges; the diagonal is
    // never a candidate on either side.
    let adj = &prim.normalized_adjacency; // support == A ∪ I
    let is_candidate = |i: usize, j: usize| -> bool {
        if i == j {
            return false;
        }
        let stored = adj.get(i, j) != 0.0;
        match candidates {
            CandidateSet::NonEdges => !stored,
            CandidateSet::Edges => stored,
        }
    };

    let theta_l = theta_times_laplacian(theta, prim)?;

    // Linearization point: the max-entropy plan a·bᵀ restricted to the
    // candidate set. The quadratic term contributes its gradient there,
    // 2⟨ΘL, Δ₀⟩·ΘL, as the score.
    let mut anchor = 0.0;
    let mut num_candidates = 0usize;
    for i in 0..n {
        for j in 0..n {
            if is_candidate(i, j) {
                anchor += theta_l[[i, j]] * a[i] * b[j];
                num_candidates += 1;
            }
        }
    }
    if num_candidates == 0 {
        return Err(Error::InvalidGraph(format!(
            "no candidate pairs to {}: the graph is {}",
            match candidates {
                CandidateSet::NonEdges => "add",
                CandidateSet::Edges => "delete",
            },
            match candidates {
                CandidateSet::NonEdges => "complete",
                CandidateSet::Edges => "edgeless",
            }
        )));
    }
    let coeff = sign * 2.0 * anchor;

    // Kernel K = exp((S − max S)/ε) on candidates; the shift cancels in the
    // scaling and keeps exp in range.
    let mut smax = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if is_candidate(i, j) {
                smax = smax.max(coeff * theta_l[[i, j]]);
            }
        }
    }
    let mut kernel = Array2::zeros((n, n));
    if smax.is_finite() {
        for i in 0..n {
            for j in 0..n {
                if is_candidate(i, j) {
                    kernel[[i, j]] = ((coeff * theta_l[[i, j]] - smax) / cfg.epsilon).exp();
                }
            }
        }
    }

    // Sinkhorn: u ← a ⊘ Kv, v ← b ⊘ Kᵀu. Zero marginals (isolated nodes)
    // and empty rows of K scale to zero instead of dividing by zero.
    let mut u = vec![1.0f64; n];
    let mut v = vec![1.0f64; n];
    let mut residual_history = Vec::with_capacity(cfg.sinkhorn_iters);
    let mut best = f64::INFINITY;
    for _ in 0..cfg.sinkhorn_iters {
        let kv = mat_vec(&kernel, &v);
        for i in 0..n {
            u[i] = safe_div(a[i], kv[i]);
        }
        let ktu = mat_t_vec(&kernel, &u);
        for j in 0..n {
            v[j] = safe_div(b[j], ktu[j]);
        }

        // After the v-update columns are exact wherever feasible; the
        // residual is dominated by row drift.
        let kv = mat_vec(&kernel, &v);
        let mut res = 0.0;
        for i in 0..n {
            res += (u[i] * kv[i] - a[i]).abs();
        }
        let ktu = mat_t_vec(&kernel, &u);
        for j in 0..n {
            res += (v[j] * ktu[j] - b[j]).abs();
        }
        best = best.min(res);
        residual_history.push(res);
    }

    let mut mass = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let m = u[i] * kernel[[i, j]] * v[j];
            mass[[i, j]] = m.clamp(0.0, 1.0);
        }
    }
    let residual = residual_history.last().copied().unwrap_or(0.0);
    Ok(SoftPerturbation {
        mass,
        residual,
        residual_history,
        iterations: cfg.sinkhorn_iters,
    })
}

fn mat_vec(m: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    let (n, _) = m.dim();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let row = m.row(i);
        let row = row.as_slice().expect("row-major");
        out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    out
}

fn mat_t_vec(m: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    let (n, cols) = m.dim();
    let mut out = vec![0.0; cols];
    for i in 0..n {
        let row = m.row(i);
        let row = row.as_slice().expect("row-major");
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * xi;
        }
    }
    out
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den > 0.0 && num > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Applies the soft plans to an edge list: the top `add_budget` pairs of Δ⁺
/// become new edges, the top `delete_budget` pairs of Δ⁻ are removed. Pair
/// mass is the sum of both directed entries; ties break lexicographically.
/// Budgets beyond the candidate count apply every candidate.
///
/// `_rng_seed` is reserved for a sampling-based materialization policy; the
/// deterministic top-k policy does not consume randomness.
pub fn materialize_intervened_graph(
    num_nodes: usize,
    edges: &[(u32, u32)],
    delta_plus: &SoftPerturbation,
    delta_minus: &SoftPerturbation,
    cfg: &SpectralInterventionConfig,
    _rng_seed: u64,
) -> Result<(Vec<(u32, u32)>, InterventionRecord)> {
    for (name, d) in [("delta_plus", delta_plus), ("delta_minus", delta_minus)] {
        if d.mass.nrows() != num_nodes || d.mass.ncols() != num_nodes {
            return Err(Error::ShapeMismatch(format!(
                "{name} mass is {}x{}, graph has {num_nodes} nodes",
                d.mass.nrows(),
                d.mass.ncols()
            )));
        }
    }
    let added = top_pairs(&delta_plus.mass, cfg.add_budget);
    let deleted_set: std::collections::BTreeSet<(u32, u32)> =
        top_pairs(&delta_minus.mass, cfg.delete_budget).into_iter().collect();

    let mut new_edges: Vec<(u32, u32)> = edges
        .iter()
        .copied()
        .filter(|e| !deleted_set.contains(e))
        .collect();
    let deleted: Vec<(u32, u32)> = deleted_set.into_iter().collect();
    new_edges.extend(added.iter().copied());
    new_edges.sort_unstable();
    new_edges.dedup();

    Ok((
        new_edges,
        InterventionRecord {
            added_edges: added,
            deleted_edges: deleted,
        },
    ))
}

/// Top `k` unordered pairs by mass (sum of both directions), mass strictly
/// positive, ties broken by ascending `(i, j)`.
fn top_pairs(mass: &Array2<f64>, k: usize) -> Vec<(u32, u32)> {
    let n = mass.nrows();
    let mut scored: Vec<(f64, u32, u32)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = mass[[i, j]] + mass[[j, i]];
            if m > 0.0 {
                scored.push((m, i as u32, j as u32));
            }
        }
    }
    scored.sort_unstable_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .expect("mass is finite")
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    scored.truncate(k);
    let mut pairs: Vec<(u32, u32)> = scored.into_iter().map(|(_, i, j)| (i, j)).collect();
    pairs.sort_unstable();
    pairs
}
