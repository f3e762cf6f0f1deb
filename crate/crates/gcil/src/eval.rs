//! Frozen-embedding evaluation: the linear probe, multi-seed aggregation,
//! the ablation grid, and correlation-structure analysis.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::encoder::EmbeddingMatrix;
use crate::graph::{Graph, Splits};
use crate::probe::{self, ProbeOptions};
use crate::train::{self, TrainConfig};
use crate::{Error, Result};

/// Macro/Micro-F1 for one probe run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeScores {
    pub macro_f1: f64,
    pub micro_f1: f64,
}

/// Aggregated evaluation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    pub micro_f1_mean: f64,
    pub micro_f1_std: f64,
    pub num_seeds: usize,
    pub per_seed: Vec<PerSeed>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerSeed {
    pub seed: u64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub best_epoch: Option<usize>,
}

/// Pearson coefficients between embedding dimensions. Zero-variance
/// dimensions are flagged and contribute zero off-diagonals (their
/// correlation is undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub values: Array2<f64>,
    /// `true` where the dimension had (numerically) zero variance.
    pub degenerate: Vec<bool>,
}

impl CorrelationMatrix {
    /// Mean |r| over all off-diagonal entries.
    pub fn mean_abs_off_diagonal(&self) -> f64 {
        let d = self.values.nrows();
        if d < 2 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    acc += self.values[[i, j]].abs();
                }
            }
        }
        acc / (d * (d - 1)) as f64
    }

    /// `d` rows of comma-separated coefficients.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Fits the probe on frozen train-split embeddings and scores the test
/// split. `_probe_seed` is reserved for stochastic probes; the deterministic
/// solver does not consume randomness.
pub fn linear_probe(
    z: &EmbeddingMatrix,
    labels: &[u32],
    splits: &Splits,
    num_classes: usize,
    _probe_seed: u64,
) -> Result<ProbeScores> {
    if labels.len() != z.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} embeddings vs {} labels",
            z.nrows(),
            labels.len()
        )));
    }
    train::check_all_classes_present(&splits.train, labels, num_classes)?;
    let x_train = train::take_rows(z, &splits.train);
    let y_train: Vec<u32> = splits.train.iter().map(|&i| labels[i as usize]).collect();
    let fit = probe::fit_multinomial(&x_train, &y_train, num_classes, &ProbeOptions::default())?;
    let x_test = train::take_rows(z, &splits.test);
    let y_test: Vec<u32> = splits.test.iter().map(|&i| labels[i as usize]).collect();
    let pred = probe::predict(&fit, &x_test);
    let (macro_f1, micro_f1) = probe::f1_scores(&y_test, &pred, num_classes);
    Ok(ProbeScores { macro_f1, micro_f1 })
}

/// Trains once per seed, probes each run's returned checkpoint on the test
/// split, and aggregates mean/std.
pub fn multi_seed_eval(g: &Graph, cfg: &ExperimentConfig, seeds: &[u64]) -> Result<EvalReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "multi-seed evaluation needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    // Fail before spending any training time if probing is impossible.
    g.labels()
        .ok_or_else(|| Error::Probe("graph has no labels".into()))?;
    g.splits()
        .ok_or_else(|| Error::Probe("graph has no splits".into()))?;
    g.num_classes()
        .ok_or_else(|| Error::Probe("graph has no class count".into()))?;

    // Per-seed runs are independent; each is internally single-threaded and
    // deterministic, and the results are collected in seed order, so the
    // aggregate does not depend on scheduling.
    let per_seed: Vec<PerSeed> = seeds
        .par_iter()
        .map(|&seed| {
            eval_one_seed(g, cfg, seed)
                .map_err(|e| Error::Probe(format!("seed {seed} failed: {e}")))
        })
        .collect::<Result<_>>()?;

    let mean = |f: fn(&PerSeed) -> f64| -> f64 {
        per_seed.iter().map(f).sum::<f64>() / per_seed.len() as f64
    };
    let std = |f: fn(&PerSeed) -> f64, mu: f64| -> f64 {
        let var = per_seed
            .iter()
            .map(|p| (f(p) - mu).powi(2))
            .sum::<f64>()
            / per_seed.len() as f64;
        var.sqrt()
    };
    let ma_mean = mean(|p| p.macro_f1);
    let mi_mean = mean(|p| p.micro_f1);
    Ok(EvalReport {
        macro_f1_mean: ma_mean,
        macro_f1_std: std(|p| p.macro_f1, ma_mean),
        micro_f1_mean: mi_mean,
        micro_f1_std: std(|p| p.micro_f1, mi_mean),
        num_seeds: per_seed.len(),
        per_seed,
    })
}

/// One train-and-probe cycle at a fixed seed. Scores come from the
/// validation-selected checkpoint.
pub fn eval_one_seed(g: &Graph, cfg: &ExperimentConfig, seed: u64) -> Result<PerSeed> {
    let mut cfg = cfg.clone();
    cfg.train.seed = seed;
    let tc = TrainConfig::from_experiment(&cfg, g.num_edges())?;
    let outcome = train::train(g, &tc)?;
    let z = train::final_embed(g, &outcome.selected)?;
    let scores = linear_probe(
        &z,
        g.labels().expect("checked by caller"),
        g.splits().expect("checked by caller"),
        g.num_classes().expect("checked by caller"),
        seed,
    )?;
    Ok(PerSeed {
        seed,
        macro_f1: scores.macro_f1,
        micro_f1: scores.micro_f1,
        best_epoch: outcome.history.best.map(|b| b.epoch),
    })
}

/// Named ablation variant and its report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub report: EvalReport,
}

/// The four-configuration ablation grid: the full objective, the objective
/// without the independence term (γ=0), without the invariance and std
/// terms (α=β=0), and without the spectral intervention (random-only views).
pub fn ablation_suite(g: &Graph, base: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    base.validate()?;
    let variants: Vec<(String, ExperimentConfig)> = vec![
        ("full".into(), base.clone()),
        ("wo_independence".into(), base.with_overrides(&["loss.gamma=0.0".into()])?),
        (
            "wo_invariance".into(),
            base.with_overrides(&["loss.alpha=0.0".into(), "loss.beta=0.0".into()])?,
        ),
        (
            "wo_augmentation".into(),
            base.with_overrides(&["aug.spectral.enabled=false".into()])?,
        ),
    ];
    let mut rows = Vec::with_capacity(variants.len());
    for (variant, cfg) in variants {
        let report = multi_seed_eval(g, &cfg, seeds)
            .map_err(|e| Error::Probe(format!("ablation '{variant}': {e}")))?;
        rows.push(AblationRow { variant, report });
    }
    Ok(rows)
}

/// Pairwise Pearson coefficients between the columns of `z`.
pub fn correlation_matrix(z: &EmbeddingMatrix) -> Result<CorrelationMatrix> {
    let (n, d) = z.dim();
    if n < 2 {
        return Err(Error::ShapeMismatch(format!(
            "correlation needs at least 2 rows, got {n}"
        )));
    }
    let mut centered = z.clone();
    let mut degenerate = vec![false; d];
    let mut inv_norm = vec![0.0f64; d];
    for j in 0..d {
        let mut col = centered.column_mut(j);
        let mean = col.sum() / n as f64;
        col.mapv_inplace(|x| x - mean);
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            degenerate[j] = true;
        } else {
            inv_norm[j] = 1.0 / norm;
        }
    }
    for j in 0..d {
        let scale = inv_norm[j];
        centered.column_mut(j).mapv_inplace(|x| x * scale);
    }
    let mut values = centered.t().dot(&centered);
    for i in 0..d {
        for j in 0..d {
            if i == j {
                // exact unit diagonal for live dimensions; degenerate
                // dimensions keep an (arbitrary but flagged) zero
                values[[i, j]] = if degenerate[i] { 0.0 } else { 1.0 };
            } else if degenerate[i] || degenerate[j] {
                values[[i, j]] = 0.0;
            } else {
                values[[i, j]] = values[[i, j]].clamp(-1.0, 1.0);
            }
        }
    }
    Ok(CorrelationMatrix { values, degenerate })
}
