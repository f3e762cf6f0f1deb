//! Full-graph training: regenerated views per epoch, the dimension-level
//! loss, adaptive-moment updates with decoupled weight decay, periodic
//! validation probes, and checkpoint selection.

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;

use crate::augment::{InterventionRecord, RandomAugConfig, View};
use crate::config::ExperimentConfig;
use crate::encoder::{self, EncoderConfig, EncoderParams};
use crate::graph::Graph;
use crate::intervene::{
    self, SpectralInterventionConfig, ThetaMode,
};
use crate::loss::{self, LossBreakdown, LossHyperparams};
use crate::probe::{self, ProbeOptions};
use crate::rng::{self, Stream};
use crate::spectral::{normalized_adjacency, spectral_primitives};
use crate::{Error, Result};

/// Runtime training configuration with every dataset-dependent value
/// resolved (in particular the spectral edit budgets).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub loss: LossHyperparams,
    pub encoder: EncoderConfig,
    pub edge_drop_rate_a: f64,
    pub edge_drop_rate_b: f64,
    pub feature_mask_rate_a: f64,
    pub feature_mask_rate_b: f64,
    pub spectral: Option<SpectralSchedule>,
}

/// Spectral intervention with its refresh cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSchedule {
    pub intervention: SpectralInterventionConfig,
    pub refresh_epochs: usize,
}

impl TrainConfig {
    /// Lowers the file-facing config into the runtime form. `num_edges` is
    /// the dataset's undirected edge count, used to resolve the default
    /// (5%) edit budgets.
    pub fn from_experiment(cfg: &ExperimentConfig, num_edges: usize) -> Result<Self> {
        cfg.validate()?;
        let sp = &cfg.aug.spectral;
        let spectral = if sp.enabled {
            let default_budget = SpectralInterventionConfig::default_budgets(num_edges);
            Some(SpectralSchedule {
                intervention: SpectralInterventionConfig {
                    epsilon: sp.epsilon,
                    sinkhorn_iters: sp.sinkhorn_iters,
                    add_budget: sp.add_budget.unwrap_or(default_budget),
                    delete_budget: sp.delete_budget.unwrap_or(default_budget),
                    theta_mode: sp.theta_mode,
                },
                refresh_epochs: sp.refresh_epochs,
            })
        } else {
            None
        };
        Ok(TrainConfig {
            epochs: cfg.train.epochs,
            learning_rate: cfg.train.learning_rate,
            weight_decay: cfg.train.weight_decay,
            seed: cfg.train.seed,
            eval_every: cfg.train.eval_every,
            loss: cfg.loss,
            encoder: cfg.encoder,
            edge_drop_rate_a: cfg.aug.edge_drop_rate_a,
            edge_drop_rate_b: cfg.aug.edge_drop_rate_b,
            feature_mask_rate_a: cfg.aug.feature_mask_rate_a,
            feature_mask_rate_b: cfg.aug.feature_mask_rate_b,
            spectral,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be ≥ 1".into()));
        }
        self.encoder.validate()?;
        self.loss.validate()?;
        if let Some(sp) = &self.spectral {
            sp.intervention.validate()?;
            if sp.refresh_epochs == 0 {
                return Err(Error::InvalidConfig("refresh_epochs must be ≥ 1".into()));
            }
        }
        Ok(())
    }
}

/// One epoch's record in the training history.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    /// Mean (over dimensions and both views) pre-normalization std —
    /// the anti-collapse telemetry the std term targets.
    pub mean_pre_norm_std: f64,
    /// Wall-clock seconds for the epoch. Excluded from serialized metrics
    /// streams so identical runs produce identical artifacts.
    #[serde(skip)]
    pub wall_secs: f64,
    /// Validation Micro-F1 when this epoch ran a probe.
    pub val_micro_f1: Option<f64>,
}

/// Best-checkpoint pointer by validation Micro-F1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BestCheckpoint {
    pub epoch: usize,
    pub val_micro_f1: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Set whenever the graph carries labels and splits; `None` for
    /// unlabeled fixtures (the final parameters are returned then).
    pub best: Option<BestCheckpoint>,
}

/// A finished run: the checkpoint selected by validation Micro-F1 (the
/// earliest best epoch — standard early-stopping convention), the
/// end-of-training parameters, and the per-epoch history.
///
/// The two parameter sets serve different purposes downstream: probing
/// reports the selected checkpoint, while representation-level analyses
/// (e.g. the correlation structure) describe the fully trained model.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub selected: EncoderParams,
    pub last: EncoderParams,
    pub history: TrainHistory,
}

/// Trains the encoder. Graphs without labels/splits skip probing; the
/// selected parameters are then the final ones.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = g.num_nodes();
    let mut params = EncoderParams::init(&cfg.encoder, g.num_features(), cfg.seed)?;
    let mut opt = AdamW::new(
        params.layer_weights().iter().map(|w| w.dim()).collect(),
        cfg.learning_rate,
        cfg.weight_decay,
    );

    let can_probe = g.labels().is_some() && g.splits().is_some();
    let a_hat_orig = normalized_adjacency(n, g.edges());
    let no_mask = vec![false; g.num_features()];

    let mut spectral_state = cfg
        .spectral
        .as_ref()
        .map(|sched| SpectralState::new(g, sched, cfg.seed))
        .transpose()?;

    let mut history = TrainHistory::default();
    let mut best: Option<(BestCheckpoint, EncoderParams)> = None;

    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();

        let (edges_b, record_b) = match &mut spectral_state {
            Some(state) => {
                state.refresh_if_due(epoch)?;
                (state.edges.as_slice(), Some(&state.record))
            }
            None => (g.edges(), None),
        };

        let view_a = crate::augment::random_augment(
            n,
            g.edges(),
            g.features(),
            &RandomAugConfig {
                edge_drop_rate: cfg.edge_drop_rate_a,
                feature_mask_rate: cfg.feature_mask_rate_a,
                rng_seed: rng::derive_seed(cfg.seed, Stream::ViewA, epoch as u64),
            },
        )?;
        let view_b = crate::augment::random_augment_intervened(
            n,
            edges_b,
            g.features(),
            &RandomAugConfig {
                edge_drop_rate: cfg.edge_drop_rate_b,
                feature_mask_rate: cfg.feature_mask_rate_b,
                rng_seed: rng::derive_seed(cfg.seed, Stream::ViewB, epoch as u64),
            },
            record_b,
        )?;

        let (za, grads_a, zb, grads_b, breakdown) =
            step_views(&view_a, &view_b, &params, &cfg.loss, epoch)?;

        let mean_std = {
            let sa = loss::normalize_dims(&za)?.pre_norm_std;
            let sb = loss::normalize_dims(&zb)?.pre_norm_std;
            let total: f64 = sa.iter().chain(sb.iter()).sum();
            total / (sa.len() + sb.len()) as f64
        };

        let mut grads = grads_a;
        for (g_total, g_b) in grads.iter_mut().zip(grads_b) {
            *g_total += &g_b;
        }
        for (layer, grad) in grads.iter().enumerate() {
            if !grad.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: format!("non-finite gradient in layer {layer}; last {breakdown:?}"),
                });
            }
        }
        opt.step(params.layer_weights_mut(), &grads);

        if let (Some(state), Some(sched)) = (&mut spectral_state, &cfg.spectral) {
            if let ThetaMode::Trained {
                update_every_steps,
                step_size,
            } = sched.intervention.theta_mode
            {
                if update_every_steps > 0 && epoch % update_every_steps == 0 {
                    state.theta_step(step_size)?;
                }
            }
        }

        let val_micro_f1 = if can_probe && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)
        {
            let (z_full, _) =
                encoder::forward(&a_hat_orig, g.features(), &no_mask, &params)?;
            let vmi = validation_micro_f1(&z_full, g)?;
            let improved = match &best {
                Some((b, _)) => vmi > b.val_micro_f1,
                None => true,
            };
            if improved {
                best = Some((
                    BestCheckpoint {
                        epoch,
                        val_micro_f1: vmi,
                    },
                    params.clone(),
                ));
            }
            Some(vmi)
        } else {
            None
        };

        history.epochs.push(EpochRecord {
            epoch,
            loss: breakdown,
            mean_pre_norm_std: mean_std,
            wall_secs: t0.elapsed().as_secs_f64(),
            val_micro_f1,
        });
    }

    match best {
        Some((pointer, selected)) => {
            history.best = Some(pointer);
            Ok(TrainOutcome {
                selected,
                last: params,
                history,
            })
        }
        None => Ok(TrainOutcome {
            selected: params.clone(),
            last: params,
            history,
        }),
    }
}

/// Encodes the *original* graph — no augmentation — with trained parameters.
pub fn final_embed(g: &Graph, params: &EncoderParams) -> Result<Array2<f64>> {
    encoder::encode(&View::identity(g), params)
}

fn step_views(
    view_a: &View,
    view_b: &View,
    params: &EncoderParams,
    hp: &LossHyperparams,
    epoch: usize,
) -> Result<(Array2<f64>, Vec<Array2<f64>>, Array2<f64>, Vec<Array2<f64>>, LossBreakdown)> {
    let a_hat_a = normalized_adjacency(view_a.num_nodes(), view_a.edges());
    let a_hat_b = normalized_adjacency(view_b.num_nodes(), view_b.edges());
    let (za, cache_a) =
        encoder::forward(&a_hat_a, view_a.features_base(), view_a.feature_mask(), params)?;
    let (zb, cache_b) =
        encoder::forward(&a_hat_b, view_b.features_base(), view_b.feature_mask(), params)?;

    let (breakdown, dza, dzb) = loss::total_loss_with_grads(&za, &zb, hp)?;
    if !breakdown.total.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch,
            detail: format!("last {breakdown:?}"),
        });
    }
    let grads_a = encoder::backward(
        &a_hat_a,
        view_a.features_base(),
        view_a.feature_mask(),
        params,
        &cache_a,
        &dza,
    )?;
    let grads_b = encoder::backward(
        &a_hat_b,
        view_b.features_base(),
        view_b.feature_mask(),
        params,
        &cache_b,
        &dzb,
    )?;
    Ok((za, grads_a, zb, grads_b, breakdown))
}

/// Micro-F1 of a probe fit on the train split and applied to the validation
/// split.
fn validation_micro_f1(z: &Array2<f64>, g: &Graph) -> Result<f64> {
    let labels = g.labels().expect("caller checked");
    let splits = g.splits().expect("caller checked");
    let k = g
        .num_classes()
        .ok_or_else(|| Error::Probe("graph has labels but no class count".into()))?;
    check_all_classes_present(&splits.train, labels, k)?;
    let x_train = take_rows(z, &splits.train);
    let y_train: Vec<u32> = splits.train.iter().map(|&i| labels[i as usize]).collect();
    let fit = probe::fit_multinomial(&x_train, &y_train, k, &ProbeOptions::default())?;
    let x_val = take_rows(z, &splits.val);
    let y_val: Vec<u32> = splits.val.iter().map(|&i| labels[i as usize]).collect();
    let pred = probe::predict(&fit, &x_val);
    let (_, micro) = probe::f1_scores(&y_val, &pred, k);
    Ok(micro)
}

pub(crate) fn check_all_classes_present(
    train: &[u32],
    labels: &[u32],
    num_classes: usize,
) -> Result<()> {
    let mut seen = vec![false; num_classes];
    for &i in train {
        seen[labels[i as usize] as usize] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Probe(format!(
            "class {missing} is absent from the training split"
        )));
    }
    Ok(())
}

pub(crate) fn take_rows(z: &Array2<f64>, idx: &[u32]) -> Array2<f64> {
    let d = z.ncols();
    let mut out = Array2::zeros((idx.len(), d));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&z.row(i as usize));
    }
    out
}

/// Adaptive-moment optimizer with decoupled weight decay
/// (β₁=0.9, β₂=0.999, ε=1e-8).
struct AdamW {
    lr: f64,
    wd: f64,
    t: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamW {
    fn new(shapes: Vec<(usize, usize)>, lr: f64, wd: f64) -> Self {
        AdamW {
            lr,
            wd,
            t: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    fn step(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t);
        let bc2 = 1.0 - B2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = B1 * *m + (1.0 - B1) * g;
                    *v = B2 * *v + (1.0 - B2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= self.lr * (mh / (vh.sqrt() + EPS) + self.wd * *p);
                });
        }
    }
}

/// Spectral-intervention state across a run. In fixed-random mode the edits
/// are a pure function of (graph, seed), so refreshes after the first are
/// no-ops and the solve is memoized; in trained mode Θ evolves and refreshes
/// re-solve against the current Θ.
struct SpectralState {
    prim: crate::spectral::SpectralPrimitives,
    cfg: SpectralInterventionConfig,
    refresh_epochs: usize,
    theta: Array2<f64>,
    base_edges: Vec<(u32, u32)>,
    edges: Vec<(u32, u32)>,
    record: InterventionRecord,
    last_delta_plus: Option<Array2<f64>>,
    solved_once: bool,
    rng_seed: u64,
}

impl SpectralState {
    fn new(g: &Graph, sched: &SpectralSchedule, master_seed: u64) -> Result<Self> {
        Ok(SpectralState {
            prim: spectral_primitives(g),
            cfg: sched.intervention,
            refresh_epochs: sched.refresh_epochs,
            theta: intervene::sample_theta(g.num_nodes(), master_seed),
            base_edges: g.edges().to_vec(),
            edges: g.edges().to_vec(),
            record: InterventionRecord::default(),
            last_delta_plus: None,
            solved_once: false,
            rng_seed: master_seed,
        })
    }

    fn refresh_if_due(&mut self, epoch: usize) -> Result<()> {
        let due = (epoch - 1) % self.refresh_epochs == 0;
        if !due {
            return Ok(());
        }
        if self.solved_once && matches!(self.cfg.theta_mode, ThetaMode::FixedRandom) {
            return Ok(()); // Θ fixed → identical solve; keep the edits
        }
        let plus = intervene::solve_delta_plus(&self.prim, &self.theta, &self.cfg)?;
        let minus = intervene::solve_delta_minus(&self.prim, &self.theta, &self.cfg)?;
        let (edges, record) = intervene::materialize_intervened_graph(
            self.prim.laplacian.nrows(),
            &self.base_edges,
            &plus,
            &minus,
            &self.cfg,
            self.rng_seed,
        )?;
        if matches!(self.cfg.theta_mode, ThetaMode::Trained { .. }) {
            self.last_delta_plus = Some(plus.mass);
        }
        self.edges = edges;
        self.record = record;
        self.solved_once = true;
        Ok(())
    }

    fn theta_step(&mut self, step_size: f64) -> Result<()> {
        if let Some(delta) = &self.last_delta_plus {
            intervene::theta_ascent_step(&mut self.theta, &self.prim, delta, step_size)?;
        }
        Ok(())
    }
}

/// Writes the encoder weights plus the owning config hash as a little-endian
/// binary checkpoint.
pub fn save_checkpoint(path: &Path, params: &EncoderParams, config_hash: &str) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(b"GCILCKPT");
    buf.extend_from_slice(&1u32.to_le_bytes());
    let hash = config_hash.as_bytes();
    buf.extend_from_slice(&(hash.len() as u32).to_le_bytes());
    buf.extend_from_slice(hash);
    buf.extend_from_slice(&(params.num_layers() as u32).to_le_bytes());
    for w in params.layer_weights() {
        buf.extend_from_slice(&(w.nrows() as u64).to_le_bytes());
        buf.extend_from_slice(&(w.ncols() as u64).to_le_bytes());
        for &v in w.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(EncoderParams, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    let magic = cur.take(8)?;
    if magic != b"GCILCKPT" {
        return Err(Error::Checkpoint(format!(
            "{}: not a checkpoint file",
            path.display()
        )));
    }
    let version = cur.u32()?;
    if version != 1 {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let hash_len = cur.u32()? as usize;
    let hash = String::from_utf8(cur.take(hash_len)?.to_vec())
        .map_err(|_| Error::Checkpoint(format!("{}: bad hash encoding", path.display())))?;
    let layers = cur.u32()? as usize;
    let mut weights = Vec::with_capacity(layers);
    for _ in 0..layers {
        let rows = cur.u64()? as usize;
        let cols = cur.u64()? as usize;
        let mut w = Array2::zeros((rows, cols));
        for v in w.iter_mut() {
            *v = cur.f64()?;
        }
        weights.push(w);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{}: trailing bytes after checkpoint payload",
            path.display()
        )));
    }
    Ok((EncoderParams::from_weights(weights)?, hash))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{}: truncated checkpoint",
                self.path.display()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
