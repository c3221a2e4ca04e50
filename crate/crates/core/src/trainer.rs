//! Training loop with adaptive dual multiplier, evaluation of any
//! beamforming policy on a dataset, and checkpoint provenance.
//!
//! Each epoch visits the training set once in a seeded random order, in
//! `ceil(N / N_b)` batches. Every batch runs forward, loss, backward, the
//! dual update and one Adam step, in that order. Validation happens at the
//! end of every epoch and drives model selection and stopping.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autonet::{
    adam_step, load_model, normalize_columns, save_model, AdamConfig, AdamState, Bound, Graph, InputNorm, Model,
    ModelConfig, Real,
};
use crate::baselines::Baseline;
use crate::channel::{encode_features, rng_for, ChannelSample, Dataset};
use crate::error::{Error, Result};
use crate::fairness_loss::{batch_loss_with, dual_update, BatchLossReport, ChannelBatch, DualState};
use crate::metrics::{evaluate_rates, BeamformerSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Fairness target. 0 together with `freeze_lambda` and `lambda0 = 0`
    /// gives plain sum-rate maximization.
    pub j_lb: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub eps: f64,
    pub eta: f64,
    pub lambda0: f64,
    /// Keep lambda at `lambda0` for the whole run.
    pub freeze_lambda: bool,
    pub max_epochs: usize,
    /// Stop once the gradient-norm EMA is at most this (and validation
    /// fairness is within `eps` of the target).
    pub grad_tol: f64,
    pub grad_ema_decay: f64,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            j_lb: 0.8,
            batch_size: 256,
            lr: 0.002,
            eps: 0.003,
            eta: 0.01,
            lambda0: 1.0,
            freeze_lambda: false,
            max_epochs: 100,
            grad_tol: 1e-3,
            grad_ema_decay: 0.99,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.j_lb) {
            return bad(format!("j_lb must lie in [0, 1), got {}", self.j_lb));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.grad_ema_decay) {
            return bad(format!("grad_ema_decay must lie in [0, 1), got {}", self.grad_ema_decay));
        }
        self.model.validate()?;
        self.initial_dual().map(|_| ())
    }

    pub fn initial_dual(&self) -> Result<DualState> {
        DualState::new(self.lambda0, self.j_lb, self.eps, self.eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub s_bar: f64,
    pub j_bar: f64,
    /// Multiplier after this batch's dual update.
    pub lambda: f64,
    pub grad_ema: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub val_sum_rate: f64,
    pub val_jain: f64,
    pub lambda: f64,
    pub dead_rows: usize,
    pub degenerate_batches: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub batches: Vec<BatchRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// `step,epoch,loss,s_bar,j_bar,lambda,grad_ema`, one row per batch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,epoch,loss,s_bar,j_bar,lambda,grad_ema\n");
        for b in &self.batches {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                b.step, b.epoch, b.loss, b.s_bar, b.j_bar, b.lambda, b.grad_ema
            );
        }
        s
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Selected model (see [`train`]).
    pub model: Model<f32>,
    /// Dual state at the end of the run.
    pub dual: DualState,
    pub history: TrainHistory,
    /// Epoch the returned model comes from (1-based).
    pub selected_epoch: usize,
    /// Whether the selected epoch met the fairness target on validation.
    pub feasible: bool,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn selected_record(&self) -> &EpochRecord {
        &self.history.epochs[self.selected_epoch - 1]
    }
}

/// Row-major `[batch, n_u, n_f]` network input for `samples`.
pub fn batch_features<T: Real>(samples: &[&ChannelSample]) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for s in samples {
        out.extend(encode_features(s)?.rows.iter().map(|&v| T::lit(v as f64)));
    }
    Ok(out)
}

/// Builds the full training graph for one batch with trainable parameters.
pub fn batch_graph<T: Real>(
    model: &Model<T>,
    samples: &[&ChannelSample],
    power_per_user: f64,
    dual: &DualState,
) -> Result<(Graph<T>, Bound, BatchLossReport)> {
    batch_graph_with(model, samples, power_per_user, dual, None)
}

/// [`batch_graph`] with optionally pinned max-min extremes.
pub fn batch_graph_with<T: Real>(
    model: &Model<T>,
    samples: &[&ChannelSample],
    power_per_user: f64,
    dual: &DualState,
    extremes: Option<(f64, f64)>,
) -> Result<(Graph<T>, Bound, BatchLossReport)> {
    let n_u = samples
        .first()
        .ok_or_else(|| Error::InvalidInput("empty batch".into()))?
        .n_u();
    let mut g = Graph::new();
    let bound = model.bind(&mut g, true)?;
    let input = model.input(&mut g, batch_features(samples)?, samples.len(), n_u)?;
    let raw = model.forward(&mut g, &bound, input)?;
    let chan = ChannelBatch::from_samples(samples, power_per_user)?;
    let report = batch_loss_with(&mut g, &chan, raw, dual, extremes)?;
    Ok((g, bound, report))
}

/// Per-feature standardization fitted on every row of `ds`.
pub fn fit_input_norm(ds: &Dataset) -> Result<InputNorm<f32>> {
    let mut rows = Vec::with_capacity(ds.len() * ds.config.n_u * ds.config.n_features());
    for s in &ds.samples {
        rows.extend(encode_features(s)?.rows);
    }
    InputNorm::fit(&rows, ds.config.n_features())
}

fn check_dims(model: &ModelConfig, ds: &Dataset, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::InvalidInput(format!("{what} set is empty")));
    }
    if ds.config.n_t != model.n_t || ds.config.n_features() != model.n_f {
        return Err(Error::Dimension(format!(
            "{what} set has n_t = {} ({} features), model expects n_t = {} ({} features)",
            ds.config.n_t,
            ds.config.n_features(),
            model.n_t,
            model.n_f
        )));
    }
    ds.validate()
}

/// Trains a fresh model.
///
/// Returns the epoch with the best validation sum rate among epochs whose
/// validation fairness reaches `j_lb - eps`; if none does, the last epoch.
/// Stops early once the gradient-norm EMA is at most `grad_tol` and the
/// validation fairness is within `eps` of the target.
pub fn train(config: &TrainConfig, train_set: &Dataset, val_set: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    check_dims(&config.model, train_set, "training")?;
    check_dims(&config.model, val_set, "validation")?;
    let power = train_set.config.power_per_user();
    let mut model = Model::<f32>::new(config.model.clone())?;
    model.input_norm = fit_input_norm(train_set)?;
    let mut adam = AdamState::<f32>::new(model.params.iter().map(|p| p.data.len()));
    let adam_cfg = AdamConfig { lr: config.lr, ..AdamConfig::default() };
    let mut dual = config.initial_dual()?;
    let mut history = TrainHistory::default();
    let mut ema: Option<f64> = None;
    let mut best: Option<(f64, usize, Model<f32>)> = None;
    let mut step = 0;
    let mut stopped_early = false;
    let n = train_set.len();

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(config.seed, epoch as u64));
        let mut dead_rows = 0;
        let mut degenerate = 0;
        for idx in order.chunks(config.batch_size) {
            let samples: Vec<&ChannelSample> = idx.iter().map(|&i| &train_set.samples[i]).collect();
            let (mut g, bound, rep) = batch_graph(&model, &samples, power, &dual)?;
            let loss = g.scalar(rep.loss) as f64;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at step {step} (epoch {epoch})")));
            }
            g.backward(rep.loss)?;
            dead_rows += g.dead_rows();
            degenerate += rep.degenerate as usize;
            let grads: Vec<Vec<f32>> = bound
                .vars
                .iter()
                .map(|&v| g.take_grad(v).unwrap_or_default())
                .collect();
            let norm = grads
                .iter()
                .flat_map(|gv| gv.iter())
                .map(|&x| (x as f64) * (x as f64))
                .sum::<f64>()
                .sqrt();
            let e = match ema {
                None => norm,
                Some(prev) => config.grad_ema_decay * prev + (1.0 - config.grad_ema_decay) * norm,
            };
            ema = Some(e);
            if !config.freeze_lambda {
                dual = dual_update(dual, rep.j_bar);
            }
            {
                let mut params: Vec<&mut [f32]> = model.params.iter_mut().map(|p| &mut p.data[..]).collect();
                let grad_refs: Vec<&[f32]> = grads.iter().map(|g| &g[..]).collect();
                adam_step(&mut params, &grad_refs, &mut adam, &adam_cfg)?;
            }
            history.batches.push(BatchRecord {
                step,
                epoch,
                loss,
                s_bar: rep.s_bar,
                j_bar: rep.j_bar,
                lambda: dual.lambda,
                grad_ema: e,
            });
            step += 1;
        }

        let val = evaluate(&model, val_set)?;
        history.epochs.push(EpochRecord {
            epoch,
            val_sum_rate: val.mean_sum_rate,
            val_jain: val.mean_jain,
            lambda: dual.lambda,
            dead_rows,
            degenerate_batches: degenerate,
        });
        log::info!(
            "epoch {epoch}: val sum rate {:.4}, val jain {:.4}, lambda {:.4}, grad ema {:.3e} ({:.1}s)",
            val.mean_sum_rate,
            val.mean_jain,
            dual.lambda,
            ema.unwrap_or(0.0),
            started.elapsed().as_secs_f64()
        );
        if val.mean_jain >= config.j_lb - config.eps
            && best.as_ref().is_none_or(|(sr, _, _)| val.mean_sum_rate > *sr)
        {
            best = Some((val.mean_sum_rate, epoch, model.clone()));
        }
        if ema.is_some_and(|e| e <= config.grad_tol) && (val.mean_jain - config.j_lb).abs() <= config.eps {
            stopped_early = true;
            break;
        }
    }

    let last_epoch = history.epochs.len();
    let (model, selected_epoch, feasible) = match best {
        Some((_, e, m)) => (m, e, true),
        None => (model, last_epoch, false),
    };
    Ok(TrainOutcome { model, dual, history, selected_epoch, feasible, stopped_early })
}

/// Anything that maps channel draws to beamformers.
pub trait BeamformerPolicy: Sync {
    fn label(&self) -> String;

    fn beamformers(&self, samples: &[&ChannelSample], power_per_user: f64) -> Result<Vec<BeamformerSet>>;
}

impl BeamformerPolicy for Baseline {
    fn label(&self) -> String {
        self.to_string()
    }

    fn beamformers(&self, samples: &[&ChannelSample], power_per_user: f64) -> Result<Vec<BeamformerSet>> {
        samples.iter().map(|s| Baseline::beamformers(self, s, power_per_user)).collect()
    }
}

impl<T: Real> BeamformerPolicy for Model<T> {
    fn label(&self) -> String {
        "dnn".into()
    }

    fn beamformers(&self, samples: &[&ChannelSample], power_per_user: f64) -> Result<Vec<BeamformerSet>> {
        let Some(first) = samples.first() else { return Ok(Vec::new()) };
        let (n_u, n_t) = (first.n_u(), self.config.n_t);
        let raw = self.predict(&batch_features::<T>(samples)?, samples.len(), n_u)?;
        raw.chunks_exact(n_u * 2 * n_t)
            .map(|r| normalize_columns(r, n_u, n_t, power_per_user).map(|(bf, _)| bf))
            .collect()
    }
}

/// Evaluation of a policy over a whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub label: String,
    pub mean_sum_rate: f64,
    /// Mean of the per-sample Jain indices.
    pub mean_jain: f64,
    /// Per-sample, per-user rates (bit/s/Hz).
    pub user_rates: Vec<Vec<f64>>,
    pub stream_sum_rate: Vec<f64>,
    pub stream_jain: Vec<f64>,
}

impl EvalSummary {
    /// Mean rate of each user index across samples.
    pub fn mean_user_rates(&self) -> Vec<f64> {
        let n_u = self.user_rates.first().map_or(0, Vec::len);
        let n = self.user_rates.len().max(1) as f64;
        (0..n_u)
            .map(|u| self.user_rates.iter().map(|r| r[u]).sum::<f64>() / n)
            .collect()
    }
}

const EVAL_CHUNK: usize = 256;

/// Deterministic double-precision evaluation of `policy` on every sample.
pub fn evaluate<P: BeamformerPolicy + ?Sized>(policy: &P, ds: &Dataset) -> Result<EvalSummary> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty dataset".into()));
    }
    let power = ds.config.power_per_user();
    let chunks: Vec<Vec<(Vec<f64>, f64, f64)>> = ds
        .samples
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let refs: Vec<&ChannelSample> = chunk.iter().collect();
            let bfs = policy.beamformers(&refs, power)?;
            chunk
                .iter()
                .zip(&bfs)
                .map(|(s, bf)| evaluate_rates(s, bf).map(|r| (r.rate, r.sum_rate, r.jain)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = EvalSummary {
        label: policy.label(),
        mean_sum_rate: 0.0,
        mean_jain: 0.0,
        user_rates: Vec::with_capacity(ds.len()),
        stream_sum_rate: Vec::with_capacity(ds.len()),
        stream_jain: Vec::with_capacity(ds.len()),
    };
    for (rates, sr, j) in chunks.into_iter().flatten() {
        out.user_rates.push(rates);
        out.stream_sum_rate.push(sr);
        out.stream_jain.push(j);
    }
    let n = ds.len() as f64;
    out.mean_sum_rate = out.stream_sum_rate.iter().sum::<f64>() / n;
    out.mean_jain = out.stream_jain.iter().sum::<f64>() / n;
    Ok(out)
}

/// Training context stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub train_config: TrainConfig,
    pub dual: DualState,
    pub epochs_run: usize,
    pub selected_epoch: usize,
    pub feasible: bool,
    pub val_sum_rate: f64,
    pub val_jain: f64,
    #[serde(default)]
    pub train_hash: Option<String>,
    #[serde(default)]
    pub val_hash: Option<String>,
}

impl Provenance {
    pub fn from_outcome(config: &TrainConfig, out: &TrainOutcome) -> Self {
        let sel = out.selected_record();
        Provenance {
            train_config: config.clone(),
            dual: out.dual,
            epochs_run: out.history.epochs.len(),
            selected_epoch: out.selected_epoch,
            feasible: out.feasible,
            val_sum_rate: sel.val_sum_rate,
            val_jain: sel.val_jain,
            train_hash: None,
            val_hash: None,
        }
    }
}

pub fn provenance_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the `.fbck` model and its `.json` provenance sidecar.
pub fn save_checkpoint(path: &Path, model: &Model<f32>, prov: &Provenance) -> Result<()> {
    save_model(model, path)?;
    let side = provenance_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(prov)?).map_err(|e| Error::io(&side, e))
}

/// Reads a checkpoint; the provenance sidecar is optional.
pub fn load_checkpoint(path: &Path) -> Result<(Model<f32>, Option<Provenance>)> {
    let model = load_model(path)?;
    let side = provenance_path(path);
    let prov = match std::fs::read_to_string(&side) {
        Ok(text) => Some(
            serde_json::from_str(&text).map_err(|e| Error::format(&side, format!("bad provenance: {e}")))?,
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(&side, e)),
    };
    Ok((model, prov))
}
