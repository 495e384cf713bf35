//! Mini-batch SGD with momentum, per-group weight decay and a step-decay
//! learning-rate schedule.
//!
//! All randomness (epoch shuffles, crop offsets, mirror flips, dropout masks)
//! is drawn from one ChaCha8 stream seeded by [`HyperParams::seed`], in a
//! fixed order, so a run is reproducible independent of the thread count.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FaceDataset, Split};
use crate::error::{Error, Result};
use crate::layers::{crop_mirror, softmax_xent, CropSpec, Mode};
use crate::network::{backward, forward_logits, save_model, DecayGroup, ModelParams};
use crate::tensor::{rng_from_seed, Element, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub lr_start: f64,
    pub lr_end: f64,
    /// Multiplier applied every `step_size` iterations.
    pub gamma: f64,
    /// Defaults to the spacing that reaches `lr_end` exactly at `max_iters`
    /// (given at least one iteration per decay).
    pub step_size: Option<usize>,
    pub momentum: f64,
    pub wd_default: f64,
    /// Weight decay of the classifier weights.
    pub wd_fc2: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub eval_interval: usize,
    pub checkpoint_interval: Option<usize>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lr_start: 1e-3,
            lr_end: 5e-5,
            gamma: 0.5,
            step_size: None,
            momentum: 0.9,
            wd_default: 5e-4,
            wd_fc2: 5e-3,
            dropout: 0.7,
            batch_size: 64,
            max_iters: 20_000,
            seed: 0,
            eval_interval: 500,
            checkpoint_interval: None,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start && self.lr_start.is_finite()) {
            return bad("learning rates must satisfy 0 < lr_end <= lr_start");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.wd_default >= 0.0 && self.wd_fc2 >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.batch_size == 0
            || self.eval_interval == 0
            || self.step_size == Some(0)
            || self.checkpoint_interval == Some(0)
        {
            return bad("batch_size, eval_interval, step_size and checkpoint_interval must be positive");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let hp: HyperParams = toml::from_str(text).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        hp.validate()?;
        Ok(hp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Number of `gamma` decays needed to go from `lr_start` to `lr_end`.
    fn decays(&self) -> usize {
        let exact = (self.lr_start / self.lr_end).ln() / (1.0 / self.gamma).ln();
        (exact - 1e-9).ceil().max(0.0) as usize
    }

    pub fn effective_step_size(&self) -> usize {
        self.step_size.unwrap_or_else(|| match self.decays() {
            0 => self.max_iters.max(1),
            d => (self.max_iters / d).max(1),
        })
    }

    fn decay_for(&self, group: DecayGroup) -> f64 {
        match group {
            DecayGroup::Default => self.wd_default,
            DecayGroup::Classifier => self.wd_fc2,
            DecayGroup::Exempt => 0.0,
        }
    }
}

/// `lr_start · gamma^⌊iter / step_size⌋`, clipped below at `lr_end`.
pub fn lr_at(iter: usize, hp: &HyperParams) -> f64 {
    let k = (iter / hp.effective_step_size()).min(i32::MAX as usize) as i32;
    (hp.lr_start * hp.gamma.powi(k)).max(hp.lr_end)
}

#[derive(Debug, Clone)]
pub struct TrainState<T: Element = f32> {
    /// Completed optimizer steps.
    pub iteration: usize,
    /// One buffer per parameter tensor, same shapes.
    pub velocity: Vec<Tensor<T>>,
    pub rng: ChaCha8Rng,
    /// Mini-batch loss of every step.
    pub losses: Vec<f64>,
    /// Mean mini-batch loss of every completed pass over the train split.
    pub epoch_losses: Vec<f64>,
    /// `(iteration, validation accuracy)`.
    pub history: Vec<(usize, f64)>,
}

impl<T: Element> TrainState<T> {
    pub fn new(model: &ModelParams<T>, seed: u64) -> Self {
        TrainState {
            iteration: 0,
            velocity: model.params().iter().map(|p| p.value.zeros_like()).collect(),
            rng: rng_from_seed(seed),
            losses: Vec::new(),
            epoch_losses: Vec::new(),
            history: Vec::new(),
        }
    }
}

/// `v ← μ·v − lr·(g + wd·w)`, `w ← w + v`, with `wd` chosen by decay group.
pub fn sgd_step<T: Element>(
    model: &mut ModelParams<T>,
    grads: &[Tensor<T>],
    state: &mut TrainState<T>,
    hp: &HyperParams,
    lr: f64,
) -> Result<()> {
    if grads.len() != model.params().len() || state.velocity.len() != grads.len() {
        return Err(Error::shape(format!(
            "{} gradients for {} parameter tensors",
            grads.len(),
            model.params().len()
        )));
    }
    for ((p, g), v) in model.params().iter().zip(grads).zip(&state.velocity) {
        p.value.expect_same_shape(g)?;
        p.value.expect_same_shape(v)?;
        if !g.is_finite() {
            return Err(Error::NumericDivergence {
                iteration: state.iteration,
                detail: format!("non-finite gradient for {}", p.name),
            });
        }
    }
    let (mu, lr) = (T::of(hp.momentum), T::of(lr));
    for ((p, g), v) in model.params_mut().iter_mut().zip(grads).zip(&mut state.velocity) {
        let wd = T::of(hp.decay_for(p.decay));
        for ((w, &g), v) in p.value.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *v = mu * *v - lr * (g + wd * *w);
            *w = *w + *v;
        }
        if !p.value.is_finite() {
            return Err(Error::NumericDivergence {
                iteration: state.iteration,
                detail: format!("non-finite weights in {}", p.name),
            });
        }
    }
    state.iteration += 1;
    Ok(())
}

/// Side outputs of [`train`].
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// CSV log `iteration,lr,train_loss,val_accuracy`.
    pub log: Option<PathBuf>,
    /// Directory receiving `iter_<n>.mfmm` every `checkpoint_interval` steps.
    pub checkpoint_dir: Option<PathBuf>,
    /// Stop once validation accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
}

fn crop_spec<T: Element>(model: &ModelParams<T>) -> Result<CropSpec> {
    let c = model.config();
    CropSpec::new(c.input_size, c.crop_size)
}

/// Crops `positions` of the dataset into a `[B, 1, h, w]` batch.
fn make_batch<T: Element>(
    data: &FaceDataset<T>,
    positions: &[usize],
    spec: &CropSpec,
    mode: Mode,
    seeds: &[u64],
) -> Result<Tensor<T>> {
    let crops = positions
        .par_iter()
        .zip(seeds)
        .map(|(&i, &seed)| crop_mirror(&data.images[i], spec, mode, seed))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&crops.iter().collect::<Vec<_>>())
}

const EVAL_BATCH: usize = 128;

/// Top-1 accuracy on `positions` in eval mode with center crops.
pub fn accuracy_on<T: Element>(model: &ModelParams<T>, data: &FaceDataset<T>, positions: &[usize]) -> Result<f64> {
    if positions.is_empty() {
        return Err(Error::InvalidInput("validation split is empty".into()));
    }
    let spec = crop_spec(model)?;
    let k = model.config().num_classes;
    let mut correct = 0;
    for chunk in positions.chunks(EVAL_BATCH) {
        let batch = make_batch(data, chunk, &spec, Mode::Eval, &vec![0; chunk.len()])?;
        let (logits, _) = forward_logits(model, &batch, Mode::Eval, 0)?;
        for (row, &i) in logits.data().chunks(k).zip(chunk) {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            correct += usize::from(best == data.labels[i]);
        }
    }
    Ok(correct as f64 / positions.len() as f64)
}

/// Top-1 accuracy over the validation split.
pub fn validate<T: Element>(model: &ModelParams<T>, data: &FaceDataset<T>) -> Result<f64> {
    accuracy_on(model, data, &data.positions(Split::Val))
}

fn check_dataset<T: Element>(model: &ModelParams<T>, data: &FaceDataset<T>) -> Result<()> {
    if data.positions(Split::Train).is_empty() {
        return Err(Error::InvalidInput("dataset has no training samples".into()));
    }
    let c = model.config();
    if data.image_size() != Some(c.input_size) {
        return Err(Error::InvalidInput(format!(
            "images are {:?}, network expects {:?}",
            data.image_size(),
            c.input_size
        )));
    }
    if let Some(&label) = data.labels.iter().find(|&&l| l >= c.num_classes) {
        return Err(Error::InvalidLabel {
            label,
            classes: c.num_classes,
        });
    }
    Ok(())
}

struct Log(Option<BufWriter<File>>, PathBuf);

impl Log {
    fn open(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Log(None, PathBuf::new()));
        };
        let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        writeln!(f, "iteration,lr,train_loss,val_accuracy").map_err(|e| Error::io(path, e))?;
        Ok(Log(Some(f), path.to_path_buf()))
    }

    fn row(&mut self, iteration: usize, lr: f64, loss: Option<f64>, acc: Option<f64>) -> Result<()> {
        if let Some(f) = &mut self.0 {
            let loss = loss.map(|l| l.to_string()).unwrap_or_default();
            let acc = acc.map(|a| a.to_string()).unwrap_or_default();
            writeln!(f, "{iteration},{lr},{loss},{acc}").map_err(|e| Error::io(&self.1, e))?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(f) = &mut self.0 {
            f.flush().map_err(|e| Error::io(&self.1, e))?;
        }
        Ok(())
    }
}

/// Runs `hp.max_iters` SGD steps on the train split.
///
/// Validation accuracy is recorded before the first step, after every
/// `eval_interval` steps and after the last step. The log holds one row per
/// step plus an initial row for iteration 0 with an empty loss.
pub fn train<T: Element>(
    model: &mut ModelParams<T>,
    data: &FaceDataset<T>,
    hp: &HyperParams,
    opts: &TrainOptions,
) -> Result<TrainState<T>> {
    hp.validate()?;
    check_dataset(model, data)?;
    model.set_dropout(hp.dropout)?;
    let spec = crop_spec(model)?;
    let mut state = TrainState::new(model, hp.seed);
    let mut order = data.positions(Split::Train);
    let has_val = !data.positions(Split::Val).is_empty();
    let mut log = Log::open(opts.log.as_deref())?;
    if let Some(dir) = &opts.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let evaluate = |model: &ModelParams<T>, state: &mut TrainState<T>| -> Result<Option<f64>> {
        if !has_val {
            return Ok(None);
        }
        let acc = validate(model, data)?;
        state.history.push((state.iteration, acc));
        Ok(Some(acc))
    };
    let reached = |acc: Option<f64>| matches!((acc, opts.stop_at_accuracy), (Some(a), Some(t)) if a >= t);

    let acc = evaluate(model, &mut state)?;
    log.row(0, lr_at(0, hp), None, acc)?;
    let mut stop = reached(acc);

    let mut cursor = order.len();
    let (mut epoch_sum, mut epoch_batches) = (0.0, 0usize);
    while !stop && state.iteration < hp.max_iters {
        if cursor == order.len() {
            if epoch_batches > 0 {
                state.epoch_losses.push(epoch_sum / epoch_batches as f64);
            }
            (epoch_sum, epoch_batches) = (0.0, 0);
            order.shuffle(&mut state.rng);
            cursor = 0;
        }
        let end = (cursor + hp.batch_size).min(order.len());
        let positions = &order[cursor..end];
        cursor = end;

        let lr = lr_at(state.iteration, hp);
        let seeds: Vec<u64> = (0..positions.len()).map(|_| state.rng.random()).collect();
        let batch = make_batch(data, positions, &spec, Mode::Train, &seeds)?;
        let labels: Vec<usize> = positions.iter().map(|&i| data.labels[i]).collect();
        let (logits, cache) = forward_logits(model, &batch, Mode::Train, state.rng.random())?;
        let (loss, grad_logits) = softmax_xent(&logits, &labels)?;
        let loss = loss.as_f64();
        if !loss.is_finite() {
            return Err(Error::NumericDivergence {
                iteration: state.iteration,
                detail: format!("training loss is {loss}"),
            });
        }
        let grads = backward(model, &cache, &grad_logits)?;
        sgd_step(model, &grads, &mut state, hp, lr)?;
        state.losses.push(loss);
        epoch_sum += loss;
        epoch_batches += 1;

        let it = state.iteration;
        let acc = if it % hp.eval_interval == 0 || it == hp.max_iters {
            evaluate(model, &mut state)?
        } else {
            None
        };
        stop = reached(acc);
        log.row(it, lr, Some(loss), acc)?;
        if let (Some(dir), Some(every)) = (&opts.checkpoint_dir, hp.checkpoint_interval) {
            if it % every == 0 {
                save_model(model, dir.join(format!("iter_{it}.mfmm")))?;
            }
        }
    }
    if cursor == order.len() && epoch_batches > 0 {
        state.epoch_losses.push(epoch_sum / epoch_batches as f64);
    }
    if stop && state.history.last().map(|h| h.0) != Some(state.iteration) {
        evaluate(model, &mut state)?;
    }
    log.finish()?;
    Ok(state)
}
