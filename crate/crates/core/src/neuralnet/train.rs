//! Mini-batch training with step-decayed learning rate and early stopping.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::rng::{rng_for, Stream};

use super::conv::FeatureMap;
use super::network::{flatten_gradients, ConvNetwork};

/// Samples per parallel task; gradients inside a task and across tasks are
/// summed in a fixed order so the result does not depend on thread count.
const GRADIENT_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    /// Heavy-ball momentum: `v = mu v + g`, `p -= lr v`.
    Momentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub const ADAM: Self = Self::Adam {
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
    };
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::Momentum { momentum: 0.9 }
    }
}

/// How per-sample losses are combined into the training objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LossWeighting {
    /// Plain mean of the sample losses.
    #[default]
    Uniform,
    /// Each sample's loss is divided by the loss of leaving its input
    /// unchanged, so noisy and clean samples carry equal weight.
    RawError,
}

impl LossWeighting {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::RawError => "raw_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub initial_lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub loss_weighting: LossWeighting,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-3,
            lr_decay: 0.1,
            decay_every: 40,
            max_epochs: 100,
            early_stop_patience: 5,
            batch_size: 32,
            optimizer: Optimizer::default(),
            clip_norm: Some(1.0),
            loss_weighting: LossWeighting::Uniform,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(invalid("initial learning rate must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(invalid("learning-rate decay must lie in (0, 1]"));
        }
        if self.decay_every == 0 || self.max_epochs == 0 || self.batch_size == 0 {
            return Err(invalid("decay period, epoch limit and batch size must be positive"));
        }
        if self.early_stop_patience == 0 || self.early_stop_patience >= self.max_epochs {
            return Err(invalid("patience must be positive and below the epoch limit"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(invalid("clip norm must be positive"));
            }
        }
        match self.optimizer {
            Optimizer::Sgd => {}
            Optimizer::Momentum { momentum } if (0.0..1.0).contains(&momentum) => {}
            Optimizer::Adam { beta1, beta2, epsilon }
                if (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0 => {}
            _ => return Err(invalid("optimizer coefficients out of range")),
        }
        Ok(())
    }

    /// `initial_lr * lr_decay^(epoch / decay_every)` for a 0-based epoch.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.initial_lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    /// Every parameter was frozen; losses were evaluated once.
    NothingToTrain,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MaxEpochs => "max_epochs",
            Self::EarlyStop => "early_stop",
            Self::NothingToTrain => "nothing_to_train",
        }
    }
}

/// Per-epoch history of a training run.
///
/// `stop_epoch` counts completed epochs; `best_epoch` is the 0-based epoch
/// whose parameters were kept.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub lr: Vec<f64>,
    pub stop_epoch: usize,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl LossReport {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr\n");
        for e in 0..self.train_loss.len() {
            writeln!(s, "{e},{:e},{:e},{:e}", self.train_loss[e], self.val_loss[e], self.lr[e]).unwrap();
        }
        s
    }
}

/// Tracks the best validation loss and decides when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stalled: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stalled: 0,
        }
    }

    /// Records one epoch; returns whether it improved on the best so far.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stalled = 0;
            true
        } else {
            self.stalled += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stalled >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Runs the epoch loop shared by every trainer.
///
/// `epoch` performs one pass at the given learning rate and returns
/// `(train_loss, val_loss)`; `keep_best` snapshots the state whenever the
/// validation loss improves.
pub fn drive_epochs<S>(
    cfg: &TrainingConfig,
    state: &mut S,
    mut epoch: impl FnMut(&mut S, usize, f64) -> Result<(f64, f64)>,
    mut keep_best: impl FnMut(&mut S),
) -> Result<LossReport> {
    cfg.validate()?;
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut report = LossReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        lr: Vec::new(),
        stop_epoch: 0,
        best_epoch: 0,
        stop_reason: StopReason::MaxEpochs,
    };
    for e in 0..cfg.max_epochs {
        let lr = cfg.learning_rate(e);
        let (train, val) = epoch(state, e, lr)?;
        if !train.is_finite() || !val.is_finite() {
            return Err(Error::InvalidArgument(format!("loss diverged at epoch {e}")));
        }
        report.train_loss.push(train);
        report.val_loss.push(val);
        report.lr.push(lr);
        report.stop_epoch = e + 1;
        if stopper.observe(e, val) {
            keep_best(state);
        }
        if stopper.should_stop() {
            report.stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    report.best_epoch = stopper.best_epoch();
    Ok(report)
}

/// A model with flat parameters and a per-sample differentiable loss.
pub trait Trainable: Sync {
    type Sample: Sync;

    fn parameters(&self) -> Vec<f64>;
    fn set_parameters(&mut self, params: &[f64]);
    fn trainable_mask(&self) -> Vec<bool>;
    fn sample_loss(&self, sample: &Self::Sample) -> Result<f64>;
    /// Loss and gradient; entries for frozen parameters must be zero.
    fn sample_gradient(&self, sample: &Self::Sample) -> Result<(f64, Vec<f64>)>;
    /// Loss of passing the input through unchanged, if that is defined.
    fn identity_loss(&self, _sample: &Self::Sample) -> Option<f64> {
        None
    }
}

/// Mean loss over a set.
pub fn mean_loss<M: Trainable>(model: &M, set: &[M::Sample]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let losses = set.par_iter().map(|s| model.sample_loss(s)).collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / set.len() as f64)
}

fn sample_weights<M: Trainable>(model: &M, set: &[M::Sample], weighting: LossWeighting) -> Result<Vec<f64>> {
    match weighting {
        LossWeighting::Uniform => Ok(vec![1.0; set.len()]),
        LossWeighting::RawError => set
            .iter()
            .map(|s| {
                let base = model
                    .identity_loss(s)
                    .ok_or_else(|| invalid("raw_error weighting needs a model with an identity loss"))?;
                Ok(1.0 / base.max(1e-12))
            })
            .collect(),
    }
}

fn weighted_mean_loss<M: Trainable>(model: &M, set: &[M::Sample], weights: &[f64]) -> Result<f64> {
    let losses = set.par_iter().map(|s| model.sample_loss(s)).collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().zip(weights).map(|(l, w)| l * w).sum::<f64>() / set.len() as f64)
}

/// Weighted sum of losses and gradients over `batch`, in a thread-count
/// independent order.
fn batch_gradient<M: Trainable>(
    model: &M,
    batch: &[(&M::Sample, f64)],
    n_params: usize,
) -> Result<(f64, Vec<f64>)> {
    let partials = batch
        .par_chunks(GRADIENT_CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; n_params];
            for &(s, w) in chunk {
                let (l, g) = model.sample_gradient(s)?;
                loss += w * l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += w * b);
            }
            Ok((loss, grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for (l, g) in partials {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((loss, grad))
}

struct OptimizerState {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

fn apply_update(
    cfg: &TrainingConfig,
    state: &mut OptimizerState,
    params: &mut [f64],
    grad: &mut [f64],
    mask: &[bool],
    lr: f64,
) {
    if let Some(limit) = cfg.clip_norm {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > limit {
            let k = limit / norm;
            grad.iter_mut().for_each(|g| *g *= k);
        }
    }
    state.steps += 1;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for ((p, g), &m) in params.iter_mut().zip(grad.iter()).zip(mask) {
                if m {
                    *p -= lr * g;
                }
            }
        }
        Optimizer::Momentum { momentum } => {
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    state.first[i] = momentum * state.first[i] + grad[i];
                    params[i] -= lr * state.first[i];
                }
            }
        }
        Optimizer::Adam { beta1, beta2, epsilon } => {
            let c1 = 1.0 - beta1.powi(state.steps);
            let c2 = 1.0 - beta2.powi(state.steps);
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    let g = grad[i];
                    state.first[i] = beta1 * state.first[i] + (1.0 - beta1) * g;
                    state.second[i] = beta2 * state.second[i] + (1.0 - beta2) * g * g;
                    params[i] -= lr * (state.first[i] / c1) / ((state.second[i] / c2).sqrt() + epsilon);
                }
            }
        }
    }
}

struct FitState<'a, M: Trainable> {
    model: &'a mut M,
    params: Vec<f64>,
    best: Vec<f64>,
    opt: OptimizerState,
    order: Vec<usize>,
    rng: rand_chacha::ChaCha8Rng,
}

/// Trains `model` in place and leaves it holding the best-validation parameters.
pub fn fit<M: Trainable>(
    model: &mut M,
    train: &[M::Sample],
    val: &[M::Sample],
    cfg: &TrainingConfig,
) -> Result<LossReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let train_weights = sample_weights(&*model, train, cfg.loss_weighting)?;
    let val_weights = sample_weights(&*model, val, cfg.loss_weighting)?;
    let mask = model.trainable_mask();
    if !mask.iter().any(|&m| m) {
        let train_loss = weighted_mean_loss(&*model, train, &train_weights)?;
        let val_loss = weighted_mean_loss(&*model, val, &val_weights)?;
        return Ok(LossReport {
            train_loss: vec![train_loss],
            val_loss: vec![val_loss],
            lr: vec![cfg.learning_rate(0)],
            stop_epoch: 0,
            best_epoch: 0,
            stop_reason: StopReason::NothingToTrain,
        });
    }
    let params = model.parameters();
    let n = params.len();
    let mut state = FitState {
        model,
        best: params.clone(),
        params,
        opt: OptimizerState {
            first: vec![0.0; n],
            second: vec![0.0; n],
            steps: 0,
        },
        order: (0..train.len()).collect(),
        rng: rng_for(cfg.seed, Stream::Shuffle),
    };
    let report = drive_epochs(
        cfg,
        &mut state,
        |st, _epoch, lr| {
            st.order.shuffle(&mut st.rng);
            let mut total = 0.0;
            for idx in st.order.chunks(cfg.batch_size) {
                let batch: Vec<(&M::Sample, f64)> = idx.iter().map(|&i| (&train[i], train_weights[i])).collect();
                let (loss, mut grad) = batch_gradient(&*st.model, &batch, n)?;
                total += loss;
                let inv = 1.0 / batch.len() as f64;
                grad.iter_mut().for_each(|g| *g *= inv);
                apply_update(cfg, &mut st.opt, &mut st.params, &mut grad, &mask, lr);
                st.model.set_parameters(&st.params);
            }
            Ok((total / train.len() as f64, weighted_mean_loss(&*st.model, val, &val_weights)?))
        },
        |st| st.best.clone_from(&st.params),
    )?;
    state.model.set_parameters(&state.best);
    Ok(report)
}

/// Input and target feature maps for the residual network.
pub type TrainingPair = (FeatureMap, FeatureMap);

impl Trainable for ConvNetwork {
    type Sample = TrainingPair;

    fn parameters(&self) -> Vec<f64> {
        ConvNetwork::parameters(self)
    }

    fn set_parameters(&mut self, params: &[f64]) {
        ConvNetwork::set_parameters(self, params)
    }

    fn trainable_mask(&self) -> Vec<bool> {
        ConvNetwork::trainable_mask(self)
    }

    fn sample_loss(&self, (input, target): &TrainingPair) -> Result<f64> {
        let pred = self.forward_map(input)?;
        super::loss::mse_loss(pred.as_slice(), target.as_slice())
    }

    fn sample_gradient(&self, (input, target): &TrainingPair) -> Result<(f64, Vec<f64>)> {
        let (loss, grads) = self.loss_and_gradients(input, target)?;
        Ok((loss, flatten_gradients(&grads)))
    }

    fn identity_loss(&self, (input, target): &TrainingPair) -> Option<f64> {
        super::loss::mse_loss(input.as_slice(), target.as_slice()).ok()
    }
}

/// Fine-tunes a copy of `pretrained` with its first `frozen` layers fixed.
pub fn transfer_train(
    pretrained: &ConvNetwork,
    frozen: usize,
    train: &[TrainingPair],
    val: &[TrainingPair],
    cfg: &TrainingConfig,
) -> Result<(ConvNetwork, LossReport)> {
    let mut net = pretrained.clone();
    net.freeze_layers(frozen)?;
    let report = fit(&mut net, train, val, cfg)?;
    Ok((net, report))
}
