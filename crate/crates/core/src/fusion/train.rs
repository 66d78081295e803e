//! Mini-batch Adam training of the fusion head.

use ndarray::{Array1, Array2, Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::model::{FusionModel, ModelDims};
use super::scene::FusedTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Example {
    pub fused: FusedTensor,
    pub likelihoods: Vec<f64>,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 16,
            learning_rate: 0.01,
            lr_decay: 0.9,
            decay_every: 30,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::Parameter(
                "epochs, batch_size and decay_every must be >= 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning_rate must be >= 0 (got {})",
                self.learning_rate
            )));
        }
        if !(self.lr_decay > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Parameter("lr_decay must be > 0 and betas in [0,1)".into()));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

/// Example indices for the 70 % train, 10 % test and 20 % validation parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded shuffle, then 70/10/20 by rounded counts.
pub fn split_indices(n: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    idx.shuffle(&mut rng);
    let n_train = (0.7 * n as f64).round() as usize;
    let n_test = ((0.1 * n as f64).round() as usize).min(n - n_train);
    let validation = idx.split_off(n_train + n_test);
    let test = idx.split_off(n_train);
    Split {
        train: idx,
        test,
        validation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub median_batch_loss: f64,
    pub mean_batch_loss: f64,
    /// `None` when the validation part is empty.
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedHead {
    pub model: FusionModel,
    pub log: Vec<EpochLog>,
    pub split: Split,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub conv_kernel: Array4<f64>,
    pub conv_bias: Array1<f64>,
    pub head_weight: Array2<f64>,
    pub head_bias: Array1<f64>,
}

impl Gradients {
    fn zeros(d: ModelDims) -> Self {
        let m = FusionModel::zeros(d);
        Gradients {
            conv_kernel: m.conv_kernel,
            conv_bias: m.conv_bias,
            head_weight: m.head_weight,
            head_bias: m.head_bias,
        }
    }
}

fn cross_entropy(logits: [f64; 2], label: bool) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    lse - logits[usize::from(label)]
}

/// Mean cross-entropy over `batch`.
pub fn batch_loss(model: &FusionModel, batch: &[&Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in batch {
        let f = model.forward(&ex.fused, &ex.likelihoods)?;
        total += cross_entropy(f.logits, ex.label);
    }
    Ok(total / batch.len() as f64)
}

/// Mean cross-entropy over `batch` and its gradient with respect to every
/// trainable weight. The input standardization is fixed.
pub fn loss_and_gradients(model: &FusionModel, batch: &[&Example]) -> Result<(f64, Gradients)> {
    let d = model.dims;
    let hw = (d.grid * d.grid) as f64;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros(d);
    let mut dk = Array2::<f64>::zeros((d.conv_channels, d.in_channels * 9));
    let mut loss = 0.0;
    for ex in batch {
        let f = model.forward(&ex.fused, &ex.likelihoods)?;
        loss += cross_entropy(f.logits, ex.label);
        let target = [f64::from(u8::from(!ex.label)), f64::from(u8::from(ex.label))];
        let dl = Array1::from(vec![
            (f.probs[0] - target[0]) * scale,
            (f.probs[1] - target[1]) * scale,
        ]);
        grads.head_weight += &dl
            .view()
            .insert_axis(Axis(1))
            .dot(&f.head_in.view().insert_axis(Axis(0)));
        grads.head_bias += &dl;
        let dpool = model
            .head_weight
            .slice(ndarray::s![.., ..d.conv_channels])
            .t()
            .dot(&dl);
        let mut dpre = f.pre;
        for (mut row, &g) in dpre.outer_iter_mut().zip(dpool.iter()) {
            let g = g / hw;
            row.mapv_inplace(|v| if v > 0.0 { g } else { 0.0 });
        }
        grads.conv_bias += &dpre.sum_axis(Axis(1));
        ndarray::linalg::general_mat_mul(1.0, &dpre, &f.cols.t(), 1.0, &mut dk);
    }
    grads.conv_kernel = dk
        .into_shape_with_order((d.conv_channels, d.in_channels, 3, 3))
        .expect("gradient reshapes to the kernel");
    Ok((loss * scale, grads))
}

/// Per-channel mean and inverse standard deviation over the given examples.
pub fn input_standardization(examples: &[Example], idx: &[usize]) -> (Array1<f64>, Array1<f64>) {
    let c = examples[idx[0]].fused.channels();
    let mut sum = Array1::<f64>::zeros(c);
    let mut sq = Array1::<f64>::zeros(c);
    let mut count = 0.0;
    for &i in idx {
        let data = &examples[i].fused.data;
        for (k, plane) in data.outer_iter().enumerate() {
            sum[k] += plane.sum();
            sq[k] += plane.iter().map(|v| v * v).sum::<f64>();
        }
        count += (data.len() / c) as f64;
    }
    let mean = &sum / count;
    let scale = Array1::from_shape_fn(c, |k| {
        let var = (sq[k] / count - mean[k] * mean[k]).max(0.0);
        if var > 1e-24 {
            1.0 / var.sqrt()
        } else {
            1.0
        }
    });
    (mean, scale)
}

/// He-normal convolution, `N(0, 1/fan_in)` head, zero biases.
pub fn init_model(dims: ModelDims, seed: u64) -> FusionModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut m = FusionModel::zeros(dims);
    let conv = Normal::new(0.0, (2.0 / (dims.in_channels * 9) as f64).sqrt()).expect("finite std");
    m.conv_kernel.mapv_inplace(|_| conv.sample(&mut rng));
    let head = Normal::new(0.0, (1.0 / dims.head_inputs() as f64).sqrt()).expect("finite std");
    m.head_weight.mapv_inplace(|_| head.sample(&mut rng));
    m
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
}

fn adam_tensor(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], cfg: &TrainConfig, lr: f64, step: i32) {
    let c1 = 1.0 - cfg.beta1.powi(step);
    let c2 = 1.0 - cfg.beta2.powi(step);
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_eps);
    }
}

impl Adam {
    fn new(d: ModelDims) -> Self {
        Adam {
            m: Gradients::zeros(d),
            v: Gradients::zeros(d),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut FusionModel, g: &Gradients, cfg: &TrainConfig, lr: f64) {
        self.step += 1;
        let t = self.step;
        macro_rules! apply {
            ($field:ident) => {
                adam_tensor(
                    model.$field.as_slice_mut().expect("standard layout"),
                    g.$field.as_slice().expect("standard layout"),
                    self.m.$field.as_slice_mut().expect("standard layout"),
                    self.v.$field.as_slice_mut().expect("standard layout"),
                    cfg,
                    lr,
                    t,
                )
            };
        }
        apply!(conv_kernel);
        apply!(conv_bias);
        apply!(head_weight);
        apply!(head_bias);
    }
}

fn accuracy(model: &FusionModel, examples: &[Example], idx: &[usize]) -> Result<Option<f64>> {
    if idx.is_empty() {
        return Ok(None);
    }
    let mut correct = 0;
    for &i in idx {
        let ex = &examples[i];
        let score = model.score(&ex.fused, &ex.likelihoods)?;
        if (score > 0.5) == ex.label {
            correct += 1;
        }
    }
    Ok(Some(correct as f64 / idx.len() as f64))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Dims, standardization and initial weights used by [`train_on_split`].
pub fn initial_model(examples: &[Example], split: &Split, seed: u64) -> Result<FusionModel> {
    let first = examples
        .first()
        .ok_or_else(|| Error::Training("empty dataset".into()))?;
    if split.train.is_empty() {
        return Err(Error::Training("empty training split".into()));
    }
    let (c, g, w) = first.fused.data.dim();
    if g != w {
        return Err(Error::Training(format!("fused grid {g}x{w} is not square")));
    }
    let history = first.likelihoods.len();
    let dims = ModelDims {
        grid: g,
        in_channels: c,
        conv_channels: super::model::CONV_CHANNELS,
        history,
    };
    if let Some(bad) = examples
        .iter()
        .position(|e| e.fused.data.dim() != (c, g, w) || e.likelihoods.len() != history)
    {
        return Err(Error::Training(format!("example {bad} has inconsistent shape")));
    }
    let mut model = init_model(dims, seed);
    let (mean, scale) = input_standardization(examples, &split.train);
    model.input_mean = mean;
    model.input_scale = scale;
    Ok(model)
}

/// Trains with the seeded 70/10/20 split.
pub fn train_head(examples: &[Example], cfg: &TrainConfig) -> Result<TrainedHead> {
    let split = split_indices(examples.len(), cfg.seed);
    let model = {
        check_both_classes(examples, &(0..examples.len()).collect::<Vec<_>>(), "dataset")?;
        initial_model(examples, &split, cfg.seed)?
    };
    train_from(model, examples, split, cfg)
}

/// Trains from a caller-built model (dims, standardization, init) and split.
pub fn train_from(
    mut model: FusionModel,
    examples: &[Example],
    split: Split,
    cfg: &TrainConfig,
) -> Result<TrainedHead> {
    cfg.validate()?;
    check_both_classes(examples, &split.train, "training split")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let mut adam = Adam::new(model.dims);
    let mut order = split.train.clone();
    let mut best = (f64::INFINITY, model.clone(), 0);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, grads) = loss_and_gradients(&model, &batch)?;
            losses.push(loss);
            adam.update(&mut model, &grads, cfg, lr);
        }
        let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        let validation_loss = if split.validation.is_empty() {
            None
        } else {
            let batch: Vec<&Example> = split.validation.iter().map(|&i| &examples[i]).collect();
            Some(batch_loss(&model, &batch)?)
        };
        let selection = validation_loss.unwrap_or(mean_loss);
        if selection < best.0 {
            best = (selection, model.clone(), epoch);
        }
        log.push(EpochLog {
            epoch,
            learning_rate: lr,
            median_batch_loss: median(&mut losses),
            mean_batch_loss: mean_loss,
            validation_loss,
            validation_accuracy: accuracy(&model, examples, &split.validation)?,
        });
    }
    let (_, model, best_epoch) = best;
    let test_accuracy = accuracy(&model, examples, &split.test)?;
    Ok(TrainedHead {
        model,
        log,
        split,
        best_epoch,
        test_accuracy,
    })
}

fn check_both_classes(examples: &[Example], idx: &[usize], what: &str) -> Result<()> {
    let positives = idx.iter().filter(|&&i| examples[i].label).count();
    if positives == 0 || positives == idx.len() {
        return Err(Error::Training(format!(
            "{what} has a single class ({positives} of {} positive)",
            idx.len()
        )));
    }
    Ok(())
}
