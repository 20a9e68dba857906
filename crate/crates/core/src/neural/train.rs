use rand::seq::SliceRandom;

use super::layers::Activations;
use super::model::{loss_and_tape, CnnModel, Gradients, Mode};
use super::real::Real;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::stap::HeatmapTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub freeze_features: bool,
    /// Weight of the penalty `anchor/2 * |w - w_start|^2` that holds the
    /// trainable parameters near their values at the start of the run.
    pub anchor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            freeze_features: false,
            anchor: 0.0,
        }
    }
}

impl TrainConfig {
    /// Few-shot fine-tuning defaults: reduced rate, 50 full-batch epochs,
    /// frozen features, and a pull toward the pretrained dense weights.
    pub fn fine_tune() -> Self {
        Self {
            learning_rate: 5e-4,
            epochs: 50,
            freeze_features: true,
            anchor: 10.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("train.beta", "betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("train.epsilon", "must be positive"));
        }
        if !(self.anchor >= 0.0) || !self.anchor.is_finite() {
            return Err(Error::config("train.anchor", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like [`Gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<Vec<T>>>,
    pub v: Vec<Vec<Vec<T>>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(model: &CnnModel<T>) -> Self {
        let zeros: Vec<Vec<Vec<T>>> = model
            .layers
            .iter()
            .map(|l| l.params().iter().map(|p| vec![T::zero(); p.len()]).collect())
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every trainable layer.
pub fn adam_step<T: Real>(model: &mut CnnModel<T>, grads: &Gradients<T>, config: &TrainConfig, state: &mut AdamState<T>) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 / (1.0 - b1.powi(t));
    let c2 = 1.0 / (1.0 - b2.powi(t));
    let lr = config.learning_rate;
    for (i, layer) in model.layers.iter_mut().enumerate() {
        if !model.trainable[i] || grads.layers[i].is_empty() {
            continue;
        }
        for (p, tensor) in layer.params_mut().into_iter().enumerate() {
            let g = &grads.layers[i][p];
            let m = &mut state.m[i][p];
            let v = &mut state.v[i][p];
            for j in 0..tensor.len() {
                let gj = g[j].as_f64();
                let mj = b1 * m[j].as_f64() + (1.0 - b1) * gj;
                let vj = b2 * v[j].as_f64() + (1.0 - b2) * gj * gj;
                m[j] = T::from_f64(mj);
                v[j] = T::from_f64(vj);
                let delta = lr * (mj * c1) / ((vj * c2).sqrt() + config.epsilon);
                tensor[j] = T::from_f64(tensor[j].as_f64() - delta);
            }
        }
    }
}

/// Packs tensors into a batch of network inputs.
pub fn batch_from_tensors<T: Real>(tensors: &[&HeatmapTensor]) -> Result<Activations<T>> {
    let first = tensors.first().ok_or_else(|| Error::argument("empty batch"))?;
    let [k, h, w] = first.shape;
    let mut data = Vec::with_capacity(tensors.len() * k * h * w);
    for t in tensors {
        if t.shape != first.shape || t.values.len() != k * h * w {
            return Err(Error::argument("tensors in a batch must share one shape"));
        }
        data.extend(t.values.iter().map(|&v| T::from_f64(v as f64)));
    }
    Ok(Activations {
        n: tensors.len(),
        c: k,
        h,
        w,
        data,
    })
}

fn encoded(t: &HeatmapTensor) -> [f64; 3] {
    t.label.encoded.map(|v| v as f64)
}

/// Trains with seeded per-epoch shuffling and returns the mean batch loss
/// of every epoch. When the leading layers are frozen their eval-mode
/// features are computed once and reused.
pub fn train<T: Real>(model: &mut CnnModel<T>, dataset: &[HeatmapTensor], config: &TrainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::argument("training set is empty"));
    }
    if config.freeze_features {
        model.freeze_features();
    }
    let [k, h, w] = dataset[0].shape;
    if (k, h, w) != model.input {
        return Err(Error::argument(format!(
            "dataset tensors {:?} do not match model input {:?}",
            dataset[0].shape, model.input
        )));
    }
    let start = model.first_trainable();
    if start >= model.layers.len() {
        return Ok(Vec::new());
    }
    let labels: Vec<[f64; 3]> = dataset.iter().map(encoded).collect();
    // Frozen prefix features, one row per example.
    let features: Option<Activations<T>> = if start > 0 {
        let mut rows: Vec<Activations<T>> = Vec::new();
        for chunk in dataset.chunks(256) {
            let refs: Vec<&HeatmapTensor> = chunk.iter().collect();
            let x = batch_from_tensors::<T>(&refs)?;
            rows.push(model.features(start, x)?);
        }
        Some(concat(rows))
    } else {
        None
    };

    let start_params: Option<Vec<Vec<Vec<T>>>> = (config.anchor > 0.0).then(|| {
        model
            .layers
            .iter()
            .map(|l| l.params().iter().map(|p| p.to_vec()).collect())
            .collect()
    });

    let mut state = AdamState::new(model);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = seeded(derive_seed(config.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size) {
            if idx.len() < 2 && dataset.len() >= 2 {
                continue;
            }
            let batch_labels: Vec<[f64; 3]> = idx.iter().map(|&i| labels[i]).collect();
            let x = match &features {
                Some(f) => gather(f, idx),
                None => {
                    let refs: Vec<&HeatmapTensor> = idx.iter().map(|&i| &dataset[i]).collect();
                    batch_from_tensors(&refs)?
                }
            };
            let (loss, mut grads, tape) = loss_and_tape(model, start, x, &batch_labels)?;
            if let Some(w0) = &start_params {
                pull_toward(model, &mut grads, w0, config.anchor);
            }
            model.update_running_stats(&tape);
            adam_step(model, &grads, config, &mut state);
            total += loss;
            batches += 1;
        }
        if !model.is_finite() {
            return Err(Error::Numeric {
                layer: start,
                kind: format!("parameters diverged in epoch {epoch}"),
            });
        }
        history.push(if batches > 0 { total / batches as f64 } else { 0.0 });
        log::debug!("epoch {epoch}: loss {:.6}", history[epoch]);
    }
    Ok(history)
}

/// Freezes the feature extractor and fine-tunes the dense head on a small
/// set of examples from a new scene.
pub fn freeze_and_finetune<T: Real>(
    model: &mut CnnModel<T>,
    examples: &[HeatmapTensor],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::argument("fine-tuning set is empty"));
    }
    model.freeze_features();
    let config = TrainConfig {
        freeze_features: true,
        ..config.clone()
    };
    train(model, examples, &config)
}

/// Eval-mode predictions of encoded coordinates.
pub fn predict<T: Real>(model: &CnnModel<T>, tensors: &[HeatmapTensor]) -> Result<Vec<[f64; 3]>> {
    let mut out = Vec::with_capacity(tensors.len());
    for chunk in tensors.chunks(256) {
        let refs: Vec<&HeatmapTensor> = chunk.iter().collect();
        let y = model.forward(&batch_from_tensors::<T>(&refs)?, Mode::Eval)?;
        out.extend(y.data.chunks_exact(3).map(|r| [r[0].as_f64(), r[1].as_f64(), r[2].as_f64()]));
    }
    Ok(out)
}

fn pull_toward<T: Real>(model: &CnnModel<T>, grads: &mut Gradients<T>, start: &[Vec<Vec<T>>], weight: f64) {
    for (i, layer) in model.layers.iter().enumerate() {
        if !model.trainable[i] {
            continue;
        }
        for ((g, w), w0) in grads.layers[i].iter_mut().zip(layer.params()).zip(&start[i]) {
            for ((gj, &wj), &w0j) in g.iter_mut().zip(w).zip(w0) {
                *gj = T::from_f64(gj.as_f64() + weight * (wj.as_f64() - w0j.as_f64()));
            }
        }
    }
}

fn concat<T: Real>(rows: Vec<Activations<T>>) -> Activations<T> {
    let mut it = rows.into_iter();
    let mut acc = it.next().expect("at least one chunk");
    for r in it {
        acc.n += r.n;
        acc.data.extend(r.data);
    }
    acc
}

fn gather<T: Real>(all: &Activations<T>, idx: &[usize]) -> Activations<T> {
    let mut data = Vec::with_capacity(idx.len() * all.per_example());
    for &i in idx {
        data.extend_from_slice(all.example(i));
    }
    Activations {
        n: idx.len(),
        c: all.c,
        h: all.h,
        w: all.w,
        data,
    }
}
