use super::layers::{maxpool_backward, maxpool_forward, Activations, BatchNorm2d, BnCache, Conv2d, Dense};
use super::real::Real;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Convolution widths and hidden dense width of the localizer network:
/// three 3x3 convolutions (each followed by batch normalization and a
/// rectifier, with a 2x2 max-pool after the second), a hidden dense layer
/// and a 3-output dense layer squashed by `tanh`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub conv: [usize; 3],
    pub hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            conv: [16, 32, 32],
            hidden: 128,
        }
    }
}

impl Architecture {
    /// The wider variant (32, 64, 64 filters and 256 hidden units).
    pub fn wide() -> Self {
        Self {
            conv: [32, 64, 64],
            hidden: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    BatchNorm(BatchNorm2d<T>),
    Relu,
    MaxPool,
    Flatten,
    Dense(Dense<T>),
    Tanh,
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu => "relu",
            Layer::MaxPool => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Tanh => "tanh",
        }
    }

    pub fn params(&self) -> Vec<&[T]> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params().iter().map(|p| vec![T::zero(); p.len()]).collect()
    }
}

enum Cache<T> {
    Input(Activations<T>),
    Bn(BnCache<T>),
    Output(Activations<T>),
    Pool { argmax: Vec<u32>, h: usize, w: usize },
    Shape { c: usize, h: usize, w: usize },
}

/// Intermediate values of one forward pass, consumed by the backward pass.
pub struct Tape<T> {
    start: usize,
    caches: Vec<Cache<T>>,
}

/// Gradients indexed by layer then parameter tensor. Layers that are frozen
/// or have no parameters hold an empty list.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Vec<Vec<T>>>,
}

#[derive(Clone, Debug)]
pub struct CnnModel<T> {
    pub layers: Vec<Layer<T>>,
    pub trainable: Vec<bool>,
    /// `(kappa, n_theta, n_phi)`
    pub input: (usize, usize, usize),
}

impl<T: Real> CnnModel<T> {
    pub fn new(input: (usize, usize, usize), arch: Architecture, seed: u64) -> Result<Self> {
        let (kappa, h, w) = input;
        if kappa == 0 || h < 2 || w < 2 {
            return Err(Error::argument(format!("input dims {input:?} too small for the network")));
        }
        if arch.conv.contains(&0) || arch.hidden == 0 {
            return Err(Error::argument("architecture widths must be positive"));
        }
        let mut rng = seeded(seed);
        let [c1, c2, c3] = arch.conv;
        let flat = c3 * (h / 2) * (w / 2);
        let layers = vec![
            Layer::Conv(Conv2d::new(kappa, c1, &mut rng)),
            Layer::BatchNorm(BatchNorm2d::new(c1)),
            Layer::Relu,
            Layer::Conv(Conv2d::new(c1, c2, &mut rng)),
            Layer::BatchNorm(BatchNorm2d::new(c2)),
            Layer::Relu,
            Layer::MaxPool,
            Layer::Conv(Conv2d::new(c2, c3, &mut rng)),
            Layer::BatchNorm(BatchNorm2d::new(c3)),
            Layer::Relu,
            Layer::Flatten,
            Layer::Dense(Dense::new(flat, arch.hidden, 2f64.sqrt(), &mut rng)),
            Layer::Relu,
            Layer::Dense(Dense::new(arch.hidden, 3, 0.1, &mut rng)),
            Layer::Tanh,
        ];
        let trainable = vec![true; layers.len()];
        Ok(Self {
            layers,
            trainable,
            input,
        })
    }

    /// Marks convolution and batch-normalization layers as frozen.
    pub fn freeze_features(&mut self) {
        for (layer, flag) in self.layers.iter().zip(self.trainable.iter_mut()) {
            if matches!(layer, Layer::Conv(_) | Layer::BatchNorm(_)) {
                *flag = false;
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.params()).map(|p| p.len()).sum()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.layers
            .iter()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .flat_map(|(l, _)| l.params())
            .map(|p| p.len())
            .sum()
    }

    /// Index of the first layer whose parameters are trained. Everything
    /// before it is a fixed feature extractor.
    pub fn first_trainable(&self) -> usize {
        (0..self.layers.len())
            .find(|&i| self.trainable[i] && !self.layers[i].params().is_empty())
            .unwrap_or(self.layers.len())
    }

    pub fn check_input(&self, x: &Activations<T>) -> Result<()> {
        let (k, h, w) = self.input;
        if (x.c, x.h, x.w) != (k, h, w) || x.data.len() != x.n * k * h * w {
            return Err(Error::argument(format!(
                "batch dims ({}, {}, {}) do not match model input ({k}, {h}, {w})",
                x.c, x.h, x.w
            )));
        }
        Ok(())
    }

    /// Network output, `n x 3`.
    pub fn forward(&self, x: &Activations<T>, mode: Mode) -> Result<Activations<T>> {
        self.check_input(x)?;
        Ok(self.run(0, x.clone(), mode, false)?.0)
    }

    /// Runs layers `start..` on `x`, optionally recording a tape.
    pub fn run(&self, start: usize, x: Activations<T>, mode: Mode, record: bool) -> Result<(Activations<T>, Tape<T>)> {
        self.run_range(start, self.layers.len(), x, mode, record)
    }

    /// Eval-mode output of layers `..end`.
    pub fn features(&self, end: usize, x: Activations<T>) -> Result<Activations<T>> {
        Ok(self.run_range(0, end, x, Mode::Eval, false)?.0)
    }

    fn run_range(
        &self,
        start: usize,
        end: usize,
        mut x: Activations<T>,
        mode: Mode,
        record: bool,
    ) -> Result<(Activations<T>, Tape<T>)> {
        let mut caches = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().take(end).skip(start) {
            let (y, cache) = match layer {
                Layer::Conv(l) => (l.forward(&x), Cache::Input(x)),
                Layer::Dense(l) => (l.forward(&x), Cache::Input(x)),
                Layer::BatchNorm(l) => {
                    let (y, c) = l.forward(&x, mode == Mode::Train && self.trainable[i]);
                    (y, Cache::Bn(c))
                }
                Layer::Relu => {
                    x.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
                    let y = x;
                    let c = if record { Cache::Output(y.clone()) } else { Cache::Shape { c: 0, h: 0, w: 0 } };
                    (y, c)
                }
                Layer::Tanh => {
                    x.data.iter_mut().for_each(|v| *v = v.tanh());
                    let y = x;
                    let c = if record { Cache::Output(y.clone()) } else { Cache::Shape { c: 0, h: 0, w: 0 } };
                    (y, c)
                }
                Layer::MaxPool => {
                    let (y, argmax) = maxpool_forward(&x);
                    (y, Cache::Pool { argmax, h: x.h, w: x.w })
                }
                Layer::Flatten => {
                    let shape = Cache::Shape { c: x.c, h: x.h, w: x.w };
                    let n = x.n;
                    let c = x.per_example();
                    (
                        Activations {
                            n,
                            c,
                            h: 1,
                            w: 1,
                            data: x.data,
                        },
                        shape,
                    )
                }
            };
            if y.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: i,
                    kind: format!("non-finite {} output", layer.kind()),
                });
            }
            if record {
                caches.push(cache);
            }
            x = y;
        }
        Ok((x, Tape { start, caches }))
    }

    /// Back-propagates `dy` through a recorded tape. Gradients are produced
    /// for trainable layers only, and propagation stops at the first of them.
    pub fn backward(&self, tape: &Tape<T>, dy: Activations<T>) -> Gradients<T> {
        let mut grads: Vec<Vec<Vec<T>>> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| if self.trainable[i] && i >= tape.start { l.zero_grads() } else { Vec::new() })
            .collect();
        let stop = self.first_trainable().max(tape.start);
        let mut dy = dy;
        for i in (stop..self.layers.len()).rev() {
            let cache = &tape.caches[i - tape.start];
            let need_dx = i > stop;
            let g = &mut grads[i];
            let pair = if g.len() == 2 {
                let (a, b) = g.split_at_mut(1);
                Some((a[0].as_mut_slice(), b[0].as_mut_slice()))
            } else {
                None
            };
            let next = match (&self.layers[i], cache) {
                (Layer::Conv(l), Cache::Input(x)) => l.backward(x, &dy, need_dx, pair),
                (Layer::Dense(l), Cache::Input(x)) => l.backward(x, &dy, need_dx, pair),
                (Layer::BatchNorm(l), Cache::Bn(c)) => l.backward(c, &dy, need_dx, pair),
                (Layer::Relu, Cache::Output(y)) => {
                    dy.data.iter_mut().zip(&y.data).for_each(|(d, &v)| {
                        if v <= T::zero() {
                            *d = T::zero();
                        }
                    });
                    Some(dy)
                }
                (Layer::Tanh, Cache::Output(y)) => {
                    dy.data.iter_mut().zip(&y.data).for_each(|(d, &v)| *d = *d * (T::one() - v * v));
                    Some(dy)
                }
                (Layer::MaxPool, Cache::Pool { argmax, h, w }) => Some(maxpool_backward(&dy, argmax, (*h, *w))),
                (Layer::Flatten, Cache::Shape { c, h, w }) => Some(Activations {
                    n: dy.n,
                    c: *c,
                    h: *h,
                    w: *w,
                    data: dy.data,
                }),
                _ => unreachable!("tape does not match layer {i}"),
            };
            match next {
                Some(d) => dy = d,
                None => break,
            }
        }
        Gradients { layers: grads }
    }

    /// Folds the batch statistics recorded on a training tape into the
    /// running statistics of trainable normalization layers.
    pub fn update_running_stats(&mut self, tape: &Tape<T>) {
        for (offset, cache) in tape.caches.iter().enumerate() {
            let i = tape.start + offset;
            if let (Layer::BatchNorm(l), Cache::Bn(c)) = (&mut self.layers[i], cache) {
                if self.trainable[i] {
                    let count = c.x_hat.len() / l.channels;
                    l.update_running(c, count);
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flat_map(|l| l.params()).all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Converts every parameter and running statistic to another precision.
    pub fn cast<U: Real>(&self) -> CnnModel<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.as_f64())).collect::<Vec<U>>();
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Layer::Conv(Conv2d {
                    cin: c.cin,
                    cout: c.cout,
                    weight: conv(&c.weight),
                    bias: conv(&c.bias),
                }),
                Layer::BatchNorm(b) => Layer::BatchNorm(BatchNorm2d {
                    channels: b.channels,
                    gamma: conv(&b.gamma),
                    beta: conv(&b.beta),
                    running_mean: conv(&b.running_mean),
                    running_var: conv(&b.running_var),
                }),
                Layer::Dense(d) => Layer::Dense(Dense {
                    inputs: d.inputs,
                    outputs: d.outputs,
                    weight: conv(&d.weight),
                    bias: conv(&d.bias),
                }),
                Layer::Relu => Layer::Relu,
                Layer::MaxPool => Layer::MaxPool,
                Layer::Flatten => Layer::Flatten,
                Layer::Tanh => Layer::Tanh,
            })
            .collect();
        CnnModel {
            layers,
            trainable: self.trainable.clone(),
            input: self.input,
        }
    }
}

/// Mean squared error over all `n x 3` entries and its gradient.
pub fn mse(output: &Activations<impl Real>, labels: &[[f64; 3]]) -> f64 {
    output
        .data
        .chunks_exact(3)
        .zip(labels)
        .map(|(o, l)| (0..3).map(|j| (o[j].as_f64() - l[j]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (3 * labels.len()) as f64
}

/// Loss and exact parameter gradients on a batch in training mode.
pub fn loss_and_gradients<T: Real>(
    model: &CnnModel<T>,
    batch: &Activations<T>,
    labels: &[[f64; 3]],
) -> Result<(f64, Gradients<T>)> {
    model.check_input(batch)?;
    let (loss, grads, _) = loss_and_tape(model, 0, batch.clone(), labels)?;
    Ok((loss, grads))
}

pub(crate) fn loss_and_tape<T: Real>(
    model: &CnnModel<T>,
    start: usize,
    batch: Activations<T>,
    labels: &[[f64; 3]],
) -> Result<(f64, Gradients<T>, Tape<T>)> {
    if labels.len() != batch.n {
        return Err(Error::argument(format!("{} labels for a batch of {}", labels.len(), batch.n)));
    }
    let (out, tape) = model.run(start, batch, Mode::Train, true)?;
    let loss = mse(&out, labels);
    let scale = 2.0 / (3 * labels.len()) as f64;
    let mut dy = out;
    for (row, l) in dy.data.chunks_exact_mut(3).zip(labels) {
        for j in 0..3 {
            row[j] = T::from_f64(scale * (row[j].as_f64() - l[j]));
        }
    }
    let grads = model.backward(&tape, dy);
    Ok((loss, grads, tape))
}
