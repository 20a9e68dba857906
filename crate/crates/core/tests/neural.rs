use rand::Rng;
use staploc_core::neural::{
    adam_step, check_gradients, freeze_and_finetune, loss_and_gradients, train, Activations, AdamState, Architecture,
    CnnModel, Gradients, Layer, Mode, TrainConfig,
};
use staploc_core::rng::seeded;
use staploc_core::stap::{HeatmapTensor, TensorLabel};
use staploc_core::Error;

const SMALL: Architecture = Architecture {
    conv: [3, 4, 3],
    hidden: 8,
};

fn random_batch(n: usize, shape: (usize, usize, usize), seed: u64) -> Activations<f64> {
    let mut rng = seeded(seed);
    let mut a = Activations::zeros(n, shape.0, shape.1, shape.2);
    a.data.iter_mut().for_each(|v| *v = rng.random_range(0.0..3.0));
    a
}

fn random_labels(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = seeded(seed);
    (0..n).map(|_| [0; 3].map(|_| rng.random_range(-0.8..0.8))).collect()
}

fn synthetic_set(n: usize, shape: [usize; 3], seed: u64) -> Vec<HeatmapTensor> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let enc = [0; 3].map(|_| rng.random_range(-0.8f32..0.8));
            HeatmapTensor {
                shape,
                values: (0..shape.iter().product()).map(|_| rng.random_range(0.0f32..3.0)).collect(),
                label: TensorLabel {
                    position: [0.0; 3],
                    encoded: enc,
                    bin_index: 0,
                },
                scenario_id: "O".into(),
                output_scnr_db: 0.0,
            }
        })
        .collect()
}

fn zero_head(model: &mut CnnModel<f64>) {
    for layer in model.layers.iter_mut().rev() {
        if let Layer::Dense(d) = layer {
            d.weight.fill(0.0);
            d.bias.fill(0.0);
            break;
        }
    }
}

#[test]
fn zero_head_gives_zero_output_and_zero_gradient() {
    let mut m = CnnModel::<f64>::new((2, 6, 5), SMALL, 3).unwrap();
    zero_head(&mut m);
    let x = Activations::zeros(2, 2, 6, 5);
    let y = m.forward(&x, Mode::Eval).unwrap();
    assert!(y.data.iter().all(|&v| v == 0.0));
    let (loss, grads) = loss_and_gradients(&m, &x, &[[0.0; 3]; 2]).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.layers.iter().flatten().flatten().all(|&g| g == 0.0));
}

#[test]
fn eval_mode_is_batch_independent_and_bounded() {
    let m = CnnModel::<f64>::new((3, 8, 7), SMALL, 5).unwrap();
    let x = random_batch(5, (3, 8, 7), 9);
    let all = m.forward(&x, Mode::Eval).unwrap();
    for i in 0..5 {
        let single = Activations {
            n: 1,
            c: 3,
            h: 8,
            w: 7,
            data: x.example(i).to_vec(),
        };
        let y = m.forward(&single, Mode::Eval).unwrap();
        for j in 0..3 {
            assert!((y.data[j] - all.data[3 * i + j]).abs() < 1e-6);
        }
    }
    assert!(all.data.iter().all(|v| v.abs() < 1.0));
}

#[test]
fn shape_mismatch_is_an_argument_error() {
    let m = CnnModel::<f64>::new((3, 8, 7), SMALL, 5).unwrap();
    let x = random_batch(2, (3, 7, 8), 1);
    assert!(matches!(m.forward(&x, Mode::Eval), Err(Error::Argument(_))));
}

#[test]
fn gradients_match_central_differences() {
    let m = CnnModel::<f64>::new((2, 7, 6), SMALL, 11).unwrap();
    let x = random_batch(4, (2, 7, 6), 12);
    let labels = random_labels(4, 13);
    let report = check_gradients(&m, &x, &labels, 1e-4, 64, 14).unwrap();
    assert_eq!(report.len(), 16, "eight parameterized layers, two tensors each");
    for r in &report {
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}

#[test]
fn duplicating_the_batch_leaves_gradients_unchanged() {
    let m = CnnModel::<f64>::new((2, 6, 6), SMALL, 21).unwrap();
    let x = random_batch(3, (2, 6, 6), 22);
    let labels = random_labels(3, 23);
    let (l1, g1) = loss_and_gradients(&m, &x, &labels).unwrap();
    let mut x2 = x.clone();
    x2.n = 6;
    x2.data.extend(x.data.clone());
    let labels2: Vec<_> = labels.iter().chain(labels.iter()).copied().collect();
    let (l2, g2) = loss_and_gradients(&m, &x2, &labels2).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    for (a, b) in g1.layers.iter().flatten().flatten().zip(g2.layers.iter().flatten().flatten()) {
        assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }
}

#[test]
fn adam_first_step_moves_each_parameter_by_the_learning_rate() {
    let mut m = CnnModel::<f64>::new((2, 6, 5), SMALL, 31).unwrap();
    let before = m.clone();
    let cfg = TrainConfig::default();
    let mut state = AdamState::new(&m);
    let zero = Gradients {
        layers: m.layers.iter().map(|l| l.params().iter().map(|p| vec![0.0; p.len()]).collect()).collect(),
    };
    adam_step(&mut m, &zero, &cfg, &mut state);
    for (a, b) in m.layers.iter().zip(&before.layers) {
        assert_eq!(a.params(), b.params());
    }

    let mut rng = seeded(32);
    let grads = Gradients {
        layers: zero
            .layers
            .iter()
            .map(|l| l.iter().map(|p| p.iter().map(|_| rng.random_range(-5.0..5.0)).collect()).collect())
            .collect(),
    };
    let mut m2 = before.clone();
    let mut state = AdamState::new(&m2);
    adam_step(&mut m2, &grads, &cfg, &mut state);
    for (i, (a, b)) in m2.layers.iter().zip(&before.layers).enumerate() {
        for (p, (ta, tb)) in a.params().iter().zip(b.params()).enumerate() {
            for j in 0..ta.len() {
                let step = tb[j] - ta[j];
                let g: f64 = grads.layers[i][p][j];
                assert!((step - cfg.learning_rate * g.signum()).abs() < 1e-9 * (1.0 + 1.0 / g.abs()));
            }
        }
    }
}

#[test]
fn frozen_layers_do_not_move() {
    let mut m = CnnModel::<f64>::new((2, 6, 5), SMALL, 41).unwrap();
    m.freeze_features();
    let before = m.clone();
    let x = random_batch(4, (2, 6, 5), 42);
    let (_, grads) = loss_and_gradients(&m, &x, &random_labels(4, 43)).unwrap();
    let mut state = AdamState::new(&m);
    adam_step(&mut m, &grads, &TrainConfig::default(), &mut state);
    for ((a, b), &t) in m.layers.iter().zip(&before.layers).zip(&m.trainable) {
        if !t {
            assert_eq!(a.params(), b.params());
        }
    }
    assert_ne!(m.layers[11].params(), before.layers[11].params());
}

#[test]
fn zero_epochs_leave_the_model_unchanged() {
    let data = synthetic_set(4, [2, 6, 5], 51);
    let mut m = CnnModel::<f32>::new((2, 6, 5), SMALL, 52).unwrap();
    let before = m.clone();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(train(&mut m, &data, &cfg).unwrap().is_empty());
    for (a, b) in m.layers.iter().zip(&before.layers) {
        assert_eq!(a.params(), b.params());
    }
}

#[test]
fn memorizes_eight_examples() {
    let data = synthetic_set(8, [5, 26, 21], 61);
    let mut m = CnnModel::<f32>::new((5, 26, 21), Architecture::default(), 62).unwrap();
    let cfg = TrainConfig {
        epochs: 500,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let history = train(&mut m, &data, &cfg).unwrap();
    assert_eq!(history.len(), 500);
    assert!(*history.last().unwrap() < 1e-3, "final loss {}", history.last().unwrap());
}

#[test]
fn training_is_deterministic() {
    let data = synthetic_set(24, [2, 8, 6], 71);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 5,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = CnnModel::<f32>::new((2, 8, 6), SMALL, 72).unwrap();
        let h = train(&mut m, &data, &cfg).unwrap();
        (staploc_core::neural::encode_checkpoint(&m, None), h)
    };
    assert_eq!(run(), run());
}

#[test]
fn fine_tuning_honors_the_freeze_contract() {
    let data = synthetic_set(32, [5, 26, 21], 81);
    let mut m = CnnModel::<f32>::new((5, 26, 21), Architecture::default(), 82).unwrap();
    train(
        &mut m,
        &data,
        &TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let before = m.clone();
    let fsl = synthetic_set(16, [5, 26, 21], 83);
    freeze_and_finetune(&mut m, &fsl, &TrainConfig::fine_tune()).unwrap();
    for (a, b) in m.layers.iter().zip(&before.layers) {
        match (a, b) {
            (Layer::Conv(x), Layer::Conv(y)) => assert_eq!(x.weight, y.weight),
            (Layer::BatchNorm(x), Layer::BatchNorm(y)) => {
                assert_eq!((&x.gamma, &x.beta), (&y.gamma, &y.beta));
                assert_eq!((&x.running_mean, &x.running_var), (&y.running_mean, &y.running_var));
            }
            _ => {}
        }
    }
    assert_ne!(m.layers[13].params(), before.layers[13].params());
    let frac = m.trainable_parameter_count() as f64 / m.parameter_count() as f64;
    assert!((0.25..=1.0).contains(&frac), "trainable fraction {frac}");
}

#[test]
fn empty_fine_tuning_set_is_rejected() {
    let mut m = CnnModel::<f32>::new((2, 6, 5), SMALL, 91).unwrap();
    assert!(matches!(
        freeze_and_finetune(&mut m, &[], &TrainConfig::fine_tune()),
        Err(Error::Argument(_))
    ));
}

#[test]
fn anchor_keeps_the_head_near_its_start() {
    let data = synthetic_set(24, [2, 6, 5], 95);
    let mut base = CnnModel::<f32>::new((2, 6, 5), SMALL, 96).unwrap();
    train(&mut base, &data, &TrainConfig { epochs: 2, ..TrainConfig::default() }).unwrap();
    let fresh = synthetic_set(16, [2, 6, 5], 97);
    let drift = |anchor: f64| {
        let mut m = base.clone();
        let cfg = TrainConfig {
            epochs: 40,
            anchor,
            ..TrainConfig::fine_tune()
        };
        freeze_and_finetune(&mut m, &fresh, &cfg).unwrap();
        let mut sq = 0.0;
        for (a, b) in m.layers.iter().zip(&base.layers) {
            for (x, y) in a.params().iter().zip(b.params()) {
                sq += x.iter().zip(y).map(|(p, q)| ((p - q) as f64).powi(2)).sum::<f64>();
            }
        }
        sq.sqrt()
    };
    let free = drift(0.0);
    let held = drift(100.0);
    assert!(free > 0.0);
    assert!(held < 0.5 * free, "anchored drift {held} vs free drift {free}");

    let bad = TrainConfig {
        anchor: -1.0,
        ..TrainConfig::fine_tune()
    };
    assert!(matches!(bad.validate(), Err(Error::Config { .. })));
}
