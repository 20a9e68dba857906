use super::layers::Activations;
use super::model::{loss_and_gradients, CnnModel, Mode};
use crate::error::Result;
use crate::rng::seeded;
use rand::seq::index::sample;

/// Worst finite-difference disagreement found in one parameter tensor.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub layer: usize,
    pub kind: &'static str,
    pub tensor: usize,
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Relative error with a floor on the denominator so that entries whose
/// gradient is numerically zero are compared absolutely.
fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn loss_at(model: &CnnModel<f64>, batch: &Activations<f64>, labels: &[[f64; 3]]) -> Result<f64> {
    let out = model.run(0, batch.clone(), Mode::Train, false)?.0;
    Ok(super::model::mse(&out, labels))
}

/// Compares analytic gradients against central differences with step `h`
/// on up to `per_tensor` randomly chosen entries of every parameter tensor.
pub fn check_gradients(
    model: &CnnModel<f64>,
    batch: &Activations<f64>,
    labels: &[[f64; 3]],
    h: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<Vec<GradCheck>> {
    let (_, grads) = loss_and_gradients(model, batch, labels)?;
    let mut rng = seeded(seed);
    let mut probe = model.clone();
    let mut report = Vec::new();
    for (i, layer) in model.layers.iter().enumerate() {
        for (p, tensor) in layer.params().iter().enumerate() {
            if grads.layers[i].is_empty() {
                continue;
            }
            let n = tensor.len();
            let picks = sample(&mut rng, n, per_tensor.min(n));
            let mut worst = 0.0f64;
            for j in picks.iter() {
                let orig = tensor[j];
                probe.layers[i].params_mut()[p][j] = orig + h;
                let up = loss_at(&probe, batch, labels)?;
                probe.layers[i].params_mut()[p][j] = orig - h;
                let down = loss_at(&probe, batch, labels)?;
                probe.layers[i].params_mut()[p][j] = orig;
                let numeric = (up - down) / (2.0 * h);
                worst = worst.max(rel_error(grads.layers[i][p][j], numeric));
            }
            report.push(GradCheck {
                layer: i,
                kind: layer.kind(),
                tensor: p,
                checked: per_tensor.min(n),
                max_rel_error: worst,
            });
        }
    }
    Ok(report)
}
