//! Minimal MLP classifier with exact hand-derived gradients.
//!
//! Hidden layers use ReLU, the final layer emits one logit per class, and
//! the loss is mean softmax cross-entropy with max-shift stabilization.
//! Parameters, gradients, and optimizer moments all share the same layered
//! layout so the update rules stay index-free.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numerics::RngState;

/// One dense layer: `weights` is row-major `[out_dim x in_dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<LayerParams>,
}

impl MlpParams {
    /// Build a network for `dims = [input, hidden..., classes]` with weights
    /// drawn uniformly in +/- sqrt(6 / (in + out)) per layer.
    pub fn init(dims: &[usize], rng: &mut RngState) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (inp, out) = (w[0], w[1]);
                let bound = (6.0 / (inp + out) as f64).sqrt();
                let weights = (0..inp * out)
                    .map(|_| (2.0 * rng.next_f64() - 1.0) * bound)
                    .collect();
                LayerParams {
                    in_dim: inp,
                    out_dim: out,
                    weights,
                    bias: vec![0.0; out],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2);
        Self {
            layers: dims.windows(2).map(|w| LayerParams::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Checkpoint to JSON; round trip is exact because f64 serializes
    /// with shortest round-trip formatting.
    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Gradients, shape-congruent with the parameters they differentiate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weights.iter().map(|v| v * v).sum::<f64>()
                    + l.bias.iter().map(|v| v * v).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// A dense training or evaluation batch, features row-major `[len x dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl Batch {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize) -> Self {
        assert_eq!(features.len(), labels.len() * dim, "ragged batch");
        assert!(!labels.is_empty(), "batch must hold at least one sample");
        Self {
            features,
            labels,
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Forward pass; returns logits `[batch x classes]` row-major.
pub fn forward(params: &MlpParams, features: &[f64], batch: usize) -> Result<Vec<f64>> {
    let acts = forward_cached(params, features, batch)?;
    Ok(acts.into_iter().last().unwrap())
}

/// Forward pass keeping every post-activation, input first, logits last.
fn forward_cached(params: &MlpParams, features: &[f64], batch: usize) -> Result<Vec<Vec<f64>>> {
    let in_dim = params.input_dim();
    if features.len() != batch * in_dim {
        return Err(CoreError::ShapeMismatch {
            what: "forward features",
            expected: batch * in_dim,
            got: features.len(),
        });
    }
    let num_layers = params.layers.len();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(num_layers + 1);
    acts.push(features.to_vec());
    for (li, layer) in params.layers.iter().enumerate() {
        let prev = &acts[li];
        let mut out = vec![0.0; batch * layer.out_dim];
        for b in 0..batch {
            let x = &prev[b * layer.in_dim..(b + 1) * layer.in_dim];
            let z = &mut out[b * layer.out_dim..(b + 1) * layer.out_dim];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let mut acc = layer.bias[o];
                for (w, xi) in row.iter().zip(x) {
                    acc += w * xi;
                }
                // ReLU on hidden layers, identity on the output layer.
                *zo = if li + 1 < num_layers { acc.max(0.0) } else { acc };
            }
        }
        acts.push(out);
    }
    Ok(acts)
}

/// Per-row log-softmax cross-entropy, max-shifted for stability.
pub fn per_sample_loss(logits: &[f64], labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    if logits.len() != labels.len() * num_classes {
        return Err(CoreError::ShapeMismatch {
            what: "loss logits",
            expected: labels.len() * num_classes,
            got: logits.len(),
        });
    }
    labels
        .iter()
        .enumerate()
        .map(|(b, &y)| {
            if y >= num_classes {
                return Err(CoreError::LabelOutOfRange {
                    label: y,
                    num_classes,
                });
            }
            let row = &logits[b * num_classes..(b + 1) * num_classes];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum: f64 = row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            Ok(log_sum - (row[y] - max))
        })
        .collect()
}

/// Mean cross-entropy over the batch.
pub fn loss(logits: &[f64], labels: &[usize], num_classes: usize) -> Result<f64> {
    let per = per_sample_loss(logits, labels, num_classes)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Loss and exact gradients of the mean cross-entropy over `batch`.
pub fn backward(params: &MlpParams, batch: &Batch) -> Result<(f64, Gradients)> {
    let bsz = batch.len();
    let classes = params.num_classes();
    let acts = forward_cached(params, &batch.features, bsz)?;
    let logits = acts.last().unwrap();
    let mean_loss = loss(logits, &batch.labels, classes)?;

    // delta at the output: (softmax - onehot) / batch.
    let mut delta = vec![0.0; bsz * classes];
    for (b, &y) in batch.labels.iter().enumerate() {
        let row = &logits[b * classes..(b + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let d = &mut delta[b * classes..(b + 1) * classes];
        for (c, dc) in d.iter_mut().enumerate() {
            let p = exps[c] / sum;
            *dc = (p - if c == y { 1.0 } else { 0.0 }) / bsz as f64;
        }
    }

    let mut grads = Gradients::zeros_like(params);
    for li in (0..params.layers.len()).rev() {
        let layer = &params.layers[li];
        let input = &acts[li];
        let g = &mut grads.layers[li];
        for b in 0..bsz {
            let d = &delta[b * layer.out_dim..(b + 1) * layer.out_dim];
            let x = &input[b * layer.in_dim..(b + 1) * layer.in_dim];
            for (o, &dout) in d.iter().enumerate() {
                g.bias[o] += dout;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (wi, xi) in row.iter_mut().zip(x) {
                    *wi += dout * xi;
                }
            }
        }
        if li > 0 {
            // Backprop through the ReLU of the previous layer: the cached
            // activation is max(0, z), so the mask is activation > 0.
            let mut next_delta = vec![0.0; bsz * layer.in_dim];
            for b in 0..bsz {
                let d = &delta[b * layer.out_dim..(b + 1) * layer.out_dim];
                let a_prev = &input[b * layer.in_dim..(b + 1) * layer.in_dim];
                let nd = &mut next_delta[b * layer.in_dim..(b + 1) * layer.in_dim];
                for (o, &dout) in d.iter().enumerate() {
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (i, w) in row.iter().enumerate() {
                        nd[i] += w * dout;
                    }
                }
                for (ndi, &ai) in nd.iter_mut().zip(a_prev) {
                    if ai <= 0.0 {
                        *ndi = 0.0;
                    }
                }
            }
            delta = next_delta;
        }
    }
    Ok((mean_loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    step: u64,
    first_moment: Vec<LayerParams>,
    second_moment: Vec<LayerParams>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: &MlpParams) -> Self {
        let zero = || {
            params
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.in_dim, l.out_dim))
                .collect::<Vec<_>>()
        };
        match kind {
            OptimizerKind::Sgd => Self {
                kind,
                step: 0,
                first_moment: Vec::new(),
                second_moment: Vec::new(),
            },
            OptimizerKind::Adam => Self {
                kind,
                step: 0,
                first_moment: zero(),
                second_moment: zero(),
            },
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Apply one SGD or bias-corrected Adam update in place.
pub fn optimizer_step(
    params: &mut MlpParams,
    grads: &Gradients,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    assert!(lr > 0.0, "learning rate must be positive");
    if !grads.is_finite() {
        return Err(CoreError::NonFiniteGradient);
    }
    match state.kind {
        OptimizerKind::Sgd => {
            for (layer, g) in params.layers.iter_mut().zip(&grads.layers) {
                for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                    *w -= lr * gw;
                }
                for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                    *b -= lr * gb;
                }
            }
        }
        OptimizerKind::Adam => {
            state.step += 1;
            let t = state.step as i32;
            let bc1 = 1.0 - ADAM_BETA1.powi(t);
            let bc2 = 1.0 - ADAM_BETA2.powi(t);
            for (((layer, g), m), v) in params
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(&mut state.first_moment)
                .zip(&mut state.second_moment)
            {
                let apply = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                };
                for ((p, &gw), (mw, vw)) in layer
                    .weights
                    .iter_mut()
                    .zip(&g.weights)
                    .zip(m.weights.iter_mut().zip(v.weights.iter_mut()))
                {
                    apply(p, gw, mw, vw);
                }
                for ((p, &gb), (mb, vb)) in layer
                    .bias
                    .iter_mut()
                    .zip(&g.bias)
                    .zip(m.bias.iter_mut().zip(v.bias.iter_mut()))
                {
                    apply(p, gb, mb, vb);
                }
            }
        }
    }
    Ok(())
}

/// Argmax predictions; ties break toward the lowest class id.
pub fn predict(params: &MlpParams, features: &[f64], batch: usize) -> Result<Vec<usize>> {
    let logits = forward(params, features, batch)?;
    let classes = params.num_classes();
    Ok((0..batch)
        .map(|b| {
            let row = &logits[b * classes..(b + 1) * classes];
            let mut best = 0;
            for (c, &z) in row.iter().enumerate().skip(1) {
                if z > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

/// Fraction of correctly classified samples in `batch`.
pub fn evaluate_accuracy(params: &MlpParams, batch: &Batch) -> Result<f64> {
    if batch.is_empty() {
        return Err(CoreError::EmptyInput("evaluation batch"));
    }
    let preds = predict(params, &batch.features, batch.len())?;
    let correct = preds
        .iter()
        .zip(&batch.labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / batch.len() as f64)
}
