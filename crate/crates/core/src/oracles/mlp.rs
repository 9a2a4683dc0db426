//! A small fully connected network with hand-written backpropagation.
//!
//! All weights live in one flat [`ModelVector`] so the network plugs directly
//! into the optimizer. Layer `l` stores its weight matrix row-major
//! (`out × in`) followed by its bias.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{seeded_rng, Dataset, LossFunction};
use crate::vector::ModelVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a` and input `z`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LossHead {
    #[default]
    SoftmaxCrossEntropy,
    /// `½ ||out - onehot(label)||²`.
    SquaredError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroMlp {
    widths: Vec<usize>,
    activation: Activation,
    head: LossHead,
}

/// Unpacked weights of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl MicroMlp {
    pub fn new(widths: Vec<usize>, activation: Activation, head: LossHead) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "mlp widths must have >= 2 positive entries, got {widths:?}"
            )));
        }
        Ok(Self {
            widths,
            activation,
            head,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn outputs(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn unpack(&self, params: &ModelVector) -> Result<Vec<LayerParams>> {
        params.ensure_dim(self.num_params(), "mlp parameters")?;
        let p = params.as_slice();
        let mut offset = 0;
        Ok(self
            .widths
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let weights = p[offset..offset + n_out * n_in].to_vec();
                offset += n_out * n_in;
                let bias = p[offset..offset + n_out].to_vec();
                offset += n_out;
                LayerParams { weights, bias }
            })
            .collect())
    }

    pub fn pack(&self, layers: &[LayerParams]) -> Result<ModelVector> {
        if layers.len() != self.widths.len() - 1 {
            return Err(Error::InvalidInput("wrong number of layers".into()));
        }
        let mut out = Vec::with_capacity(self.num_params());
        for (layer, w) in layers.iter().zip(self.widths.windows(2)) {
            if layer.weights.len() != w[0] * w[1] || layer.bias.len() != w[1] {
                return Err(Error::InvalidInput("layer shape mismatch".into()));
            }
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        ModelVector::new(out)
    }

    /// Gaussian initialization scaled by `1/sqrt(fan_in)`, zero biases.
    pub fn init_params(&self, seed: u64) -> ModelVector {
        let mut rng = seeded_rng(seed, 7);
        let mut out = Vec::with_capacity(self.num_params());
        for w in self.widths.windows(2) {
            let scale = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                let z: f64 = StandardNormal.sample(&mut rng);
                out.push(scale * z);
            }
            out.extend(std::iter::repeat_n(0.0, w[1]));
        }
        ModelVector::from_vec_unchecked(out)
    }

    /// Output-layer activations (logits for the cross-entropy head).
    pub fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let mut a = input.to_vec();
        let mut offset = 0;
        let n_layers = self.widths.len() - 1;
        for (l, w) in self.widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let wts = &params[offset..offset + n_in * n_out];
            let bias = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| bias[o] + dot(&wts[o * n_in..(o + 1) * n_in], &a))
                .collect();
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            a = z;
        }
        a
    }

    /// Loss on one sample, accumulating `scale · ∂loss/∂params` into `grad`.
    pub fn accumulate(
        &self,
        params: &[f64],
        input: &[f64],
        label: usize,
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let n_layers = self.widths.len() - 1;
        // forward, keeping pre-activations and activations
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut offsets = Vec::with_capacity(n_layers);
        acts.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            offsets.push(offset);
            let wts = &params[offset..offset + n_in * n_out];
            let bias = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let prev = &acts[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| bias[o] + dot(&wts[o * n_in..(o + 1) * n_in], prev))
                .collect();
            let a = if l + 1 < n_layers {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }

        let out = &acts[n_layers];
        let (loss, mut delta) = match self.head {
            LossHead::SoftmaxCrossEntropy => {
                let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = out.iter().map(|v| (v - m).exp()).collect();
                let sum: f64 = exps.iter().sum();
                let loss = -(out[label] - m - sum.ln());
                let mut d: Vec<f64> = exps.iter().map(|e| e / sum).collect();
                d[label] -= 1.0;
                (loss, d)
            }
            LossHead::SquaredError => {
                let d: Vec<f64> = out
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| v - if k == label { 1.0 } else { 0.0 })
                    .collect();
                (0.5 * d.iter().map(|v| v * v).sum::<f64>(), d)
            }
        };

        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let off = offsets[l];
            let prev = &acts[l];
            for o in 0..n_out {
                let d = scale * delta[o];
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                row.iter_mut().zip(prev).for_each(|(g, &a)| *g += d * a);
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let wts = &params[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        let back: f64 = (0..n_out).map(|o| wts[o * n_in + i] * delta[o]).sum();
                        back * self.activation.derivative(pre[l - 1][i], acts[l][i])
                    })
                    .collect();
            }
        }
        loss
    }

    /// Mean loss and gradient over the given samples.
    pub fn batch_loss_grad(
        &self,
        params: &ModelVector,
        data: &Dataset,
        indices: &[usize],
    ) -> (f64, ModelVector) {
        let p = params.as_slice();
        let mut grad = vec![0.0; self.num_params()];
        let scale = 1.0 / indices.len().max(1) as f64;
        let mut loss = 0.0;
        for &i in indices {
            loss += self.accumulate(p, data.row(i), data.label(i), scale, &mut grad);
        }
        (loss * scale, ModelVector::from_vec_unchecked(grad))
    }

    /// Fraction of samples whose largest output matches the label.
    pub fn accuracy(&self, params: &ModelVector, data: &Dataset) -> f64 {
        let correct = (0..data.len())
            .filter(|&i| {
                let out = self.forward(params.as_slice(), data.row(i));
                argmax(&out) == data.label(i)
            })
            .count();
        correct as f64 / data.len().max(1) as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

/// Full-dataset training loss of a [`MicroMlp`], usable as a [`LossFunction`].
#[derive(Debug, Clone)]
pub struct MlpLoss {
    model: MicroMlp,
    data: Arc<Dataset>,
    all: Vec<usize>,
}

impl MlpLoss {
    pub fn new(model: MicroMlp, data: Arc<Dataset>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        if data.num_features() != model.inputs() {
            return Err(Error::InvalidInput(format!(
                "dataset has {} features, network expects {}",
                data.num_features(),
                model.inputs()
            )));
        }
        if let Some(bad) = data.labels().iter().find(|&&l| l >= model.outputs()) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {} outputs",
                model.outputs()
            )));
        }
        let all = (0..data.len()).collect();
        Ok(Self { model, data, all })
    }

    pub fn model(&self) -> &MicroMlp {
        &self.model
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn batch_loss_grad(&self, x: &ModelVector, indices: &[usize]) -> (f64, ModelVector) {
        self.model.batch_loss_grad(x, &self.data, indices)
    }
}

impl LossFunction for MlpLoss {
    fn dim(&self) -> usize {
        self.model.num_params()
    }

    fn eval(&self, x: &ModelVector) -> f64 {
        self.batch_loss_grad(x, &self.all).0
    }

    fn grad(&self, x: &ModelVector) -> ModelVector {
        self.batch_loss_grad(x, &self.all).1
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::finite_diff_check;

    fn toy() -> (MicroMlp, Arc<Dataset>) {
        let model = MicroMlp::new(vec![4, 8, 3], Activation::Tanh, LossHead::SoftmaxCrossEntropy)
            .unwrap();
        let data = Dataset::gaussian_blobs(12, 4, 3, 1.5, 3).unwrap();
        (model, Arc::new(data))
    }

    #[test]
    fn param_count() {
        let (m, _) = toy();
        assert_eq!(m.num_params(), 4 * 8 + 8 + 8 * 3 + 3);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let (m, _) = toy();
        let p = m.init_params(9);
        let layers = m.unpack(&p).unwrap();
        assert_eq!(layers.len(), 2);
        assert_eq!(m.pack(&layers).unwrap(), p);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (m, data) = toy();
        let loss = MlpLoss::new(m.clone(), data).unwrap();
        for seed in 0..3 {
            let p = m.init_params(seed);
            assert!(finite_diff_check(&loss, &p, 1e-5).unwrap() < 1e-4);
        }
    }

    #[test]
    fn squared_error_head_gradient() {
        let m = MicroMlp::new(vec![4, 5, 3], Activation::Tanh, LossHead::SquaredError).unwrap();
        let data = Arc::new(Dataset::gaussian_blobs(10, 4, 3, 1.0, 1).unwrap());
        let loss = MlpLoss::new(m.clone(), data).unwrap();
        assert!(finite_diff_check(&loss, &m.init_params(4), 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn loss_is_nonnegative() {
        let (m, data) = toy();
        let loss = MlpLoss::new(m.clone(), data).unwrap();
        for seed in 0..5 {
            assert!(loss.eval(&m.init_params(seed)) >= 0.0);
        }
    }

    #[test]
    fn rejects_mismatched_dataset() {
        let m = MicroMlp::new(vec![3, 4, 2], Activation::Relu, LossHead::SoftmaxCrossEntropy)
            .unwrap();
        let data = Arc::new(Dataset::gaussian_blobs(10, 4, 2, 1.0, 1).unwrap());
        assert!(MlpLoss::new(m, data).is_err());
        assert!(MicroMlp::new(vec![3], Activation::Tanh, LossHead::SquaredError).is_err());
    }
}
