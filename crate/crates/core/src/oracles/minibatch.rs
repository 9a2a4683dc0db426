use std::sync::Arc;

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracles::{seeded_rng, Dataset, GradientOracle, LossFunction, MicroMlp, MlpLoss, BATCH_STREAM};
use crate::vector::ModelVector;

/// Minibatch gradients of a [`MicroMlp`] on a fixed dataset.
///
/// Each `next_batch` draws `batch_size` distinct indices uniformly at random;
/// gradients are batch means.
#[derive(Debug, Clone)]
pub struct MinibatchOracle {
    loss: MlpLoss,
    batch_size: usize,
    rng: ChaCha8Rng,
    batch: Vec<usize>,
    calls: u64,
}

impl MinibatchOracle {
    pub fn new(model: MicroMlp, data: Arc<Dataset>, batch_size: usize, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        if batch_size == 0 || batch_size > data.len() {
            return Err(Error::InvalidInput(format!(
                "batch size {batch_size} must be in 1..={}",
                data.len()
            )));
        }
        Ok(Self {
            loss: MlpLoss::new(model, data)?,
            batch_size,
            rng: seeded_rng(seed, BATCH_STREAM),
            batch: Vec::new(),
            calls: 0,
        })
    }

    pub fn batch_indices(&self) -> &[usize] {
        &self.batch
    }

    pub fn loss(&self) -> &MlpLoss {
        &self.loss
    }

    /// Mean gradient over an explicit set of indices.
    pub fn batch_gradient(&self, x: &ModelVector, indices: &[usize]) -> ModelVector {
        self.loss.batch_loss_grad(x, indices).1
    }
}

impl GradientOracle for MinibatchOracle {
    fn dim(&self) -> usize {
        self.loss.dim()
    }

    fn next_batch(&mut self) {
        let n = self.loss.data().len();
        self.batch = if self.batch_size == n {
            (0..n).collect()
        } else {
            let mut idx = sample(&mut self.rng, n, self.batch_size).into_vec();
            idx.sort_unstable();
            idx
        };
    }

    fn gradient(&mut self, x: &ModelVector) -> Result<ModelVector> {
        x.ensure_dim(self.dim(), "minibatch oracle")?;
        if self.batch.is_empty() {
            self.next_batch();
        }
        let g = self.batch_gradient(x, &self.batch);
        g.ensure_finite("minibatch gradient")?;
        self.calls += 1;
        Ok(g)
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn objective(&self) -> &dyn LossFunction {
        &self.loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{Activation, LossHead};

    fn setup(n: usize, batch: usize) -> (MinibatchOracle, ModelVector) {
        let model = MicroMlp::new(vec![2, 3, 2], Activation::Tanh, LossHead::SoftmaxCrossEntropy)
            .unwrap();
        let data = Arc::new(Dataset::gaussian_blobs(n, 2, 2, 1.0, 8).unwrap());
        let x = model.init_params(2);
        (MinibatchOracle::new(model, data, batch, 42).unwrap(), x)
    }

    #[test]
    fn full_batch_is_deterministic_full_gradient() {
        let (mut o, x) = setup(10, 10);
        let full = o.objective().grad(&x);
        for _ in 0..3 {
            o.next_batch();
            assert_eq!(o.gradient(&x).unwrap(), full);
        }
    }

    #[test]
    fn calls_within_a_batch_share_indices() {
        let (mut o, x) = setup(20, 4);
        o.next_batch();
        let first = o.batch_indices().to_vec();
        o.gradient(&x).unwrap();
        o.gradient(&x.scale(0.5)).unwrap();
        assert_eq!(o.batch_indices(), first.as_slice());
        assert_eq!(o.calls(), 2);
        let distinct: std::collections::BTreeSet<_> = first.iter().collect();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn mean_over_all_batches_is_full_gradient() {
        let (o, x) = setup(6, 2);
        let full = o.objective().grad(&x);
        let mut acc = ModelVector::zeros(full.dim());
        let mut count = 0.0;
        for i in 0..6 {
            for j in i + 1..6 {
                acc = acc.add(&o.batch_gradient(&x, &[i, j]));
                count += 1.0;
            }
        }
        assert_eq!(count, 15.0);
        let mean = acc.scale(1.0 / count);
        assert!(mean.sub(&full).max_abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_batch_size() {
        let model = MicroMlp::new(vec![2, 2], Activation::Tanh, LossHead::SquaredError).unwrap();
        let data = Arc::new(Dataset::gaussian_blobs(5, 2, 2, 1.0, 0).unwrap());
        assert!(MinibatchOracle::new(model.clone(), data.clone(), 6, 0).is_err());
        assert!(MinibatchOracle::new(model, data, 0, 0).is_err());
    }
}
