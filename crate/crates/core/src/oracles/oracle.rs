use crate::error::{dim_mismatch, Result};
use crate::oracles::{eval_grad, LossFunction, NoiseModel};
use crate::vector::ModelVector;

/// Stochastic first-order oracle.
///
/// `next_batch` fixes the randomness of one iteration (a minibatch or a noise
/// draw); every `gradient` call until the next `next_batch` uses it, so
/// `g_t(x_t)` and `g_t(x_t + eps_t)` share one realization.
pub trait GradientOracle: Send {
    fn dim(&self) -> usize;

    fn next_batch(&mut self);

    /// Stochastic gradient on the current batch. Increments the call counter.
    fn gradient(&mut self, x: &ModelVector) -> Result<ModelVector>;

    /// Number of `gradient` calls so far.
    fn calls(&self) -> u64;

    /// The deterministic objective whose gradient this oracle estimates.
    fn objective(&self) -> &dyn LossFunction;
}

impl<O: GradientOracle + ?Sized> GradientOracle for Box<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn next_batch(&mut self) {
        (**self).next_batch()
    }
    fn gradient(&mut self, x: &ModelVector) -> Result<ModelVector> {
        (**self).gradient(x)
    }
    fn calls(&self) -> u64 {
        (**self).calls()
    }
    fn objective(&self) -> &dyn LossFunction {
        (**self).objective()
    }
}

/// `g(x) = ∇f(x) + xi_t`, with `xi_t` drawn once per batch.
#[derive(Debug, Clone)]
pub struct NoisyOracle<L> {
    loss: L,
    noise: NoiseModel,
    current: Option<ModelVector>,
    calls: u64,
}

impl<L: LossFunction> NoisyOracle<L> {
    /// Panics if the noise dimension differs from the loss dimension; use
    /// [`NoisyOracle::try_new`] for fallible construction.
    pub fn new(loss: L, noise: NoiseModel) -> Self {
        Self::try_new(loss, noise).expect("noise and loss dimensions agree")
    }

    pub fn try_new(loss: L, noise: NoiseModel) -> Result<Self> {
        if loss.dim() != noise.dim() {
            return Err(dim_mismatch("noise model", loss.dim(), noise.dim()));
        }
        Ok(Self {
            loss,
            noise,
            current: None,
            calls: 0,
        })
    }

    pub fn loss(&self) -> &L {
        &self.loss
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// The noise realization of the current batch, if one has been drawn.
    pub fn current_noise(&self) -> Option<&ModelVector> {
        self.current.as_ref()
    }
}

impl<L: LossFunction> GradientOracle for NoisyOracle<L> {
    fn dim(&self) -> usize {
        self.loss.dim()
    }

    fn next_batch(&mut self) {
        self.current = Some(self.noise.sample());
    }

    fn gradient(&mut self, x: &ModelVector) -> Result<ModelVector> {
        if self.current.is_none() {
            self.next_batch();
        }
        let g = eval_grad(&self.loss, x)?;
        self.calls += 1;
        let xi = self.current.as_ref().expect("batch drawn above");
        Ok(g.add(xi))
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn objective(&self) -> &dyn LossFunction {
        &self.loss
    }
}

/// Draws a fresh batch and returns the stochastic gradient at `x`.
pub fn sample_stochastic_grad(
    oracle: &mut dyn GradientOracle,
    x: &ModelVector,
) -> Result<ModelVector> {
    oracle.next_batch();
    oracle.gradient(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::Quadratic;
    use crate::vector::mv;

    #[test]
    fn zero_noise_returns_exact_gradient() {
        let mut o = NoisyOracle::new(Quadratic::isotropic(2), NoiseModel::none(2));
        let x = mv(&[0.5, -3.0]);
        for _ in 0..5 {
            assert_eq!(sample_stochastic_grad(&mut o, &x).unwrap(), x);
        }
        assert_eq!(o.calls(), 5);
    }

    #[test]
    fn same_batch_reuses_noise_realization() {
        let mut o = NoisyOracle::new(
            Quadratic::isotropic(3),
            NoiseModel::isotropic(1.0, 3, 11).unwrap(),
        );
        o.next_batch();
        let x = mv(&[1.0, 2.0, 3.0]);
        let y = mv(&[-1.0, 0.0, 1.0]);
        let gx = o.gradient(&x).unwrap();
        let gy = o.gradient(&y).unwrap();
        // noise cancels: g(x) - g(y) = x - y exactly up to rounding
        let diff = gx.sub(&gy).sub(&x.sub(&y));
        assert!(diff.max_abs() < 1e-12);
        o.next_batch();
        let gx2 = o.gradient(&x).unwrap();
        assert_ne!(gx, gx2);
    }

    #[test]
    fn deterministic_under_seed() {
        let draw = |seed| {
            let mut o = NoisyOracle::new(
                Quadratic::isotropic(2),
                NoiseModel::isotropic(0.3, 2, seed).unwrap(),
            );
            (0..10)
                .map(|_| sample_stochastic_grad(&mut o, &mv(&[1.0, 1.0])).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(NoisyOracle::try_new(Quadratic::isotropic(2), NoiseModel::none(3)).is_err());
        let mut o = NoisyOracle::new(Quadratic::isotropic(2), NoiseModel::none(2));
        assert!(o.gradient(&mv(&[1.0])).is_err());
        assert_eq!(o.calls(), 0);
    }
}
