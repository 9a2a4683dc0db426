//! Test objectives with analytic gradients.

use crate::error::{Error, Result};
use crate::vector::ModelVector;

/// A differentiable objective `f: R^d -> R`.
pub trait LossFunction: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &ModelVector) -> f64;

    fn grad(&self, x: &ModelVector) -> ModelVector;

    /// A lower bound `f*` with `f(x) >= f*` everywhere, when known.
    fn known_minimum(&self) -> Option<f64> {
        None
    }

    /// Lipschitz constant `L` of the gradient, when known.
    fn smoothness(&self) -> Option<f64> {
        None
    }
}

impl<L: LossFunction + ?Sized> LossFunction for Box<L> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &ModelVector) -> f64 {
        (**self).eval(x)
    }
    fn grad(&self, x: &ModelVector) -> ModelVector {
        (**self).grad(x)
    }
    fn known_minimum(&self) -> Option<f64> {
        (**self).known_minimum()
    }
    fn smoothness(&self) -> Option<f64> {
        (**self).smoothness()
    }
}

/// Dimension-checked analytic gradient.
pub fn eval_grad(loss: &dyn LossFunction, x: &ModelVector) -> Result<ModelVector> {
    x.ensure_dim(loss.dim(), "eval_grad")?;
    let g = loss.grad(x);
    g.ensure_finite("gradient")?;
    Ok(g)
}

/// `f(x) = ½ Σ λ_i x_i²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    curvature: Vec<f64>,
}

impl Quadratic {
    pub fn new(curvature: Vec<f64>) -> Result<Self> {
        if curvature.is_empty() || curvature.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidInput(
                "quadratic curvatures must be non-empty, finite and >= 0".into(),
            ));
        }
        Ok(Self { curvature })
    }

    pub fn isotropic(dim: usize) -> Self {
        Self {
            curvature: vec![1.0; dim],
        }
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }
}

impl LossFunction for Quadratic {
    fn dim(&self) -> usize {
        self.curvature.len()
    }

    fn eval(&self, x: &ModelVector) -> f64 {
        0.5 * self
            .curvature
            .iter()
            .zip(x.iter())
            .map(|(c, v)| c * v * v)
            .sum::<f64>()
    }

    fn grad(&self, x: &ModelVector) -> ModelVector {
        ModelVector::from_vec_unchecked(
            self.curvature
                .iter()
                .zip(x.iter())
                .map(|(c, v)| c * v)
                .collect(),
        )
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(0.0)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.curvature.iter().cloned().fold(0.0, f64::max))
    }
}

/// Chained Rosenbrock, `Σ 100 (x_{i+1} - x_i²)² + (1 - x_i)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rosenbrock {
    dim: usize,
}

impl Rosenbrock {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidInput("rosenbrock needs dim >= 2".into()));
        }
        Ok(Self { dim })
    }
}

impl LossFunction for Rosenbrock {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &ModelVector) -> f64 {
        let x = x.as_slice();
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    fn grad(&self, x: &ModelVector) -> ModelVector {
        let x = x.as_slice();
        let mut g = vec![0.0; self.dim];
        for i in 0..self.dim - 1 {
            let r = x[i + 1] - x[i] * x[i];
            g[i] += -400.0 * x[i] * r - 2.0 * (1.0 - x[i]);
            g[i + 1] += 200.0 * r;
        }
        ModelVector::from_vec_unchecked(g)
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// One-dimensional valley with slope `-c_sharp` far left of the kink and
/// `+c_flat` far right, blended by soft-plus terms of width `smoothing`:
///
/// `f(x) = s·[c_sharp·softplus(-x/s) + c_flat·softplus(x/s)]`
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricValley {
    c_sharp: f64,
    c_flat: f64,
    smoothing: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl AsymmetricValley {
    pub fn new(c_sharp: f64, c_flat: f64, smoothing: f64) -> Result<Self> {
        if !(c_sharp > c_flat && c_flat > 0.0 && smoothing > 0.0)
            || !(c_sharp.is_finite() && smoothing.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "asymmetric valley needs c_sharp > c_flat > 0 and smoothing > 0 \
                 (got {c_sharp}, {c_flat}, {smoothing})"
            )));
        }
        Ok(Self {
            c_sharp,
            c_flat,
            smoothing,
        })
    }

    /// Location of the minimum, `s·ln(c_sharp / c_flat)`, slightly on the flat side.
    pub fn argmin(&self) -> f64 {
        self.smoothing * (self.c_sharp / self.c_flat).ln()
    }

    fn value(&self, x: f64) -> f64 {
        let s = self.smoothing;
        s * (self.c_sharp * softplus(-x / s) + self.c_flat * softplus(x / s))
    }

    fn slope(&self, x: f64) -> f64 {
        let z = x / self.smoothing;
        -self.c_sharp * sigmoid(-z) + self.c_flat * sigmoid(z)
    }
}

impl LossFunction for AsymmetricValley {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &ModelVector) -> f64 {
        self.value(x[0])
    }

    fn grad(&self, x: &ModelVector) -> ModelVector {
        ModelVector::from_vec_unchecked(vec![self.slope(x[0])])
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(self.value(self.argmin()))
    }

    fn smoothness(&self) -> Option<f64> {
        Some((self.c_sharp + self.c_flat) / (4.0 * self.smoothing))
    }
}
