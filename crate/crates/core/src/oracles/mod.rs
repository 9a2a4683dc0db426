//! Objectives, stochastic gradient oracles and gradient checking.

mod dataset;
mod finite_diff;
mod loss;
mod minibatch;
mod mlp;
mod noise;
mod oracle;

pub use dataset::Dataset;
pub use finite_diff::{central_difference, finite_diff_check, RELATIVE_FLOOR};
pub use loss::{eval_grad, AsymmetricValley, LossFunction, Quadratic, Rosenbrock};
pub use minibatch::MinibatchOracle;
pub use mlp::{Activation, LayerParams, LossHead, MicroMlp, MlpLoss};
pub use noise::{seeded_rng, NoiseModel, BATCH_STREAM, NOISE_STREAM};
pub use oracle::{sample_stochastic_grad, GradientOracle, NoisyOracle};
