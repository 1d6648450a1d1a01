//! Dense neural-network substrate: matrices, layer stacks with backpropagation, losses,
//! optimizers and seeded randomness.

mod loss;
mod matrix;
mod network;
mod optim;
mod rng;

pub use loss::{
    check_distributions, cross_entropy, cross_entropy_grad, mse, mse_grad, DISTRIBUTION_TOLERANCE,
    LOG_EPSILON,
};
pub use matrix::Matrix;
pub use network::{
    softmax_rows, Activation, Backprop, ForwardCache, Grads, LayerParams, LayerSpec, Network,
};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use rng::{derive_seed, label_of, splitmix64, Rng};

/// Shuffled mini-batch index lists covering `0..n`; the last batch may be partial.
pub fn minibatches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let order = rng.permutation(n);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Mean Shannon entropy (nats) of the rows of a row-stochastic matrix.
pub fn mean_row_entropy(m: &Matrix) -> f64 {
    if m.rows() == 0 {
        return 0.0;
    }
    let total: f64 = m
        .iter_rows()
        .map(|row| {
            row.iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum::<f64>()
        })
        .sum();
    total / m.rows() as f64
}
