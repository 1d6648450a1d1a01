//! Stacked denoising autoencoder.
//!
//! The encoder maps standardized inputs through relu hidden layers to a linear latent layer; the
//! decoder mirrors it and ends in a linear output. Training minimizes the reconstruction MSE
//! between the clean input and the reconstruction of a zero-masked copy of it, end to end over
//! the whole stack. Minimizing this squared error is the Gaussian-likelihood form of maximizing
//! the expected log-likelihood of clean data given corrupted data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    minibatches, mse, mse_grad, Activation, ForwardCache, Grads, LayerSpec, Matrix, Network,
    Optimizer, OptimizerConfig, Rng,
};

/// Standard deviations below this are treated as 1 (constant features pass through centred).
pub const MIN_STD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoisingAEConfig {
    pub input_width: usize,
    pub hidden_widths: Vec<usize>,
    pub latent_width: usize,
    pub corruption_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
}

impl DenoisingAEConfig {
    /// `d-500-500-200-10` with masking rate 0.2, 100 epochs of Adam.
    pub fn new(input_width: usize) -> Self {
        Self {
            input_width,
            hidden_widths: vec![500, 500, 200],
            latent_width: 10,
            corruption_rate: 0.2,
            epochs: 100,
            optimizer: OptimizerConfig::adam(1e-3, 256),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.latent_width == 0 || self.hidden_widths.contains(&0) {
            return Err(Error::Config("autoencoder widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.corruption_rate) {
            return Err(Error::Config(format!(
                "corruption_rate must lie in [0, 1), got {}",
                self.corruption_rate
            )));
        }
        self.optimizer.validate()
    }

    /// Encoder layer widths, input first: `d, h1, …, latent`.
    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width];
        w.extend(&self.hidden_widths);
        w.push(self.latent_width);
        w
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        stack_specs(&self.encoder_widths())
    }

    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        let mut w = self.encoder_widths();
        w.reverse();
        stack_specs(&w)
    }
}

/// Relu between layers, linear on the last.
fn stack_specs(widths: &[usize]) -> Vec<LayerSpec> {
    let last = widths.len() - 2;
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i == last {
                Activation::Linear
            } else {
                Activation::Relu
            };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

/// Per-feature z-scoring fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((v, &xi), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (xi - m) * (xi - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < MIN_STD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn invert(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.width() {
            return Err(Error::dim("standardizer input width", self.width(), x.cols()));
        }
        Ok(())
    }
}

/// Zeroes each entry independently with probability `rate`.
pub fn corrupt(x: &Matrix, rate: f64, rng: &mut Rng) -> Result<Matrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "corruption rate must lie in [0, 1), got {rate}"
        )));
    }
    let mut out = x.clone();
    if rate == 0.0 {
        return Ok(out);
    }
    for v in out.as_mut_slice() {
        if rng.uniform() < rate {
            *v = 0.0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoisingAutoencoder {
    pub config: DenoisingAEConfig,
    pub scaler: Standardizer,
    pub encoder: Network,
    pub decoder: Network,
}

/// One reconstruction forward/backward pass over a batch.
pub(crate) struct ReconstructionPass {
    pub loss: f64,
    pub encoder_cache: ForwardCache,
    pub decoder_grads: Grads,
    /// dℓ_AE/dz.
    pub latent_grad: Matrix,
}

impl DenoisingAutoencoder {
    /// Freshly initialized network with the given input scaler.
    pub fn init(config: DenoisingAEConfig, scaler: Standardizer, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if scaler.width() != config.input_width {
            return Err(Error::dim(
                "standardizer width",
                config.input_width,
                scaler.width(),
            ));
        }
        let encoder = Network::new(config.encoder_specs(), rng)?;
        let decoder = Network::new(config.decoder_specs(), rng)?;
        Ok(Self {
            config,
            scaler,
            encoder,
            decoder,
        })
    }

    pub fn from_parts(
        config: DenoisingAEConfig,
        scaler: Standardizer,
        encoder: Network,
        decoder: Network,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.input_width;
        if encoder.in_width() != d
            || decoder.out_width() != d
            || scaler.width() != d
            || encoder.out_width() != config.latent_width
            || decoder.in_width() != config.latent_width
        {
            return Err(Error::Consistency(
                "encoder, decoder and scaler widths disagree with the config".into(),
            ));
        }
        Ok(Self {
            config,
            scaler,
            encoder,
            decoder,
        })
    }

    pub fn latent_width(&self) -> usize {
        self.config.latent_width
    }

    pub fn standardize(&self, x: &Matrix) -> Result<Matrix> {
        self.scaler.apply(x)
    }

    /// Latent codes of raw inputs. No corruption is applied.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.encode_standardized(&self.standardize(x)?)
    }

    pub fn encode_standardized(&self, xs: &Matrix) -> Result<Matrix> {
        self.encoder.predict(xs)
    }

    /// Decoder ∘ encoder, returned in the original input units.
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        let xs = self.standardize(x)?;
        let out = self.decoder.predict(&self.encode_standardized(&xs)?)?;
        self.scaler.invert(&out)
    }

    /// Reconstruction MSE of clean inputs, measured in standardized units (the ℓ_AE scale).
    pub fn reconstruction_mse(&self, x: &Matrix) -> Result<f64> {
        let xs = self.standardize(x)?;
        let out = self.decoder.predict(&self.encode_standardized(&xs)?)?;
        mse(&out, &xs)
    }

    pub(crate) fn reconstruction_pass(
        &self,
        clean: &Matrix,
        input: &Matrix,
    ) -> Result<ReconstructionPass> {
        let encoder_cache = self.encoder.forward(input)?;
        let decoder_cache = self.decoder.forward(encoder_cache.output())?;
        let out = decoder_cache.output();
        let loss = mse(out, clean)?;
        let grad = mse_grad(out, clean)?;
        let bp = self.decoder.backward(&decoder_cache, &grad)?;
        Ok(ReconstructionPass {
            loss,
            encoder_cache,
            decoder_grads: bp.grads,
            latent_grad: bp.input_grad,
        })
    }

    /// Continues denoising training on already-standardized data.
    ///
    /// Each epoch draws a fresh batch order from `rng`, then one masking pattern per batch from
    /// the same stream. Returns the sample-weighted mean training loss of each epoch.
    pub fn train_standardized(
        &mut self,
        xs: &Matrix,
        epochs: usize,
        optimizer: OptimizerConfig,
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        if xs.cols() != self.config.input_width {
            return Err(Error::dim(
                "pretrain input width",
                self.config.input_width,
                xs.cols(),
            ));
        }
        let mut opt = Optimizer::new(optimizer)?;
        let rate = self.config.corruption_rate;
        let mut trace = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let mut total = 0.0;
            for batch in minibatches(xs.rows(), optimizer.batch_size, rng) {
                let clean = xs.select_rows(&batch);
                let noisy = corrupt(&clean, rate, rng)?;
                let pass = self.reconstruction_pass(&clean, &noisy)?;
                let enc = self.encoder.backward(&pass.encoder_cache, &pass.latent_grad)?;
                opt.step(&mut [
                    (&mut self.encoder, &enc.grads),
                    (&mut self.decoder, &pass.decoder_grads),
                ])?;
                total += pass.loss * batch.len() as f64;
            }
            let loss = total / xs.rows().max(1) as f64;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    stage: "pretrain",
                    epoch,
                    loss,
                });
            }
            trace.push(loss);
        }
        Ok(trace)
    }

    /// Continues training on raw inputs, using the stored scaler.
    pub fn train(
        &mut self,
        x: &Matrix,
        epochs: usize,
        optimizer: OptimizerConfig,
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        let xs = self.standardize(x)?;
        self.train_standardized(&xs, epochs, optimizer, rng)
    }
}

/// Fits the scaler on `x`, initializes the stack and trains it for `cfg.epochs`.
///
/// Initialization draws from `rng.derive_named("init")`; training consumes `rng` itself.
pub fn pretrain(
    x: &Matrix,
    cfg: &DenoisingAEConfig,
    rng: &mut Rng,
) -> Result<(DenoisingAutoencoder, Vec<f64>)> {
    cfg.validate()?;
    if x.cols() != cfg.input_width {
        return Err(Error::dim("pretrain input width", cfg.input_width, x.cols()));
    }
    if x.rows() < cfg.optimizer.batch_size {
        return Err(Error::Config(format!(
            "pretraining needs at least batch_size = {} rows, got {}",
            cfg.optimizer.batch_size,
            x.rows()
        )));
    }
    let scaler = Standardizer::fit(x);
    let mut ae = DenoisingAutoencoder::init(cfg.clone(), scaler, &mut rng.derive_named("init"))?;
    let trace = ae.train(x, cfg.epochs, cfg.optimizer, rng)?;
    Ok((ae, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerParams;

    fn small_cfg(d: usize) -> DenoisingAEConfig {
        DenoisingAEConfig {
            input_width: d,
            hidden_widths: vec![16, 8],
            latent_width: 3,
            corruption_rate: 0.2,
            epochs: 5,
            optimizer: OptimizerConfig::adam(1e-3, 16),
        }
    }

    #[test]
    fn default_widths() {
        let cfg = DenoisingAEConfig::new(784);
        assert_eq!(cfg.encoder_widths(), vec![784, 500, 500, 200, 10]);
        let dec: Vec<usize> = cfg.decoder_specs().iter().map(|s| s.out_width).collect();
        assert_eq!(dec, vec![200, 500, 500, 784]);
        assert_eq!(cfg.encoder_specs().last().unwrap().activation, Activation::Linear);
        assert_eq!(cfg.decoder_specs().last().unwrap().activation, Activation::Linear);
    }

    #[test]
    fn corrupt_rate_zero_is_identity() {
        let x = Matrix::from_fn(4, 5, |r, c| (r * 5 + c) as f64);
        assert_eq!(corrupt(&x, 0.0, &mut Rng::new(1)).unwrap(), x);
    }

    #[test]
    fn corrupt_zero_fraction_within_binomial_bound() {
        // n = 10_000, p = 0.5: σ = 50, so 3σ is ±150 zeros, well inside [4700, 5300]
        let x = Matrix::filled(100, 100, 1.0);
        let y = corrupt(&x, 0.5, &mut Rng::new(2024)).unwrap();
        let zeros = y.as_slice().iter().filter(|&&v| v == 0.0).count();
        assert!((4850..=5150).contains(&zeros), "{zeros} zeros");
    }

    #[test]
    fn corrupt_is_stochastic() {
        let x = Matrix::filled(10, 10, 1.0);
        let mut rng = Rng::new(5);
        let a = corrupt(&x, 0.3, &mut rng).unwrap();
        let b = corrupt(&x, 0.3, &mut rng).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn corrupt_rejects_bad_rate() {
        let x = Matrix::zeros(1, 1);
        assert!(corrupt(&x, 1.0, &mut Rng::new(0)).is_err());
        assert!(corrupt(&x, -0.1, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn zero_epochs_leave_fresh_parameters() {
        let mut rng = Rng::new(3);
        let x = Matrix::from_fn(32, 6, |_, _| rng.normal());
        let mut cfg = small_cfg(6);
        cfg.epochs = 0;
        let (ae, trace) = pretrain(&x, &cfg, &mut Rng::new(9)).unwrap();
        assert!(trace.is_empty());
        let fresh = DenoisingAutoencoder::init(
            cfg,
            Standardizer::fit(&x),
            &mut Rng::new(9).derive_named("init"),
        )
        .unwrap();
        assert_eq!(ae, fresh);
    }

    #[test]
    fn encode_is_deterministic_and_shaped() {
        let mut rng = Rng::new(4);
        let cfg = small_cfg(6);
        let ae = DenoisingAutoencoder::init(cfg, Standardizer::identity(6), &mut rng).unwrap();
        let row = [0.3, -1.0, 2.0, 0.0, 0.5, 1.5];
        let z = ae.encode(&Matrix::from_rows(&[row, row]).unwrap()).unwrap();
        assert_eq!(z.shape(), (2, 3));
        assert_eq!(z.row(0), z.row(1));
    }

    #[test]
    fn zero_input_gives_bias_propagated_constant_rows() {
        let mut rng = Rng::new(4);
        let mut ae =
            DenoisingAutoencoder::init(small_cfg(6), Standardizer::identity(6), &mut rng).unwrap();
        for l in ae.encoder.params_mut() {
            l.bias.iter_mut().enumerate().for_each(|(i, b)| *b = 0.1 * i as f64);
        }
        let z = ae.encode(&Matrix::zeros(3, 6)).unwrap();
        // relu of positive biases propagates through every layer
        let by_hand = ae.encoder.predict(&Matrix::zeros(1, 6)).unwrap();
        for r in 0..3 {
            assert_eq!(z.row(r), by_hand.row(0));
        }
    }

    #[test]
    fn identity_linear_autoencoder_reconstructs() {
        let d = 4;
        let cfg = DenoisingAEConfig {
            input_width: d,
            hidden_widths: vec![],
            latent_width: d,
            corruption_rate: 0.0,
            epochs: 0,
            optimizer: OptimizerConfig::sgd(0.1, 1),
        };
        let id = || {
            Network::from_params(
                vec![LayerSpec::new(d, d, Activation::Linear)],
                vec![LayerParams {
                    weights: Matrix::identity(d),
                    bias: vec![0.0; d],
                }],
            )
            .unwrap()
        };
        let ae =
            DenoisingAutoencoder::from_parts(cfg, Standardizer::identity(d), id(), id()).unwrap();
        let x = Matrix::from_fn(5, d, |r, c| r as f64 - 0.5 * c as f64);
        assert_eq!(ae.reconstruct(&x).unwrap(), x);
        assert_eq!(ae.reconstruction_mse(&x).unwrap(), 0.0);
    }

    #[test]
    fn reconstruct_preserves_shape_and_rejects_bad_width() {
        let mut rng = Rng::new(4);
        let ae =
            DenoisingAutoencoder::init(small_cfg(6), Standardizer::identity(6), &mut rng).unwrap();
        assert_eq!(ae.reconstruct(&Matrix::zeros(7, 6)).unwrap().shape(), (7, 6));
        assert!(ae.encode(&Matrix::zeros(1, 5)).is_err());
        assert!(ae.reconstruct(&Matrix::zeros(1, 7)).is_err());
    }

    #[test]
    fn pretrain_rejects_too_few_rows() {
        let x = Matrix::zeros(4, 6);
        assert!(matches!(
            pretrain(&x, &small_cfg(6), &mut Rng::new(0)),
            Err(Error::Config(_))
        ));
    }
}
