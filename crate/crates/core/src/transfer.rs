//! The evidence-transfer step.
//!
//! One softmax predictor head per evidence source is attached to the latent layer of a
//! pretrained autoencoder. Fine-tuning then minimizes
//!
//! ```text
//! ℓ_total = ℓ_AE + λ·ℓ_H,    ℓ_H = (1/K) Σ_j H(Z_Vj, Q_j(z))
//! ```
//!
//! over the autoencoder and the heads together (joint mode), or alternates one step on ℓ_AE and
//! one step on λ·ℓ_H per batch with a smaller learning rate for the latter (disjoint mode).
//! The reconstruction term keeps the latent space anchored to its original task; evidence that
//! cannot be predicted from the data only contributes a roughly constant cross entropy.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoenc::{corrupt, DenoisingAutoencoder};
use crate::error::{Error, Result};
use crate::nn::{
    cross_entropy, cross_entropy_grad, minibatches, mse, Activation, Grads, LayerSpec, Matrix,
    Network, Optimizer, OptimizerConfig, Rng,
};

/// Glorot gain for fresh heads; small weights keep their first predictions near uniform.
pub const HEAD_INIT_GAIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    Joint,
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub mode: TransferMode,
    /// ℓ_AE learning rate ÷ ℓ_H learning rate in disjoint mode.
    pub disjoint_lr_ratio: f64,
    /// Keep feeding masked inputs while fine-tuning.
    pub corrupt_inputs: bool,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            epochs: 50,
            optimizer: OptimizerConfig::adam(1e-3, 64),
            mode: TransferMode::Joint,
            disjoint_lr_ratio: 10.0,
            corrupt_inputs: true,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if self.mode == TransferMode::Disjoint
            && !(self.disjoint_lr_ratio > 1.0 && self.disjoint_lr_ratio.is_finite())
        {
            return Err(Error::Config(format!(
                "disjoint mode needs disjoint_lr_ratio > 1, got {}",
                self.disjoint_lr_ratio
            )));
        }
        self.optimizer.validate()
    }
}

/// A pretrained autoencoder plus one predictor head and one frozen Z_V target per evidence
/// source.
#[derive(Debug, Clone, PartialEq)]
pub struct EviTramModel {
    pub base: DenoisingAutoencoder,
    pub heads: Vec<Network>,
    pub lambda: f64,
    targets: Vec<Matrix>,
}

fn new_head(latent_width: usize, rng: &mut Rng) -> Result<Network> {
    Network::with_gain(
        vec![LayerSpec::new(latent_width, latent_width, Activation::Softmax)],
        HEAD_INIT_GAIN,
        rng,
    )
}

/// Attaches `k` fresh heads; the base parameters are untouched.
pub fn attach_heads(base: DenoisingAutoencoder, k: usize, rng: &mut Rng) -> Result<EviTramModel> {
    if k == 0 {
        return Err(Error::Config("at least one evidence head is required".into()));
    }
    let latent = base.latent_width();
    let heads = (0..k)
        .map(|j| new_head(latent, &mut rng.derive(j as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EviTramModel {
        base,
        heads,
        lambda: TransferConfig::default().lambda,
        targets: Vec::new(),
    })
}

/// Per-component losses of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLoss {
    pub l_ae: f64,
    pub l_h: f64,
    pub total: f64,
}

impl JointLoss {
    pub fn combine(l_ae: f64, l_h: f64, lambda: f64) -> Self {
        Self {
            l_ae,
            l_h,
            total: l_ae + lambda * l_h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub l_ae: f64,
    pub l_h: f64,
    pub l_total: f64,
}

/// Per-epoch, sample-weighted mean losses of a transfer run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferTrace {
    pub rows: Vec<TraceRow>,
    /// Optimizer applications performed (one per batch in joint mode, two in disjoint mode).
    pub optimizer_steps: u64,
    pub batches: u64,
}

impl TransferTrace {
    /// CSV with header `epoch,l_ae,l_h,l_total`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,l_ae,l_h,l_total")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.epoch, r.l_ae, r.l_h, r.l_total)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn l_ae(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.l_ae).collect()
    }

    pub fn l_h(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.l_h).collect()
    }

    pub fn l_total(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.l_total).collect()
    }
}

impl EviTramModel {
    /// Attaches one head per Z_V target and freezes the targets.
    pub fn new(
        base: DenoisingAutoencoder,
        targets: Vec<Matrix>,
        lambda: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut model = attach_heads(base, targets.len(), rng)?;
        model.lambda = lambda;
        model.set_targets(targets)?;
        Ok(model)
    }

    pub fn from_parts(
        base: DenoisingAutoencoder,
        heads: Vec<Network>,
        lambda: f64,
    ) -> Result<Self> {
        let latent = base.latent_width();
        for (j, h) in heads.iter().enumerate() {
            if h.in_width() != latent || h.out_width() != latent || h.specs().len() != 1 {
                return Err(Error::Consistency(format!(
                    "head {j} must be a single {latent}→{latent} layer"
                )));
            }
        }
        Ok(Self {
            base,
            heads,
            lambda,
            targets: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.heads.len()
    }

    pub fn targets(&self) -> &[Matrix] {
        &self.targets
    }

    pub fn set_targets(&mut self, targets: Vec<Matrix>) -> Result<()> {
        if targets.len() != self.heads.len() {
            return Err(Error::dim("Z_V target count", self.heads.len(), targets.len()));
        }
        let latent = self.base.latent_width();
        let rows = targets.first().map_or(0, Matrix::rows);
        for (j, t) in targets.iter().enumerate() {
            if t.cols() != latent || t.rows() != rows {
                return Err(Error::dim(
                    format!("Z_V target {j}"),
                    format!("{rows}x{latent}"),
                    format!("{}x{}", t.rows(), t.cols()),
                ));
            }
            crate::nn::check_distributions(t, "Z_V target")?;
        }
        self.targets = targets;
        Ok(())
    }

    /// Incremental evidence: one more head and target, existing parameters kept.
    pub fn add_evidence(&mut self, target: Matrix, rng: &mut Rng) -> Result<()> {
        let head = new_head(self.base.latent_width(), rng)?;
        let mut targets = self.targets.clone();
        targets.push(target);
        self.heads.push(head);
        if let Err(e) = self.set_targets(targets) {
            self.heads.pop();
            return Err(e);
        }
        Ok(())
    }

    /// Head predictions `Q_j(z)` for every head.
    pub fn predict_heads(&self, z: &Matrix) -> Result<Vec<Matrix>> {
        self.heads.iter().map(|h| h.predict(z)).collect()
    }

    /// ℓ_AE and ℓ_H on clean inputs, with the targets aligned to the rows of `x`.
    pub fn evaluate(&self, x: &Matrix) -> Result<JointLoss> {
        let targets: Vec<&Matrix> = self.targets.iter().collect();
        joint_loss_with(self, x, &targets)
    }
}

/// ℓ_H = (1/K) Σ_j H(Z_Vj, Q_j(z)), each cross entropy averaged over rows.
pub fn evidence_loss(model: &EviTramModel, z: &Matrix, zv: &[&Matrix]) -> Result<f64> {
    if zv.len() != model.k() {
        return Err(Error::dim("evidence_loss source count", model.k(), zv.len()));
    }
    let mut total = 0.0;
    for (head, target) in model.heads.iter().zip(zv) {
        if target.rows() != z.rows() {
            return Err(Error::dim("evidence_loss rows", z.rows(), target.rows()));
        }
        total += cross_entropy(target, &head.predict(z)?)?;
    }
    Ok(total / model.k() as f64)
}

/// ℓ_total = ℓ_AE + λ·ℓ_H on a clean batch of raw inputs.
pub fn joint_loss(model: &EviTramModel, x: &Matrix, zv: &[Matrix]) -> Result<JointLoss> {
    let refs: Vec<&Matrix> = zv.iter().collect();
    joint_loss_with(model, x, &refs)
}

fn joint_loss_with(model: &EviTramModel, x: &Matrix, zv: &[&Matrix]) -> Result<JointLoss> {
    let xs = model.base.standardize(x)?;
    let z = model.base.encode_standardized(&xs)?;
    let l_ae = mse(&model.base.decoder.predict(&z)?, &xs)?;
    let l_h = evidence_loss(model, &z, zv)?;
    Ok(JointLoss::combine(l_ae, l_h, model.lambda))
}

/// λ-weighted ℓ_H on a batch: its value, the head gradients, and dℓ/dz.
struct EvidencePass {
    l_h: f64,
    head_grads: Vec<Grads>,
    latent_grad: Matrix,
}

fn evidence_pass(
    heads: &[Network],
    z: &Matrix,
    targets: &[Matrix],
    lambda: f64,
) -> Result<EvidencePass> {
    let k = heads.len() as f64;
    let mut l_h = 0.0;
    let mut head_grads = Vec::with_capacity(heads.len());
    let mut latent_grad = Matrix::zeros(z.rows(), z.cols());
    for (head, target) in heads.iter().zip(targets) {
        let cache = head.forward(z)?;
        l_h += cross_entropy(target, cache.output())?;
        let mut g = cross_entropy_grad(target, cache.output())?;
        g.scale_in_place(lambda / k);
        let bp = head.backward(&cache, &g)?;
        latent_grad.add_assign(&bp.input_grad)?;
        head_grads.push(bp.grads);
    }
    Ok(EvidencePass {
        l_h: l_h / k,
        head_grads,
        latent_grad,
    })
}

fn check_transfer_inputs(model: &EviTramModel, x: &Matrix, cfg: &TransferConfig) -> Result<()> {
    cfg.validate()?;
    if model.targets.len() != model.k() || model.k() == 0 {
        return Err(Error::Config(
            "transfer needs one frozen Z_V target per head".into(),
        ));
    }
    if model.targets[0].rows() != x.rows() {
        return Err(Error::dim("Z_V rows vs data rows", x.rows(), model.targets[0].rows()));
    }
    Ok(())
}

/// Losses and gradients of ℓ_AE + λ·ℓ_H for one batch, every network included.
pub(crate) struct JointPass {
    pub loss: JointLoss,
    pub encoder: Grads,
    pub decoder: Grads,
    pub heads: Vec<Grads>,
}

/// With λ = 0 the head gradients are zero and dℓ/dz is exactly the reconstruction gradient,
/// so the autoencoder update matches plain denoising training bit for bit.
pub(crate) fn joint_pass(
    model: &EviTramModel,
    clean: &Matrix,
    input: &Matrix,
    targets: &[Matrix],
    lambda: f64,
) -> Result<JointPass> {
    let pass = model.base.reconstruction_pass(clean, input)?;
    let z = pass.encoder_cache.output();
    let (l_h, heads, latent_grad) = if lambda == 0.0 {
        let refs: Vec<&Matrix> = targets.iter().collect();
        let l_h = evidence_loss(model, z, &refs)?;
        let zeros = model.heads.iter().map(Grads::zeros_like).collect();
        (l_h, zeros, pass.latent_grad)
    } else {
        let ev = evidence_pass(&model.heads, z, targets, lambda)?;
        let mut g = pass.latent_grad;
        g.add_assign(&ev.latent_grad)?;
        (ev.l_h, ev.head_grads, g)
    };
    let enc = model.base.encoder.backward(&pass.encoder_cache, &latent_grad)?;
    Ok(JointPass {
        loss: JointLoss::combine(pass.loss, l_h, lambda),
        encoder: enc.grads,
        decoder: pass.decoder_grads,
        heads,
    })
}

/// Runs the transfer in the mode selected by `cfg`.
pub fn run_transfer(
    model: &mut EviTramModel,
    x: &Matrix,
    cfg: &TransferConfig,
    rng: &mut Rng,
) -> Result<TransferTrace> {
    match cfg.mode {
        TransferMode::Joint => transfer(model, x, cfg, rng),
        TransferMode::Disjoint => transfer_disjoint(model, x, cfg, rng),
    }
}

/// Joint mini-batch descent on ℓ_AE + λ·ℓ_H over the autoencoder and all heads.
///
/// Consumes `rng` exactly like [`DenoisingAutoencoder::train`]: one batch order per epoch,
/// then one masking pattern per batch. With λ = 0 the autoencoder follows the same trajectory
/// as continued pretraining under the same seed and optimizer.
pub fn transfer(
    model: &mut EviTramModel,
    x: &Matrix,
    cfg: &TransferConfig,
    rng: &mut Rng,
) -> Result<TransferTrace> {
    check_transfer_inputs(model, x, cfg)?;
    model.lambda = cfg.lambda;
    let xs = model.base.standardize(x)?;
    let rate = if cfg.corrupt_inputs {
        model.base.config.corruption_rate
    } else {
        0.0
    };
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let mut trace = TransferTrace::default();
    let n = xs.rows().max(1) as f64;
    for epoch in 0..cfg.epochs {
        let (mut sum_ae, mut sum_h) = (0.0, 0.0);
        for batch in minibatches(xs.rows(), cfg.optimizer.batch_size, rng) {
            let clean = xs.select_rows(&batch);
            let noisy = corrupt(&clean, rate, rng)?;
            let targets: Vec<Matrix> = model.targets.iter().map(|t| t.select_rows(&batch)).collect();
            let pass = joint_pass(model, &clean, &noisy, &targets, cfg.lambda)?;
            let base = &mut model.base;
            let mut to_step: Vec<(&mut Network, &Grads)> = vec![
                (&mut base.encoder, &pass.encoder),
                (&mut base.decoder, &pass.decoder),
            ];
            for (h, g) in model.heads.iter_mut().zip(&pass.heads) {
                to_step.push((h, g));
            }
            opt.step(&mut to_step)?;
            trace.batches += 1;
            let b = batch.len() as f64;
            sum_ae += pass.loss.l_ae * b;
            sum_h += pass.loss.l_h * b;
        }
        push_epoch(&mut trace, epoch, sum_ae / n, sum_h / n, cfg.lambda)?;
    }
    trace.optimizer_steps = opt.steps();
    Ok(trace)
}

/// Alternating descent: per batch, one step on ℓ_AE at the configured learning rate, then one
/// step on λ·ℓ_H (encoder and heads) at that rate divided by `disjoint_lr_ratio`.
///
/// The two objectives keep separate optimizer states.
pub fn transfer_disjoint(
    model: &mut EviTramModel,
    x: &Matrix,
    cfg: &TransferConfig,
    rng: &mut Rng,
) -> Result<TransferTrace> {
    check_transfer_inputs(model, x, cfg)?;
    if cfg.mode != TransferMode::Disjoint {
        return Err(Error::Config("transfer_disjoint requires mode = disjoint".into()));
    }
    model.lambda = cfg.lambda;
    let xs = model.base.standardize(x)?;
    let rate = if cfg.corrupt_inputs {
        model.base.config.corruption_rate
    } else {
        0.0
    };
    let mut ae_opt = Optimizer::new(cfg.optimizer)?;
    let mut h_cfg = cfg.optimizer;
    h_cfg.learning_rate /= cfg.disjoint_lr_ratio;
    let mut h_opt = Optimizer::new(h_cfg)?;
    let mut trace = TransferTrace::default();
    let n = xs.rows().max(1) as f64;
    for epoch in 0..cfg.epochs {
        let (mut sum_ae, mut sum_h) = (0.0, 0.0);
        for batch in minibatches(xs.rows(), cfg.optimizer.batch_size, rng) {
            let clean = xs.select_rows(&batch);
            let noisy = corrupt(&clean, rate, rng)?;

            let pass = model.base.reconstruction_pass(&clean, &noisy)?;
            let enc = model.base.encoder.backward(&pass.encoder_cache, &pass.latent_grad)?;
            let base = &mut model.base;
            ae_opt.step(&mut [
                (&mut base.encoder, &enc.grads),
                (&mut base.decoder, &pass.decoder_grads),
            ])?;

            let targets: Vec<Matrix> = model.targets.iter().map(|t| t.select_rows(&batch)).collect();
            let enc_cache = model.base.encoder.forward(&noisy)?;
            let ev = evidence_pass(&model.heads, enc_cache.output(), &targets, cfg.lambda)?;
            let enc_grads = if cfg.lambda == 0.0 {
                Grads::zeros_like(&model.base.encoder)
            } else {
                model.base.encoder.backward(&enc_cache, &ev.latent_grad)?.grads
            };
            let head_grads: Vec<Grads> = if cfg.lambda == 0.0 {
                model.heads.iter().map(Grads::zeros_like).collect()
            } else {
                ev.head_grads
            };
            let mut h_targets: Vec<(&mut Network, &Grads)> =
                vec![(&mut model.base.encoder, &enc_grads)];
            for (h, g) in model.heads.iter_mut().zip(&head_grads) {
                h_targets.push((h, g));
            }
            h_opt.step(&mut h_targets)?;

            trace.batches += 1;
            let b = batch.len() as f64;
            sum_ae += pass.loss * b;
            sum_h += ev.l_h * b;
        }
        push_epoch(&mut trace, epoch, sum_ae / n, sum_h / n, cfg.lambda)?;
    }
    trace.optimizer_steps = ae_opt.steps() + h_opt.steps();
    Ok(trace)
}

fn push_epoch(trace: &mut TransferTrace, epoch: usize, l_ae: f64, l_h: f64, lambda: f64) -> Result<()> {
    let l_total = l_ae + lambda * l_h;
    if !l_total.is_finite() || !l_h.is_finite() {
        return Err(Error::Divergence {
            stage: "transfer",
            epoch,
            loss: l_total,
        });
    }
    trace.rows.push(TraceRow {
        epoch,
        l_ae,
        l_h,
        l_total,
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoenc::{pretrain, DenoisingAEConfig, Standardizer};
    use crate::nn::LayerParams;

    fn data() -> Matrix {
        let mut rng = Rng::new(31);
        Matrix::from_fn(48, 4, |r, c| (r % 3) as f64 * (c as f64 - 1.5) + 0.3 * rng.normal())
    }

    fn small_cfg() -> DenoisingAEConfig {
        DenoisingAEConfig {
            input_width: 4,
            hidden_widths: vec![6],
            latent_width: 3,
            corruption_rate: 0.2,
            epochs: 4,
            optimizer: OptimizerConfig::adam(1e-2, 8),
        }
    }

    fn base() -> DenoisingAutoencoder {
        pretrain(&data(), &small_cfg(), &mut Rng::new(2)).unwrap().0
    }

    fn targets(n: usize, latent: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        let logits = Matrix::from_fn(n, latent, |_, _| 2.0 * rng.normal());
        crate::nn::softmax_rows(&logits)
    }

    fn cfg(lambda: f64, epochs: usize) -> TransferConfig {
        TransferConfig {
            lambda,
            epochs,
            optimizer: OptimizerConfig::adam(1e-3, 8),
            ..TransferConfig::default()
        }
    }

    #[test]
    fn attach_leaves_base_untouched() {
        let ae = base();
        let x = data();
        let before = ae.encode(&x).unwrap();
        let m = attach_heads(ae.clone(), 2, &mut Rng::new(5)).unwrap();
        assert_eq!(m.base, ae);
        assert_eq!(m.base.encode(&x).unwrap(), before);
        assert_eq!(m.k(), 2);
        for h in &m.heads {
            assert_eq!(h.params()[0].weights.shape(), (3, 3));
            assert_eq!(h.params()[0].bias.len(), 3);
        }
        assert!(matches!(attach_heads(ae, 0, &mut Rng::new(5)), Err(Error::Config(_))));
    }

    #[test]
    fn fresh_heads_are_near_uniform() {
        let m = attach_heads(base(), 1, &mut Rng::new(8)).unwrap();
        let z = m.base.encode(&data()).unwrap();
        let q = &m.predict_heads(&z).unwrap()[0];
        let dev = q.as_slice().iter().map(|p| (p - 1.0 / 3.0).abs()).fold(0.0, f64::max);
        // latent codes of this model stay within a few units, so 0.1-gain weights move the
        // logits by well under one nat
        assert!(dev < 0.15, "max deviation from uniform {dev}");
    }

    fn saturated_head(latent: usize, hot: usize) -> Network {
        let mut p = LayerParams::zeros(latent, latent);
        p.bias[hot] = 1000.0;
        Network::from_params(vec![LayerSpec::new(latent, latent, Activation::Softmax)], vec![p])
            .unwrap()
    }

    #[test]
    fn exact_one_hot_match_has_zero_loss() {
        let m = EviTramModel::from_parts(base(), vec![saturated_head(3, 1)], 0.1).unwrap();
        let z = Matrix::filled(5, 3, 0.3);
        let zv = Matrix::from_fn(5, 3, |_, c| if c == 1 { 1.0 } else { 0.0 });
        assert_eq!(evidence_loss(&m, &z, &[&zv]).unwrap(), 0.0);
    }

    #[test]
    fn two_sources_average() {
        let ae = base();
        let m = attach_heads(ae.clone(), 2, &mut Rng::new(3)).unwrap();
        let z = ae.encode(&data()).unwrap();
        let (t0, t1) = (targets(48, 3, 1), targets(48, 3, 2));
        let a = cross_entropy(&t0, &m.heads[0].predict(&z).unwrap()).unwrap();
        let b = cross_entropy(&t1, &m.heads[1].predict(&z).unwrap()).unwrap();
        let l = evidence_loss(&m, &z, &[&t0, &t1]).unwrap();
        assert!((l - (a + b) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn evidence_loss_matches_triple_loop() {
        let ae = base();
        let m = attach_heads(ae.clone(), 3, &mut Rng::new(4)).unwrap();
        let z = ae.encode(&data()).unwrap();
        let ts: Vec<Matrix> = (0..3).map(|j| targets(48, 3, 10 + j)).collect();
        let mut total = 0.0;
        for (head, t) in m.heads.iter().zip(&ts) {
            let p = &head.params()[0];
            for i in 0..z.rows() {
                let logits: Vec<f64> = (0..3)
                    .map(|o| p.bias[o] + (0..3).map(|k| z[(i, k)] * p.weights[(k, o)]).sum::<f64>())
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let norm: f64 = logits.iter().map(|l| (l - max).exp()).sum();
                for o in 0..3 {
                    let q = (logits[o] - max).exp() / norm;
                    total -= t[(i, o)] * q.ln();
                }
            }
        }
        let oracle = total / (3.0 * 48.0);
        let refs: Vec<&Matrix> = ts.iter().collect();
        assert!((evidence_loss(&m, &z, &refs).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn evidence_loss_rejects_misaligned_rows() {
        let ae = base();
        let m = attach_heads(ae.clone(), 1, &mut Rng::new(4)).unwrap();
        let z = ae.encode(&data()).unwrap();
        assert!(evidence_loss(&m, &z, &[&targets(47, 3, 1)]).is_err());
        assert!(evidence_loss(&m, &z, &[]).is_err());
    }

    #[test]
    fn joint_loss_composition() {
        let x = data();
        let t = targets(48, 3, 6);
        let mut m = EviTramModel::new(base(), vec![t.clone()], 0.0, &mut Rng::new(1)).unwrap();
        let l = joint_loss(&m, &x, &[t.clone()]).unwrap();
        assert_eq!(l.total, l.l_ae);
        assert_eq!(l.l_ae, m.base.reconstruction_mse(&x).unwrap());
        m.lambda = 0.5;
        let l = joint_loss(&m, &x, &[t]).unwrap();
        assert_eq!(l.total, l.l_ae + 0.5 * l.l_h);
        assert!((JointLoss::combine(0.5, 1.0, 0.1).total - 0.6).abs() < 1e-15);
    }

    fn fd_check(value: f64, analytic: f64) {
        let tol = 1e-4 * value.abs().max(analytic.abs()).max(1e-2);
        assert!(
            (value - analytic).abs() <= tol.max(1e-6),
            "finite difference {value} vs backprop {analytic}"
        );
    }

    #[test]
    fn joint_gradient_matches_finite_differences() {
        let cfg = DenoisingAEConfig {
            input_width: 3,
            hidden_widths: vec![4],
            latent_width: 3,
            corruption_rate: 0.0,
            epochs: 0,
            optimizer: OptimizerConfig::sgd(0.1, 4),
        };
        let ae = DenoisingAutoencoder::init(cfg, Standardizer::identity(3), &mut Rng::new(12)).unwrap();
        let mut rng = Rng::new(13);
        let x = Matrix::from_fn(6, 3, |_, _| rng.normal());
        let ts = vec![targets(6, 3, 20), targets(6, 3, 21)];
        let lambda = 0.7;
        let mut m = EviTramModel::new(ae, ts.clone(), lambda, &mut Rng::new(14)).unwrap();
        let pass = joint_pass(&m, &x, &x, &ts, lambda).unwrap();
        let h = 1e-5;
        let loss = |m: &EviTramModel| joint_loss(m, &x, &ts).unwrap().total;

        fn each_param(
            m: &mut EviTramModel,
            net: usize,
            mut f: impl FnMut(&mut EviTramModel, usize, usize, bool),
        ) {
            let net_ref = |m: &EviTramModel| -> Network {
                match net {
                    0 => m.base.encoder.clone(),
                    1 => m.base.decoder.clone(),
                    j => m.heads[j - 2].clone(),
                }
            };
            let snapshot = net_ref(m);
            for (l, p) in snapshot.params().iter().enumerate() {
                for i in 0..p.weights.as_slice().len() {
                    f(m, l, i, true);
                }
                for i in 0..p.bias.len() {
                    f(m, l, i, false);
                }
            }
        }

        fn slot(m: &mut EviTramModel, net: usize, l: usize, i: usize, weight: bool) -> &mut f64 {
            let n = match net {
                0 => &mut m.base.encoder,
                1 => &mut m.base.decoder,
                j => &mut m.heads[j - 2],
            };
            let p = &mut n.params_mut()[l];
            if weight {
                &mut p.weights.as_mut_slice()[i]
            } else {
                &mut p.bias[i]
            }
        }

        let grads: Vec<&Grads> = [&pass.encoder, &pass.decoder]
            .into_iter()
            .chain(pass.heads.iter())
            .collect();
        for (net, g) in grads.iter().enumerate() {
            each_param(&mut m, net, |m, l, i, weight| {
                let orig = *slot(m, net, l, i, weight);
                *slot(m, net, l, i, weight) = orig + h;
                let up = loss(m);
                *slot(m, net, l, i, weight) = orig - h;
                let down = loss(m);
                *slot(m, net, l, i, weight) = orig;
                let fd = (up - down) / (2.0 * h);
                let gl = &g.layers[l];
                let analytic = if weight { gl.weights.as_slice()[i] } else { gl.bias[i] };
                fd_check(fd, analytic);
            });
        }
    }

    #[test]
    fn zero_epochs_leave_the_model_unchanged() {
        let x = data();
        let mut m = EviTramModel::new(base(), vec![targets(48, 3, 1)], 0.1, &mut Rng::new(1)).unwrap();
        let before = m.clone();
        let trace = transfer(&mut m, &x, &cfg(0.1, 0), &mut Rng::new(2)).unwrap();
        assert_eq!(m, before);
        assert!(trace.rows.is_empty());
    }

    #[test]
    fn lambda_zero_equals_continued_pretraining() {
        let x = data();
        let c = cfg(0.0, 3);
        let mut plain = base();
        let plain_trace = plain.train(&x, 3, c.optimizer, &mut Rng::new(77)).unwrap();
        let mut m = EviTramModel::new(base(), vec![targets(48, 3, 1)], 0.0, &mut Rng::new(1)).unwrap();
        let heads = m.heads.clone();
        let trace = transfer(&mut m, &x, &c, &mut Rng::new(77)).unwrap();
        assert_eq!(m.base, plain);
        assert_eq!(m.heads, heads);
        assert_eq!(trace.l_ae(), plain_trace);
        assert_eq!(trace.l_total(), plain_trace);
    }

    #[test]
    fn disjoint_lambda_zero_equals_plain_training() {
        let x = data();
        let c = TransferConfig {
            mode: TransferMode::Disjoint,
            ..cfg(0.0, 2)
        };
        let mut plain = base();
        let plain_trace = plain.train(&x, 2, c.optimizer, &mut Rng::new(9)).unwrap();
        let mut m = EviTramModel::new(base(), vec![targets(48, 3, 1)], 0.0, &mut Rng::new(1)).unwrap();
        let trace = run_transfer(&mut m, &x, &c, &mut Rng::new(9)).unwrap();
        assert_eq!(m.base, plain);
        assert_eq!(trace.l_ae(), plain_trace);
    }

    #[test]
    fn disjoint_applies_two_steps_per_batch() {
        let x = data();
        let c = TransferConfig {
            mode: TransferMode::Disjoint,
            ..cfg(0.5, 3)
        };
        let mut m = EviTramModel::new(base(), vec![targets(48, 3, 1)], 0.5, &mut Rng::new(1)).unwrap();
        let trace = run_transfer(&mut m, &x, &c, &mut Rng::new(9)).unwrap();
        assert_eq!(trace.batches, 3 * 6);
        assert_eq!(trace.optimizer_steps, 2 * trace.batches);

        let mut j = EviTramModel::new(base(), vec![targets(48, 3, 1)], 0.5, &mut Rng::new(1)).unwrap();
        let jt = transfer(&mut j, &x, &cfg(0.5, 3), &mut Rng::new(9)).unwrap();
        assert_eq!(jt.optimizer_steps, jt.batches);
    }

    #[test]
    fn disjoint_requires_a_ratio_above_one() {
        let c = TransferConfig {
            mode: TransferMode::Disjoint,
            disjoint_lr_ratio: 1.0,
            ..cfg(0.5, 1)
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn real_evidence_lowers_the_joint_loss() {
        let x = data();
        // evidence that the data can predict: the row pattern r mod 3
        let zv = Matrix::from_fn(48, 3, |r, c| if r % 3 == c { 0.8 } else { 0.1 });
        let mut m = EviTramModel::new(base(), vec![zv], 1.0, &mut Rng::new(1)).unwrap();
        let trace = transfer(&mut m, &x, &cfg(1.0, 30), &mut Rng::new(3)).unwrap();
        let t = trace.l_total();
        assert!(t.last().unwrap() < &t[0], "{t:?}");
        assert!(t.iter().chain(&trace.l_h()).all(|v| v.is_finite()));
    }

    #[test]
    fn trace_csv_layout() {
        let trace = TransferTrace {
            rows: vec![TraceRow { epoch: 0, l_ae: 0.5, l_h: 2.0, l_total: 0.7 }],
            optimizer_steps: 1,
            batches: 1,
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,l_ae,l_h,l_total\n0,0.5,2,0.7\n");
    }

    #[test]
    fn incremental_evidence_adds_one_head() {
        let x = data();
        let mut m = EviTramModel::new(base(), vec![targets(48, 3, 1)], 0.5, &mut Rng::new(1)).unwrap();
        transfer(&mut m, &x, &cfg(0.5, 1), &mut Rng::new(3)).unwrap();
        let trained = m.clone();
        m.add_evidence(targets(48, 3, 2), &mut Rng::new(4)).unwrap();
        assert_eq!(m.k(), 2);
        assert_eq!(m.base, trained.base);
        assert_eq!(m.heads[0], trained.heads[0]);
        assert!(m.add_evidence(targets(40, 3, 2), &mut Rng::new(4)).is_err());
        assert_eq!(m.k(), 2);
    }
}
