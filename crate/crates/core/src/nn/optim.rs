use serde::{Deserialize, Serialize};

use super::{Grads, Network};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SgdMomentum => "sgd_momentum",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sgd" => OptimizerKind::Sgd,
            "sgd_momentum" => OptimizerKind::SgdMomentum,
            "adam" => OptimizerKind::Adam,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    /// Momentum SGD at 0.01, momentum 0.9, batch 64.
    fn default() -> Self {
        Self {
            kind: OptimizerKind::SgdMomentum,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, batch_size: usize) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            momentum: 0.0,
            batch_size,
        }
    }

    pub fn adam(learning_rate: f64, batch_size: usize) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            momentum: 0.0,
            batch_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Slot {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Optimizer state over an ordered list of parameter tensors.
///
/// Every call to [`Optimizer::step`] must pass the same networks in the same order; each weight
/// matrix and bias vector owns one state slot.
///
/// Update rules:
/// - `sgd`: `p ← p − lr·g`
/// - `sgd_momentum`: `v ← μ·v + g`, `p ← p − lr·v`
/// - `adam`: `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`, `p ← p − lr·m̂ / (√v̂ + ε)` with
///   bias-corrected `m̂ = m / (1−β₁ᵗ)`, `v̂ = v / (1−β₂ᵗ)`.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    steps: u64,
    slots: Vec<Slot>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            steps: 0,
            slots: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, targets: &mut [(&mut Network, &Grads)]) -> Result<()> {
        for (net, grads) in targets.iter() {
            if net.specs().len() != grads.layers.len() {
                return Err(Error::dim(
                    "optimizer step layer count",
                    net.specs().len(),
                    grads.layers.len(),
                ));
            }
            for (i, (p, g)) in net.params().iter().zip(&grads.layers).enumerate() {
                if p.weights.shape() != g.weights.shape() || p.bias.len() != g.bias.len() {
                    return Err(Error::dim(
                        format!("optimizer step layer {i}"),
                        format!("{}x{}", p.weights.rows(), p.weights.cols()),
                        format!("{}x{}", g.weights.rows(), g.weights.cols()),
                    ));
                }
            }
        }
        self.steps += 1;
        let mut slot = 0;
        for (net, grads) in targets.iter_mut() {
            for (p, g) in net.params_mut().iter_mut().zip(&grads.layers) {
                self.update(slot, p.weights.as_mut_slice(), g.weights.as_slice());
                self.update(slot + 1, &mut p.bias, &g.bias);
                slot += 2;
            }
        }
        Ok(())
    }

    fn update(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) {
        if self.slots.len() <= slot {
            self.slots.resize_with(slot + 1, Slot::default);
        }
        let lr = self.cfg.learning_rate;
        let state = &mut self.slots[slot];
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::SgdMomentum => {
                if state.first.len() != params.len() {
                    state.first = vec![0.0; params.len()];
                }
                let mu = self.cfg.momentum;
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.first) {
                    *v = mu * *v + g;
                    *p -= lr * *v;
                }
            }
            OptimizerKind::Adam => {
                if state.first.len() != params.len() {
                    state.first = vec![0.0; params.len()];
                    state.second = vec![0.0; params.len()];
                }
                let t = self.steps as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut state.first)
                    .zip(&mut state.second)
                {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
                }
            }
        }
    }
}
