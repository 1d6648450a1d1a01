use serde::{Deserialize, Serialize};

use super::{Matrix, Rng};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "linear" => Activation::Linear,
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_width: usize,
    pub out_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_width: usize, out_width: usize, activation: Activation) -> Self {
        Self {
            in_width,
            out_width,
            activation,
        }
    }
}

/// Weights (`in_width × out_width`) and bias (`out_width`) of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(in_width: usize, out_width: usize) -> Self {
        Self {
            weights: Matrix::zeros(in_width, out_width),
            bias: vec![0.0; out_width],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gradients of a [`Network`], shaped exactly like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<LayerParams>,
}

impl Grads {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .specs()
                .iter()
                .map(|s| LayerParams::zeros(s.in_width, s.out_width))
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.iter_values().all(|v| v == 0.0)
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.scale_in_place(s);
            l.bias.iter_mut().for_each(|b| *b *= s);
        }
    }

    pub fn add_assign(&mut self, other: &Grads) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::dim("Grads::add_assign", self.layers.len(), other.layers.len()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_assign(&b.weights)?;
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    /// All entries, layer by layer, weights before bias.
    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
    }
}

/// Values retained by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    widths: Vec<(usize, usize)>,
    /// `activations[0]` is the input; `activations[i + 1]` is the output of layer `i`.
    activations: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }

    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre_activations
    }

    pub fn into_output(mut self) -> Matrix {
        self.activations.pop().expect("cache holds at least the input")
    }
}

/// Result of [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: Grads,
    /// Loss gradient with respect to the network input, for chaining networks.
    pub input_grad: Matrix,
}

/// A fixed stack of dense layers.
#[derive(Debug, Clone)]
pub struct Network {
    specs: Vec<LayerSpec>,
    params: Vec<LayerParams>,
    generation: u64,
}

/// Equality of architecture and parameters; the cache generation counter is ignored.
impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.specs == other.specs && self.params == other.params
    }
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn new(specs: Vec<LayerSpec>, rng: &mut Rng) -> Result<Self> {
        Self::with_gain(specs, 1.0, rng)
    }

    /// Glorot-uniform weights scaled by `gain`, zero biases.
    pub fn with_gain(specs: Vec<LayerSpec>, gain: f64, rng: &mut Rng) -> Result<Self> {
        validate_specs(&specs)?;
        let params = specs
            .iter()
            .map(|s| {
                let limit = gain * (6.0 / (s.in_width + s.out_width) as f64).sqrt();
                let weights = Matrix::from_fn(s.in_width, s.out_width, |_, _| {
                    rng.uniform_range(-limit, limit)
                });
                LayerParams {
                    weights,
                    bias: vec![0.0; s.out_width],
                }
            })
            .collect();
        Ok(Self {
            specs,
            params,
            generation: 0,
        })
    }

    pub fn from_params(specs: Vec<LayerSpec>, params: Vec<LayerParams>) -> Result<Self> {
        validate_specs(&specs)?;
        if specs.len() != params.len() {
            return Err(Error::dim("Network::from_params layer count", specs.len(), params.len()));
        }
        for (i, (s, p)) in specs.iter().zip(&params).enumerate() {
            if p.weights.shape() != (s.in_width, s.out_width) || p.bias.len() != s.out_width {
                return Err(Error::dim(
                    format!("layer {i} parameters"),
                    format!("{}x{} + {}", s.in_width, s.out_width, s.out_width),
                    format!(
                        "{}x{} + {}",
                        p.weights.rows(),
                        p.weights.cols(),
                        p.bias.len()
                    ),
                ));
            }
            if !p.weights.is_finite() || p.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::Domain(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self {
            specs,
            params,
            generation: 0,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        self.generation += 1;
        &mut self.params
    }

    pub fn in_width(&self) -> usize {
        self.specs[0].in_width
    }

    pub fn out_width(&self) -> usize {
        self.specs[self.specs.len() - 1].out_width
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(LayerParams::len).sum()
    }

    /// Output activations only.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.into_output())
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardCache> {
        let mut activations = Vec::with_capacity(self.specs.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.specs.len());
        activations.push(x.clone());
        for (i, (spec, p)) in self.specs.iter().zip(&self.params).enumerate() {
            let input = &activations[i];
            if input.cols() != spec.in_width {
                return Err(Error::dim(
                    format!("forward: input to layer {i}"),
                    spec.in_width,
                    input.cols(),
                ));
            }
            let mut pre = input.matmul(&p.weights)?;
            pre.add_row_vector(&p.bias);
            let out = activate(spec.activation, &pre);
            pre_activations.push(pre);
            activations.push(out);
        }
        Ok(ForwardCache {
            generation: self.generation,
            widths: self.widths(),
            activations,
            pre_activations,
        })
    }

    /// Backpropagates `output_grad` (dL/d output activations) through the cached pass.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<Backprop> {
        if cache.generation != self.generation || cache.widths != self.widths() {
            return Err(Error::Consistency(
                "forward cache does not belong to the current parameters".into(),
            ));
        }
        let out = cache.output();
        if out.shape() != output_grad.shape() {
            return Err(Error::dim(
                "backward: output gradient",
                format!("{}x{}", out.rows(), out.cols()),
                format!("{}x{}", output_grad.rows(), output_grad.cols()),
            ));
        }
        let mut layers = Vec::with_capacity(self.specs.len());
        let mut grad = output_grad.clone();
        for i in (0..self.specs.len()).rev() {
            let delta = activation_backward(
                self.specs[i].activation,
                &cache.pre_activations[i],
                &cache.activations[i + 1],
                &grad,
            );
            let input = &cache.activations[i];
            let weights = input.t_matmul(&delta)?;
            let bias = delta.column_sums();
            grad = delta.matmul_t(&self.params[i].weights)?;
            layers.push(LayerParams { weights, bias });
        }
        layers.reverse();
        Ok(Backprop {
            grads: Grads { layers },
            input_grad: grad,
        })
    }

    fn widths(&self) -> Vec<(usize, usize)> {
        self.specs.iter().map(|s| (s.in_width, s.out_width)).collect()
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("a network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_width == 0 || s.out_width == 0 {
            return Err(Error::Config(format!("layer {i} has a zero width")));
        }
        if i > 0 && specs[i - 1].out_width != s.in_width {
            return Err(Error::dim(
                format!("layer {i} input width"),
                specs[i - 1].out_width,
                s.in_width,
            ));
        }
        if s.activation == Activation::Softmax && i + 1 != specs.len() {
            return Err(Error::Config(format!(
                "softmax is only allowed on the final layer (found on layer {i})"
            )));
        }
    }
    Ok(())
}

fn activate(act: Activation, pre: &Matrix) -> Matrix {
    match act {
        Activation::Linear => pre.clone(),
        Activation::Relu => pre.map(|v| v.max(0.0)),
        Activation::Sigmoid => pre.map(sigmoid),
        Activation::Softmax => softmax_rows(pre),
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(pre: &Matrix) -> Matrix {
    let mut out = pre.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// dL/d pre-activation from dL/d activation.
fn activation_backward(act: Activation, pre: &Matrix, out: &Matrix, grad: &Matrix) -> Matrix {
    match act {
        Activation::Linear => grad.clone(),
        Activation::Relu => {
            let mut d = grad.clone();
            for (g, &p) in d.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
            d
        }
        Activation::Sigmoid => {
            let mut d = grad.clone();
            for (g, &s) in d.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *g *= s * (1.0 - s);
            }
            d
        }
        Activation::Softmax => {
            // Jacobian-vector product per row: s ⊙ (g − ⟨g, s⟩)
            let mut d = grad.clone();
            for r in 0..d.rows() {
                let s = out.row(r);
                let dot: f64 = grad.row(r).iter().zip(s).map(|(g, s)| g * s).sum();
                for (g, &si) in d.row_mut(r).iter_mut().zip(s) {
                    *g = si * (*g - dot);
                }
            }
            d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_linear_layer() {
        let net = Network::from_params(
            vec![LayerSpec::new(2, 2, Activation::Linear)],
            vec![LayerParams {
                weights: Matrix::identity(2),
                bias: vec![0.0; 2],
            }],
        )
        .unwrap();
        let y = net.predict(&Matrix::from_rows(&[[1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_softmax_layer_is_uniform() {
        let net = Network::from_params(
            vec![LayerSpec::new(3, 3, Activation::Softmax)],
            vec![LayerParams::zeros(3, 3)],
        )
        .unwrap();
        let y = net.predict(&Matrix::from_rows(&[[4.0, -1.0, 9.5]]).unwrap()).unwrap();
        for v in y.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_two_layer_relu() {
        // h = relu(x·W1 + b1), y = relu(h·W2 + b2), evaluated by hand:
        // x = [1, -2]
        // x·W1 = [1·0.5 + -2·1.0, 1·-1.0 + -2·0.25] = [-1.5, -1.5]; + b1 [2.0, 0.5] = [0.5, -1.0]
        // relu → [0.5, 0.0]
        // h·W2 = [0.5·3.0, 0.5·-2.0] = [1.5, -1.0]; + b2 [0.25, 0.5] = [1.75, -0.5] → relu [1.75, 0]
        let net = Network::from_params(
            vec![
                LayerSpec::new(2, 2, Activation::Relu),
                LayerSpec::new(2, 2, Activation::Relu),
            ],
            vec![
                LayerParams {
                    weights: Matrix::from_rows(&[[0.5, -1.0], [1.0, 0.25]]).unwrap(),
                    bias: vec![2.0, 0.5],
                },
                LayerParams {
                    weights: Matrix::from_rows(&[[3.0, -2.0], [7.0, 7.0]]).unwrap(),
                    bias: vec![0.25, 0.5],
                },
            ],
        )
        .unwrap();
        let y = net.predict(&Matrix::from_rows(&[[1.0, -2.0]]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[1.75, 0.0]);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let mut rng = Rng::new(1);
        let net = Network::new(vec![LayerSpec::new(3, 2, Activation::Relu)], &mut rng).unwrap();
        let err = net.forward(&Matrix::zeros(1, 4)).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }

    #[test]
    fn softmax_only_on_last_layer() {
        let specs = vec![
            LayerSpec::new(3, 3, Activation::Softmax),
            LayerSpec::new(3, 2, Activation::Linear),
        ];
        assert!(Network::new(specs, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut rng = Rng::new(3);
        let net = Network::new(
            vec![
                LayerSpec::new(3, 4, Activation::Sigmoid),
                LayerSpec::new(4, 2, Activation::Softmax),
            ],
            &mut rng,
        )
        .unwrap();
        let x = Matrix::from_fn(5, 3, |r, c| (r as f64 - c as f64) * 0.3);
        let cache = net.forward(&x).unwrap();
        let bp = net.backward(&cache, &Matrix::zeros(5, 2)).unwrap();
        assert!(bp.grads.is_zero());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = Rng::new(3);
        let mut net = Network::new(vec![LayerSpec::new(2, 2, Activation::Linear)], &mut rng).unwrap();
        let cache = net.forward(&Matrix::zeros(1, 2)).unwrap();
        net.params_mut()[0].bias[0] = 1.0;
        assert!(matches!(
            net.backward(&cache, &Matrix::zeros(1, 2)),
            Err(Error::Consistency(_))
        ));
    }
}
