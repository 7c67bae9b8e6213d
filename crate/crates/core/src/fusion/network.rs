use serde::{Deserialize, Serialize};

use super::{FusionError, TrainConfig};
use crate::rng::SplitMix64;
use crate::scalar::{sigmoid, Scalar};

/// Predicted probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]`
/// inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

/// Fully connected layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn weight(&self, row: usize, col: usize) -> T {
        self.weights[row * self.inputs + col]
    }

    fn affine(&self, x: &[T]) -> Vec<T> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi))
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    fn shape_ok(&self) -> bool {
        self.weights.len() == self.inputs * self.outputs && self.bias.len() == self.outputs
    }
}

/// Parameter-shaped container for gradients (and Adam moments).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &FusionNetwork<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    bound = "T: Scalar",
    try_from = "NetworkFile<T>",
    into = "NetworkFile<T>"
)]
pub struct FusionNetwork<T> {
    dims: Vec<usize>,
    model_names: Vec<String>,
    layers: Vec<Dense<T>>,
    config: TrainConfig,
}

/// On-disk form; validated on the way in.
#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct NetworkFile<T> {
    dims: Vec<usize>,
    model_names: Vec<String>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
    config: TrainConfig,
}

impl<T: Scalar> From<FusionNetwork<T>> for NetworkFile<T> {
    fn from(net: FusionNetwork<T>) -> Self {
        let (weights, biases) = net.layers.into_iter().map(|l| (l.weights, l.bias)).unzip();
        Self {
            dims: net.dims,
            model_names: net.model_names,
            weights,
            biases,
            config: net.config,
        }
    }
}

impl<T: Scalar> TryFrom<NetworkFile<T>> for FusionNetwork<T> {
    type Error = FusionError;

    fn try_from(file: NetworkFile<T>) -> Result<Self, FusionError> {
        if file.weights.len() != file.biases.len() {
            return Err(FusionError::InvalidNetwork(
                "weight and bias layer counts differ".into(),
            ));
        }
        let layers = file
            .weights
            .into_iter()
            .zip(file.biases)
            .zip(file.dims.windows(2))
            .map(|((weights, bias), d)| Dense {
                inputs: d[0],
                outputs: d[1],
                weights,
                bias,
            })
            .collect();
        FusionNetwork::from_parts(file.dims, file.model_names, layers, file.config)
    }
}

impl<T: Scalar> FusionNetwork<T> {
    pub fn from_parts(
        dims: Vec<usize>,
        model_names: Vec<String>,
        layers: Vec<Dense<T>>,
        config: TrainConfig,
    ) -> Result<Self, FusionError> {
        let invalid = |m: String| Err(FusionError::InvalidNetwork(m));
        if dims.len() < 2 || dims.contains(&0) {
            return invalid(format!("bad layer dims {dims:?}"));
        }
        if *dims.last().unwrap() != 1 {
            return invalid("output layer must have width 1".into());
        }
        if layers.len() != dims.len() - 1 {
            return invalid(format!("{} layers for dims {dims:?}", layers.len()));
        }
        for (i, (l, d)) in layers.iter().zip(dims.windows(2)).enumerate() {
            if l.inputs != d[0] || l.outputs != d[1] || !l.shape_ok() {
                return invalid(format!("layer {i} shape does not match dims {dims:?}"));
            }
            if !l.is_finite() {
                return invalid(format!("layer {i} has non-finite parameters"));
            }
        }
        if !model_names.is_empty() && model_names.len() != dims[0] {
            return invalid(format!(
                "{} model names for {} inputs",
                model_names.len(),
                dims[0]
            ));
        }
        Ok(Self {
            dims,
            model_names,
            layers,
            config,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_inputs(&self) -> usize {
        self.dims[0]
    }

    pub fn model_names(&self) -> &[String] {
        &self.model_names
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    /// Fused probability for one vector of member probabilities.
    pub fn forward(&self, input: &[T]) -> Result<T, FusionError> {
        self.check_input(input)?;
        Ok(self.trace(input).output())
    }

    fn check_input(&self, input: &[T]) -> Result<(), FusionError> {
        if input.len() != self.n_inputs() {
            return Err(FusionError::DimensionMismatch {
                expected: self.n_inputs(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Forward pass keeping every layer's activations for backprop.
    fn trace(&self, input: &[T]) -> Trace<T> {
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(activations.last().unwrap());
            let a = if i == last {
                z.into_iter().map(sigmoid).collect()
            } else {
                z.into_iter().map(|v| v.max(T::zero())).collect()
            };
            activations.push(a);
        }
        Trace { activations }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FusionError> {
        serde_json::from_str(text).map_err(|e| FusionError::InvalidNetwork(e.to_string()))
    }
}

struct Trace<T> {
    activations: Vec<Vec<T>>,
}

impl<T: Scalar> Trace<T> {
    fn output(&self) -> T {
        self.activations.last().unwrap()[0]
    }
}

/// Glorot-uniform weights from the seeded stream, zero biases.
pub fn init_network<T: Scalar>(
    model_names: &[String],
    config: &TrainConfig,
) -> Result<FusionNetwork<T>, FusionError> {
    init_with_dims(config.layer_dims(model_names.len()), model_names, config)
}

pub(crate) fn init_with_dims<T: Scalar>(
    dims: Vec<usize>,
    model_names: &[String],
    config: &TrainConfig,
) -> Result<FusionNetwork<T>, FusionError> {
    if dims.first().copied().unwrap_or(0) < 1 {
        return Err(FusionError::InvalidNetwork(
            "need at least one input model".into(),
        ));
    }
    let mut rng = SplitMix64::derive(config.seed, 0);
    let layers = dims
        .windows(2)
        .map(|d| {
            let (fan_in, fan_out) = (d[0], d[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut layer = Dense::zeros(fan_in, fan_out);
            for w in &mut layer.weights {
                *w = T::of(rng.uniform(-bound, bound));
            }
            layer
        })
        .collect();
    FusionNetwork::from_parts(dims, model_names.to_vec(), layers, config.clone())
}

fn bce<T: Scalar>(p: T, label: u8) -> T {
    let eps = T::of(PROB_CLAMP);
    let pc = p.max(eps).min(T::one() - eps);
    if label == 1 {
        -pc.ln()
    } else {
        -(T::one() - pc).ln()
    }
}

/// Mean clamped binary cross-entropy over a batch.
pub fn mean_loss<T: Scalar>(
    net: &FusionNetwork<T>,
    inputs: &[Vec<T>],
    labels: &[u8],
) -> Result<T, FusionError> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(FusionError::EmptyBatch);
    }
    let mut total = T::zero();
    for (x, &y) in inputs.iter().zip(labels) {
        total = total + bce(net.forward(x)?, y);
    }
    Ok(total / T::of_usize(inputs.len()))
}

/// Mean clamped BCE and its exact gradient with respect to every parameter.
///
/// Where the clamp is active the loss is flat in the output, so that
/// sample contributes no gradient.
pub fn loss_and_gradient<T: Scalar>(
    net: &FusionNetwork<T>,
    inputs: &[Vec<T>],
    labels: &[u8],
) -> Result<(T, Gradients<T>), FusionError> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(FusionError::EmptyBatch);
    }
    let n = T::of_usize(inputs.len());
    let eps = T::of(PROB_CLAMP);
    let mut grads = Gradients::zeros_like(net);
    let mut total = T::zero();
    for (x, &y) in inputs.iter().zip(labels) {
        net.check_input(x)?;
        let trace = net.trace(x);
        let p = trace.output();
        total = total + bce(p, y);

        let target = if y == 1 { T::one() } else { T::zero() };
        let dz_out = if p > eps && p < T::one() - eps {
            (p - target) / n
        } else {
            T::zero()
        };
        let mut delta = vec![dz_out];
        for l in (0..net.layers.len()).rev() {
            let layer = &net.layers[l];
            let a_in = &trace.activations[l];
            let g = &mut grads.layers[l];
            for (r, &d) in delta.iter().enumerate() {
                g.bias[r] = g.bias[r] + d;
                let row = &mut g.weights[r * layer.inputs..(r + 1) * layer.inputs];
                for (gw, &a) in row.iter_mut().zip(a_in) {
                    *gw = *gw + d * a;
                }
            }
            if l == 0 {
                break;
            }
            // Back through W, then through the ReLU of the layer below.
            delta = (0..layer.inputs)
                .map(|c| {
                    if a_in[c] > T::zero() {
                        delta
                            .iter()
                            .enumerate()
                            .fold(T::zero(), |acc, (r, &d)| acc + layer.weight(r, c) * d)
                    } else {
                        T::zero()
                    }
                })
                .collect();
        }
    }
    Ok((total / n, grads))
}
