//! Feedforward low-dimensional controllers: evaluation, sound interval
//! output bounds, Lipschitz upper bounds, and a bit-stable model file codec.
//!
//! Networks are plain fully-connected stacks. Every layer carries its own
//! activation tag; the scalar output of the last layer is multiplied by
//! `output_scale`, which by convention equals the actuation limit so a tanh
//! output layer covers the full actuation range.

use crate::geom::{State, StateBox};
use crate::interval::Interval;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("network has no layers")]
    EmptyNetwork,
    #[error("layer {layer}: {rows} weight rows but {bias} bias entries")]
    RowBiasMismatch { layer: usize, rows: usize, bias: usize },
    #[error("layer {layer}: expected rows of width {expected}, found width {got}")]
    ChainMismatch { layer: usize, expected: usize, got: usize },
    #[error("layer {layer} contains a non-finite parameter")]
    NonFiniteParam { layer: usize },
    #[error("final layer must produce one output, found {got}")]
    OutputNotScalar { got: usize },
    #[error("input dimension mismatch: network expects {expected}, got {got}")]
    InputDim { expected: usize, got: usize },
    #[error("output scale must be finite and positive, got {got}")]
    BadScale { got: f64 },
    #[error("unsupported model format tag {found:?}")]
    FormatTag { found: String },
    #[error("invalid decimal literal {text:?} in model file")]
    BadNumber { text: String },
    #[error("model parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Plain dot product, left to right. Reference control laws reuse this exact
/// helper so a network encoding the same affine map reproduces it bit for
/// bit.
pub(crate) fn dot(weights: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), values.len());
    let mut acc = 0.0;
    for (w, x) in weights.iter().zip(values) {
        acc += w * x;
    }
    acc
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn apply_interval(self, iv: &Interval) -> Interval {
        match self {
            Activation::Sigmoid => iv.sigmoid(),
            Activation::Tanh => iv.tanh(),
            Activation::Identity => *iv,
        }
    }

    /// Upper bound on the derivative magnitude over the whole real line.
    pub fn slope_bound(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            Activation::Tanh | Activation::Identity => 1.0,
        }
    }

    /// Derivative expressed through the activation output, as used by
    /// backpropagation.
    pub(crate) fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    /// Sound enclosure of the derivative over a pre-activation interval.
    pub fn derivative_interval(self, pre: &Interval) -> Interval {
        match self {
            Activation::Sigmoid => {
                let s = pre.sigmoid();
                let d = s.mul(&Interval::point(1.0).sub(&s));
                d.intersect(&Interval::new(0.0, 0.25)).unwrap_or(d)
            }
            Activation::Tanh => {
                let d = Interval::point(1.0).sub(&pre.tanh().square());
                d.intersect(&Interval::new(0.0, 1.0)).unwrap_or(d)
            }
            Activation::Identity => Interval::point(1.0),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sigmoid" => Some(Activation::Sigmoid),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// One fully-connected layer: `activation(W x + b)` with `W` stored row-major
/// (one row per output unit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, |row| row.len())
    }

    pub(crate) fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| self.activation.apply(dot(row, input) + b))
            .collect()
    }

    fn forward_interval(&self, input: &[Interval]) -> Vec<Interval> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| {
                let mut acc = Interval::point(*b);
                for (w, x) in row.iter().zip(input) {
                    acc = acc.add(&x.scale(*w));
                }
                self.activation.apply_interval(&acc)
            })
            .collect()
    }
}

/// A validated scalar-output controller network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdcNetwork {
    pub layers: Vec<Layer>,
    /// Multiplier applied to the final activation output; set to the
    /// actuation limit so a tanh head spans the full actuation range.
    pub output_scale: f64,
}

impl LdcNetwork {
    pub fn new(layers: Vec<Layer>, output_scale: f64) -> Result<Self, ControllerError> {
        let net = LdcNetwork {
            layers,
            output_scale,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::in_dim)
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.layers.is_empty() {
            return Err(ControllerError::EmptyNetwork);
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(ControllerError::BadScale {
                got: self.output_scale,
            });
        }
        let mut width = self.input_dim();
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.weights.is_empty() {
                return Err(ControllerError::OutputNotScalar { got: 0 });
            }
            if layer.weights.len() != layer.bias.len() {
                return Err(ControllerError::RowBiasMismatch {
                    layer: l,
                    rows: layer.weights.len(),
                    bias: layer.bias.len(),
                });
            }
            for row in &layer.weights {
                if row.len() != width {
                    return Err(ControllerError::ChainMismatch {
                        layer: l,
                        expected: width,
                        got: row.len(),
                    });
                }
                if row.iter().any(|w| !w.is_finite()) {
                    return Err(ControllerError::NonFiniteParam { layer: l });
                }
            }
            if layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(ControllerError::NonFiniteParam { layer: l });
            }
            width = layer.out_dim();
        }
        if width != 1 {
            return Err(ControllerError::OutputNotScalar { got: width });
        }
        Ok(())
    }

    /// Layer-by-layer evaluation; the scalar result is already scaled but
    /// not clamped (actuation clamping belongs to the closed loop).
    pub fn eval(&self, s: &State) -> Result<f64, ControllerError> {
        if s.dim() != self.input_dim() {
            return Err(ControllerError::InputDim {
                expected: self.input_dim(),
                got: s.dim(),
            });
        }
        let mut x = s.values().to_vec();
        for layer in &self.layers {
            x = layer.forward(&x);
        }
        Ok(self.output_scale * x[0])
    }

    /// Sound output range over a state box: interval affine propagation with
    /// endpoint images for the monotone activations. The result contains
    /// `eval(s)` for every `s` in the box.
    pub fn eval_interval(&self, region: &StateBox) -> Result<Interval, ControllerError> {
        if region.dim() != self.input_dim() {
            return Err(ControllerError::InputDim {
                expected: self.input_dim(),
                got: region.dim(),
            });
        }
        let mut x = region.dims().to_vec();
        for layer in &self.layers {
            x = layer.forward_interval(&x);
        }
        Ok(x[0].scale(self.output_scale))
    }

    /// Sound enclosure of the gradient `d output / d input` over a state
    /// box: a forward pass collects pre-activation ranges, activation
    /// derivative enclosures form interval diagonal factors, and a backward
    /// interval product `scale * W_L D_{L-1} W_{L-1} ... D_1 W_1` folds them
    /// into one row. The result contains the true gradient at every point of
    /// the box where the network is differentiable.
    pub fn jacobian_interval(&self, region: &StateBox) -> Result<Vec<Interval>, ControllerError> {
        if region.dim() != self.input_dim() {
            return Err(ControllerError::InputDim {
                expected: self.input_dim(),
                got: region.dim(),
            });
        }
        let mut x = region.dims().to_vec();
        let mut derivs: Vec<Vec<Interval>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut post = Vec::with_capacity(layer.out_dim());
            let mut d_layer = Vec::with_capacity(layer.out_dim());
            for (row, b) in layer.weights.iter().zip(&layer.bias) {
                let mut pre = Interval::point(*b);
                for (w, xi) in row.iter().zip(&x) {
                    pre = pre.add(&xi.scale(*w));
                }
                d_layer.push(layer.activation.derivative_interval(&pre));
                post.push(layer.activation.apply_interval(&pre));
            }
            derivs.push(d_layer);
            x = post;
        }
        // Backward pass: start from the scalar output's scale and absorb one
        // layer at a time, keeping a row vector of intervals.
        let mut row = vec![Interval::point(self.output_scale)];
        for (layer, d_layer) in self.layers.iter().zip(&derivs).rev() {
            let mut prev = vec![Interval::point(0.0); layer.in_dim()];
            for (j, (w_row, d)) in layer.weights.iter().zip(d_layer).enumerate() {
                let factor = row[j].mul(d);
                for (p, w) in prev.iter_mut().zip(w_row) {
                    *p = p.add(&factor.scale(*w));
                }
            }
            row = prev;
        }
        Ok(row)
    }

    /// Upper bound on the network's Lipschitz constant in the Euclidean
    /// norm: product over layers of spectral norm times activation slope
    /// bound, times the output scale. Each power-iteration estimate is
    /// inflated by a relative 1e-7 margin so residual convergence error
    /// cannot push the product below a true spectral norm.
    pub fn lipschitz_upper_bound(&self) -> f64 {
        let mut bound = self.output_scale.abs();
        for layer in &self.layers {
            let (sigma, _, _) = spectral_norm(&layer.weights);
            bound *= sigma * (1.0 + 1e-7) * layer.activation.slope_bound();
        }
        bound
    }

    pub fn to_json(&self) -> String {
        let file = LdcFile {
            format: FORMAT_TAG.to_string(),
            input_dim: self.input_dim(),
            output_scale: format_decimal(self.output_scale),
            layers: self
                .layers
                .iter()
                .map(|layer| LdcFileLayer {
                    activation: layer.activation.name().to_string(),
                    weights: layer
                        .weights
                        .iter()
                        .map(|row| row.iter().copied().map(format_decimal).collect())
                        .collect(),
                    bias: layer.bias.iter().copied().map(format_decimal).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ControllerError> {
        let file: LdcFile = serde_json::from_str(text)?;
        if file.format != FORMAT_TAG {
            return Err(ControllerError::FormatTag { found: file.format });
        }
        let layers = file
            .layers
            .into_iter()
            .map(|layer| {
                Ok(Layer {
                    weights: layer
                        .weights
                        .iter()
                        .map(|row| row.iter().map(|cell| parse_decimal(cell)).collect())
                        .collect::<Result<_, _>>()?,
                    bias: layer
                        .bias
                        .iter()
                        .map(|cell| parse_decimal(cell))
                        .collect::<Result<_, _>>()?,
                    activation: Activation::from_name(&layer.activation).ok_or_else(|| {
                        ControllerError::BadNumber {
                            text: layer.activation.clone(),
                        }
                    })?,
                })
            })
            .collect::<Result<Vec<_>, ControllerError>>()?;
        let net = LdcNetwork {
            layers,
            output_scale: parse_decimal(&file.output_scale)?,
        };
        net.validate()?;
        if net.input_dim() != file.input_dim {
            return Err(ControllerError::InputDim {
                expected: file.input_dim,
                got: net.input_dim(),
            });
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), ControllerError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ControllerError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

const FORMAT_TAG: &str = "ldc-v1";

/// Weights travel as shortest-roundtrip decimal strings: `format!("{}")`
/// emits the shortest decimal that parses back to the identical bits, which
/// keeps model files diff-able without losing precision.
fn format_decimal(v: f64) -> String {
    format!("{v}")
}

fn parse_decimal(text: &str) -> Result<f64, ControllerError> {
    let v: f64 = text.parse().map_err(|_| ControllerError::BadNumber {
        text: text.to_string(),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ControllerError::BadNumber {
            text: text.to_string(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct LdcFile {
    format: String,
    input_dim: usize,
    output_scale: String,
    layers: Vec<LdcFileLayer>,
}

#[derive(Serialize, Deserialize)]
struct LdcFileLayer {
    activation: String,
    weights: Vec<Vec<String>>,
    bias: Vec<String>,
}

/// Largest singular value of a row-major matrix by two-sided power
/// iteration, with the corresponding left and right singular vectors. The
/// iteration starts from a fixed uniform vector so results are
/// deterministic, and stops at 1e-13 relative tolerance.
pub(crate) fn spectral_norm(weights: &[Vec<f64>]) -> (f64, Vec<f64>, Vec<f64>) {
    let rows = weights.len();
    let cols = weights[0].len();
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut u = vec![0.0; rows];
    let mut sigma = 0.0;
    for _ in 0..10_000 {
        for (r, row) in weights.iter().enumerate() {
            u[r] = dot(row, &v);
        }
        let nu = norm2(&u);
        if nu == 0.0 {
            return (0.0, vec![0.0; rows], v);
        }
        for x in &mut u {
            *x /= nu;
        }
        let mut w = vec![0.0; cols];
        for (r, row) in weights.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                w[c] += cell * u[r];
            }
        }
        let s = norm2(&w);
        if s == 0.0 {
            return (0.0, u, v);
        }
        for (c, x) in w.iter().enumerate() {
            v[c] = x / s;
        }
        if (s - sigma).abs() <= 1e-13 * s.max(1e-300) {
            return (s, u, v);
        }
        sigma = s;
    }
    (sigma, u, v)
}
