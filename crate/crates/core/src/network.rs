//! Fully-connected feed-forward networks: representation, loading, exact
//! forward evaluation.
//!
//! Two on-disk formats are supported:
//!
//! * a native JSON schema, `{"layers":[{"weights":[[..]],"bias":[..],
//!   "activation":"relu"}]}` with row-major weights — trivial to hand-author
//!   in test fixtures (optional `"input_lo"`/`"input_hi"` arrays declare the
//!   valid input box);
//! * the de-facto NNet textual layout (comment lines starting with `//`,
//!   then layer sizes, input bounds, normalization constants, then row-wise
//!   weights and biases). The header's input normalization is materialized
//!   as a prepended affine layer and the output denormalization as an
//!   appended one, so the loaded network consumes raw, unnormalized inputs
//!   and produces raw scores. Denormalization is a positive affine map, so
//!   score comparisons (argmin/argmax, sign structure) are preserved.

use crate::interval::Hyperbox;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid network JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("shape error: {0}")]
    Shape(String),
}

/// Elementwise activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    #[serde(rename = "none")]
    Identity,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => crate::interval::relu(x),
            Activation::Sigmoid => crate::interval::sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

/// One fully-connected layer: `activation(weights · x + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// A validated feed-forward network `N: R^n → R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    /// The valid input box, when the source format declares one (NNet always
    /// does; the JSON schema optionally).
    input_bounds: Option<Hyperbox>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Network, NetworkError> {
        Network::with_input_bounds(layers, None)
    }

    pub fn with_input_bounds(
        layers: Vec<Layer>,
        input_bounds: Option<Hyperbox>,
    ) -> Result<Network, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::Shape("network has no layers".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(NetworkError::Shape(format!(
                    "layer {i}: bias length {} != row count {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if !layer.weights.iter().all(|w| w.is_finite())
                || !layer.bias.iter().all(|b| b.is_finite())
            {
                return Err(NetworkError::Shape(format!(
                    "layer {i}: non-finite weight or bias"
                )));
            }
            if i > 0 && layer.in_dim() != layers[i - 1].out_dim() {
                return Err(NetworkError::Shape(format!(
                    "layer {i}: expects {} inputs but layer {} produces {}",
                    layer.in_dim(),
                    i - 1,
                    layers[i - 1].out_dim()
                )));
            }
        }
        if let Some(b) = &input_bounds {
            if b.dim() != layers[0].in_dim() {
                return Err(NetworkError::Shape(format!(
                    "input bounds have {} dims, network expects {}",
                    b.dim(),
                    layers[0].in_dim()
                )));
            }
        }
        Ok(Network {
            layers,
            input_bounds,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn input_bounds(&self) -> Option<&Hyperbox> {
        self.input_bounds.as_ref()
    }

    /// Exact layer-by-layer evaluation.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if x.len() != self.input_dim() {
            return Err(NetworkError::Shape(format!(
                "input has {} dims, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut h = Array1::from(x.to_vec());
        for layer in &self.layers {
            let mut z = layer.weights.dot(&h) + &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            h = z;
        }
        Ok(h.to_vec())
    }

    /// True when every activation is ReLU or identity (the class the
    /// backward linear-bounds pass supports).
    pub fn is_piecewise_linear(&self) -> bool {
        self.layers
            .iter()
            .all(|l| matches!(l.activation, Activation::Relu | Activation::Identity))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkFormat {
    Json,
    Nnet,
}

/// Loads a network file, validating shapes.
pub fn load_network(path: &Path, format: NetworkFormat) -> Result<Network, NetworkError> {
    let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        NetworkFormat::Json => parse_network_json(&text),
        NetworkFormat::Nnet => parse_nnet(&text, &path.display().to_string()),
    }
}

/// Saves a network in the native JSON schema.
pub fn save_network_json(net: &Network, path: &Path) -> Result<(), NetworkError> {
    let text = network_to_json(net)?;
    std::fs::write(path, text).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Serialize, Deserialize)]
struct LayerDto {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct NetworkDto {
    layers: Vec<LayerDto>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_lo: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_hi: Option<Vec<f64>>,
}

pub fn parse_network_json(text: &str) -> Result<Network, NetworkError> {
    let dto: NetworkDto = serde_json::from_str(text)?;
    let mut layers = Vec::with_capacity(dto.layers.len());
    for (i, l) in dto.layers.into_iter().enumerate() {
        let rows = l.weights.len();
        let cols = l.weights.first().map(|r| r.len()).unwrap_or(0);
        if rows == 0 || cols == 0 {
            return Err(NetworkError::Shape(format!("layer {i}: empty weights")));
        }
        if l.weights.iter().any(|r| r.len() != cols) {
            return Err(NetworkError::Shape(format!(
                "layer {i}: ragged weight rows"
            )));
        }
        let flat: Vec<f64> = l.weights.into_iter().flatten().collect();
        let weights = Array2::from_shape_vec((rows, cols), flat)
            .map_err(|e| NetworkError::Shape(format!("layer {i}: {e}")))?;
        layers.push(Layer {
            weights,
            bias: Array1::from(l.bias),
            activation: l.activation,
        });
    }
    let bounds = match (dto.input_lo, dto.input_hi) {
        (Some(lo), Some(hi)) => Some(
            Hyperbox::new(lo, hi)
                .map_err(|e| NetworkError::Shape(format!("input bounds: {e}")))?,
        ),
        (None, None) => None,
        _ => {
            return Err(NetworkError::Shape(
                "input_lo and input_hi must be given together".into(),
            ))
        }
    };
    Network::with_input_bounds(layers, bounds)
}

pub fn network_to_json(net: &Network) -> Result<String, NetworkError> {
    let dto = NetworkDto {
        layers: net
            .layers
            .iter()
            .map(|l| LayerDto {
                weights: l
                    .weights
                    .rows()
                    .into_iter()
                    .map(|r| r.to_vec())
                    .collect(),
                bias: l.bias.to_vec(),
                activation: l.activation,
            })
            .collect(),
        input_lo: net.input_bounds.as_ref().map(|b| b.lo().to_vec()),
        input_hi: net.input_bounds.as_ref().map(|b| b.hi().to_vec()),
    };
    Ok(serde_json::to_string_pretty(&dto)?)
}

/// Parses the NNet textual format. Hidden layers use ReLU, the final layer
/// is linear; input normalization and output denormalization from the header
/// are materialized as extra affine layers.
pub fn parse_nnet(text: &str, path: &str) -> Result<Network, NetworkError> {
    let mut reader = NnetLines::new(text, path);

    let header = reader.numbers()?;
    let (line, header) = header;
    if header.len() < 4 {
        return Err(reader.err(line, "expected numLayers,inputSize,outputSize,maxLayerSize"));
    }
    let num_layers = header[0] as usize;
    let input_size = header[1] as usize;
    let output_size = header[2] as usize;
    if num_layers == 0 || input_size == 0 || output_size == 0 {
        return Err(reader.err(line, "degenerate layer counts in header"));
    }

    let (line, sizes) = reader.numbers()?;
    if sizes.len() != num_layers + 1 {
        return Err(reader.err(
            line,
            &format!("expected {} layer sizes, got {}", num_layers + 1, sizes.len()),
        ));
    }
    let sizes: Vec<usize> = sizes.iter().map(|&v| v as usize).collect();
    if sizes[0] != input_size || sizes[num_layers] != output_size {
        return Err(reader.err(line, "layer sizes disagree with header dims"));
    }

    // Legacy "symmetric" flag; unused.
    reader.numbers()?;

    let (_, mins) = reader.expect_len(input_size, "input minimums")?;
    let (_, maxes) = reader.expect_len(input_size, "input maximums")?;
    let (_, means) = reader.expect_len(input_size + 1, "normalization means")?;
    let (_, ranges) = reader.expect_len(input_size + 1, "normalization ranges")?;

    let mut layers = Vec::with_capacity(num_layers + 2);

    // x ↦ (x − mean) / range, as a diagonal affine layer.
    let mut norm_w = Array2::zeros((input_size, input_size));
    let mut norm_b = Array1::zeros(input_size);
    for i in 0..input_size {
        if ranges[i] == 0.0 {
            return Err(reader.err(0, &format!("zero normalization range for input {i}")));
        }
        norm_w[(i, i)] = 1.0 / ranges[i];
        norm_b[i] = -means[i] / ranges[i];
    }
    layers.push(Layer {
        weights: norm_w,
        bias: norm_b,
        activation: Activation::Identity,
    });

    for k in 0..num_layers {
        let rows = sizes[k + 1];
        let cols = sizes[k];
        let mut w = Array2::zeros((rows, cols));
        for r in 0..rows {
            let (line, vals) = reader.numbers()?;
            if vals.len() != cols {
                return Err(reader.err(
                    line,
                    &format!("layer {k} weight row {r}: expected {cols} values, got {}", vals.len()),
                ));
            }
            for (c, &v) in vals.iter().enumerate() {
                w[(r, c)] = v;
            }
        }
        let mut b = Array1::zeros(rows);
        for r in 0..rows {
            let (line, vals) = reader.numbers()?;
            if vals.len() != 1 {
                return Err(reader.err(
                    line,
                    &format!("layer {k} bias row {r}: expected 1 value, got {}", vals.len()),
                ));
            }
            b[r] = vals[0];
        }
        let activation = if k + 1 == num_layers {
            Activation::Identity
        } else {
            Activation::Relu
        };
        layers.push(Layer {
            weights: w,
            bias: b,
            activation,
        });
    }

    // y ↦ y·range_out + mean_out.
    let out_mean = means[input_size];
    let out_range = ranges[input_size];
    let mut denorm_w = Array2::zeros((output_size, output_size));
    for i in 0..output_size {
        denorm_w[(i, i)] = out_range;
    }
    layers.push(Layer {
        weights: denorm_w,
        bias: Array1::from_elem(output_size, out_mean),
        activation: Activation::Identity,
    });

    let bounds = Hyperbox::new(mins, maxes)
        .map_err(|e| NetworkError::Shape(format!("input bounds: {e}")))?;
    Network::with_input_bounds(layers, Some(bounds))
}

/// Line-oriented numeric reader for the NNet format.
struct NnetLines<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a str,
}

impl<'a> NnetLines<'a> {
    fn new(text: &'a str, path: &'a str) -> Self {
        NnetLines {
            lines: text.lines().enumerate(),
            path,
        }
    }

    fn err(&self, line: usize, message: &str) -> NetworkError {
        NetworkError::Parse {
            path: self.path.to_string(),
            line,
            message: message.to_string(),
        }
    }

    /// Next non-comment, non-empty line parsed as comma-separated numbers.
    fn numbers(&mut self) -> Result<(usize, Vec<f64>), NetworkError> {
        for (idx, raw) in self.lines.by_ref() {
            let line_no = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with("//") {
                continue;
            }
            let mut vals = Vec::new();
            for tok in trimmed.split(',') {
                let tok = tok.trim();
                if tok.is_empty() {
                    continue; // trailing comma
                }
                let v: f64 = tok.parse().map_err(|_| NetworkError::Parse {
                    path: self.path.to_string(),
                    line: line_no,
                    message: format!("not a number: {tok:?}"),
                })?;
                vals.push(v);
            }
            if vals.is_empty() {
                continue;
            }
            return Ok((line_no, vals));
        }
        Err(NetworkError::Parse {
            path: self.path.to_string(),
            line: 0,
            message: "unexpected end of file".to_string(),
        })
    }

    fn expect_len(&mut self, len: usize, what: &str) -> Result<(usize, Vec<f64>), NetworkError> {
        let (line, vals) = self.numbers()?;
        if vals.len() != len {
            return Err(self.err(
                line,
                &format!("{what}: expected {len} values, got {}", vals.len()),
            ));
        }
        Ok((line, vals))
    }
}
