//! Feed-forward policy network and its JSON weight file.
//!
//! File layout:
//!
//! ```json
//! {"k_neighbors": 4,
//!  "layer_sizes": [18, 16, 16, 8, 8, 4, 2],
//!  "layers": [{"w": [[...], ...], "b": [...], "activation": "tanh"}, ...],
//!  "output": "softmax-2"}
//! ```
//!
//! `w` is stored row-major with one row per output unit, so a layer maps
//! `x` to `act(w·x + b)`. The final layer yields two logits (unicast,
//! broadcast) that are normalized with a softmax.

use std::fs;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::observation::Observation;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("weights not found: {0}")]
    NotFound(String),
    #[error("cannot read weights: {0}")]
    Io(#[from] std::io::Error),
    #[error("weight file schema error: {0}")]
    Schema(String),
    #[error("weight dimension error: {0}")]
    Dimension(String),
    #[error("non-finite weight value in {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }
}

/// A real that also accepts the `"NaN"`/`"Infinity"` spellings some JSON
/// writers emit, so they can be rejected with a precise error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
struct Real(f64);

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(Real(v)),
            Raw::Text(s) => match s.as_str() {
                "NaN" | "nan" => Ok(Real(f64::NAN)),
                "Infinity" | "inf" => Ok(Real(f64::INFINITY)),
                "-Infinity" | "-inf" => Ok(Real(f64::NEG_INFINITY)),
                other => Err(de::Error::custom(format!(
                    "expected a number, got {other:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    w: Vec<Vec<Real>>,
    b: Vec<Real>,
    activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    k_neighbors: usize,
    layer_sizes: Vec<usize>,
    layers: Vec<LayerFile>,
    output: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| {
                let z = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
                self.activation.apply(z)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightFile", into = "WeightFile")]
pub struct PolicyWeights {
    pub k_neighbors: usize,
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<DenseLayer>,
}

impl TryFrom<WeightFile> for PolicyWeights {
    type Error = WeightsError;

    fn try_from(file: WeightFile) -> Result<Self, Self::Error> {
        if file.output != "softmax-2" {
            return Err(WeightsError::Schema(format!(
                "unsupported output {:?}, expected \"softmax-2\"",
                file.output
            )));
        }
        let sizes = &file.layer_sizes;
        if sizes.len() < 2 {
            return Err(WeightsError::Dimension(
                "need at least input and output sizes".into(),
            ));
        }
        let expected_input = Observation::width(file.k_neighbors);
        if sizes[0] != expected_input {
            return Err(WeightsError::Dimension(format!(
                "input size {} does not match 4K+2 = {expected_input}",
                sizes[0]
            )));
        }
        if *sizes.last().unwrap_or(&0) != 2 {
            return Err(WeightsError::Dimension(
                "output layer must have 2 units".into(),
            ));
        }
        if file.layers.len() != sizes.len() - 1 {
            return Err(WeightsError::Dimension(format!(
                "{} layers given for {} layer sizes",
                file.layers.len(),
                sizes.len()
            )));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for (idx, layer) in file.layers.into_iter().enumerate() {
            let (inputs, outputs) = (sizes[idx], sizes[idx + 1]);
            if layer.w.len() != outputs || layer.w.iter().any(|row| row.len() != inputs) {
                return Err(WeightsError::Dimension(format!(
                    "layer {idx}: weight matrix must be {outputs}x{inputs}"
                )));
            }
            if layer.b.len() != outputs {
                return Err(WeightsError::Dimension(format!(
                    "layer {idx}: bias length {} != {outputs}",
                    layer.b.len()
                )));
            }
            let weights: Vec<f64> = layer.w.iter().flatten().map(|r| r.0).collect();
            let bias: Vec<f64> = layer.b.iter().map(|r| r.0).collect();
            if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
                return Err(WeightsError::NonFinite(format!("layer {idx}")));
            }
            layers.push(DenseLayer {
                inputs,
                outputs,
                weights,
                bias,
                activation: layer.activation,
            });
        }
        Ok(PolicyWeights {
            k_neighbors: file.k_neighbors,
            layer_sizes: file.layer_sizes,
            layers,
        })
    }
}

impl From<PolicyWeights> for WeightFile {
    fn from(w: PolicyWeights) -> Self {
        WeightFile {
            k_neighbors: w.k_neighbors,
            layer_sizes: w.layer_sizes,
            layers: w
                .layers
                .into_iter()
                .map(|l| LayerFile {
                    w: l.weights
                        .chunks_exact(l.inputs)
                        .map(|row| row.iter().copied().map(Real).collect())
                        .collect(),
                    b: l.bias.into_iter().map(Real).collect(),
                    activation: l.activation,
                })
                .collect(),
            output: "softmax-2".into(),
        }
    }
}

/// Quote bare `NaN` / `Infinity` / `-Infinity` tokens (outside strings) so a
/// standard JSON parser accepts them.
fn quote_nonstandard_numbers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = text;
    while let Some(ch) = rest.chars().next() {
        if in_string {
            out.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            rest = &rest[ch.len_utf8()..];
            continue;
        }
        if ch == '"' {
            in_string = true;
        }
        let token = ["-Infinity", "Infinity", "NaN"]
            .into_iter()
            .find(|t| rest.starts_with(t));
        if let Some(t) = token {
            out.push('"');
            out.push_str(t);
            out.push('"');
            rest = &rest[t.len()..];
        } else {
            out.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
    }
    out
}

impl PolicyWeights {
    pub fn from_json_str(text: &str) -> Result<Self, WeightsError> {
        let cleaned = quote_nonstandard_numbers(text);
        let file: WeightFile =
            serde_json::from_str(&cleaned).map_err(|e| WeightsError::Schema(e.to_string()))?;
        PolicyWeights::try_from(file)
    }

    pub fn load(path: &Path) -> Result<Self, WeightsError> {
        if !path.exists() {
            return Err(WeightsError::NotFound(path.display().to_string()));
        }
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&WeightFile::from(self.clone()))
            .expect("weight file always serializes")
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    /// All-zero network of the given shape: the uniform policy.
    pub fn zeros(k_neighbors: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![Observation::width(k_neighbors)];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(idx, pair)| DenseLayer {
                inputs: pair[0],
                outputs: pair[1],
                weights: vec![0.0; pair[0] * pair[1]],
                bias: vec![0.0; pair[1]],
                activation: if idx + 2 == sizes.len() {
                    Activation::Linear
                } else {
                    Activation::Tanh
                },
            })
            .collect();
        Self {
            k_neighbors,
            layer_sizes: sizes,
            layers,
        }
    }
}

/// `(p_unicast, p_broadcast)` for one observation.
pub fn forward(weights: &PolicyWeights, obs: &Observation) -> Result<(f64, f64), WeightsError> {
    forward_features(weights, &obs.features())
}

pub fn forward_features(
    weights: &PolicyWeights,
    features: &[f64],
) -> Result<(f64, f64), WeightsError> {
    if features.len() != weights.input_width() {
        return Err(WeightsError::Dimension(format!(
            "observation width {} != network input {}",
            features.len(),
            weights.input_width()
        )));
    }
    let mut x = features.to_vec();
    for layer in &weights.layers {
        x = layer.forward(&x);
    }
    let m = x[0].max(x[1]);
    let e0 = (x[0] - m).exp();
    let e1 = (x[1] - m).exp();
    let total = e0 + e1;
    Ok((e0 / total, e1 / total))
}
