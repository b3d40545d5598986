use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Linear => x,
        }
    }
}

/// One fully connected layer `act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::input(format!(
                "layer has {} output rows but bias of length {}",
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("layer parameters must be finite"));
        }
        Ok(Self { weights, bias, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Feedforward state-feedback controller `u = g(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralController {
    layers: Vec<DenseLayer>,
}

impl NeuralController {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::input("controller needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::input(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(DenseLayer::output_dim).unwrap_or(0)
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::input(format!("controller expects {} inputs, got {}", self.input_dim(), x.len())));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut h = x.clone();
        for layer in &self.layers {
            let mut z = &layer.weights * &h + &layer.bias;
            z.apply(|v| *v = layer.activation.apply(*v));
            h = z;
        }
        h
    }
}

/// On-disk layer layout: row-major weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRecord {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ControllerRecord {
    layers: Vec<LayerRecord>,
}

impl LayerRecord {
    fn into_layer(self, index: usize) -> Result<DenseLayer> {
        let rows = self.weights.len();
        let cols = self.weights.first().map(Vec::len).unwrap_or(0);
        if rows == 0 || cols == 0 || self.weights.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse {
                path: format!("layers[{index}].weights"),
                message: "weights must be a non-empty rectangular array".into(),
            });
        }
        let flat: Vec<f64> = self.weights.into_iter().flatten().collect();
        DenseLayer::new(DMatrix::from_row_slice(rows, cols, &flat), DVector::from_vec(self.bias), self.activation)
            .map_err(|e| Error::Parse { path: format!("layers[{index}]"), message: e.to_string() })
    }

    fn from_layer(layer: &DenseLayer) -> Self {
        Self {
            weights: layer.weights.row_iter().map(|r| r.iter().copied().collect()).collect(),
            bias: layer.bias.iter().copied().collect(),
            activation: layer.activation,
        }
    }
}

impl NeuralController {
    pub fn from_json(text: &str) -> Result<Self> {
        // A bare layer list is accepted as shorthand for `{"layers": [...]}`.
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        if value.is_array() {
            value = serde_json::json!({ "layers": value });
        }
        let record: ControllerRecord = serde_path_to_error::deserialize(value)
            .map_err(|e| Error::Parse { path: e.path().to_string(), message: e.inner().to_string() })?;
        let layers = record.layers.into_iter().enumerate().map(|(i, r)| r.into_layer(i)).collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn to_json(&self) -> String {
        let record = ControllerRecord { layers: self.layers.iter().map(LayerRecord::from_layer).collect() };
        serde_json::to_string_pretty(&record).expect("controller serializes")
    }
}
