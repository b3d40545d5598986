use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mlp::{MlpLayer, MlpModel};
use super::SensitivityKind;
use crate::dynamics::Activation;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LayerRecord {
    Rbf { centers: Vec<Vec<f64>>, widths: Vec<f64> },
    Dense { weights: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation },
}

#[derive(Serialize, Deserialize)]
struct Normalization {
    t_scale: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    version: u32,
    system_name: String,
    kind: SensitivityKind,
    arch: String,
    state_dim: usize,
    layers: Vec<LayerRecord>,
    normalization: Normalization,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], path: String) -> Result<DMatrix<f64>> {
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse { path, message: "expected a non-empty rectangular array".into() });
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

fn arch_string(model: &MlpModel) -> String {
    let widths: Vec<String> = model
        .layers
        .iter()
        .map(|l| match l {
            MlpLayer::Rbf { centers, .. } => format!("rbf{}", centers.nrows()),
            MlpLayer::Dense { weights, activation, .. } => {
                format!("{}{}", serde_json::to_value(activation).unwrap().as_str().unwrap(), weights.nrows())
            }
        })
        .collect();
    format!("in{}-{}", model.input_dim(), widths.join("-"))
}

pub fn model_to_json(model: &MlpModel) -> String {
    let record = ModelRecord {
        version: MODEL_FORMAT_VERSION,
        system_name: model.system_name.clone(),
        kind: model.kind,
        arch: arch_string(model),
        state_dim: model.state_dim,
        layers: model
            .layers
            .iter()
            .map(|l| match l {
                MlpLayer::Rbf { centers, widths } => {
                    LayerRecord::Rbf { centers: rows(centers), widths: widths.iter().copied().collect() }
                }
                MlpLayer::Dense { weights, bias, activation } => LayerRecord::Dense {
                    weights: rows(weights),
                    bias: bias.iter().copied().collect(),
                    activation: *activation,
                },
            })
            .collect(),
        normalization: Normalization { t_scale: model.t_scale },
    };
    serde_json::to_string(&record).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<MlpModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == MODEL_FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Parse {
                path: "version".into(),
                message: format!("unsupported model format version {v}, expected {MODEL_FORMAT_VERSION}"),
            })
        }
        None => return Err(Error::Parse { path: "version".into(), message: "missing version field".into() }),
    }
    let record: ModelRecord = serde_path_to_error::deserialize(value)
        .map_err(|e| Error::Parse { path: e.path().to_string(), message: e.inner().to_string() })?;
    let layers = record
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, l)| match l {
            LayerRecord::Rbf { centers, widths } => Ok(MlpLayer::Rbf {
                centers: matrix(&centers, format!("layers[{i}].centers"))?,
                widths: DVector::from_vec(widths),
            }),
            LayerRecord::Dense { weights, bias, activation } => Ok(MlpLayer::Dense {
                weights: matrix(&weights, format!("layers[{i}].weights"))?,
                bias: DVector::from_vec(bias),
                activation,
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, l) in layers.iter().enumerate() {
        let (rows, extra) = match l {
            MlpLayer::Rbf { centers, widths } => (centers.nrows(), widths.len()),
            MlpLayer::Dense { weights, bias, .. } => (weights.nrows(), bias.len()),
        };
        if rows != extra {
            return Err(Error::Parse { path: format!("layers[{i}]"), message: "row count mismatch".into() });
        }
    }
    let model = MlpModel {
        system_name: record.system_name,
        kind: record.kind,
        state_dim: record.state_dim,
        t_scale: record.normalization.t_scale,
        layers,
    };
    model.validate().map_err(|e| Error::Parse { path: "layers".into(), message: e.to_string() })?;
    Ok(model)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}
