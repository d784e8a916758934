//! Versioned JSON container for trained models.
//!
//! Weights are stored as named tensors in the order of
//! [`NetworkConfig::param_shapes`](super::network::NetworkConfig::param_shapes).
//! Floats are written in shortest round-trip form, so save → load is exact
//! and identical models serialise to identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::Standardization;
use super::network::{HeadScales, NetworkConfig, NetworkParameters};
use super::tape::Tensor;
use super::train::{TrainConfig, TrainedModel};
use crate::signal::ArrayGeometry;
use crate::{Error, Result};

pub const FORMAT_NAME: &str = "aodlab-model";
pub const FORMAT_VERSION: u32 = 1;

const PARAM_NAMES: [&str; 10] =
    ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias", "head.weight", "head.bias"];

#[derive(Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    geometry: ArrayGeometry,
    network: NetworkConfig,
    standardization: Standardization,
    head_scales: HeadScales,
    train_config: TrainConfig,
    weights: Vec<NamedTensor>,
}

pub fn model_to_string(model: &TrainedModel) -> Result<String> {
    let file = ModelFile {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        geometry: model.geometry,
        network: *model.params.config(),
        standardization: model.standardization,
        head_scales: model.scales,
        train_config: model.train_config,
        weights: model
            .params
            .tensors()
            .iter()
            .zip(PARAM_NAMES)
            .map(|(t, name)| NamedTensor { name: name.into(), shape: t.shape.clone(), data: t.data.clone() })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_str(s: &str) -> Result<TrainedModel> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let header: Header = serde_json::from_str(s)?;
    if header.format != FORMAT_NAME {
        return Err(Error::ModelFormat(format!("not a model file (format '{}')", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("version {} unsupported, expected {FORMAT_VERSION}", header.version)));
    }
    let file: ModelFile = serde_json::from_str(s)?;
    let g = file.geometry;
    let geometry = ArrayGeometry::new(g.num_antennas(), g.spacing_over_wavelength(), g.carrier_freq())?;
    if file.network.num_antennas != geometry.num_antennas() {
        return Err(Error::ModelFormat("network and geometry disagree on the antenna count".into()));
    }
    for (t, name) in file.weights.iter().zip(PARAM_NAMES) {
        if t.name != name {
            return Err(Error::ModelFormat(format!("expected tensor '{name}', found '{}'", t.name)));
        }
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(Error::ModelFormat(format!("tensor '{name}' has {} values for shape {:?}", t.data.len(), t.shape)));
        }
    }
    let tensors = file.weights.into_iter().map(|t| Tensor::new(t.shape, t.data)).collect();
    let params = NetworkParameters::from_tensors(file.network, tensors)?;
    Ok(TrainedModel {
        geometry,
        params,
        standardization: file.standardization,
        scales: file.head_scales,
        train_config: file.train_config,
    })
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    model_from_str(&fs::read_to_string(path)?)
}
