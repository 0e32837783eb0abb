//! Versioned JSON checkpoints: every tensor under a flat key such as
//! `phi.layer0.weight`, with its shape, plus activations and the training
//! configuration. Floats round-trip bit-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DtanetModel, NET_NAMES};
use crate::nn::{Activation, DenseNet, Layer};
use crate::trainer::TrainConfig;

pub const FORMAT: &str = "dtanet-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub tensors: BTreeMap<String, Tensor>,
    pub activations: BTreeMap<String, Activation>,
}

impl Checkpoint {
    pub fn from_model(model: &DtanetModel, config: &TrainConfig) -> Self {
        let mut tensors = BTreeMap::new();
        let mut activations = BTreeMap::new();
        for (name, net) in NET_NAMES.iter().zip(model.nets()) {
            for (k, layer) in net.layers().iter().enumerate() {
                let prefix = format!("{name}.layer{k}");
                tensors.insert(
                    format!("{prefix}.weight"),
                    Tensor { shape: vec![layer.out_dim(), layer.in_dim()], data: layer.weight.iter().copied().collect() },
                );
                tensors.insert(
                    format!("{prefix}.bias"),
                    Tensor { shape: vec![layer.out_dim()], data: layer.bias.to_vec() },
                );
                activations.insert(prefix, layer.activation);
            }
        }
        Checkpoint { format: FORMAT.into(), version: VERSION, config: config.clone(), tensors, activations }
    }

    pub fn to_model(&self) -> Result<DtanetModel> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format '{}'", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let mut nets = Vec::with_capacity(NET_NAMES.len());
        let mut used = 0;
        for name in NET_NAMES {
            let mut layers = Vec::new();
            while let Some(activation) = self.activations.get(&format!("{name}.layer{}", layers.len())) {
                let prefix = format!("{name}.layer{}", layers.len());
                let weight = self.tensor(&format!("{prefix}.weight"), 2)?;
                let bias = self.tensor(&format!("{prefix}.bias"), 1)?;
                let weight = Array2::from_shape_vec((weight.shape[0], weight.shape[1]), weight.data.clone())
                    .map_err(|e| Error::Checkpoint(format!("{prefix}.weight: {e}")))?;
                layers.push(Layer { weight, bias: Array1::from(bias.data.clone()), activation: *activation });
                used += 2;
            }
            if layers.is_empty() {
                return Err(Error::Checkpoint(format!("network '{name}' has no layers")));
            }
            nets.push(DenseNet::new(layers).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?);
        }
        if used != self.tensors.len() {
            return Err(Error::Checkpoint(format!("{} unrecognised tensors", self.tensors.len() - used)));
        }
        let mut it = nets.into_iter();
        let mut next = || it.next().expect("five networks");
        DtanetModel::new(next(), next(), next(), next(), next()).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn tensor(&self, key: &str, rank: usize) -> Result<&Tensor> {
        let t = self.tensors.get(key).ok_or_else(|| Error::Checkpoint(format!("missing tensor '{key}'")))?;
        if t.shape.len() != rank || t.shape.iter().product::<usize>() != t.data.len() {
            return Err(Error::Checkpoint(format!("tensor '{key}' has inconsistent shape {:?}", t.shape)));
        }
        Ok(t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
