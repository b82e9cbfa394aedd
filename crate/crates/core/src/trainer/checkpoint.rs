use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, Params, StudentModel};
use super::{TrainConfig, TrainError};
use crate::sentiment::{Polarity, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// On-disk form of a trained student.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub n: usize,
    pub h: usize,
    pub class_order: Vec<String>,
    pub params: BTreeMap<String, TensorData>,
    pub train_config: TrainConfig,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_model(model: &StudentModel, config: &TrainConfig) -> Self {
        let m = match model.architecture {
            Architecture::Linear => model.n,
            Architecture::Mlp1 => model.h,
        };
        let mut params = BTreeMap::new();
        let shapes = [
            ("w1", vec![model.n, model.h]),
            ("b1", vec![model.h]),
            ("w2", vec![m, NUM_CLASSES]),
            ("b2", vec![NUM_CLASSES]),
        ];
        for ((name, data), (_, shape)) in model.params.tensors().into_iter().zip(shapes) {
            if model.architecture == Architecture::Linear && (name == "w1" || name == "b1") {
                continue;
            }
            params.insert(
                name.to_string(),
                TensorData {
                    shape,
                    data: data.to_vec(),
                },
            );
        }
        Checkpoint {
            architecture: model.architecture,
            n: model.n,
            h: model.h,
            class_order: Polarity::ALL.iter().map(|p| p.as_str().to_string()).collect(),
            params,
            train_config: config.clone(),
            seed: config.seed,
        }
    }

    pub fn to_model(&self) -> Result<StudentModel, TrainError> {
        let expected: Vec<String> = Polarity::ALL.iter().map(|p| p.as_str().to_string()).collect();
        if self.class_order != expected {
            return Err(TrainError::Checkpoint(format!(
                "unsupported class order {:?}",
                self.class_order
            )));
        }
        let take = |name: &str, shape: Vec<usize>| -> Result<Vec<f64>, TrainError> {
            let t = self
                .params
                .get(name)
                .ok_or_else(|| TrainError::Checkpoint(format!("missing tensor `{name}`")))?;
            let len: usize = shape.iter().product();
            if t.shape != shape || t.data.len() != len {
                return Err(TrainError::Checkpoint(format!(
                    "tensor `{name}` has shape {:?} with {} values, expected {shape:?}",
                    t.shape,
                    t.data.len()
                )));
            }
            if t.data.iter().any(|x| !x.is_finite()) {
                return Err(TrainError::Checkpoint(format!("tensor `{name}` is not finite")));
            }
            Ok(t.data.clone())
        };
        let params = match self.architecture {
            Architecture::Linear => Params {
                w1: Vec::new(),
                b1: Vec::new(),
                w2: take("w2", vec![self.n, NUM_CLASSES])?,
                b2: take("b2", vec![NUM_CLASSES])?,
            },
            Architecture::Mlp1 => Params {
                w1: take("w1", vec![self.n, self.h])?,
                b1: take("b1", vec![self.h])?,
                w2: take("w2", vec![self.h, NUM_CLASSES])?,
                b2: take("b2", vec![NUM_CLASSES])?,
            },
        };
        Ok(StudentModel {
            architecture: self.architecture,
            n: self.n,
            h: if self.architecture == Architecture::Linear { 0 } else { self.h },
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        fs::write(path, json).map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn models_survive_a_save_load_cycle() {
        let dir = tempfile::tempdir().unwrap();
        let config = TrainConfig::default();
        let mut linear = StudentModel::linear(3);
        linear.params.w2[4] = 0.1 + 0.2;
        for model in [linear, StudentModel::mlp1(5, 7, 3)] {
            let path = dir.path().join("ckpt.json");
            Checkpoint::from_model(&model, &config).save(&path).unwrap();
            let back = Checkpoint::load(&path).unwrap().to_model().unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut ckpt = Checkpoint::from_model(&StudentModel::linear(3), &TrainConfig::default());
        ckpt.params.get_mut("w2").unwrap().data.pop();
        assert!(ckpt.to_model().is_err());
        let mut ckpt = Checkpoint::from_model(&StudentModel::linear(3), &TrainConfig::default());
        ckpt.class_order.reverse();
        assert!(ckpt.to_model().is_err());
    }
}
