//! JSON checkpoints: dimensions, feature registry, scaler statistics and
//! named row-major tensors. Floats are written with round-trip precision so
//! a reload reproduces predictions bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelParams, Parameters};
use super::{GcnActivation, ModelDims};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CHECKPOINT_FORMAT: &str = "sa-mgcrn-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Min-max statistics used to scale inputs: per tract for demand, per
/// feature column for the temporal features.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub demand_min: Vec<f64>,
    pub demand_max: Vec<f64>,
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub dims: ModelDims,
    pub activation: GcnActivation,
    pub tract_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub scaler: ScalerStats,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn new<P: Parameters>(
        dims: ModelDims,
        activation: GcnActivation,
        tract_ids: Vec<String>,
        feature_names: Vec<String>,
        scaler: ScalerStats,
        params: &P,
    ) -> Self {
        let tensors = params
            .tensors()
            .into_iter()
            .map(|(name, m)| TensorRecord {
                name: name.to_string(),
                shape: [m.rows(), m.cols()],
                data: m.as_slice().to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            dims,
            activation,
            tract_ids,
            feature_names,
            scaler,
            tensors,
        }
    }

    /// Copies the stored tensors into `target`, checking names and shapes.
    pub fn load_into<P: Parameters>(&self, target: &mut P) -> Result<()> {
        let slots = target.tensors_mut();
        if slots.len() != self.tensors.len() {
            return Err(Error::Dimension {
                context: "checkpoint tensor count",
                expected: slots.len().to_string(),
                actual: self.tensors.len().to_string(),
            });
        }
        for ((name, slot), rec) in slots.into_iter().zip(&self.tensors) {
            if rec.name != name {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {} where {name} was expected",
                    rec.name
                )));
            }
            if [slot.rows(), slot.cols()] != rec.shape || rec.data.len() != rec.shape[0] * rec.shape[1] {
                return Err(Error::Dimension {
                    context: "checkpoint tensor shape",
                    expected: format!("{name} {}x{}", slot.rows(), slot.cols()),
                    actual: format!("{}x{} ({} values)", rec.shape[0], rec.shape[1], rec.data.len()),
                });
            }
            *slot = Matrix::from_vec(rec.shape[0], rec.shape[1], rec.data.clone());
        }
        Ok(())
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        self.dims.validate()?;
        let mut p = ModelParams::zeros(&self.dims);
        self.load_into(&mut p)?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::invalid(format!("unsupported checkpoint format {:?}", ck.format)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn dims() -> ModelDims {
        ModelDims {
            n_nodes: 3,
            seq_len: 4,
            n_temporal: 2,
            in_channels: 1,
            gcn_hidden: 3,
            gcn_out: 2,
            gru_hidden: 5,
            horizon: 2,
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let d = dims();
        let p = ModelParams::init(&d, &mut ChaCha8Rng::seed_from_u64(9));
        let ck = Checkpoint::new(
            d,
            GcnActivation::Softmax,
            vec!["a".into(), "b".into(), "c".into()],
            vec!["f1".into(), "f2".into()],
            ScalerStats {
                demand_min: vec![0.1, 1.0 / 3.0, 0.0],
                demand_max: vec![1.0, 2.0, 3.0],
                feature_min: vec![-1.0, 0.0],
                feature_max: vec![1.0, std::f64::consts::PI],
            },
            &p,
        );
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        let q = back.model_params().unwrap();
        for ((_, a), (_, b)) in p.tensors().iter().zip(q.tensors()) {
            let bits_a: Vec<u64> = a.as_slice().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.as_slice().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn rejects_wrong_shape_and_format() {
        let d = dims();
        let p = ModelParams::zeros(&d);
        let mut ck = Checkpoint::new(d, GcnActivation::Linear, vec![], vec![], ScalerStats::default(), &p);
        ck.tensors[2].shape = [1, 1];
        assert!(ck.model_params().is_err());
        ck.format = "other".into();
        assert!(Checkpoint::from_json(&ck.to_json().unwrap()).is_err());
    }
}
