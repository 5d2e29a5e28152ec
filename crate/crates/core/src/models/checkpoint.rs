//! JSON checkpoints holding everything needed to rebuild a trained model.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::AblationFlags;
use crate::error::{Error, Result};

use super::train::{ModelKind, NetworkSpec, Normalizer, TrainConfig, TrainedModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    pub flags: AblationFlags,
    pub config: TrainConfig,
    pub spec: NetworkSpec,
    pub normalizer: Option<Normalizer>,
    pub params: Vec<Vec<f32>>,
}

impl Checkpoint {
    pub fn from_model(m: &TrainedModel) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            kind: m.kind,
            flags: m.flags,
            config: m.config.clone(),
            spec: m.spec.clone(),
            normalizer: m.normalizer.clone(),
            params: m.network.export(),
        }
    }

    pub fn into_model(self) -> Result<TrainedModel> {
        let mut network = self.spec.build(&mut ChaCha8Rng::seed_from_u64(0))?;
        network.import(&self.params)?;
        Ok(TrainedModel {
            kind: self.kind,
            flags: self.flags,
            config: self.config,
            spec: self.spec,
            normalizer: self.normalizer,
            network,
        })
    }
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&Checkpoint::from_model(self)).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::format(path, format!("unsupported checkpoint version {}", ck.format_version)));
        }
        ck.into_model().map_err(|e| Error::format(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::train::Network;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        for kind in [ModelKind::Mlp, ModelKind::PathCnn, ModelKind::Unet] {
            let config = TrainConfig {
                image_size: 16,
                unet_levels: 2,
                unet_base_width: 4,
                ..TrainConfig::for_kind(kind)
            };
            let flags = AblationFlags::default();
            let spec = NetworkSpec::for_model(kind, flags, &config);
            let mut network = spec.build(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            if let Network::Mlp(n) = &mut network {
                // values that need all nine significant digits
                n.layers[0].bias.value[0] = 0.1 + f32::EPSILON;
                n.layers[0].bias.value[1] = -1.234_567_9e-30;
            }
            let model = TrainedModel {
                kind,
                flags,
                config,
                spec,
                normalizer: Some(Normalizer {
                    input_mean: vec![0.1, 1.0 / 3.0],
                    input_std: vec![2.0_f64.sqrt(), 1e-300],
                    target_mean: [50.123456789012345, -0.0],
                    target_scale: std::f64::consts::PI,
                }),
                network,
            };
            model.save(&path).unwrap();
            let back = TrainedModel::load(&path).unwrap();
            let a = model.network.export();
            let b = back.network.export();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
            assert_eq!(Checkpoint::from_model(&model), Checkpoint::from_model(&back));
        }
    }

    #[test]
    fn corrupt_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(TrainedModel::load(&path), Err(crate::Error::Format { .. })));
        assert!(matches!(TrainedModel::load(&dir.path().join("none.json")), Err(crate::Error::Io { .. })));
    }
}
