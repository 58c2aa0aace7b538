//! Trained-model persistence in the binary container.
//!
//! Parameters are stored flattened as one row of `f64` with the
//! transmitter first; the metadata blob records the architecture needed
//! to rebuild the parameter structures.

use std::path::Path;

use imdd_core::autoencoder::{AeConfig, AeParams, RxParams};
use imdd_core::nn::Parameters;
use imdd_core::pamsys::{SffnnParams, VolterraCoeffs};
use imdd_core::rng::{stream, Domain};
use serde::{Deserialize, Serialize};

use crate::config::Scheme;
use crate::error::{config_err, HarnessError};
use crate::format::{self, Container, FileKind, FormatError};

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Autoencoder(AeParams),
    /// BRNN transmitter (with its model-trained BRNN receiver) plus a
    /// feed-forward receiver trained on recorded data.
    AutoencoderSffnn {
        ae: AeParams,
        sffnn: SffnnParams,
    },
    Sffnn(SffnnParams),
    Sbrnn(RxParams),
    Volterra(VolterraCoeffs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Architecture {
    Autoencoder {
        ae: AeConfig,
    },
    AutoencoderSffnn {
        ae: AeConfig,
        window: usize,
    },
    Sffnn {
        window: usize,
        samples_per_symbol: usize,
        classes: usize,
    },
    Sbrnn {
        block_len: usize,
        classes: usize,
    },
    Volterra {
        window: usize,
        quadratic_window: usize,
        samples_per_symbol: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    scheme: Scheme,
    architecture: Architecture,
    /// Number of leading values that belong to the transmitter.
    tx_params: usize,
    seed: u64,
    config_hash: String,
}

fn ae_config(p: &AeParams) -> AeConfig {
    AeConfig {
        alphabet_size: p.alphabet_size(),
        samples_per_block: p.samples_per_block(),
        ..AeConfig::default()
    }
}

impl Model {
    fn architecture(&self) -> Architecture {
        match self {
            Model::Autoencoder(p) => Architecture::Autoencoder { ae: ae_config(p) },
            Model::AutoencoderSffnn { ae, sffnn } => Architecture::AutoencoderSffnn {
                ae: ae_config(ae),
                window: sffnn.window,
            },
            Model::Sffnn(p) => Architecture::Sffnn {
                window: p.window,
                samples_per_symbol: p.samples_per_symbol,
                classes: p.classes(),
            },
            Model::Sbrnn(p) => Architecture::Sbrnn {
                block_len: p.block_len(),
                classes: p.classes(),
            },
            Model::Volterra(c) => Architecture::Volterra {
                window: c.window,
                quadratic_window: c.quadratic_window,
                samples_per_symbol: c.samples_per_symbol,
            },
        }
    }

    pub fn tx_param_count(&self) -> usize {
        match self {
            Model::Autoencoder(p) | Model::AutoencoderSffnn { ae: p, .. } => p.tx_param_count(),
            _ => 0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        match self {
            Model::Autoencoder(p) => p.flatten(),
            Model::AutoencoderSffnn { ae, sffnn } => {
                let mut v = ae.flatten();
                v.extend(sffnn.flatten());
                v
            }
            Model::Sffnn(p) => p.flatten(),
            Model::Sbrnn(p) => p.flatten(),
            Model::Volterra(c) => {
                let mut v = vec![c.dc];
                v.extend_from_slice(&c.linear);
                v.extend_from_slice(&c.quadratic);
                v
            }
        }
    }

    fn rebuild(arch: &Architecture, flat: &[f64]) -> Result<Model, imdd_core::Error> {
        // Shapes come from a throwaway initialization; every value is then overwritten.
        let mut rng = stream(0, Domain::Init, 0);
        Ok(match arch {
            Architecture::Autoencoder { ae } => {
                let mut p = AeParams::init(ae, &mut rng)?;
                p.load_flat(flat)?;
                Model::Autoencoder(p)
            }
            Architecture::AutoencoderSffnn { ae, window } => {
                let mut p = AeParams::init(ae, &mut rng)?;
                let k = p.num_params();
                if flat.len() < k {
                    return Err(imdd_core::Error::Shape {
                        what: "model parameters",
                        expected: k,
                        got: flat.len(),
                    });
                }
                p.load_flat(&flat[..k])?;
                let mut s = SffnnParams::init(*window, ae.samples_per_block, ae.alphabet_size, &mut rng)?;
                s.load_flat(&flat[k..])?;
                Model::AutoencoderSffnn { ae: p, sffnn: s }
            }
            Architecture::Sffnn {
                window,
                samples_per_symbol,
                classes,
            } => {
                let mut s = SffnnParams::init(*window, *samples_per_symbol, *classes, &mut rng)?;
                s.load_flat(flat)?;
                Model::Sffnn(s)
            }
            Architecture::Sbrnn { block_len, classes } => {
                let mut p = RxParams::init(*block_len, *classes, &mut rng);
                p.load_flat(flat)?;
                Model::Sbrnn(p)
            }
            Architecture::Volterra {
                window,
                quadratic_window,
                samples_per_symbol,
            } => {
                let mut c = VolterraCoeffs::identity(*window, *quadratic_window, *samples_per_symbol)?;
                let nl = c.linear.len();
                if flat.len() != 1 + nl + c.quadratic.len() {
                    return Err(imdd_core::Error::Shape {
                        what: "Volterra coefficients",
                        expected: 1 + nl + c.quadratic.len(),
                        got: flat.len(),
                    });
                }
                c.dc = flat[0];
                c.linear.copy_from_slice(&flat[1..1 + nl]);
                c.quadratic.copy_from_slice(&flat[1 + nl..]);
                Model::Volterra(c)
            }
        })
    }
}

/// A model together with the scheme and provenance it was produced under.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub scheme: Scheme,
    pub model: Model,
    pub seed: u64,
    pub config_hash: String,
}

impl StoredModel {
    pub fn to_container(&self) -> Container {
        let data = self.model.flatten();
        let meta = ModelMeta {
            scheme: self.scheme,
            architecture: self.model.architecture(),
            tx_params: self.model.tx_param_count(),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
        };
        Container {
            kind: FileKind::Model,
            scheme: self.scheme.tag() as u8,
            rows: 1,
            columns: data.len() as u32,
            block_len: 1,
            data,
            labels: Vec::new(),
            metadata: serde_json::to_string(&meta).expect("model metadata serializes"),
        }
    }

    pub fn from_container(c: Container) -> Result<Self, FormatError> {
        let meta: ModelMeta = serde_json::from_str(&c.metadata).map_err(|e| FormatError::Corrupt(format!("model metadata: {e}")))?;
        let model = Model::rebuild(&meta.architecture, &c.data).map_err(|e| FormatError::Corrupt(e.to_string()))?;
        if model.tx_param_count() != meta.tx_params {
            return Err(FormatError::Corrupt("transmitter section size disagrees with metadata".into()));
        }
        Ok(StoredModel {
            scheme: meta.scheme,
            model,
            seed: meta.seed,
            config_hash: meta.config_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        format::write_bytes(path, &self.to_container().encode())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let c = format::read_container(path, FileKind::Model)?;
        Self::from_container(c).map_err(|e| HarnessError::Format {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn expect_scheme(&self, scheme: Scheme) -> Result<(), HarnessError> {
        if self.scheme == scheme {
            Ok(())
        } else {
            Err(config_err(format!(
                "model was produced for scheme {} but the configuration selects {}",
                self.scheme.name(),
                scheme.name()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use imdd_core::pamsys::SffnnParams;

    fn round_trip(m: Model, scheme: Scheme) {
        let s = StoredModel {
            scheme,
            model: m,
            seed: 9,
            config_hash: "abc".into(),
        };
        let bytes = s.to_container().encode();
        let back = StoredModel::from_container(Container::decode(&bytes).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn every_model_kind_round_trips() {
        let mut rng = stream(3, Domain::Init, 0);
        let cfg = AeConfig {
            alphabet_size: 8,
            samples_per_block: 4,
            ..AeConfig::default()
        };
        let ae = AeParams::init(&cfg, &mut rng).unwrap();
        round_trip(Model::Autoencoder(ae.clone()), Scheme::AeSbrnn);
        let sffnn = SffnnParams::init(3, 4, 8, &mut rng).unwrap();
        round_trip(Model::AutoencoderSffnn { ae, sffnn }, Scheme::AeTxBrnnRxSffnn);
        round_trip(Model::Sffnn(SffnnParams::init(5, 2, 4, &mut rng).unwrap()), Scheme::Pam4Sffnn);
        round_trip(Model::Sbrnn(RxParams::init(2, 2, &mut rng)), Scheme::Pam2Sbrnn);
        let mut v = VolterraCoeffs::identity(5, 3, 2).unwrap();
        v.dc = 0.25;
        v.quadratic[4] = -1.5;
        round_trip(Model::Volterra(v), Scheme::Pam2Volterra);
    }

    #[test]
    fn transmitter_is_a_prefix() {
        let cfg = AeConfig {
            alphabet_size: 4,
            samples_per_block: 4,
            ..AeConfig::default()
        };
        let ae = AeParams::init(&cfg, &mut stream(1, Domain::Init, 0)).unwrap();
        let flat = Model::Autoencoder(ae.clone()).flatten();
        assert_eq!(&flat[..ae.tx_param_count()], ae.tx.flatten().as_slice());
    }
}
