//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use imdd_core::autoencoder::{AeConfig, Schedule};
use imdd_core::channel::LinkConfig;
use imdd_core::datasets::SchemeTag;
use imdd_core::nn::AdamConfig;
use imdd_core::pamsys::PamConfig;
use imdd_core::rng::GeneratorKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, io_err, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    AeSbrnn,
    AeTxBrnnRxSffnn,
    Pam2Sffnn,
    Pam4Sffnn,
    Pam2Sbrnn,
    Pam2Volterra,
    Pam4Volterra,
}

/// Receiver family used at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    Sbrnn,
    Sffnn,
    Volterra,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::AeSbrnn => "ae_sbrnn",
            Scheme::AeTxBrnnRxSffnn => "ae_tx_brnn_rx_sffnn",
            Scheme::Pam2Sffnn => "pam2_sffnn",
            Scheme::Pam4Sffnn => "pam4_sffnn",
            Scheme::Pam2Sbrnn => "pam2_sbrnn",
            Scheme::Pam2Volterra => "pam2_volterra",
            Scheme::Pam4Volterra => "pam4_volterra",
        }
    }

    pub fn is_autoencoder(self) -> bool {
        matches!(self, Scheme::AeSbrnn | Scheme::AeTxBrnnRxSffnn)
    }

    /// PAM order, `None` for auto-encoder schemes.
    pub fn pam_order(self) -> Option<usize> {
        match self {
            Scheme::Pam2Sffnn | Scheme::Pam2Sbrnn | Scheme::Pam2Volterra => Some(2),
            Scheme::Pam4Sffnn | Scheme::Pam4Volterra => Some(4),
            _ => None,
        }
    }

    pub fn receiver(self) -> Receiver {
        match self {
            Scheme::AeSbrnn | Scheme::Pam2Sbrnn => Receiver::Sbrnn,
            Scheme::AeTxBrnnRxSffnn | Scheme::Pam2Sffnn | Scheme::Pam4Sffnn => Receiver::Sffnn,
            Scheme::Pam2Volterra | Scheme::Pam4Volterra => Receiver::Volterra,
        }
    }

    pub fn tag(self) -> SchemeTag {
        match self.pam_order() {
            None => SchemeTag::Autoencoder,
            Some(2) => SchemeTag::Pam2,
            Some(_) => SchemeTag::Pam4,
        }
    }
}

/// Receiver windows of the PAM systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PamSettings {
    /// Processing window `W` in symbols (SFFNN input, SBRNN estimation,
    /// Volterra linear memory).
    pub window: usize,
    /// Volterra quadratic memory `W1`.
    pub quadratic_window: usize,
    /// SBRNN training window `V`.
    pub training_window: usize,
    /// Dataset rows the Volterra filter is fitted on, picked at random.
    pub volterra_rows: usize,
}

impl Default for PamSettings {
    fn default() -> Self {
        PamSettings {
            window: 61,
            quadratic_window: 21,
            training_window: 61,
            volterra_rows: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    /// Model-based step budget.
    pub steps: usize,
    pub batch_size: usize,
    pub guard_blocks: Option<usize>,
    pub learning_rate: f64,
    pub max_grad_norm: Option<f64>,
    /// Learning rate for training on recorded data; defaults to `learning_rate`.
    pub data_learning_rate: Option<f64>,
    /// Fiber length of the channel model used for end-to-end training;
    /// defaults to the link distance.
    pub model_distance_km: Option<f64>,
    /// Odd block window of the SFFNN receiver paired with the BRNN transmitter.
    pub ae_sffnn_window: usize,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        TrainingSettings {
            steps: 20_000,
            batch_size: 32,
            guard_blocks: None,
            learning_rate: 1e-3,
            max_grad_norm: None,
            data_learning_rate: None,
            model_distance_km: None,
            ae_sffnn_window: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    /// Sequences (auto-encoder) or DAC loads (PAM); scheme default when unset.
    pub sequences: Option<usize>,
    /// Messages per sequence or symbols per load; scheme default when unset.
    pub sequence_len: Option<usize>,
    pub generator: GeneratorKind,
}

impl Default for DataSettings {
    fn default() -> Self {
        DataSettings {
            sequences: None,
            sequence_len: None,
            generator: GeneratorKind::Chacha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Estimation window; the scheme's training-time window when unset.
    pub window: Option<usize>,
    pub mapping_restarts: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            window: None,
            mapping_restarts: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub distances_km: Vec<f64>,
    pub windows: Vec<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            distances_km: (0..8).map(|k| 10.0 * k as f64).collect(),
            windows: vec![1, 2, 5, 10, 20, 30],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; overridden by `--out`.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub ae: AeConfig,
    #[serde(default)]
    pub pam: PamSettings,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default)]
    pub data: DataSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
}

fn check(cond: bool, msg: &str) -> Result<(), HarnessError> {
    if cond {
        Ok(())
    } else {
        Err(config_err(msg))
    }
}

impl ExperimentConfig {
    pub fn new(scheme: Scheme) -> Self {
        let mut link = LinkConfig::default();
        if scheme.pam_order().is_some() {
            link.oversampling = 1;
            link.samples_per_block = 2;
        }
        ExperimentConfig {
            scheme,
            seed: 0,
            out_dir: None,
            link,
            ae: AeConfig::default(),
            pam: PamSettings::default(),
            training: TrainingSettings::default(),
            data: DataSettings::default(),
            eval: EvalSettings::default(),
            sweep: SweepSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    /// Checks scheme/config consistency before any computation.
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.link.validate()?;
        match self.scheme.pam_order() {
            None => {
                self.ae.validate()?;
                check(
                    self.link.samples_per_block == self.ae.samples_per_block,
                    "link.samples_per_block must equal ae.samples_per_block",
                )?;
                let z = self.sequences();
                check(
                    z.is_multiple_of(8) && z >= 16,
                    "auto-encoder datasets need a multiple of 8 sequences, at least 16",
                )?;
                check(self.training.ae_sffnn_window % 2 == 1, "training.ae_sffnn_window must be odd")?;
            }
            Some(order) => {
                let pam = PamConfig::for_order(order)?;
                check(
                    self.link.samples_per_block == pam.samples_per_symbol,
                    "PAM schemes need link.samples_per_block = 2 (samples per symbol)",
                )?;
                check(self.pam.window % 2 == 1, "pam.window must be odd")?;
                check(
                    self.pam.quadratic_window % 2 == 1 && self.pam.quadratic_window <= self.pam.window,
                    "pam.quadratic_window must be odd and at most pam.window",
                )?;
                check(self.pam.training_window >= 1, "pam.training_window must be positive")?;
                check(self.pam.volterra_rows >= 1, "pam.volterra_rows must be positive")?;
                check(self.sequences() >= 2, "PAM datasets need at least two loads")?;
                check(self.sequence_len().is_multiple_of(2), "PAM load length must be even")?;
                let columns = self.sequence_len() / 2;
                check(
                    self.pam.window <= columns && self.pam.training_window <= columns,
                    "PAM windows exceed the dataset row length",
                )?;
            }
        }
        check(self.sequence_len() >= 1, "sequence length must be positive")?;
        check(self.training.batch_size >= 1, "batch size must be positive")?;
        check(
            self.training.learning_rate > 0.0 && self.data_learning_rate() > 0.0,
            "learning rates must be positive",
        )?;
        check(self.eval.window.is_none_or(|w| w >= 1), "eval.window must be positive")?;
        Ok(())
    }

    pub fn sequences(&self) -> usize {
        self.data.sequences.unwrap_or(if self.scheme.is_autoencoder() { 64 } else { 20 })
    }

    pub fn sequence_len(&self) -> usize {
        self.data
            .sequence_len
            .unwrap_or(if self.scheme.is_autoencoder() { 512 } else { 8192 })
    }

    pub fn pam_config(&self) -> Option<PamConfig> {
        self.scheme.pam_order().map(|o| PamConfig::for_order(o).expect("order 2 or 4"))
    }

    pub fn data_learning_rate(&self) -> f64 {
        self.training.data_learning_rate.unwrap_or(self.training.learning_rate)
    }

    pub fn model_optimizer(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.training.learning_rate,
            max_grad_norm: self.training.max_grad_norm,
            ..AdamConfig::default()
        }
    }

    pub fn data_optimizer(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.data_learning_rate(),
            max_grad_norm: self.training.max_grad_norm,
            ..AdamConfig::default()
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            steps: self.training.steps,
            batch_size: self.training.batch_size,
            guard_blocks: self.training.guard_blocks,
            optimizer: self.model_optimizer(),
        }
    }

    /// Channel model for end-to-end training: the configured link without
    /// converter quantization, optionally at a different distance.
    pub fn model_link(&self) -> LinkConfig {
        let mut link = self.link.clone();
        link.dac_bits = None;
        link.adc_bits = None;
        if let Some(d) = self.training.model_distance_km {
            link.distance_km = d;
        }
        link
    }

    /// Default estimation window of the scheme.
    pub fn default_window(&self) -> usize {
        match self.scheme {
            Scheme::AeSbrnn => self.ae.estimation_window,
            Scheme::AeTxBrnnRxSffnn => self.training.ae_sffnn_window,
            _ => self.pam.window,
        }
    }

    pub fn eval_window(&self) -> usize {
        self.eval.window.unwrap_or(self.default_window())
    }

    pub fn bits_per_unit(&self) -> u32 {
        match self.scheme.pam_order() {
            None => self.ae.bits_per_block(),
            Some(o) => o.trailing_zeros(),
        }
    }

    /// Bits processed simultaneously by the receiver at window `w`.
    pub fn bits_in_flight(&self, w: usize) -> usize {
        w * self.bits_per_unit() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("scheme = \"ae_sbrnn\"\n").unwrap();
        assert_eq!(cfg.ae.alphabet_size, 64);
        assert_eq!(cfg.sequences(), 64);
        assert_eq!(cfg.bits_in_flight(10), 60);
    }

    #[test]
    fn pam_consistency_is_checked() {
        let err = ExperimentConfig::from_toml("scheme = \"pam2_sffnn\"\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)));
        let ok = ExperimentConfig::from_toml("scheme = \"pam4_volterra\"\n[link]\noversampling = 1\nsamples_per_block = 2\n").unwrap();
        assert_eq!(ok.bits_in_flight(61), 122);
        assert!(ExperimentConfig::from_toml("scheme = \"pam2_sffnn\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn round_trip_and_hash_ignore_out_dir() {
        let mut cfg = ExperimentConfig::new(Scheme::Pam2Volterra);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let h = cfg.hash();
        cfg.out_dir = Some("elsewhere".into());
        assert_eq!(cfg.hash(), h);
        cfg.seed = 1;
        assert_ne!(cfg.hash(), h);
    }
}
