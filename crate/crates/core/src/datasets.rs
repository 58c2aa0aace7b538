//! Recorded datasets in the `(D, L)` matrix layout.
//!
//! Each row of `D` holds `columns` consecutive received blocks of
//! `block_len` samples; the matching row of `L` holds their labels. One
//! simulated DAC load always contributes two rows, and train/test splits
//! are made on whole loads.

use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, AeConfig, AeParams};
use crate::channel::{self, LinkConfig};
use crate::error::{check_len, param, Result};
use crate::pamsys::{self, PamConfig};
use crate::rng::{stream, Domain, GeneratorKind, LabelRng};
use crate::signal::Waveform;

/// Encoded sequences concatenated into one auto-encoder DAC load.
pub const AE_SEQUENCES_PER_LOAD: usize = 8;

/// Scheme a dataset was generated for; stored as one byte on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum SchemeTag {
    Autoencoder = 0,
    Pam2 = 1,
    Pam4 = 2,
    Synthetic = 3,
}

impl SchemeTag {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(SchemeTag::Autoencoder),
            1 => Some(SchemeTag::Pam2),
            2 => Some(SchemeTag::Pam4),
            3 => Some(SchemeTag::Synthetic),
            _ => None,
        }
    }
}

/// Provenance stored alongside the matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub scheme: SchemeTag,
    pub seed: u64,
    pub link: Option<LinkConfig>,
    pub generator: GeneratorKind,
    /// Labeled units per independent transmitted sequence inside a row.
    pub sequence_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedDataset {
    rows: usize,
    columns: usize,
    block_len: usize,
    data: Vec<f64>,
    labels: Vec<u16>,
    pub meta: DatasetMeta,
}

impl RecordedDataset {
    pub fn new(rows: usize, columns: usize, block_len: usize, data: Vec<f64>, labels: Vec<u16>, meta: DatasetMeta) -> Result<Self> {
        if columns == 0 || block_len == 0 {
            return Err(param("dataset needs at least one column of non-empty blocks"));
        }
        check_len("dataset samples", rows * columns * block_len, data.len())?;
        check_len("dataset labels", rows * columns, labels.len())?;
        if meta.sequence_len == 0 || !columns.is_multiple_of(meta.sequence_len) {
            return Err(param("row length must be a whole number of sequences"));
        }
        Ok(RecordedDataset {
            rows,
            columns,
            block_len,
            data,
            labels,
            meta,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn data_row(&self, r: usize) -> &[f64] {
        let len = self.columns * self.block_len;
        &self.data[r * len..(r + 1) * len]
    }

    pub fn label_row(&self, r: usize) -> &[u16] {
        &self.labels[r * self.columns..(r + 1) * self.columns]
    }

    /// Independent sequences as `(samples, labels)` slices, row by row.
    pub fn sequences(&self) -> impl Iterator<Item = (&[f64], &[u16])> + '_ {
        let t = self.meta.sequence_len;
        let n = self.block_len;
        (0..self.rows).flat_map(move |r| {
            let d = self.data_row(r);
            let l = self.label_row(r);
            (0..self.columns / t).map(move |k| (&d[k * t * n..(k + 1) * t * n], &l[k * t..(k + 1) * t]))
        })
    }

    /// Columns `[s, s + width)` of every row. With `center_only` the labels
    /// are only column `s + (width - 1) / 2`.
    pub fn window(&self, s: usize, width: usize, center_only: bool) -> Result<MiniBatch> {
        if width == 0 || s + width > self.columns {
            return Err(param("mini-batch window exceeds the dataset columns"));
        }
        let n = self.block_len;
        let mut data = Vec::with_capacity(self.rows * width * n);
        let mut labels = Vec::with_capacity(self.rows * if center_only { 1 } else { width });
        for r in 0..self.rows {
            data.extend_from_slice(&self.data_row(r)[s * n..(s + width) * n]);
            let lr = self.label_row(r);
            if center_only {
                labels.push(lr[s + (width - 1) / 2]);
            } else {
                labels.extend_from_slice(&lr[s..s + width]);
            }
        }
        Ok(MiniBatch {
            rows: self.rows,
            width,
            start: s,
            block_len: n,
            center_only,
            data,
            labels,
        })
    }
}

/// Owned copy of a column window of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    pub rows: usize,
    pub width: usize,
    pub start: usize,
    pub block_len: usize,
    pub center_only: bool,
    pub data: Vec<f64>,
    pub labels: Vec<u16>,
}

impl MiniBatch {
    pub fn data_row(&self, r: usize) -> &[f64] {
        let len = self.width * self.block_len;
        &self.data[r * len..(r + 1) * len]
    }

    pub fn data_row_mut(&mut self, r: usize) -> &mut [f64] {
        let len = self.width * self.block_len;
        &mut self.data[r * len..(r + 1) * len]
    }

    pub fn label_row(&self, r: usize) -> &[u16] {
        let k = if self.center_only { 1 } else { self.width };
        &self.labels[r * k..(r + 1) * k]
    }
}

/// Free-function form of [`RecordedDataset::window`].
pub fn minibatch_window(ds: &RecordedDataset, s: usize, width: usize, center_only_labels: bool) -> Result<MiniBatch> {
    ds.window(s, width, center_only_labels)
}

/// Number of training loads out of `loads`: 90 % rounded down to whole
/// loads, keeping at least one load on each side.
pub fn train_loads(loads: usize) -> usize {
    (loads * 9 / 10).clamp(1, loads - 1)
}

struct Split {
    train: (Vec<f64>, Vec<u16>, usize),
    test: (Vec<f64>, Vec<u16>, usize),
}

impl Split {
    fn new() -> Self {
        Split {
            train: (Vec::new(), Vec::new(), 0),
            test: (Vec::new(), Vec::new(), 0),
        }
    }

    fn push_row(&mut self, train: bool, data: &[f64], labels: &[u16]) {
        let side = if train { &mut self.train } else { &mut self.test };
        side.0.extend_from_slice(data);
        side.1.extend_from_slice(labels);
        side.2 += 1;
    }

    fn finish(self, columns: usize, block_len: usize, meta: DatasetMeta) -> Result<(RecordedDataset, RecordedDataset)> {
        let train = RecordedDataset::new(self.train.2, columns, block_len, self.train.0, self.train.1, meta.clone())?;
        let test = RecordedDataset::new(self.test.2, columns, block_len, self.test.0, self.test.1, meta)?;
        Ok((train, test))
    }
}

/// Generates `z` message sequences of length `t`, transmits them eight per
/// load through the link and arranges four sequences per row.
pub fn build_ae_dataset(
    cfg: &AeConfig,
    params: &AeParams,
    link: &LinkConfig,
    z: usize,
    t: usize,
    seed: u64,
    generator: GeneratorKind,
) -> Result<(RecordedDataset, RecordedDataset)> {
    cfg.validate()?;
    link.validate()?;
    let n = cfg.samples_per_block;
    check_len("link block length", n, link.samples_per_block)?;
    check_len("model block length", n, params.samples_per_block())?;
    check_len("model alphabet", cfg.alphabet_size, params.alphabet_size())?;
    if z == 0 || !z.is_multiple_of(AE_SEQUENCES_PER_LOAD) || z < 2 * AE_SEQUENCES_PER_LOAD {
        return Err(param("sequence count must be a multiple of 8 covering at least two loads"));
    }
    if t == 0 {
        return Err(param("sequence length must be positive"));
    }
    let loads = z / AE_SEQUENCES_PER_LOAD;
    let n_train = train_loads(loads);
    let half = AE_SEQUENCES_PER_LOAD / 2;
    let mut split = Split::new();
    for load in 0..loads {
        let mut drive = Vec::with_capacity(AE_SEQUENCES_PER_LOAD * t * n);
        let mut labels = Vec::with_capacity(AE_SEQUENCES_PER_LOAD * t);
        for j in 0..AE_SEQUENCES_PER_LOAD {
            let mut rng = LabelRng::new(generator, seed, (load * AE_SEQUENCES_PER_LOAD + j) as u64);
            let msgs: Vec<usize> = (0..t).map(|_| rng.random_range(0..cfg.alphabet_size)).collect();
            drive.extend(autoencoder::encode_sequence(&msgs, &params.tx)?);
            labels.extend(msgs.iter().map(|m| *m as u16));
        }
        let w = Waveform::new(drive, link.sim_rate_hz())?;
        let rx = channel::simulate_link(&w, link, &mut stream(seed, Domain::Link, load as u64))?.into_samples();
        let row_samples = half * t * n;
        let row_labels = half * t;
        for part in 0..2 {
            split.push_row(
                load < n_train,
                &rx[part * row_samples..(part + 1) * row_samples],
                &labels[part * row_labels..(part + 1) * row_labels],
            );
        }
    }
    let meta = DatasetMeta {
        scheme: SchemeTag::Autoencoder,
        seed,
        link: Some(link.clone()),
        generator,
        sequence_len: t,
    };
    split.finish(half * t, n, meta)
}

/// Generates `z` DAC loads of `t` PAM symbols each; every load is split
/// into two rows of `t/2` symbols.
pub fn build_pam_dataset(
    cfg: &PamConfig,
    link: &LinkConfig,
    z: usize,
    t: usize,
    seed: u64,
    generator: GeneratorKind,
) -> Result<(RecordedDataset, RecordedDataset)> {
    cfg.validate()?;
    link.validate()?;
    let n = cfg.samples_per_symbol;
    check_len("link block length", n, link.samples_per_block)?;
    if t == 0 || !t.is_multiple_of(2) {
        return Err(param("PAM sequence length must be even"));
    }
    if z < 2 {
        return Err(param("need at least two loads for a train/test split"));
    }
    let bits_per_symbol = cfg.bits_per_symbol() as usize;
    let n_train = train_loads(z);
    let mut split = Split::new();
    for load in 0..z {
        let mut rng = LabelRng::new(generator, seed, load as u64);
        let bits: Vec<u8> = (0..t * bits_per_symbol).map(|_| rng.random_range(0..2u8)).collect();
        let modulated = pamsys::pam_modulate(&bits, cfg)?;
        let w = Waveform::new(modulated.drive, link.sim_rate_hz())?;
        let rx = channel::simulate_link(&w, link, &mut stream(seed, Domain::Link, load as u64))?.into_samples();
        let labels: Vec<u16> = modulated.symbols.iter().map(|s| *s as u16).collect();
        let half = t / 2;
        for part in 0..2 {
            split.push_row(
                load < n_train,
                &rx[part * half * n..(part + 1) * half * n],
                &labels[part * half..(part + 1) * half],
            );
        }
    }
    let meta = DatasetMeta {
        scheme: if cfg.order == 2 { SchemeTag::Pam2 } else { SchemeTag::Pam4 },
        seed,
        link: Some(link.clone()),
        generator,
        sequence_len: t / 2,
    };
    split.finish(t / 2, n, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small_ae() -> (AeConfig, AeParams, LinkConfig) {
        let cfg = AeConfig {
            alphabet_size: 8,
            samples_per_block: 8,
            ..AeConfig::default()
        };
        let params = AeParams::init(&cfg, &mut stream(1, Domain::Init, 0)).unwrap();
        let link = LinkConfig {
            distance_km: 10.0,
            samples_per_block: 8,
            ..LinkConfig::default()
        };
        (cfg, params, link)
    }

    fn synthetic(rows: usize, columns: usize, block_len: usize) -> RecordedDataset {
        let data = (0..rows * columns * block_len).map(|v| v as f64).collect();
        let labels = (0..rows * columns).map(|v| (v % 7) as u16).collect();
        let meta = DatasetMeta {
            scheme: SchemeTag::Synthetic,
            seed: 0,
            link: None,
            generator: GeneratorKind::Chacha,
            sequence_len: columns,
        };
        RecordedDataset::new(rows, columns, block_len, data, labels, meta).unwrap()
    }

    #[test]
    fn ae_dataset_shapes_and_split() {
        let (cfg, params, link) = small_ae();
        let (train, test) = build_ae_dataset(&cfg, &params, &link, 32, 20, 5, GeneratorKind::Chacha).unwrap();
        // 4 loads -> 3 train loads (6 rows), 1 test load (2 rows).
        assert_eq!((train.rows(), test.rows()), (6, 2));
        assert_eq!(train.columns(), 80);
        assert_eq!(train.data_row(0).len(), 4 * 20 * 8);
        assert_eq!(train.sequences().count(), 24);
        assert_eq!(test.sequences().count(), 8);
        assert!(train.labels().iter().all(|l| *l < 8));
        let again = build_ae_dataset(&cfg, &params, &link, 32, 20, 5, GeneratorKind::Chacha).unwrap();
        assert_eq!(again.0, train);
        assert!(build_ae_dataset(&cfg, &params, &link, 12, 20, 5, GeneratorKind::Chacha).is_err());
    }

    #[test]
    fn desk_default_row_counts() {
        // 64 sequences = 8 loads -> 7 train loads -> 14 rows of 4 * 512 blocks.
        assert_eq!(train_loads(8), 7);
        assert_eq!(2 * train_loads(8), 14);
        // PAM: 20 loads -> 18 train loads -> 36 rows, 4 test rows.
        assert_eq!(2 * train_loads(20), 36);
        assert_eq!(2 * (20 - train_loads(20)), 4);
        assert_eq!(train_loads(100), 90);
        assert_eq!(train_loads(2), 1);
    }

    #[test]
    fn pam_dataset_shapes() {
        let cfg = PamConfig::pam4();
        let link = LinkConfig {
            oversampling: 1,
            samples_per_block: 2,
            distance_km: 5.0,
            ..LinkConfig::default()
        };
        let (train, test) = build_pam_dataset(&cfg, &link, 4, 64, 3, GeneratorKind::MersenneTwister).unwrap();
        assert_eq!((train.rows(), test.rows()), (6, 2));
        assert_eq!(train.columns(), 32);
        assert_eq!(train.data_row(1).len(), 64);
        assert!(train.labels().iter().all(|l| *l < 4));
        assert!(build_pam_dataset(&cfg, &link, 4, 63, 3, GeneratorKind::Chacha).is_err());
    }

    #[test]
    fn window_examples() {
        let ds = synthetic(3, 70, 2);
        let all = ds.window(0, 70, false).unwrap();
        assert_eq!(all.data, ds.data());
        assert_eq!(all.labels, ds.labels());
        let one = ds.window(5, 1, false).unwrap();
        assert_eq!(one.data_row(1), &ds.data_row(1)[10..12]);
        let center = ds.window(4, 61, true).unwrap();
        for r in 0..3 {
            assert_eq!(center.label_row(r), &[ds.label_row(r)[34]]);
        }
        assert!(ds.window(10, 61, true).is_err());
        assert!(minibatch_window(&ds, 0, 0, false).is_err());
    }

    #[test]
    fn windows_do_not_alias_the_dataset() {
        let ds = synthetic(2, 10, 3);
        let before = ds.clone();
        let mut w = ds.window(2, 4, false).unwrap();
        w.data_row_mut(0).fill(-1.0);
        assert_eq!(ds, before);
    }

    #[test]
    fn constructor_checks_shapes() {
        let meta = synthetic(1, 4, 1).meta;
        assert!(RecordedDataset::new(2, 4, 1, vec![0.0; 7], vec![0; 8], meta.clone()).is_err());
        assert!(RecordedDataset::new(2, 4, 1, vec![0.0; 8], vec![0; 7], meta).is_err());
    }
}
