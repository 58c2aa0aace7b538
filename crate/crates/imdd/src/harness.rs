//! Experiment commands: generate, train, retrain, fit-volterra, eval,
//! sweep and report. Every command reads and writes fixed file names in an
//! existing output directory and is deterministic given config and seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use imdd_core::autoencoder::{self, AeParams};
use imdd_core::datasets::{self, RecordedDataset};
use imdd_core::metrics::{self, BitMapping, ConfusionMatrix, MappingSearch};
use imdd_core::pamsys;
use imdd_core::rng::{stream, Domain};
use imdd_core::slidingwindow;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Receiver, Scheme};
use crate::error::{config_err, io_err, HarnessError};
use crate::format;
use crate::model::{Model, StoredModel};

pub const TRAIN_FILE: &str = "train.imdd";
pub const TEST_FILE: &str = "test.imdd";
pub const MODEL_FILE: &str = "model.imdd";
pub const LOSS_FILE: &str = "loss.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const REPORT_FILE: &str = "report.csv";

/// Normal quantile of the two-sided 95 % Wilson interval.
const Z95: f64 = 1.959_963_984_540_054;

type Result<T> = std::result::Result<T, HarnessError>;

fn require_dir(out: &Path) -> Result<()> {
    if out.is_dir() {
        Ok(())
    } else {
        Err(io_err(
            out,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ))
    }
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Record of one command run, written as `<command>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub scheme: String,
    pub seed: u64,
    pub config_hash: String,
    /// Output file name → SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

fn write_manifest(cfg: &ExperimentConfig, out: &Path, command: &str, files: &[&str]) -> Result<Manifest> {
    let mut map = BTreeMap::new();
    for f in files {
        map.insert((*f).to_string(), file_hash(&out.join(f))?);
    }
    let m = Manifest {
        command: command.to_string(),
        scheme: cfg.scheme.name().to_string(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        files: map,
    };
    let path = out.join(format!("{command}.manifest.json"));
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    format::write_bytes(&path, format!("{text}\n").as_bytes())?;
    Ok(m)
}

fn write_loss(out: &Path, trace: &[f64]) -> Result<()> {
    let path = out.join(LOSS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["step", "loss"]).map_err(|e| csv_err(&path, e))?;
    for (s, l) in trace.iter().enumerate() {
        w.write_record([s.to_string(), format!("{l:?}")]).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    io_err(path, std::io::Error::other(e.to_string()))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

fn store(cfg: &ExperimentConfig, model: Model) -> StoredModel {
    StoredModel {
        scheme: cfg.scheme,
        model,
        seed: cfg.seed,
        config_hash: cfg.hash(),
    }
}

fn load_model(cfg: &ExperimentConfig, out: &Path) -> Result<StoredModel> {
    let m = StoredModel::load(&out.join(MODEL_FILE))?;
    m.expect_scheme(cfg.scheme)?;
    Ok(m)
}

fn ae_params(model: &Model) -> Result<&AeParams> {
    match model {
        Model::Autoencoder(p) | Model::AutoencoderSffnn { ae: p, .. } => Ok(p),
        _ => Err(config_err("model does not contain an auto-encoder transmitter")),
    }
}

/// Builds train/test datasets for `cfg` (auto-encoder schemes need the
/// trained transmitter in `model`).
pub fn build_datasets(cfg: &ExperimentConfig, model: Option<&Model>) -> Result<(RecordedDataset, RecordedDataset)> {
    let (z, t, seed, gen) = (cfg.sequences(), cfg.sequence_len(), cfg.seed, cfg.data.generator);
    match cfg.pam_config() {
        None => {
            let params =
                ae_params(model.ok_or_else(|| config_err("auto-encoder data generation needs a trained model; run train first"))?)?;
            Ok(datasets::build_ae_dataset(&cfg.ae, params, &cfg.link, z, t, seed, gen)?)
        }
        Some(pam) => Ok(datasets::build_pam_dataset(&pam, &cfg.link, z, t, seed, gen)?),
    }
}

/// Generates and saves `train.imdd` and `test.imdd`.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    require_dir(out)?;
    let model = if cfg.scheme.is_autoencoder() {
        Some(load_model(cfg, out)?.model)
    } else {
        None
    };
    let (train, test) = build_datasets(cfg, model.as_ref())?;
    format::save_dataset(&out.join(TRAIN_FILE), &train)?;
    format::save_dataset(&out.join(TEST_FILE), &test)?;
    write_manifest(cfg, out, "generate", &[TRAIN_FILE, TEST_FILE])
}

fn volterra_rows(cfg: &ExperimentConfig, rows: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(&mut stream(cfg.seed, Domain::Selection, 0));
    idx.truncate(cfg.pam.volterra_rows.min(rows));
    idx.sort_unstable();
    idx
}

/// Trains a PAM receiver on a recorded training set.
pub fn train_pam_receiver(cfg: &ExperimentConfig, train: &RecordedDataset) -> Result<(Model, Vec<f64>)> {
    let pam = cfg.pam_config().ok_or_else(|| config_err("not a PAM scheme"))?;
    let opt = cfg.data_optimizer();
    Ok(match cfg.scheme.receiver() {
        Receiver::Sffnn => {
            let o = pamsys::train_sffnn(train, cfg.pam.window, pam.order, opt, cfg.seed)?;
            (Model::Sffnn(o.params), o.loss_trace)
        }
        Receiver::Sbrnn => {
            let o = pamsys::pam_sbrnn_receiver(train, cfg.pam.training_window, pam.order, opt, cfg.seed)?;
            (Model::Sbrnn(o.params), o.loss_trace)
        }
        Receiver::Volterra => {
            let rows = volterra_rows(cfg, train.rows());
            let fit = pamsys::volterra_fit(train, &rows, cfg.pam.window, cfg.pam.quadratic_window, &pam)?;
            (Model::Volterra(fit.coeffs), vec![fit.train_mse])
        }
    })
}

/// Auto-encoder schemes: end-to-end training on the channel model.
/// PAM schemes: receiver training on `train.imdd`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    require_dir(out)?;
    let (model, trace) = if cfg.scheme.is_autoencoder() {
        let o = autoencoder::train_end_to_end(&cfg.ae, &cfg.model_link(), &cfg.schedule(), cfg.seed)?;
        (Model::Autoencoder(o.params), o.loss_trace)
    } else {
        let train = format::load_dataset(&out.join(TRAIN_FILE))?;
        train_pam_receiver(cfg, &train)?
    };
    store(cfg, model).save(&out.join(MODEL_FILE))?;
    write_loss(out, &trace)?;
    write_manifest(cfg, out, "train", &[MODEL_FILE, LOSS_FILE])
}

/// Receiver-only optimization of an auto-encoder on `train.imdd`; the
/// transmitter section of the model file is left unchanged.
pub fn cmd_retrain(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    require_dir(out)?;
    if !cfg.scheme.is_autoencoder() {
        return Err(config_err("retrain applies to auto-encoder schemes; use train for PAM receivers"));
    }
    let stored = load_model(cfg, out)?;
    let train = format::load_dataset(&out.join(TRAIN_FILE))?;
    let ae = ae_params(&stored.model)?.clone();
    let (model, trace) = match cfg.scheme {
        Scheme::AeSbrnn => {
            let o = autoencoder::retrain_receiver(&train, &ae, cfg.ae.training_window, cfg.data_optimizer())?;
            (Model::Autoencoder(o.params), o.loss_trace)
        }
        _ => {
            let o = pamsys::train_sffnn(
                &train,
                cfg.training.ae_sffnn_window,
                cfg.ae.alphabet_size,
                cfg.data_optimizer(),
                cfg.seed,
            )?;
            (Model::AutoencoderSffnn { ae, sffnn: o.params }, o.loss_trace)
        }
    };
    store(cfg, model).save(&out.join(MODEL_FILE))?;
    write_loss(out, &trace)?;
    write_manifest(cfg, out, "retrain", &[MODEL_FILE, LOSS_FILE])
}

/// Least-squares Volterra fit on randomly selected training rows.
pub fn cmd_fit_volterra(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    if cfg.scheme.receiver() != Receiver::Volterra {
        return Err(config_err("fit-volterra needs a Volterra scheme"));
    }
    cmd_train(cfg, out)
}

/// One line of an evaluation or sweep report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub scheme: String,
    pub distance: f64,
    #[serde(rename = "W")]
    pub window: usize,
    #[serde(rename = "BLER")]
    pub bler: f64,
    #[serde(rename = "BER")]
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub hdfec_pass: bool,
    pub bits_in_flight: usize,
    pub sequences: usize,
    pub seed: u64,
}

/// Symbol decisions for every sequence of `ds`, in dataset order.
pub fn decide_all(model: &Model, cfg: &ExperimentConfig, ds: &RecordedDataset, window: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let seqs: Vec<(&[f64], &[u16])> = ds.sequences().collect();
    let pam = cfg.pam_config();
    seqs.par_iter()
        .map(|(samples, labels)| {
            let truth: Vec<usize> = labels.iter().map(|l| *l as usize).collect();
            let decided = match model {
                Model::Autoencoder(p) => slidingwindow::decide(&slidingwindow::estimate_sequence(samples, &p.rx, window)?.probs),
                Model::Sbrnn(rx) => slidingwindow::decide(&slidingwindow::estimate_sequence(samples, rx, window)?.probs),
                Model::AutoencoderSffnn { sffnn, .. } | Model::Sffnn(sffnn) => pamsys::sffnn_detect_sequence(samples, sffnn)?,
                Model::Volterra(c) => {
                    let pam = pam.as_ref().ok_or_else(|| config_err("Volterra model needs a PAM scheme"))?;
                    pamsys::volterra_equalize(c, samples, pam)?
                }
            };
            Ok((truth, decided))
        })
        .collect()
}

fn check_window(model: &Model, cfg: &ExperimentConfig, window: usize) -> Result<()> {
    let fixed = match model {
        Model::AutoencoderSffnn { sffnn, .. } | Model::Sffnn(sffnn) => Some(sffnn.window),
        Model::Volterra(c) => Some(c.window),
        Model::Autoencoder(_) | Model::Sbrnn(_) => None,
    };
    if cfg.scheme == Scheme::AeTxBrnnRxSffnn && matches!(model, Model::Autoencoder(_)) {
        return Err(config_err("the feed-forward receiver is trained by retrain; run it before eval"));
    }
    match fixed {
        Some(w) if w != window => Err(config_err(format!(
            "this receiver has a fixed window of {w}; window {window} needs a new model"
        ))),
        _ => Ok(()),
    }
}

/// Evaluates `model` on `test`. For auto-encoders the bit mapping is
/// optimized on decisions over `train` and then frozen.
pub fn evaluate(
    cfg: &ExperimentConfig,
    model: &Model,
    train: Option<&RecordedDataset>,
    test: &RecordedDataset,
    window: usize,
) -> Result<(EvalRow, ConfusionMatrix)> {
    check_window(model, cfg, window)?;
    let classes = match cfg.scheme.pam_order() {
        Some(o) => o,
        None => cfg.ae.alphabet_size,
    };
    let confusion_of = |pairs: &[(Vec<usize>, Vec<usize>)]| -> Result<ConfusionMatrix> {
        let mut cm = ConfusionMatrix::new(classes);
        for (t, d) in pairs {
            cm.record(t, d)?;
        }
        Ok(cm)
    };
    let mapping = match (cfg.pam_config(), train) {
        (Some(pam), _) => BitMapping::new(pam.gray_map.clone())?,
        (None, Some(train)) => {
            let cm = confusion_of(&decide_all(model, cfg, train, window)?)?;
            let search = MappingSearch {
                restarts: cfg.eval.mapping_restarts,
                seed: cfg.seed,
            };
            metrics::optimize_bit_mapping(&cm, &search)?
        }
        (None, None) => BitMapping::identity(classes)?,
    };
    let pairs = decide_all(model, cfg, test, window)?;
    let cm = confusion_of(&pairs)?;
    let bits = mapping.bits() as u64;
    let mut per_sequence = Vec::with_capacity(pairs.len());
    let mut bit_errors = 0u64;
    for (t, d) in &pairs {
        let e = metrics::bit_errors(&ConfusionMatrix::from_pairs(classes, t, d)?, &mapping)?;
        bit_errors += e;
        per_sequence.push(e as f64 / (bits * t.len() as u64) as f64);
    }
    let ber = metrics::average_ber(&per_sequence)?;
    let total_bits = bits * cm.total();
    let (ci_low, ci_high) = metrics::wilson_interval(bit_errors, total_bits, Z95)?;
    let row = EvalRow {
        scheme: cfg.scheme.name().to_string(),
        distance: cfg.link.distance_km,
        window,
        bler: cm.symbol_errors() as f64 / cm.total() as f64,
        ber,
        ci_low,
        ci_high,
        hdfec_pass: ber < metrics::HD_FEC_THRESHOLD,
        bits_in_flight: cfg.bits_in_flight(window),
        sequences: pairs.len(),
        seed: cfg.seed,
    };
    Ok((row, cm))
}

/// Evaluates the stored model on `test.imdd` and writes `eval.csv` and
/// `confusion.csv`.
pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path, window: Option<usize>) -> Result<EvalRow> {
    require_dir(out)?;
    let stored = load_model(cfg, out)?;
    let test = format::load_dataset(&out.join(TEST_FILE))?;
    let train = if cfg.scheme.is_autoencoder() {
        Some(format::load_dataset(&out.join(TRAIN_FILE))?)
    } else {
        None
    };
    let w = window.unwrap_or(cfg.eval_window());
    let (row, cm) = evaluate(cfg, &stored.model, train.as_ref(), &test, w)?;
    write_rows(&out.join(EVAL_FILE), std::slice::from_ref(&row))?;
    let cpath = out.join(CONFUSION_FILE);
    format::write_bytes(&cpath, cm.to_csv().as_bytes())?;
    write_manifest(cfg, out, "eval", &[EVAL_FILE, CONFUSION_FILE])?;
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Distance,
    Window,
}

/// Seed of sweep point `index`, independent of the evaluation order.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    seed ^ ((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn sweep_distance_point(cfg: &ExperimentConfig, model: Option<&Model>, distance: f64, index: usize) -> Result<EvalRow> {
    let mut c = cfg.clone();
    c.link.distance_km = distance;
    c.seed = point_seed(cfg.seed, index);
    let (train, test) = build_datasets(&c, model)?;
    let w = c.eval_window();
    let row = match model {
        // Auto-encoders are applied as trained; only the link changes.
        Some(m) => evaluate(&c, m, Some(&train), &test, w)?.0,
        // PAM receivers are learned from data at every distance.
        None => {
            let (m, _) = train_pam_receiver(&c, &train)?;
            evaluate(&c, &m, None, &test, w)?.0
        }
    };
    Ok(row)
}

/// Runs a distance or window sweep over `grid` (config defaults when
/// `None`) and writes `sweep_<kind>.csv`, sorted by the swept variable.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, kind: SweepKind, grid: Option<Vec<f64>>) -> Result<Vec<EvalRow>> {
    require_dir(out)?;
    let mut rows = match kind {
        SweepKind::Distance => {
            let grid = grid.unwrap_or_else(|| cfg.sweep.distances_km.clone());
            if grid.is_empty() || grid.iter().any(|d| d.is_nan() || *d < 0.0) {
                return Err(config_err("distance grid must be non-empty and non-negative"));
            }
            let model = if cfg.scheme.is_autoencoder() {
                Some(load_model(cfg, out)?.model)
            } else {
                None
            };
            grid.par_iter()
                .enumerate()
                .map(|(i, d)| sweep_distance_point(cfg, model.as_ref(), *d, i))
                .collect::<Result<Vec<_>>>()?
        }
        SweepKind::Window => {
            let grid: Vec<usize> = match grid {
                Some(g) => g
                    .iter()
                    .map(|w| {
                        if *w >= 1.0 && w.fract() == 0.0 {
                            Ok(*w as usize)
                        } else {
                            Err(config_err("window grid must hold positive integers"))
                        }
                    })
                    .collect::<Result<_>>()?,
                None => cfg.sweep.windows.clone(),
            };
            if grid.is_empty() || grid.contains(&0) {
                return Err(config_err("window grid must be non-empty and positive"));
            }
            if cfg.scheme.receiver() != Receiver::Sbrnn {
                return Err(config_err("window sweeps need a sliding-window recurrent receiver"));
            }
            let model = load_model(cfg, out)?.model;
            let test = format::load_dataset(&out.join(TEST_FILE))?;
            let train = if cfg.scheme.is_autoencoder() {
                Some(format::load_dataset(&out.join(TRAIN_FILE))?)
            } else {
                None
            };
            grid.par_iter()
                .map(|w| Ok(evaluate(cfg, &model, train.as_ref(), &test, *w)?.0))
                .collect::<Result<Vec<_>>>()?
        }
    };
    match kind {
        SweepKind::Distance => rows.sort_by(|a, b| a.distance.total_cmp(&b.distance)),
        SweepKind::Window => rows.sort_by_key(|r| r.window),
    }
    let (tag, name) = match kind {
        SweepKind::Distance => ("sweep_distance", "sweep_distance.csv"),
        SweepKind::Window => ("sweep_window", "sweep_window.csv"),
    };
    write_rows(&out.join(name), &rows)?;
    write_manifest(cfg, out, tag, &[name])?;
    Ok(rows)
}

/// A report line tagged with the CSV it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub source: String,
    #[serde(flatten)]
    pub row: EvalRow,
}

/// Collects `eval.csv` and sweep CSVs of `out` into `report.csv`.
pub fn cmd_report(out: &Path) -> Result<Vec<ReportRow>> {
    require_dir(out)?;
    let mut rows = Vec::new();
    for name in [EVAL_FILE, "sweep_distance.csv", "sweep_window.csv"] {
        let path: PathBuf = out.join(name);
        if path.exists() {
            for row in read_rows::<EvalRow>(&path)? {
                rows.push(ReportRow {
                    source: name.trim_end_matches(".csv").to_string(),
                    row,
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(io_err(
            out,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no eval or sweep results to report"),
        ));
    }
    // Flattened structs cannot go through csv's serializer; write fields explicitly.
    let path = out.join(REPORT_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record([
        "source",
        "scheme",
        "distance",
        "W",
        "BLER",
        "BER",
        "ci_low",
        "ci_high",
        "hdfec_pass",
        "bits_in_flight",
        "sequences",
        "seed",
    ])
    .map_err(|e| csv_err(&path, e))?;
    for r in &rows {
        let e = &r.row;
        w.write_record([
            r.source.clone(),
            e.scheme.clone(),
            e.distance.to_string(),
            e.window.to_string(),
            e.bler.to_string(),
            e.ber.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
            e.hdfec_pass.to_string(),
            e.bits_in_flight.to_string(),
            e.sequences.to_string(),
            e.seed.to_string(),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(rows)
}
