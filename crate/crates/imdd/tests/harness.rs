use std::fs;
use std::path::Path;
use std::process::Command;

use imdd::config::{ExperimentConfig, Scheme};
use imdd::format::{self, FileKind};
use imdd::harness::{self, SweepKind};
use imdd::model::{Model, StoredModel};
use imdd::HarnessError;

fn small_pam(scheme: Scheme) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(scheme);
    c.seed = 8;
    c.link.distance_km = 5.0;
    c.pam.window = 9;
    c.pam.training_window = 9;
    c.pam.quadratic_window = 3;
    c.data.sequences = Some(4);
    c.data.sequence_len = Some(512);
    c
}

fn small_ae(scheme: Scheme) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(scheme);
    c.seed = 8;
    c.ae.alphabet_size = 4;
    c.ae.samples_per_block = 8;
    c.link.samples_per_block = 8;
    c.link.distance_km = 5.0;
    c.training.steps = 30;
    c.training.ae_sffnn_window = 3;
    c.data.sequences = Some(16);
    c.data.sequence_len = Some(32);
    c
}

#[test]
fn manifests_are_reproducible_and_carry_the_config_hash() {
    let cfg = small_pam(Scheme::Pam4Sffnn);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = harness::cmd_generate(&cfg, a.path()).unwrap();
    let mb = harness::cmd_generate(&cfg, b.path()).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(ma.config_hash, cfg.hash());
    let on_disk = fs::read_to_string(a.path().join("generate.manifest.json")).unwrap();
    assert!(on_disk.contains(&cfg.hash()));

    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(other.hash(), cfg.hash());
    let mut moved = cfg.clone();
    moved.out_dir = Some("/elsewhere".into());
    assert_eq!(moved.hash(), cfg.hash());
}

#[test]
fn missing_output_directory_is_an_io_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let err = harness::cmd_generate(&small_pam(Scheme::Pam2Sffnn), &missing).unwrap_err();
    assert!(matches!(err, HarnessError::Io { .. }));
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("nope"));
}

#[test]
fn pam4_labels_are_uniform_within_three_sigma() {
    let mut cfg = small_pam(Scheme::Pam4Volterra);
    cfg.data.sequences = Some(10);
    cfg.data.sequence_len = Some(8192);
    let dir = tempfile::tempdir().unwrap();
    harness::cmd_generate(&cfg, dir.path()).unwrap();
    let mut hist = [0u64; 4];
    for name in ["train.imdd", "test.imdd"] {
        let ds = format::load_dataset(&dir.path().join(name)).unwrap();
        for l in ds.labels() {
            hist[*l as usize] += 1;
        }
    }
    let total: u64 = hist.iter().sum();
    assert_eq!(total, 10 * 8192);
    let mean = total as f64 / 4.0;
    let sigma = (total as f64 * 0.25 * 0.75).sqrt();
    for h in hist {
        assert!((h as f64 - mean).abs() <= 3.0 * sigma, "{hist:?}");
    }
}

#[test]
fn loss_csv_has_one_row_per_step() {
    let cfg = small_ae(Scheme::AeSbrnn);
    let dir = tempfile::tempdir().unwrap();
    harness::cmd_train(&cfg, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,loss"));
    assert_eq!(lines.count(), cfg.training.steps);
}

fn tx_bytes(path: &Path) -> Vec<u64> {
    let stored = StoredModel::load(path).unwrap();
    let n = stored.model.tx_param_count();
    assert!(n > 0);
    let c = format::read_container(path, FileKind::Model).unwrap();
    c.data[..n].iter().map(|v| v.to_bits()).collect()
}

#[test]
fn retraining_leaves_the_transmitter_untouched() {
    for scheme in [Scheme::AeSbrnn, Scheme::AeTxBrnnRxSffnn] {
        let cfg = small_ae(scheme);
        let dir = tempfile::tempdir().unwrap();
        harness::cmd_train(&cfg, dir.path()).unwrap();
        harness::cmd_generate(&cfg, dir.path()).unwrap();
        let model = dir.path().join("model.imdd");
        let before = tx_bytes(&model);
        let old = StoredModel::load(&model).unwrap();
        harness::cmd_retrain(&cfg, dir.path()).unwrap();
        assert_eq!(tx_bytes(&model), before);
        let new = StoredModel::load(&model).unwrap();
        assert_ne!(old.model, new.model);
        if scheme == Scheme::AeTxBrnnRxSffnn {
            assert!(matches!(new.model, Model::AutoencoderSffnn { .. }));
        }
    }
}

#[test]
fn evaluation_schema_and_repeatability() {
    let cfg = small_pam(Scheme::Pam2Volterra);
    let dir = tempfile::tempdir().unwrap();
    harness::cmd_generate(&cfg, dir.path()).unwrap();
    harness::cmd_fit_volterra(&cfg, dir.path()).unwrap();
    let model_before = fs::read(dir.path().join("model.imdd")).unwrap();
    let a = harness::cmd_eval(&cfg, dir.path(), None).unwrap();
    let csv_a = fs::read(dir.path().join("eval.csv")).unwrap();
    let b = harness::cmd_eval(&cfg, dir.path(), None).unwrap();
    assert_eq!(a, b);
    assert_eq!(csv_a, fs::read(dir.path().join("eval.csv")).unwrap());
    assert_eq!(model_before, fs::read(dir.path().join("model.imdd")).unwrap());
    let text = String::from_utf8(csv_a).unwrap();
    assert!(text.starts_with("scheme,distance,W,BLER,BER,ci_low,ci_high,hdfec_pass,"));
    assert!((0.0..=1.0).contains(&a.ber) && (0.0..=1.0).contains(&a.bler));
    assert!(a.ci_low <= a.ber && a.ber <= a.ci_high);
}

#[test]
fn noiseless_back_to_back_volterra_is_error_free() {
    let mut cfg = small_pam(Scheme::Pam2Volterra);
    cfg.link.distance_km = 0.0;
    cfg.link.noise_sigma = 0.0;
    let dir = tempfile::tempdir().unwrap();
    harness::cmd_generate(&cfg, dir.path()).unwrap();
    harness::cmd_fit_volterra(&cfg, dir.path()).unwrap();
    let row = harness::cmd_eval(&cfg, dir.path(), None).unwrap();
    assert_eq!(row.ber, 0.0);
    assert!(row.hdfec_pass);
}

#[test]
fn distance_sweep_is_sorted_and_best_at_zero() {
    let mut cfg = small_pam(Scheme::Pam2Volterra);
    cfg.data.sequence_len = Some(2048);
    let dir = tempfile::tempdir().unwrap();
    let rows = harness::cmd_sweep(&cfg, dir.path(), SweepKind::Distance, Some(vec![40.0, 0.0, 20.0])).unwrap();
    let d: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    assert_eq!(d, vec![0.0, 20.0, 40.0]);
    assert!(rows.iter().all(|r| r.ber >= rows[0].ber));
    let text = fs::read_to_string(dir.path().join("sweep_distance.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    let report = harness::cmd_report(dir.path()).unwrap();
    assert_eq!(report.len(), 3);
    assert!(dir.path().join("report.csv").exists());
}

#[test]
fn window_sweep_needs_a_recurrent_receiver() {
    let cfg = small_ae(Scheme::AeSbrnn);
    let dir = tempfile::tempdir().unwrap();
    harness::cmd_train(&cfg, dir.path()).unwrap();
    harness::cmd_generate(&cfg, dir.path()).unwrap();
    let rows = harness::cmd_sweep(&cfg, dir.path(), SweepKind::Window, Some(vec![5.0, 1.0, 3.0])).unwrap();
    assert_eq!(rows.iter().map(|r| r.window).collect::<Vec<_>>(), vec![1, 3, 5]);
    assert!(rows.iter().all(|r| r.bits_in_flight == r.window * 2));

    let pam = small_pam(Scheme::Pam2Sffnn);
    let err = harness::cmd_sweep(&pam, dir.path(), SweepKind::Window, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let err = harness::cmd_sweep(&cfg, dir.path(), SweepKind::Window, Some(vec![])).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn scheme_mismatches_are_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let pam = small_pam(Scheme::Pam2Sffnn);
    assert!(matches!(harness::cmd_retrain(&pam, dir.path()), Err(HarnessError::Config(_))));
    assert!(matches!(harness::cmd_fit_volterra(&pam, dir.path()), Err(HarnessError::Config(_))));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());

    let mut bad = small_ae(Scheme::AeSbrnn);
    bad.link.samples_per_block = 4;
    assert!(matches!(bad.validate(), Err(HarnessError::Config(_))));
    let mut even = small_pam(Scheme::Pam2Sffnn);
    even.pam.window = 10;
    assert!(matches!(even.validate(), Err(HarnessError::Config(_))));

    // A model trained for one scheme is refused by another.
    let ae = small_ae(Scheme::AeSbrnn);
    harness::cmd_train(&ae, dir.path()).unwrap();
    let other = small_ae(Scheme::AeTxBrnnRxSffnn);
    assert!(harness::cmd_generate(&other, dir.path()).is_err());
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = small_ae(Scheme::AeTxBrnnRxSffnn);
    let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
    assert!(ExperimentConfig::from_toml("scheme = \"ae_sbrnn\"\nunknown = 1\n").is_err());
}

const CLI_CONFIG: &str = r#"
scheme = "pam2_volterra"
seed = 5

[link]
distance_km = 5.0
oversampling = 1
samples_per_block = 2

[pam]
window = 9
quadratic_window = 3
training_window = 9

[data]
sequences = 4
sequence_len = 512
"#;

fn imdd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_imdd")).args(args).output().unwrap()
}

#[test]
fn command_line_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(&config, CLI_CONFIG).unwrap();
    let out = dir.path().join("out");
    fs::create_dir(&out).unwrap();
    let (c, o) = (config.to_str().unwrap(), out.to_str().unwrap());

    for cmd in ["generate", "fit-volterra", "eval", "report"] {
        let r = imdd(&["--config", c, "--out", o, cmd]);
        assert_eq!(r.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&r.stderr));
    }
    let r = imdd(&["--config", c, "--out", o, "sweep", "--kind", "distance", "--grid", "0,10"]);
    assert_eq!(r.status.code(), Some(0));
    assert!(out.join("sweep_distance.csv").exists());

    assert_eq!(imdd(&["train"]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "scheme = \"pam3\"\n").unwrap();
    assert_eq!(
        imdd(&["--config", bad.to_str().unwrap(), "--out", o, "generate"]).status.code(),
        Some(2)
    );
    let missing = dir.path().join("missing");
    let r = imdd(&["--config", c, "--out", missing.to_str().unwrap(), "generate"]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing"));
    assert_eq!(
        imdd(&["--config", dir.path().join("absent.toml").to_str().unwrap(), "generate"])
            .status
            .code(),
        Some(3)
    );

    // Corrupt model file.
    fs::write(out.join("model.imdd"), b"IMDDgarbage").unwrap();
    assert_eq!(imdd(&["--config", c, "--out", o, "eval"]).status.code(), Some(3));

    // A runaway learning rate drives the loss to infinity.
    let diverge = dir.path().join("diverge.toml");
    fs::write(
        &diverge,
        "scheme = \"ae_sbrnn\"\n[ae]\nalphabet_size = 4\nsamples_per_block = 8\n[link]\nsamples_per_block = 8\n[training]\nsteps = 50\nlearning_rate = 1e300\n",
    )
    .unwrap();
    let r = imdd(&["--config", diverge.to_str().unwrap(), "--out", o, "train"]);
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 7);
}
