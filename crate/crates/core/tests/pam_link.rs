use imdd_core::channel::LinkConfig;
use imdd_core::datasets::build_pam_dataset;
use imdd_core::metrics::ber_pam;
use imdd_core::nn::AdamConfig;
use imdd_core::pamsys::{self, PamConfig};
use imdd_core::rng::GeneratorKind;

fn pam_link(distance_km: f64) -> LinkConfig {
    LinkConfig {
        distance_km,
        oversampling: 1,
        samples_per_block: 2,
        ..LinkConfig::default()
    }
}

#[test]
fn sffnn_on_a_back_to_back_link() {
    let cfg = PamConfig::pam2();
    let (train, test) = build_pam_dataset(&cfg, &pam_link(0.0), 10, 4096, 7, GeneratorKind::Chacha).unwrap();
    let w = 21;
    let out = pamsys::train_sffnn(&train, w, 2, AdamConfig::default(), 7).unwrap();
    assert_eq!(out.loss_trace.len(), train.columns() - w);

    let mut truth = Vec::new();
    let mut decided = Vec::new();
    for r in 0..test.rows() {
        truth.extend(test.label_row(r).iter().map(|l| *l as usize));
        decided.extend(pamsys::sffnn_detect_sequence(test.data_row(r), &out.params).unwrap());
    }
    let ber = ber_pam(&pamsys::symbols_to_bits(&truth, &cfg), &pamsys::symbols_to_bits(&decided, &cfg)).unwrap();
    assert!(ber < 1e-3, "BER {ber}");
}

#[test]
fn sffnn_training_is_reproducible() {
    let cfg = PamConfig::pam4();
    let (train, _) = build_pam_dataset(&cfg, &pam_link(10.0), 4, 512, 3, GeneratorKind::MersenneTwister).unwrap();
    let a = pamsys::train_sffnn(&train, 5, 4, AdamConfig::default(), 11).unwrap();
    let b = pamsys::train_sffnn(&train, 5, 4, AdamConfig::default(), 11).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.loss_trace, b.loss_trace);
    let c = pamsys::train_sffnn(&train, 5, 4, AdamConfig::default(), 12).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn volterra_fit_on_one_recorded_row_is_quick() {
    let cfg = PamConfig::pam4();
    let (train, test) = build_pam_dataset(&cfg, &pam_link(10.0), 4, 8192, 5, GeneratorKind::Chacha).unwrap();
    let start = std::time::Instant::now();
    let fit = pamsys::volterra_fit(&train, &[0], 61, 21, &cfg).unwrap();
    assert!(start.elapsed().as_secs_f64() < 60.0);
    assert_eq!(fit.features, 1026);
    assert!(fit.train_mse.is_finite());
    let decided = pamsys::volterra_equalize(&fit.coeffs, test.data_row(0), &cfg).unwrap();
    assert_eq!(decided.len(), test.columns());
}
