//! PAM2/PAM4 transmission and its three receivers: a sliding-window
//! feed-forward network, a sliding-window bidirectional recurrent network
//! and a second-order Volterra equalizer.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_4;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, RxParams, TrainOutcome};
use crate::datasets::RecordedDataset;
use crate::error::{check_len, param, Error, Result};
use crate::lstsq;
use crate::nn::{self, AdamConfig, MlpParams, OptimizerState, Parameters};
use crate::rng::{stream, Domain};
use crate::signal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PamConfig {
    pub order: usize,
    /// Drive level per symbol index, strictly increasing.
    pub levels: Vec<f64>,
    pub samples_per_symbol: usize,
    pub rc_rolloff: f64,
    /// Raised-cosine filter span in symbols (even).
    pub rc_span: usize,
    /// Bit pattern carried by each symbol index.
    pub gray_map: Vec<u32>,
}

impl PamConfig {
    pub fn pam2() -> Self {
        PamConfig {
            order: 2,
            levels: vec![0.0, FRAC_PI_4],
            samples_per_symbol: 2,
            rc_rolloff: 0.25,
            rc_span: 16,
            gray_map: vec![0, 1],
        }
    }

    pub fn pam4() -> Self {
        PamConfig {
            order: 4,
            levels: vec![0.0, FRAC_PI_4 / 3.0, 2.0 * FRAC_PI_4 / 3.0, FRAC_PI_4],
            samples_per_symbol: 2,
            rc_rolloff: 0.25,
            rc_span: 16,
            gray_map: vec![0b00, 0b01, 0b11, 0b10],
        }
    }

    pub fn for_order(order: usize) -> Result<Self> {
        match order {
            2 => Ok(PamConfig::pam2()),
            4 => Ok(PamConfig::pam4()),
            _ => Err(param("PAM order must be 2 or 4")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order != 2 && self.order != 4 {
            return Err(param("PAM order must be 2 or 4"));
        }
        check_len("PAM levels", self.order, self.levels.len())?;
        check_len("PAM bit map", self.order, self.gray_map.len())?;
        if self.levels.windows(2).any(|w| w[0] >= w[1]) || self.levels[0] < 0.0 || self.levels[self.order - 1] > FRAC_PI_4 {
            return Err(param("PAM levels must increase strictly within [0, pi/4]"));
        }
        let mut seen = vec![false; self.order];
        for &b in &self.gray_map {
            if b as usize >= self.order || seen[b as usize] {
                return Err(param("PAM bit map must be a bijection"));
            }
            seen[b as usize] = true;
        }
        if self.samples_per_symbol == 0 {
            return Err(param("samples per symbol must be positive"));
        }
        Ok(())
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.order.trailing_zeros()
    }

    fn symbol_of_pattern(&self, pattern: u32) -> usize {
        self.gray_map.iter().position(|b| *b == pattern).unwrap_or(0)
    }

    /// Index of the level nearest to `v` (thresholds at level midpoints).
    pub fn slice(&self, v: f64) -> usize {
        self.levels.windows(2).take_while(|w| v >= 0.5 * (w[0] + w[1])).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PamSignal {
    pub symbols: Vec<usize>,
    /// Pulse-shaped drive at `samples_per_symbol` samples per symbol.
    pub drive: Vec<f64>,
}

/// Maps bits (MSB first within a symbol) to levels, zero-stuffs to the
/// sample rate and shapes with raised-cosine taps.
pub fn pam_modulate(bits: &[u8], cfg: &PamConfig) -> Result<PamSignal> {
    cfg.validate()?;
    let k = cfg.bits_per_symbol() as usize;
    if bits.is_empty() || !bits.len().is_multiple_of(k) {
        return Err(param("bit count must be a positive multiple of bits per symbol"));
    }
    if bits.iter().any(|b| *b > 1) {
        return Err(param("bits must be 0 or 1"));
    }
    let symbols: Vec<usize> = bits
        .chunks(k)
        .map(|c| cfg.symbol_of_pattern(c.iter().fold(0u32, |acc, b| (acc << 1) | *b as u32)))
        .collect();
    let n = cfg.samples_per_symbol;
    let mut stuffed = vec![0.0; symbols.len() * n];
    for (i, s) in symbols.iter().enumerate() {
        stuffed[i * n] = cfg.levels[*s];
    }
    let taps = signal::raised_cosine_taps(cfg.rc_rolloff, cfg.rc_span, n)?;
    Ok(PamSignal {
        symbols,
        drive: signal::convolve_same(&stuffed, &taps),
    })
}

/// Inverse of the bit-to-symbol map, MSB first.
pub fn symbols_to_bits(symbols: &[usize], cfg: &PamConfig) -> Vec<u8> {
    let k = cfg.bits_per_symbol();
    symbols
        .iter()
        .flat_map(|s| {
            let p = cfg.gray_map[*s];
            (0..k).rev().map(move |i| ((p >> i) & 1) as u8)
        })
        .collect()
}

/// Samples of the `w` symbols centered on symbol `t`, zero outside the
/// sequence.
pub fn centered_window(samples: &[f64], n: usize, t: usize, w: usize) -> Vec<f64> {
    let half = (w / 2) as isize;
    let symbols = (samples.len() / n) as isize;
    let mut out = vec![0.0; w * n];
    for k in 0..w as isize {
        let s = t as isize - half + k;
        if s >= 0 && s < symbols {
            let s = s as usize;
            out[k as usize * n..(k as usize + 1) * n].copy_from_slice(&samples[s * n..(s + 1) * n]);
        }
    }
    out
}

fn check_odd(w: usize, what: &str) -> Result<()> {
    if w == 0 || w.is_multiple_of(2) {
        return Err(param(alloc::format!("{what} must be odd so a center symbol exists")));
    }
    Ok(())
}

/// Input, six hidden layers of `⌊4Wn / 2^(i-1)⌋` (at least 1) and the
/// output width.
pub fn sffnn_layer_dims(w: usize, n: usize, classes: usize) -> Result<Vec<usize>> {
    check_odd(w, "window")?;
    if n == 0 || classes < 2 {
        return Err(param("need samples per symbol and at least two classes"));
    }
    let mut dims = vec![w * n];
    dims.extend((0..6).map(|i| ((4 * w * n) >> i).max(1)));
    dims.push(classes);
    Ok(dims)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SffnnParams {
    pub window: usize,
    pub samples_per_symbol: usize,
    pub net: MlpParams,
}

impl SffnnParams {
    pub fn init<R: RngCore + ?Sized>(window: usize, samples_per_symbol: usize, classes: usize, rng: &mut R) -> Result<Self> {
        let dims = sffnn_layer_dims(window, samples_per_symbol, classes)?;
        Ok(SffnnParams {
            window,
            samples_per_symbol,
            net: MlpParams::init(&dims, rng)?,
        })
    }

    pub fn classes(&self) -> usize {
        self.net.output_dim()
    }
}

impl Parameters for SffnnParams {
    fn slices(&self) -> Vec<&[f64]> {
        self.net.slices()
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.slices_mut()
    }
}

/// Center-symbol class probabilities for one `W·n`-sample window.
pub fn sffnn_detect(window: &[f64], params: &SffnnParams) -> Result<Vec<f64>> {
    let tape = nn::mlp_forward(&params.net, window)?;
    Ok(tape.get()?.probabilities().to_vec())
}

/// Decisions for every symbol of a received sequence, windows zero-padded
/// at the edges.
pub fn sffnn_detect_sequence(samples: &[f64], params: &SffnnParams) -> Result<Vec<usize>> {
    let n = params.samples_per_symbol;
    if !samples.len().is_multiple_of(n) {
        return Err(param("received samples must be a whole number of symbols"));
    }
    (0..samples.len() / n)
        .map(|t| {
            let p = sffnn_detect(&centered_window(samples, n, t, params.window), params)?;
            Ok(crate::slidingwindow::argmax(&p))
        })
        .collect()
}

/// One epoch over the dataset columns: step `s` feeds every row's window
/// `[s, s + W)` and targets the label in its center column.
pub fn train_sffnn(
    dataset: &RecordedDataset,
    window: usize,
    classes: usize,
    optimizer: AdamConfig,
    seed: u64,
) -> Result<TrainOutcome<SffnnParams>> {
    let n = dataset.block_len();
    let mut params = SffnnParams::init(window, n, classes, &mut stream(seed, Domain::Init, 0))?;
    if window > dataset.columns() {
        return Err(param("window exceeds the dataset columns"));
    }
    if dataset.labels().iter().any(|l| *l as usize >= classes) {
        return Err(param("dataset labels exceed the class count"));
    }
    let mut opt = OptimizerState::new(&params, optimizer);
    let steps = dataset.columns() - window;
    let weight = 1.0 / dataset.rows() as f64;
    let mut trace = Vec::with_capacity(steps);
    for s in 0..steps {
        let batch = dataset.window(s, window, true)?;
        let mut grads = params.zeros_like();
        let mut loss = 0.0;
        for r in 0..batch.rows {
            let label = batch.label_row(r)[0] as usize;
            let tape = nn::mlp_forward(&params.net, batch.data_row(r))?;
            loss += weight * nn::cross_entropy_index(label, tape.get()?.probabilities());
            nn::mlp_backward(&params.net, &tape, label, weight, &mut grads.net)?;
        }
        if !loss.is_finite() {
            return Err(Error::Divergence { step: s });
        }
        opt.step(&mut params, &grads).map_err(|_| Error::Divergence { step: s })?;
        trace.push(loss);
    }
    Ok(TrainOutcome { params, loss_trace: trace })
}

/// Bidirectional recurrent receiver for PAM symbols trained on column
/// windows of `v` symbols; detect with the sliding-window estimator.
pub fn pam_sbrnn_receiver(
    dataset: &RecordedDataset,
    v: usize,
    classes: usize,
    optimizer: AdamConfig,
    seed: u64,
) -> Result<TrainOutcome<RxParams>> {
    let rx = RxParams::init(dataset.block_len(), classes, &mut stream(seed, Domain::Init, 0));
    autoencoder::train_rx_on_dataset(&rx, dataset, v, optimizer)
}

/// Second-order Volterra kernel over a `W·n` linear and a centered
/// `W1·n` quadratic sample window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolterraCoeffs {
    pub window: usize,
    pub quadratic_window: usize,
    pub samples_per_symbol: usize,
    pub dc: f64,
    pub linear: Vec<f64>,
    /// Upper-triangular products `y_i·y_j`, `j ≥ i`, row by row.
    pub quadratic: Vec<f64>,
}

impl VolterraCoeffs {
    /// Coefficients that pass the center sample of each symbol straight through.
    pub fn identity(window: usize, quadratic_window: usize, samples_per_symbol: usize) -> Result<Self> {
        let len = volterra_feature_len(window, quadratic_window, samples_per_symbol)?;
        let mut linear = vec![0.0; window * samples_per_symbol];
        linear[(window / 2) * samples_per_symbol] = 1.0;
        Ok(VolterraCoeffs {
            window,
            quadratic_window,
            samples_per_symbol,
            dc: 0.0,
            linear,
            quadratic: vec![0.0; len - 1 - window * samples_per_symbol],
        })
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = vec![self.dc];
        v.extend_from_slice(&self.linear);
        v.extend_from_slice(&self.quadratic);
        v
    }
}

pub fn volterra_feature_len(w: usize, w1: usize, n: usize) -> Result<usize> {
    check_odd(w, "Volterra window")?;
    check_odd(w1, "Volterra quadratic window")?;
    if w1 > w {
        return Err(param("quadratic window must not exceed the linear window"));
    }
    if n == 0 {
        return Err(param("samples per symbol must be positive"));
    }
    let q = w1 * n;
    Ok(1 + w * n + q * (q + 1) / 2)
}

pub fn volterra_features(samples: &[f64], w: usize, w1: usize, n: usize) -> Result<Vec<f64>> {
    let len = volterra_feature_len(w, w1, n)?;
    check_len("Volterra window", w * n, samples.len())?;
    let mut f = Vec::with_capacity(len);
    f.push(1.0);
    f.extend_from_slice(samples);
    let off = (w - w1) / 2 * n;
    let q = &samples[off..off + w1 * n];
    for i in 0..q.len() {
        for j in i..q.len() {
            f.push(q[i] * q[j]);
        }
    }
    Ok(f)
}

/// Fit result with rank diagnostics of the design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraFit {
    pub coeffs: VolterraCoeffs,
    pub rank: usize,
    pub features: usize,
    pub rank_deficient: bool,
    pub train_mse: f64,
}

/// Least-squares fit of transmitted level values on Volterra features.
///
/// Every `(samples, symbols)` pair is one received sequence; only symbols
/// whose full `W`-symbol window lies inside the sequence are used.
pub fn volterra_fit_sequences(sequences: &[(&[f64], &[usize])], w: usize, w1: usize, n: usize, levels: &[f64]) -> Result<VolterraFit> {
    let p = volterra_feature_len(w, w1, n)?;
    let half = w / 2;
    let mut design = Vec::new();
    let mut target = Vec::new();
    for (samples, symbols) in sequences {
        check_len("received samples", symbols.len() * n, samples.len())?;
        for t in half..symbols.len().saturating_sub(half) {
            let s = *symbols.get(t).ok_or(Error::Contract("symbol index"))?;
            let y = *levels.get(s).ok_or_else(|| param("symbol outside the level alphabet"))?;
            design.extend(volterra_features(&samples[(t - half) * n..(t + half + 1) * n], w, w1, n)?);
            target.push(y);
        }
    }
    if target.is_empty() {
        return Err(Error::Degenerate("no symbol has a complete window"));
    }
    let sol = lstsq::lstsq(&design, target.len(), p, &target, None)?;
    let train_mse = sol.residual_norm * sol.residual_norm / target.len() as f64;
    let coeffs = VolterraCoeffs {
        window: w,
        quadratic_window: w1,
        samples_per_symbol: n,
        dc: sol.x[0],
        linear: sol.x[1..1 + w * n].to_vec(),
        quadratic: sol.x[1 + w * n..].to_vec(),
    };
    Ok(VolterraFit {
        rank_deficient: sol.rank_deficient(),
        rank: sol.rank,
        features: p,
        coeffs,
        train_mse,
    })
}

/// Fits on the selected dataset rows.
pub fn volterra_fit(dataset: &RecordedDataset, rows: &[usize], w: usize, w1: usize, cfg: &PamConfig) -> Result<VolterraFit> {
    check_len("samples per symbol", cfg.samples_per_symbol, dataset.block_len())?;
    if rows.is_empty() || rows.iter().any(|r| *r >= dataset.rows()) {
        return Err(param("Volterra training rows must be valid dataset rows"));
    }
    let labels: Vec<Vec<usize>> = rows
        .iter()
        .map(|r| dataset.label_row(*r).iter().map(|l| *l as usize).collect())
        .collect();
    let seqs: Vec<(&[f64], &[usize])> = rows
        .iter()
        .zip(&labels)
        .map(|(r, l)| (dataset.data_row(*r), l.as_slice()))
        .collect();
    volterra_fit_sequences(&seqs, w, w1, cfg.samples_per_symbol, &cfg.levels)
}

/// Soft equalizer output for every symbol (edge windows zero-padded).
pub fn volterra_output(coeffs: &VolterraCoeffs, samples: &[f64]) -> Result<Vec<f64>> {
    let n = coeffs.samples_per_symbol;
    if !samples.len().is_multiple_of(n) {
        return Err(param("received samples must be a whole number of symbols"));
    }
    let flat = coeffs.flat();
    (0..samples.len() / n)
        .map(|t| {
            let f = volterra_features(
                &centered_window(samples, n, t, coeffs.window),
                coeffs.window,
                coeffs.quadratic_window,
                n,
            )?;
            check_len("Volterra coefficients", f.len(), flat.len())?;
            Ok(f.iter().zip(&flat).map(|(a, b)| a * b).sum())
        })
        .collect()
}

/// Equalizes and slices to the nearest level.
pub fn volterra_equalize(coeffs: &VolterraCoeffs, samples: &[f64], cfg: &PamConfig) -> Result<Vec<usize>> {
    Ok(volterra_output(coeffs, samples)?.into_iter().map(|v| cfg.slice(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{DatasetMeta, SchemeTag};
    use crate::rng::GeneratorKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_symbols(len: usize, order: usize, seed: u64) -> Vec<usize> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(0..order)).collect()
    }

    /// Rows of `[level, level]` per symbol with optional Gaussian-free jitter.
    fn memoryless_dataset(cfg: &PamConfig, rows: usize, columns: usize, seed: u64) -> RecordedDataset {
        let symbols = random_symbols(rows * columns, cfg.order, seed);
        let data = symbols.iter().flat_map(|s| [cfg.levels[*s]; 2]).collect();
        let labels = symbols.iter().map(|s| *s as u16).collect();
        let meta = DatasetMeta {
            scheme: SchemeTag::Synthetic,
            seed,
            link: None,
            generator: GeneratorKind::Chacha,
            sequence_len: columns,
        };
        RecordedDataset::new(rows, columns, 2, data, labels, meta).unwrap()
    }

    #[test]
    fn pam2_identity_levels() {
        let s = pam_modulate(&[0, 1], &PamConfig::pam2()).unwrap();
        assert_eq!(s.symbols, vec![0, 1]);
        let cfg = PamConfig::pam2();
        assert_eq!(cfg.levels[s.symbols[0]], 0.0);
        assert_eq!(cfg.levels[s.symbols[1]], FRAC_PI_4);
    }

    #[test]
    fn pam4_gray_neighbors_differ_in_one_bit() {
        let cfg = PamConfig::pam4();
        for w in cfg.gray_map.windows(2) {
            assert_eq!((w[0] ^ w[1]).count_ones(), 1);
        }
        let bits = [0, 0, 0, 1, 1, 1, 1, 0];
        let s = pam_modulate(&bits, &cfg).unwrap();
        assert_eq!(s.symbols, vec![0, 1, 2, 3]);
        assert_eq!(symbols_to_bits(&s.symbols, &cfg), bits.to_vec());
    }

    #[test]
    fn all_zero_bits_give_silent_drive() {
        let s = pam_modulate(&[0; 40], &PamConfig::pam4()).unwrap();
        assert!(s.symbols.iter().all(|v| *v == 0));
        assert!(s.drive.iter().all(|v| *v == 0.0));
        assert!(pam_modulate(&[0, 1, 1], &PamConfig::pam4()).is_err());
    }

    #[test]
    fn shaped_drive_hits_levels_at_symbol_instants() {
        let cfg = PamConfig::pam4();
        let bits: Vec<u8> = random_symbols(400, 2, 9).into_iter().map(|b| b as u8).collect();
        let s = pam_modulate(&bits, &cfg).unwrap();
        for t in 20..180 {
            assert!((s.drive[2 * t] - cfg.levels[s.symbols[t]]).abs() < 1e-12);
        }
    }

    #[test]
    fn slicer_thresholds() {
        let cfg = PamConfig::pam4();
        for (i, l) in cfg.levels.iter().enumerate() {
            assert_eq!(cfg.slice(*l), i);
        }
        assert_eq!(cfg.slice(-1.0), 0);
        assert_eq!(cfg.slice(0.99 * FRAC_PI_4 / 6.0), 0);
        assert_eq!(cfg.slice(10.0), 3);
    }

    #[test]
    fn sffnn_dims_examples() {
        assert_eq!(sffnn_layer_dims(61, 2, 2).unwrap(), vec![122, 488, 244, 122, 61, 30, 15, 2]);
        assert_eq!(sffnn_layer_dims(61, 2, 4).unwrap(), vec![122, 488, 244, 122, 61, 30, 15, 4]);
        assert_eq!(sffnn_layer_dims(1, 2, 2).unwrap(), vec![2, 8, 4, 2, 1, 1, 1, 2]);
        assert!(sffnn_layer_dims(60, 2, 2).is_err());
    }

    #[test]
    fn sffnn_detect_contract() {
        let p = SffnnParams::init(5, 2, 4, &mut stream(2, Domain::Init, 0)).unwrap();
        let out = sffnn_detect(&[0.3; 10], &p).unwrap();
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sffnn_detect(&[0.3; 9], &p).is_err());
    }

    #[test]
    fn shifting_window_targets_next_symbol() {
        let samples: Vec<f64> = (0..40).map(|v| v as f64).collect();
        let w0 = centered_window(&samples, 2, 7, 5);
        let w1 = centered_window(&samples, 2, 8, 5);
        assert_eq!(&w0[2..], &w1[..8]);
        assert_eq!(&w1[4..6], &samples[16..18]);
        let edge = centered_window(&samples, 2, 0, 5);
        assert_eq!(&edge[..4], &[0.0; 4]);
        assert_eq!(&edge[4..], &samples[..6]);
    }

    #[test]
    fn sffnn_learns_memoryless_channel() {
        let cfg = PamConfig::pam4();
        let train = memoryless_dataset(&cfg, 8, 1500, 1);
        let opt = AdamConfig {
            learning_rate: 3e-3,
            ..AdamConfig::default()
        };
        let out = train_sffnn(&train, 9, 4, opt, 7).unwrap();
        assert_eq!(out.loss_trace.len(), 1500 - 9);
        let test = memoryless_dataset(&cfg, 1, 2000, 99);
        let dec = sffnn_detect_sequence(test.data_row(0), &out.params).unwrap();
        let truth: Vec<usize> = test.label_row(0).iter().map(|l| *l as usize).collect();
        let wrong = (4..1996).filter(|t| dec[*t] != truth[*t]).count();
        // Edge symbols see zero padding; interior ones must all be right.
        assert_eq!(wrong, 0);
        let again = train_sffnn(&train, 9, 4, opt, 7).unwrap();
        assert_eq!(again.params, out.params);
    }

    #[test]
    fn sbrnn_receiver_outputs_probabilities() {
        use crate::slidingwindow::estimate_sequence;
        let cfg = PamConfig::pam2();
        let ds = memoryless_dataset(&cfg, 2, 40, 4);
        let out = pam_sbrnn_receiver(&ds, 7, 2, AdamConfig::default(), 3).unwrap();
        assert_eq!(out.loss_trace.len(), 33);
        assert_eq!(out.params.block_len(), 2);
        let est = estimate_sequence(ds.data_row(0), &out.params, 7).unwrap();
        for i in 0..est.probs.len() {
            assert!((est.probs.get(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let again = pam_sbrnn_receiver(&ds, 7, 2, AdamConfig::default(), 3).unwrap();
        assert_eq!(again.params, out.params);
    }

    #[test]
    fn volterra_feature_examples() {
        assert_eq!(volterra_feature_len(61, 21, 2).unwrap(), 1026);
        assert_eq!(volterra_features(&[2.0], 1, 1, 1).unwrap(), vec![1.0, 2.0, 4.0]);
        let z = volterra_features(&[0.0; 10], 5, 3, 2).unwrap();
        assert_eq!(z[0], 1.0);
        assert!(z[1..].iter().all(|v| *v == 0.0));
        assert!(volterra_features(&[0.0; 6], 3, 5, 2).is_err());
    }

    #[test]
    fn volterra_feature_length_grid() {
        for w in (1..=9).step_by(2) {
            for w1 in (1..=w).step_by(2) {
                for n in 1..=3 {
                    let f = volterra_features(&vec![1.0; w * n], w, w1, n).unwrap();
                    // Count products by enumeration of pairs i <= j.
                    let q = w1 * n;
                    let pairs = (0..q).flat_map(|i| (i..q).map(move |j| (i, j))).count();
                    assert_eq!(f.len(), 1 + w * n + pairs);
                }
            }
        }
    }

    fn identity_data(len: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
        let cfg = PamConfig::pam4();
        let symbols = random_symbols(len, 4, seed);
        (symbols.iter().map(|s| cfg.levels[*s]).collect(), symbols)
    }

    #[test]
    fn volterra_identity_channel() {
        let cfg = PamConfig::pam4();
        let (y, s) = identity_data(400, 3);
        let fit = volterra_fit_sequences(&[(&y, &s)], 3, 1, 1, &cfg.levels).unwrap();
        assert!(!fit.rank_deficient);
        let c = &fit.coeffs;
        assert!(c.dc.abs() < 1e-6);
        assert!((c.linear[1] - 1.0).abs() < 1e-6);
        assert!(c.linear[0].abs() < 1e-6 && c.linear[2].abs() < 1e-6);
        assert!(c.quadratic.iter().all(|q| q.abs() < 1e-6));
        assert!(fit.train_mse < 1e-20);
    }

    fn isi_channel(symbols: &[usize], levels: &[f64], seed: u64, noise: f64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = symbols.iter().map(|s| levels[*s]).collect();
        (0..x.len())
            .map(|t| {
                let prev = if t > 0 { x[t - 1] } else { 0.0 };
                let next = x.get(t + 1).copied().unwrap_or(0.0);
                let v = x[t] + 0.3 * prev - 0.2 * next;
                v + 0.4 * v * v + noise * rng.random_range(-1.0..1.0)
            })
            .collect()
    }

    #[test]
    fn residual_is_orthogonal_and_shift_moves_only_dc() {
        let cfg = PamConfig::pam4();
        let s = random_symbols(300, 4, 5);
        let y = isi_channel(&s, &cfg.levels, 6, 0.05);
        let fit = volterra_fit_sequences(&[(&y, &s)], 3, 3, 1, &cfg.levels).unwrap();
        let flat = fit.coeffs.flat();
        let mut dots = vec![0.0; flat.len()];
        let mut scale = vec![0.0; flat.len()];
        for t in 1..299 {
            let f = volterra_features(&y[t - 1..t + 2], 3, 3, 1).unwrap();
            let r: f64 = f.iter().zip(&flat).map(|(a, b)| a * b).sum::<f64>() - cfg.levels[s[t]];
            for j in 0..f.len() {
                dots[j] += f[j] * r;
                scale[j] += f[j].abs() * cfg.levels[s[t]].abs();
            }
        }
        for j in 0..dots.len() {
            assert!(dots[j].abs() <= 1e-8 * scale[j].max(1.0), "feature {j}: {}", dots[j]);
        }
        // Shifted targets via shifted levels.
        let c = 0.7;
        let shifted: Vec<f64> = cfg.levels.iter().map(|l| l + c).collect();
        let fit2 = volterra_fit_sequences(&[(&y, &s)], 3, 3, 1, &shifted).unwrap();
        assert!((fit2.coeffs.dc - fit.coeffs.dc - c).abs() < 1e-8);
        for (a, b) in fit2.coeffs.linear.iter().zip(&fit.coeffs.linear) {
            assert!((a - b).abs() < 1e-8);
        }
        for (a, b) in fit2.coeffs.quadratic.iter().zip(&fit.coeffs.quadratic) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn nested_quadratic_windows_never_raise_training_error() {
        let cfg = PamConfig::pam4();
        let s = random_symbols(400, 4, 11);
        let y = isi_channel(&s, &cfg.levels, 12, 0.05);
        let mut last = f64::INFINITY;
        for w1 in [1, 3, 5] {
            let fit = volterra_fit_sequences(&[(&y, &s)], 5, w1, 1, &cfg.levels).unwrap();
            assert!(fit.train_mse <= last * (1.0 + 1e-9));
            last = fit.train_mse;
        }
    }

    #[test]
    fn identity_coefficients_pass_levels() {
        let cfg = PamConfig::pam4();
        let c = VolterraCoeffs::identity(3, 1, 2).unwrap();
        let samples: Vec<f64> = [2usize, 0, 3, 1].iter().flat_map(|s| [cfg.levels[*s], 9.0]).collect();
        assert_eq!(volterra_equalize(&c, &samples, &cfg).unwrap(), vec![2, 0, 3, 1]);
        let low = vec![-0.5; 4];
        assert_eq!(volterra_equalize(&c, &low, &cfg).unwrap(), vec![0, 0]);
    }

    #[test]
    fn volterra_removes_mild_isi() {
        let cfg = PamConfig::pam4();
        let s = random_symbols(2000, 4, 21);
        let y = isi_channel(&s, &cfg.levels, 22, 0.0);
        let fit = volterra_fit_sequences(&[(&y, &s)], 5, 3, 1, &cfg.levels).unwrap();
        let test = random_symbols(5000, 4, 23);
        let ty = isi_channel(&test, &cfg.levels, 24, 0.0);
        let dec = volterra_equalize(&fit.coeffs, &ty, &cfg).unwrap();
        assert_eq!(&dec[2..4998], &test[2..4998]);
    }

    proptest! {
        #[test]
        fn sffnn_dims_shrink_after_first_hidden(w in 0usize..50, n in 1usize..4, c in 2usize..8) {
            let dims = sffnn_layer_dims(2 * w + 1, n, c).unwrap();
            prop_assert_eq!(dims.len(), 8);
            prop_assert_eq!(dims[0], (2 * w + 1) * n);
            for k in 2..7 {
                prop_assert!(dims[k] <= dims[k - 1]);
            }
        }
    }
}
