//! Sliding-window BRNN auto-encoder.
//!
//! The transmitter is a bidirectional recurrent layer with the clipping
//! activation and averaged directions; it maps one-hot messages to blocks of
//! `n` drive samples in `[0, π/4]`. The receiver is a bidirectional ReLU
//! layer with concatenated directions followed by a softmax head.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::channel::{self, LinkConfig};
use crate::datasets::RecordedDataset;
use crate::error::{check_len, param, Error, Result};
use crate::nn::{self, Activation, AdamConfig, BrnnCellParams, BrnnTrace, Combine, DenseParams, OptimizerState, Parameters, Tape};
use crate::rng::{stream, Domain};
use crate::signal::Waveform;
use crate::slidingwindow::WindowEstimator;

/// Alphabet, block length and window sizes of the auto-encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeConfig {
    pub alphabet_size: usize,
    pub samples_per_block: usize,
    /// Receiver window `W` used by sliding-window estimation.
    pub estimation_window: usize,
    /// Window `V` of blocks the receiver is trained on.
    pub training_window: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            alphabet_size: 64,
            samples_per_block: 48,
            estimation_window: 10,
            training_window: 10,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphabet_size < 2 || !self.alphabet_size.is_power_of_two() {
            return Err(param("alphabet size must be a power of two >= 2"));
        }
        if self.alphabet_size > 1 << 16 {
            return Err(param("alphabet size must fit 16-bit labels"));
        }
        if self.samples_per_block == 0 || self.estimation_window == 0 || self.training_window == 0 {
            return Err(param("block length and windows must be positive"));
        }
        Ok(())
    }

    pub fn bits_per_block(&self) -> u32 {
        self.alphabet_size.trailing_zeros()
    }
}

/// Receiver: bidirectional ReLU layer plus softmax head over `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxParams {
    pub cell: BrnnCellParams,
    pub head: DenseParams,
}

impl RxParams {
    /// Hidden width `2·classes` per direction, head `classes × 4·classes`.
    pub fn init<R: RngCore + ?Sized>(block_len: usize, classes: usize, rng: &mut R) -> Self {
        let cell = BrnnCellParams::init(block_len, 2 * classes, Combine::Concatenate, Activation::Relu, rng);
        let head = DenseParams::init(classes, 4 * classes, rng);
        RxParams { cell, head }
    }

    pub fn classes(&self) -> usize {
        self.head.out_dim
    }

    pub fn block_len(&self) -> usize {
        self.cell.input_dim()
    }

    fn forward(&self, blocks: &[f64]) -> Result<(Tape<BrnnTrace>, Vec<f64>)> {
        let zero = vec![0.0; self.cell.hidden_dim()];
        let tape = nn::brnn_forward(&self.cell, blocks, &zero)?;
        let probs = nn::softmax_head_forward(&self.head, &tape.get()?.outputs)?;
        Ok((tape, probs))
    }

    /// Runs the receiver over all `blocks` and scores positions
    /// `[start, start + labels.len())`. Accumulates `weight · Σ CE`
    /// gradients and returns the summed loss plus, when `want_inputs` is
    /// set, the gradient with respect to every input block.
    pub fn scored_loss(
        &self,
        blocks: &[f64],
        start: usize,
        labels: &[usize],
        weight: f64,
        grads: &mut RxParams,
        want_inputs: bool,
    ) -> Result<(f64, Vec<f64>)> {
        let zero = vec![0.0; self.cell.hidden_dim()];
        let tape = nn::brnn_forward(&self.cell, blocks, &zero)?;
        let outputs = &tape.get()?.outputs;
        let d = self.cell.output_dim();
        if (start + labels.len()) * d > outputs.len() {
            return Err(param("scored positions exceed the received sequence"));
        }
        let features = &outputs[start * d..(start + labels.len()) * d];
        let probs = nn::softmax_head_forward(&self.head, features)?;
        let k = self.classes();
        let mut loss = 0.0;
        for (t, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(param("label outside the receiver alphabet"));
            }
            loss += nn::cross_entropy_index(l, &probs[t * k..(t + 1) * k]);
        }
        let g_scored = nn::softmax_head_backward(&self.head, features, &probs, labels, weight, &mut grads.head);
        let mut g_feat = vec![0.0; outputs.len()];
        g_feat[start * d..(start + labels.len()) * d].copy_from_slice(&g_scored);
        let g = nn::brnn_backward(&self.cell, &tape, &g_feat, &mut grads.cell, want_inputs)?;
        Ok((loss, g))
    }
}

impl Parameters for RxParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.cell.slices();
        v.extend(self.head.slices());
        v
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.cell.slices_mut();
        v.extend(self.head.slices_mut());
        v
    }
}

impl WindowEstimator for RxParams {
    fn classes(&self) -> usize {
        self.head.out_dim
    }

    fn block_len(&self) -> usize {
        self.cell.input_dim()
    }

    fn estimate_window(&self, blocks: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(blocks)?.1)
    }
}

/// Transmitter and receiver parameters. The flat layout puts every
/// transmitter parameter first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeParams {
    pub tx: BrnnCellParams,
    pub rx: RxParams,
}

impl AeParams {
    pub fn init<R: RngCore + ?Sized>(cfg: &AeConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (m, n) = (cfg.alphabet_size, cfg.samples_per_block);
        let tx = BrnnCellParams::init(m, n, Combine::Average, Activation::Clip, rng);
        let rx = RxParams::init(n, m, rng);
        Ok(AeParams { tx, rx })
    }

    pub fn alphabet_size(&self) -> usize {
        self.tx.input_dim()
    }

    pub fn samples_per_block(&self) -> usize {
        self.tx.hidden_dim()
    }

    pub fn tx_param_count(&self) -> usize {
        self.tx.num_params()
    }
}

impl Parameters for AeParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.tx.slices();
        v.extend(self.rx.slices());
        v
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.tx.slices_mut();
        v.extend(self.rx.slices_mut());
        v
    }
}

fn one_hot_sequence(messages: &[usize], m: usize) -> Result<Vec<f64>> {
    if messages.is_empty() {
        return Err(Error::Degenerate("message sequence is empty"));
    }
    let mut x = vec![0.0; messages.len() * m];
    for (t, &msg) in messages.iter().enumerate() {
        if msg >= m {
            return Err(param("message outside the alphabet"));
        }
        x[t * m + msg] = 1.0;
    }
    Ok(x)
}

fn encode_with_tape(tx: &BrnnCellParams, messages: &[usize]) -> Result<Tape<BrnnTrace>> {
    let x = one_hot_sequence(messages, tx.input_dim())?;
    nn::brnn_forward(tx, &x, &vec![0.0; tx.hidden_dim()])
}

/// Encodes a message sequence into flat blocks of drive samples.
pub fn encode_sequence(messages: &[usize], tx: &BrnnCellParams) -> Result<Vec<f64>> {
    let tape = encode_with_tape(tx, messages)?;
    let outputs = &tape.get()?.outputs;
    Ok(outputs.clone())
}

/// Runs the receiver over exactly `window` blocks; returns `window`
/// probability vectors, flat.
pub fn receive_window(blocks: &[f64], rx: &RxParams, window: usize) -> Result<Vec<f64>> {
    check_len("receiver window", window * rx.block_len(), blocks.len())?;
    rx.estimate_window(blocks)
}

/// Encodes `messages` and passes them through the simulated link.
pub fn transmit<R: RngCore + ?Sized>(params: &AeParams, messages: &[usize], link: &LinkConfig, rng: &mut R) -> Result<Vec<f64>> {
    check_len("link block length", params.samples_per_block(), link.samples_per_block)?;
    let drive = encode_sequence(messages, &params.tx)?;
    let w = Waveform::new(drive, link.sim_rate_hz())?;
    Ok(channel::simulate_link(&w, link, rng)?.into_samples())
}

/// Step budget and batching of model-based training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub steps: usize,
    pub batch_size: usize,
    /// Blocks added on each side of the scored window (default `W`). The
    /// The receiver sees a random span of `V..=V+2G` blocks with the scored window inside it.
    pub guard_blocks: Option<usize>,
    pub optimizer: AdamConfig,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            steps: 20_000,
            batch_size: 32,
            guard_blocks: None,
            optimizer: AdamConfig::default(),
        }
    }
}

/// Trained parameters and the per-step mean loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub params: P,
    pub loss_trace: Vec<f64>,
}

/// One transmitted training sequence. The receiver processes blocks
/// `[rx_start, rx_start + rx_len)` and is scored on the `V` blocks starting
/// at `scored_start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSequence {
    pub messages: Vec<usize>,
    pub rx_start: usize,
    pub rx_len: usize,
    pub scored_start: usize,
}

impl TrainingSequence {
    /// Draws messages, a receiver span of `V..=len` blocks and the scored
    /// positions inside it, all uniformly.
    pub fn random<R: RngCore + ?Sized>(cfg: &AeConfig, len: usize, rng: &mut R) -> Self {
        let v = cfg.training_window;
        let messages = (0..len).map(|_| rng.random_range(0..cfg.alphabet_size)).collect();
        let rx_len = rng.random_range(v..=len);
        let rx_start = rng.random_range(0..=len - rx_len);
        let scored_start = rx_start + rng.random_range(0..=rx_len - v);
        TrainingSequence {
            messages,
            rx_start,
            rx_len,
            scored_start,
        }
    }
}

/// Gradient of the batch loss w.r.t. all auto-encoder parameters for the
/// given message sequences, with link noise drawn from `rng`.
pub fn end_to_end_loss_and_grad<R: RngCore + ?Sized>(
    params: &AeParams,
    cfg: &AeConfig,
    link: &LinkConfig,
    sequences: &[TrainingSequence],
    rng: &mut R,
) -> Result<(f64, AeParams)> {
    let n = cfg.samples_per_block;
    let v = cfg.training_window;
    let mut grads = params.zeros_like();
    let weight = 1.0 / (sequences.len() * v) as f64;
    let mut loss = 0.0;
    for seq in sequences {
        let msgs = &seq.messages;
        let (a, b) = (seq.rx_start, seq.rx_start + seq.rx_len);
        if b > msgs.len() || seq.scored_start < a || seq.scored_start + v > b {
            return Err(param("training spans must nest inside the sequence"));
        }
        let tx_tape = encode_with_tape(&params.tx, msgs)?;
        let drive = Waveform::new(tx_tape.get()?.outputs.clone(), link.sim_rate_hz())?;
        let link_tape = channel::simulate_link_differentiable(&drive, link, rng)?;
        let received = link_tape.output().samples();
        let labels = &msgs[seq.scored_start..seq.scored_start + v];
        let (l, g_span) = params
            .rx
            .scored_loss(&received[a * n..b * n], seq.scored_start - a, labels, weight, &mut grads.rx, true)?;
        loss += l * weight;
        let mut g_received = vec![0.0; received.len()];
        g_received[a * n..b * n].copy_from_slice(&g_span);
        let g_drive = link_tape.backward(&g_received)?;
        nn::brnn_backward(&params.tx, &tx_tape, &g_drive, &mut grads.tx, false)?;
    }
    Ok((loss, grads))
}

/// Model-based end-to-end training through the differentiable link.
pub fn train_end_to_end(cfg: &AeConfig, link: &LinkConfig, schedule: &Schedule, seed: u64) -> Result<TrainOutcome<AeParams>> {
    cfg.validate()?;
    link.validate()?;
    check_len("link block length", cfg.samples_per_block, link.samples_per_block)?;
    if link.has_quantization() {
        return Err(Error::Contract("end-to-end training requires quantization to be disabled"));
    }
    if schedule.batch_size == 0 {
        return Err(param("batch size must be positive"));
    }
    let mut params = AeParams::init(cfg, &mut stream(seed, Domain::Init, 0))?;
    let guard = schedule.guard_blocks.unwrap_or(cfg.estimation_window);
    let len = cfg.training_window + 2 * guard;
    let mut rng = stream(seed, Domain::Training, 0);
    let mut opt = OptimizerState::new(&params, schedule.optimizer);
    let mut trace = Vec::with_capacity(schedule.steps);
    for step in 0..schedule.steps {
        let sequences: Vec<TrainingSequence> = (0..schedule.batch_size)
            .map(|_| TrainingSequence::random(cfg, len, &mut rng))
            .collect();
        let (loss, grads) = end_to_end_loss_and_grad(&params, cfg, link, &sequences, &mut rng)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        opt.step(&mut params, &grads).map_err(|_| Error::Divergence { step })?;
        trace.push(loss);
    }
    Ok(TrainOutcome { params, loss_trace: trace })
}

/// Trains receiver parameters on column windows of a recorded dataset.
///
/// Step `s` uses columns `[s, s + width)` of every row, averages the
/// cross entropy over rows and positions and takes one optimizer step; one
/// epoch is `columns - width` steps.
pub fn train_rx_on_dataset(
    rx: &RxParams,
    dataset: &RecordedDataset,
    width: usize,
    optimizer: AdamConfig,
) -> Result<TrainOutcome<RxParams>> {
    check_len("dataset block length", rx.block_len(), dataset.block_len())?;
    if width == 0 || width > dataset.columns() {
        return Err(param("training window exceeds the dataset columns"));
    }
    if dataset.labels().iter().any(|l| *l as usize >= rx.classes()) {
        return Err(param("dataset labels exceed the receiver alphabet"));
    }
    let mut params = rx.clone();
    let mut opt = OptimizerState::new(&params, optimizer);
    let steps = dataset.columns() - width;
    let weight = 1.0 / (dataset.rows() * width) as f64;
    let mut trace = Vec::with_capacity(steps);
    for s in 0..steps {
        let batch = dataset.window(s, width, false)?;
        let mut grads = params.zeros_like();
        let mut loss = 0.0;
        for r in 0..batch.rows {
            let labels: Vec<usize> = batch.label_row(r).iter().map(|l| *l as usize).collect();
            let (l, _) = params.scored_loss(batch.data_row(r), 0, &labels, weight, &mut grads, false)?;
            loss += l * weight;
        }
        if !loss.is_finite() {
            return Err(Error::Divergence { step: s });
        }
        opt.step(&mut params, &grads).map_err(|_| Error::Divergence { step: s })?;
        trace.push(loss);
    }
    Ok(TrainOutcome { params, loss_trace: trace })
}

/// Receiver-only retraining on recorded data; the transmitter is copied
/// through untouched.
pub fn retrain_receiver(
    dataset: &RecordedDataset,
    params: &AeParams,
    training_window: usize,
    optimizer: AdamConfig,
) -> Result<TrainOutcome<AeParams>> {
    let out = train_rx_on_dataset(&params.rx, dataset, training_window, optimizer)?;
    Ok(TrainOutcome {
        params: AeParams {
            tx: params.tx.clone(),
            rx: out.params,
        },
        loss_trace: out.loss_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tests::max_grad_error;
    use core::f64::consts::FRAC_PI_4;

    fn tiny() -> (AeConfig, LinkConfig) {
        let cfg = AeConfig {
            alphabet_size: 4,
            samples_per_block: 4,
            estimation_window: 3,
            training_window: 3,
        };
        let link = LinkConfig {
            distance_km: 0.0,
            samples_per_block: 4,
            noise_sigma: 0.0,
            ..LinkConfig::default()
        };
        (cfg, link)
    }

    #[test]
    fn encoded_samples_stay_in_drive_range() {
        let cfg = AeConfig {
            alphabet_size: 16,
            samples_per_block: 8,
            ..AeConfig::default()
        };
        let mut rng = stream(1, Domain::Init, 0);
        for _ in 0..5 {
            let p = AeParams::init(&cfg, &mut rng).unwrap();
            let msgs: Vec<usize> = (0..40).map(|_| rng.random_range(0..16)).collect();
            let x = encode_sequence(&msgs, &p.tx).unwrap();
            assert_eq!(x.len(), 40 * 8);
            assert!(x.iter().all(|v| (0.0..=FRAC_PI_4).contains(v)));
            assert_eq!(x, encode_sequence(&msgs, &p.tx).unwrap());
        }
    }

    #[test]
    fn single_message_is_the_recurrence_base_case() {
        let (cfg, _) = tiny();
        let p = AeParams::init(&cfg, &mut stream(2, Domain::Init, 0)).unwrap();
        let x = encode_sequence(&[2], &p.tx).unwrap();
        let mut input = vec![0.0; 4 + 4];
        input[2] = 1.0;
        let f = nn::dense_forward(&p.tx.forward_cell, &input, Activation::Clip).unwrap();
        let b = nn::dense_forward(&p.tx.backward_cell, &input, Activation::Clip).unwrap();
        for i in 0..4 {
            assert_eq!(x[i], 0.5 * (f[i] + b[i]));
        }
        assert!(encode_sequence(&[4], &p.tx).is_err());
        assert!(encode_sequence(&[], &p.tx).is_err());
    }

    #[test]
    fn receive_window_outputs_distributions_and_is_order_sensitive() {
        let cfg = AeConfig {
            alphabet_size: 8,
            samples_per_block: 4,
            ..AeConfig::default()
        };
        let mut rng = stream(3, Domain::Init, 0);
        let p = AeParams::init(&cfg, &mut rng).unwrap();
        let blocks: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probs = receive_window(&blocks, &p.rx, 3).unwrap();
        for t in 0..3 {
            let s: f64 = probs[t * 8..(t + 1) * 8].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let mut swapped = blocks.clone();
        swapped[..4].copy_from_slice(&blocks[8..]);
        swapped[8..].copy_from_slice(&blocks[..4]);
        let other = receive_window(&swapped, &p.rx, 3).unwrap();
        assert_ne!(&probs[4..8], &other[4..8]);
        assert!(matches!(receive_window(&blocks, &p.rx, 2), Err(Error::Shape { .. })));
        // W = 1 is a memoryless map of one block.
        let single = receive_window(&blocks[..4], &p.rx, 1).unwrap();
        assert_eq!(single.len(), 8);
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let (cfg, mut link) = tiny();
        link.distance_km = 10.0;
        link.noise_sigma = 0.01;
        let mut p = AeParams::init(&cfg, &mut stream(4, Domain::Init, 0)).unwrap();
        // Positive transmitter biases keep drives inside the clip range.
        for b in p.tx.forward_cell.bias.iter_mut().chain(p.tx.backward_cell.bias.iter_mut()) {
            *b = 0.35;
        }
        let seqs = vec![
            TrainingSequence {
                messages: vec![0, 3, 1, 2, 2, 0, 1, 3, 0],
                rx_start: 0,
                rx_len: 9,
                scored_start: 3,
            },
            TrainingSequence {
                messages: vec![1, 1, 2, 3, 0, 2, 3, 1, 2],
                rx_start: 2,
                rx_len: 5,
                scored_start: 3,
            },
        ];
        let loss = |q: &AeParams| -> f64 {
            end_to_end_loss_and_grad(q, &cfg, &link, &seqs, &mut stream(5, Domain::Link, 0))
                .unwrap()
                .0
        };
        let (_, g) = end_to_end_loss_and_grad(&p, &cfg, &link, &seqs, &mut stream(5, Domain::Link, 0)).unwrap();
        let err = max_grad_error(&p, &g, loss);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn training_is_deterministic_and_finite() {
        let (cfg, link) = tiny();
        let schedule = Schedule {
            steps: 20,
            batch_size: 4,
            ..Schedule::default()
        };
        let a = train_end_to_end(&cfg, &link, &schedule, 9).unwrap();
        let b = train_end_to_end(&cfg, &link, &schedule, 9).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_trace.len(), 20);
        assert!(a.loss_trace.iter().all(|l| l.is_finite()));
        let quantized = LinkConfig { dac_bits: Some(8), ..link };
        assert!(train_end_to_end(&cfg, &quantized, &schedule, 9).is_err());
    }
}
