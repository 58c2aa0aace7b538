//! Minimal neural-network engine with explicit reverse-mode gradients.
//!
//! Layers record their intermediates in a [`Tape`] during the forward pass;
//! the matching backward function consumes the tape and accumulates
//! parameter gradients into a zeroed bundle of the same shape. All math is
//! double precision.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_4;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, param, Error, Result};

/// Activation functions used by the models in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// `relu(x) - relu(x - π/4)`, range `[0, π/4]`.
    Clip,
    Identity,
    Softmax,
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub fn clip_activation(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| clip_scalar(*v)).collect()
}

// Equal to relu(v) - relu(v - π/4), without the rounding of the difference.
fn clip_scalar(v: f64) -> f64 {
    v.clamp(0.0, FRAC_PI_4)
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

impl Activation {
    pub fn apply(self, x: &mut [f64]) {
        match self {
            Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Clip => x.iter_mut().for_each(|v| *v = clip_scalar(*v)),
            Activation::Identity => {}
            Activation::Softmax => softmax_in_place(x),
        }
    }

    /// Turns the gradient w.r.t. the activation output into the gradient
    /// w.r.t. its input, in place. Kinks use subgradient 0.
    fn backprop(self, pre: &[f64], out: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Relu => {
                for (g, a) in grad.iter_mut().zip(pre) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Clip => {
                for (g, a) in grad.iter_mut().zip(pre) {
                    if *a <= 0.0 || *a >= FRAC_PI_4 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Identity => {}
            Activation::Softmax => {
                let dot: f64 = grad.iter().zip(out).map(|(g, y)| g * y).sum();
                for (g, y) in grad.iter_mut().zip(out) {
                    *g = y * (*g - dot);
                }
            }
        }
    }
}

/// Anything made of dense `f64` parameter slices.
pub trait Parameters: Clone {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for s in self.slices() {
            out.extend_from_slice(s);
        }
        out
    }

    fn load_flat(&mut self, values: &[f64]) -> Result<()> {
        check_len("flat parameter vector", self.num_params(), values.len())?;
        let mut offset = 0;
        for s in self.slices_mut() {
            let n = s.len();
            s.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl Parameters for Vec<f64> {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

/// Weight matrix (`out_dim × in_dim`, row-major) and bias of a dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        DenseParams {
            out_dim,
            in_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform in `[-r, r]`, `r = sqrt(6 / (in + out))`; zero bias.
    pub fn init<R: RngCore + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let r = libm::sqrt(6.0 / (in_dim + out_dim) as f64);
        let weights = (0..out_dim * in_dim).map(|_| rng.random_range(-r..=r)).collect();
        DenseParams {
            out_dim,
            in_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn from_rows(rows: &[&[f64]], bias: &[f64]) -> Result<Self> {
        let out_dim = rows.len();
        let in_dim = rows.first().map_or(0, |r| r.len());
        check_len("bias", out_dim, bias.len())?;
        let mut weights = Vec::with_capacity(out_dim * in_dim);
        for r in rows {
            check_len("weight row", in_dim, r.len())?;
            weights.extend_from_slice(r);
        }
        Ok(DenseParams {
            out_dim,
            in_dim,
            weights,
            bias: bias.to_vec(),
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.in_dim..(i + 1) * self.in_dim]
    }

    /// `W x + b`, where `x` is the concatenation of the given parts.
    fn affine_parts(&self, parts: &[&[f64]], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = self.bias[i];
            let mut offset = 0;
            for p in parts {
                acc += dot(&row[offset..offset + p.len()], p);
                offset += p.len();
            }
            *o = acc;
        }
    }

    pub fn affine(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("dense input", self.in_dim, x.len())?;
        let mut out = vec![0.0; self.out_dim];
        self.affine_parts(&[x], &mut out);
        Ok(out)
    }

    /// `grad_W += δ xᵀ`, `grad_b += δ` with `x` given in parts.
    fn accumulate(&mut self, delta: &[f64], parts: &[&[f64]]) {
        let in_dim = self.in_dim;
        for (i, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            self.bias[i] += d;
            let row = &mut self.weights[i * in_dim..(i + 1) * in_dim];
            let mut offset = 0;
            for p in parts {
                for (w, x) in row[offset..offset + p.len()].iter_mut().zip(p.iter()) {
                    *w += d * x;
                }
                offset += p.len();
            }
        }
    }

    /// `(Wᵀ δ)[range]` added into `out`.
    fn transpose_mul_into(&self, delta: &[f64], start: usize, out: &mut [f64]) {
        for (i, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let row = &self.row(i)[start..start + out.len()];
            for (o, w) in out.iter_mut().zip(row) {
                *o += d * w;
            }
        }
    }
}

impl Parameters for DenseParams {
    fn slices(&self) -> Vec<&[f64]> {
        vec![&self.weights, &self.bias]
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights, &mut self.bias]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `act(W x + b)`.
pub fn dense_forward(p: &DenseParams, x: &[f64], act: Activation) -> Result<Vec<f64>> {
    let mut out = p.affine(x)?;
    act.apply(&mut out);
    Ok(out)
}

/// Cross entropy `-Σ tᵢ ln pᵢ` against a one-hot target, with `ln` floored
/// at `1e-30`.
pub fn cross_entropy(target: &[f64], p: &[f64]) -> Result<f64> {
    check_len("cross-entropy operands", target.len(), p.len())?;
    let ones = target.iter().filter(|t| **t == 1.0).count();
    if ones != 1 || target.iter().any(|t| *t != 0.0 && *t != 1.0) {
        return Err(param("cross-entropy target must be one-hot"));
    }
    let sum: f64 = p.iter().sum();
    if libm::fabs(sum - 1.0) > 1e-9 {
        return Err(param("cross-entropy input must sum to one"));
    }
    Ok(target
        .iter()
        .zip(p)
        .filter(|(t, _)| **t == 1.0)
        .map(|(_, q)| -libm::log(q.max(1e-30)))
        .sum())
}

/// Cross entropy for a class index.
pub fn cross_entropy_index(label: usize, p: &[f64]) -> f64 {
    -libm::log(p[label].max(1e-30))
}

/// Forward record consumed by a backward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    record: Option<T>,
}

impl<T> Default for Tape<T> {
    fn default() -> Self {
        Tape { record: None }
    }
}

impl<T> Tape<T> {
    pub fn recorded(record: T) -> Self {
        Tape { record: Some(record) }
    }

    pub fn get(&self) -> Result<&T> {
        self.record.as_ref().ok_or(Error::Usage("backward called before forward"))
    }
}

/// How the two directions of a bidirectional layer are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    /// `½(h→ + h←)`, used by the transmitter.
    Average,
    /// `(h→; h←)`, used by receivers.
    Concatenate,
}

/// Bidirectional recurrent layer: two dense cells applied to `(x_t; h_{t∓1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrnnCellParams {
    pub forward_cell: DenseParams,
    pub backward_cell: DenseParams,
    pub combine: Combine,
    pub activation: Activation,
}

impl BrnnCellParams {
    pub fn init<R: RngCore + ?Sized>(input_dim: usize, hidden_dim: usize, combine: Combine, activation: Activation, rng: &mut R) -> Self {
        BrnnCellParams {
            forward_cell: DenseParams::init(hidden_dim, input_dim + hidden_dim, rng),
            backward_cell: DenseParams::init(hidden_dim, input_dim + hidden_dim, rng),
            combine,
            activation,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward_cell.out_dim
    }

    pub fn input_dim(&self) -> usize {
        self.forward_cell.in_dim - self.hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        match self.combine {
            Combine::Average => self.hidden_dim(),
            Combine::Concatenate => 2 * self.hidden_dim(),
        }
    }

    fn validate(&self) -> Result<()> {
        let h = self.forward_cell.out_dim;
        if h == 0 || self.forward_cell.in_dim <= h {
            return Err(param("recurrent cell must have hidden and input dimensions"));
        }
        check_len("backward cell outputs", h, self.backward_cell.out_dim)?;
        check_len("backward cell inputs", self.forward_cell.in_dim, self.backward_cell.in_dim)
    }
}

impl Parameters for BrnnCellParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.forward_cell.slices();
        v.extend(self.backward_cell.slices());
        v
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.forward_cell.slices_mut();
        v.extend(self.backward_cell.slices_mut());
        v
    }
}

/// Intermediates of [`brnn_forward`]. Sequences are stored flat, one row
/// per time step.
#[derive(Debug, Clone)]
pub struct BrnnTrace {
    pub steps: usize,
    inputs: Vec<f64>,
    initial: Vec<f64>,
    fwd_pre: Vec<f64>,
    fwd_state: Vec<f64>,
    bwd_pre: Vec<f64>,
    bwd_state: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl BrnnTrace {
    pub fn output(&self, t: usize) -> &[f64] {
        let d = self.outputs.len() / self.steps;
        &self.outputs[t * d..(t + 1) * d]
    }
}

/// Runs both recurrences over a flat `steps × input_dim` sequence.
///
/// Both directions start from `initial_state` (zeros in every model here).
pub fn brnn_forward(cell: &BrnnCellParams, inputs: &[f64], initial_state: &[f64]) -> Result<Tape<BrnnTrace>> {
    cell.validate()?;
    let din = cell.input_dim();
    let h = cell.hidden_dim();
    check_len("initial state", h, initial_state.len())?;
    if inputs.is_empty() {
        return Err(Error::Degenerate("recurrent layer needs a non-empty sequence"));
    }
    if !inputs.len().is_multiple_of(din) {
        return Err(Error::Shape {
            what: "recurrent input sequence",
            expected: din * (inputs.len() / din + 1),
            got: inputs.len(),
        });
    }
    let steps = inputs.len() / din;
    let mut fwd_pre = vec![0.0; steps * h];
    let mut fwd_state = vec![0.0; steps * h];
    let mut bwd_pre = vec![0.0; steps * h];
    let mut bwd_state = vec![0.0; steps * h];
    for t in 0..steps {
        let x = &inputs[t * din..(t + 1) * din];
        let prev = if t == 0 { initial_state } else { &fwd_state[(t - 1) * h..t * h] };
        let mut a = vec![0.0; h];
        cell.forward_cell.affine_parts(&[x, prev], &mut a);
        fwd_pre[t * h..(t + 1) * h].copy_from_slice(&a);
        cell.activation.apply(&mut a);
        fwd_state[t * h..(t + 1) * h].copy_from_slice(&a);
    }
    for t in (0..steps).rev() {
        let x = &inputs[t * din..(t + 1) * din];
        let next = if t + 1 == steps {
            initial_state
        } else {
            &bwd_state[(t + 1) * h..(t + 2) * h]
        };
        let mut a = vec![0.0; h];
        cell.backward_cell.affine_parts(&[x, next], &mut a);
        bwd_pre[t * h..(t + 1) * h].copy_from_slice(&a);
        cell.activation.apply(&mut a);
        bwd_state[t * h..(t + 1) * h].copy_from_slice(&a);
    }
    let dout = cell.output_dim();
    let mut outputs = vec![0.0; steps * dout];
    for t in 0..steps {
        let f = &fwd_state[t * h..(t + 1) * h];
        let b = &bwd_state[t * h..(t + 1) * h];
        let o = &mut outputs[t * dout..(t + 1) * dout];
        match cell.combine {
            Combine::Average => {
                for i in 0..h {
                    o[i] = 0.5 * (f[i] + b[i]);
                }
            }
            Combine::Concatenate => {
                o[..h].copy_from_slice(f);
                o[h..].copy_from_slice(b);
            }
        }
    }
    Ok(Tape::recorded(BrnnTrace {
        steps,
        inputs: inputs.to_vec(),
        initial: initial_state.to_vec(),
        fwd_pre,
        fwd_state,
        bwd_pre,
        bwd_state,
        outputs,
    }))
}

/// Backpropagation through time for [`brnn_forward`].
///
/// `grad_outputs` is flat `steps × output_dim`. Parameter gradients are
/// added into `grads`; the input gradient (flat `steps × input_dim`) is
/// returned when `want_inputs` is set, otherwise an empty vector.
pub fn brnn_backward(
    cell: &BrnnCellParams,
    tape: &Tape<BrnnTrace>,
    grad_outputs: &[f64],
    grads: &mut BrnnCellParams,
    want_inputs: bool,
) -> Result<Vec<f64>> {
    let tr = tape.get()?;
    let h = cell.hidden_dim();
    let din = cell.input_dim();
    let dout = cell.output_dim();
    let steps = tr.steps;
    check_len("recurrent output gradient", steps * dout, grad_outputs.len())?;
    let mut grad_inputs = if want_inputs { vec![0.0; steps * din] } else { Vec::new() };

    let split = |t: usize, forward: bool| -> Vec<f64> {
        let g = &grad_outputs[t * dout..(t + 1) * dout];
        match (cell.combine, forward) {
            (Combine::Average, _) => g.iter().map(|v| 0.5 * v).collect(),
            (Combine::Concatenate, true) => g[..h].to_vec(),
            (Combine::Concatenate, false) => g[h..].to_vec(),
        }
    };

    // Forward direction: gradients flow from the last step to the first.
    let mut carry = vec![0.0; h];
    for t in (0..steps).rev() {
        let mut delta = split(t, true);
        for (d, c) in delta.iter_mut().zip(&carry) {
            *d += c;
        }
        cell.activation
            .backprop(&tr.fwd_pre[t * h..(t + 1) * h], &tr.fwd_state[t * h..(t + 1) * h], &mut delta);
        let x = &tr.inputs[t * din..(t + 1) * din];
        let prev = if t == 0 {
            &tr.initial[..]
        } else {
            &tr.fwd_state[(t - 1) * h..t * h]
        };
        grads.forward_cell.accumulate(&delta, &[x, prev]);
        if want_inputs {
            cell.forward_cell
                .transpose_mul_into(&delta, 0, &mut grad_inputs[t * din..(t + 1) * din]);
        }
        carry.fill(0.0);
        cell.forward_cell.transpose_mul_into(&delta, din, &mut carry);
    }
    // Backward direction: the recurrence ran right to left.
    carry.fill(0.0);
    for t in 0..steps {
        let mut delta = split(t, false);
        for (d, c) in delta.iter_mut().zip(&carry) {
            *d += c;
        }
        cell.activation
            .backprop(&tr.bwd_pre[t * h..(t + 1) * h], &tr.bwd_state[t * h..(t + 1) * h], &mut delta);
        let x = &tr.inputs[t * din..(t + 1) * din];
        let next = if t + 1 == steps {
            &tr.initial[..]
        } else {
            &tr.bwd_state[(t + 1) * h..(t + 2) * h]
        };
        grads.backward_cell.accumulate(&delta, &[x, next]);
        if want_inputs {
            cell.backward_cell
                .transpose_mul_into(&delta, 0, &mut grad_inputs[t * din..(t + 1) * din]);
        }
        carry.fill(0.0);
        cell.backward_cell.transpose_mul_into(&delta, din, &mut carry);
    }
    Ok(grad_inputs)
}

/// Softmax classification head: returns per-row probabilities for a flat
/// batch of feature rows.
pub fn softmax_head_forward(head: &DenseParams, features: &[f64]) -> Result<Vec<f64>> {
    let din = head.in_dim;
    if din == 0 || !features.len().is_multiple_of(din) {
        return Err(Error::Shape {
            what: "softmax head input",
            expected: din,
            got: features.len(),
        });
    }
    let rows = features.len() / din;
    let mut out = vec![0.0; rows * head.out_dim];
    for r in 0..rows {
        let o = &mut out[r * head.out_dim..(r + 1) * head.out_dim];
        head.affine_parts(&[&features[r * din..(r + 1) * din]], o);
        softmax_in_place(o);
    }
    Ok(out)
}

/// Gradient of `Σ_r weight · CE(label_r, p_r)` through a softmax head.
/// Accumulates head gradients and returns the feature gradient.
pub fn softmax_head_backward(
    head: &DenseParams,
    features: &[f64],
    probs: &[f64],
    labels: &[usize],
    weight: f64,
    grads: &mut DenseParams,
) -> Vec<f64> {
    let din = head.in_dim;
    let k = head.out_dim;
    let mut g_feat = vec![0.0; features.len()];
    for (r, &label) in labels.iter().enumerate() {
        let mut delta: Vec<f64> = probs[r * k..(r + 1) * k].iter().map(|p| p * weight).collect();
        delta[label] -= weight;
        let x = &features[r * din..(r + 1) * din];
        grads.accumulate(&delta, &[x]);
        head.transpose_mul_into(&delta, 0, &mut g_feat[r * din..(r + 1) * din]);
    }
    g_feat
}

/// Feed-forward stack: ReLU hidden layers and a softmax output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<DenseParams>,
}

impl MlpParams {
    /// `dims` lists the input dimension followed by every layer width.
    pub fn init<R: RngCore + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(param("feed-forward network needs at least one non-empty layer"));
        }
        Ok(MlpParams {
            layers: dims.windows(2).map(|w| DenseParams::init(w[1], w[0], rng)).collect(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.out_dim));
        d
    }
}

impl Parameters for MlpParams {
    fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.slices()).collect()
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.slices_mut()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input of every layer, then the final probabilities.
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn probabilities(&self) -> &[f64] {
        self.activations.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

pub fn mlp_forward(net: &MlpParams, x: &[f64]) -> Result<Tape<MlpTrace>> {
    check_len("feed-forward input", net.input_dim(), x.len())?;
    let mut activations = vec![x.to_vec()];
    let mut pre = Vec::with_capacity(net.layers.len());
    let last = net.layers.len() - 1;
    for (i, layer) in net.layers.iter().enumerate() {
        let a = layer.affine(activations.last().unwrap())?;
        let mut y = a.clone();
        if i == last {
            Activation::Softmax.apply(&mut y);
        } else {
            Activation::Relu.apply(&mut y);
        }
        pre.push(a);
        activations.push(y);
    }
    Ok(Tape::recorded(MlpTrace { activations, pre }))
}

/// Accumulates `weight · ∇ CE(label, p)` into `grads`.
pub fn mlp_backward(net: &MlpParams, tape: &Tape<MlpTrace>, label: usize, weight: f64, grads: &mut MlpParams) -> Result<()> {
    let tr = tape.get()?;
    if label >= net.output_dim() {
        return Err(param("class label out of range"));
    }
    let mut delta: Vec<f64> = tr.probabilities().iter().map(|p| p * weight).collect();
    delta[label] -= weight;
    for i in (0..net.layers.len()).rev() {
        let layer = &net.layers[i];
        let input = &tr.activations[i];
        grads.layers[i].accumulate(&delta, &[input]);
        if i > 0 {
            let mut g = vec![0.0; layer.in_dim];
            layer.transpose_mul_into(&delta, 0, &mut g);
            Activation::Relu.backprop(&tr.pre[i - 1], &tr.activations[i], &mut g);
            delta = g;
        }
    }
    Ok(())
}

/// Adaptive-moment optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Optional global gradient-norm clip.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_grad_norm: None,
        }
    }
}

/// Moment accumulators matching one parameter bundle.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: usize,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<P: Parameters>(params: &P, config: AdamConfig) -> Self {
        let shapes: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
        OptimizerState {
            config,
            step: 0,
            first: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            second: shapes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    /// Applies one update in place.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let gs = grads.slices();
        check_len("optimizer parameter groups", self.first.len(), gs.len())?;
        if !grads.is_finite() {
            return Err(Error::Divergence { step: self.step });
        }
        let c = self.config;
        let mut clip = 1.0;
        if let Some(max) = c.max_grad_norm {
            let norm = libm::sqrt(gs.iter().map(|s| s.iter().map(|v| v * v).sum::<f64>()).sum::<f64>());
            if norm > max {
                clip = max / norm;
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        for (((p, g), m), v) in params.slices_mut().into_iter().zip(gs).zip(&mut self.first).zip(&mut self.second) {
            check_len("optimizer parameter group", m.len(), p.len())?;
            for i in 0..p.len() {
                let gi = g[i] * clip;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= c.learning_rate * mhat / (libm::sqrt(vhat) + c.epsilon);
            }
        }
        Ok(())
    }
}
