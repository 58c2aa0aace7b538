//! Sliding-window sequence estimation.
//!
//! A window receiver is run at every start position `t = 0..=T-W`; each
//! position then averages all estimates it received, with uniform weight
//! `1/c_i` where `c_i` counts the windows covering position `i`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, param, Error, Result};

/// A receiver that maps `W` consecutive blocks to `W` probability vectors.
pub trait WindowEstimator {
    fn classes(&self) -> usize;
    fn block_len(&self) -> usize;
    /// Flat `W × classes` probabilities for a flat `W × block_len` window.
    fn estimate_window(&self, blocks: &[f64]) -> Result<Vec<f64>>;
}

/// Per-position probability vectors, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSequence {
    classes: usize,
    probs: Vec<f64>,
}

impl ProbSequence {
    /// Validates that every row sums to one within `1e-9`.
    pub fn from_flat(probs: Vec<f64>, classes: usize) -> Result<Self> {
        if classes == 0 || !probs.len().is_multiple_of(classes) {
            return Err(param("probability matrix does not match the class count"));
        }
        for row in probs.chunks(classes) {
            let s: f64 = row.iter().sum();
            if libm::fabs(s - 1.0) > 1e-9 || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(param("probability vectors must be non-negative and sum to one"));
            }
        }
        Ok(ProbSequence { classes, probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.probs[i * self.classes..(i + 1) * self.classes]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }
}

/// Output of [`estimate_sequence`].
#[derive(Debug, Clone)]
pub struct SequenceEstimate {
    pub probs: ProbSequence,
    /// Window actually used; smaller than requested when `W > T`.
    pub window: usize,
    pub window_clamped: bool,
}

/// Sliding-window estimation over `T` received blocks (flat).
pub fn estimate_sequence<E: WindowEstimator + ?Sized>(received: &[f64], rx: &E, window: usize) -> Result<SequenceEstimate> {
    let n = rx.block_len();
    let m = rx.classes();
    if window == 0 {
        return Err(param("window must be at least one block"));
    }
    if received.is_empty() || n == 0 || !received.len().is_multiple_of(n) {
        return Err(Error::Degenerate("received sequence must hold a whole number of blocks"));
    }
    let steps = received.len() / n;
    let (w, clamped) = if window > steps { (steps, true) } else { (window, false) };
    let mut acc = vec![0.0; steps * m];
    let mut count = vec![0usize; steps];
    for t in 0..=steps - w {
        let est = rx.estimate_window(&received[t * n..(t + w) * n])?;
        check_len("window estimate", w * m, est.len())?;
        for k in 0..w {
            let i = t + k;
            for (a, p) in acc[i * m..(i + 1) * m].iter_mut().zip(&est[k * m..(k + 1) * m]) {
                *a += p;
            }
            count[i] += 1;
        }
    }
    for (row, c) in acc.chunks_mut(m).zip(&count) {
        let c = *c as f64;
        row.iter_mut().for_each(|v| *v /= c);
    }
    Ok(SequenceEstimate {
        probs: ProbSequence::from_flat(acc, m)?,
        window: w,
        window_clamped: clamped,
    })
}

/// Number of windows of size `w` covering position `i` (0-based) of `t`.
pub fn coverage(i: usize, t: usize, w: usize) -> usize {
    w.min(i + 1).min(t - i).min(t - w + 1)
}

/// Per-position argmax; ties go to the smallest index.
pub fn decide(p: &ProbSequence) -> Vec<usize> {
    (0..p.len()).map(|i| argmax(p.get(i))).collect()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of positions where the decision differs from the truth.
pub fn bler(truth: &[usize], estimate: &[usize]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(param("block error rate needs sequences of equal length"));
    }
    if truth.is_empty() {
        return Err(Error::Degenerate("block error rate of an empty sequence"));
    }
    let errors = truth.iter().zip(estimate).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / truth.len() as f64)
}
