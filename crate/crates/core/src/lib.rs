//! Numerical core for simulated short-reach IM/DD optical links.
//!
//! Everything in this crate is `no_std` + `alloc`: signal processing, the
//! differentiable link model, a small neural-network engine with hand-written
//! reverse-mode gradients, the recurrent auto-encoder, sliding-window sequence
//! estimation, PAM receivers (feed-forward, recurrent and Volterra), dataset
//! construction and bit-level metrics. File formats, configuration and the
//! command line live in the `imdd` companion crate.

#![no_std]
// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autoencoder;
pub mod channel;
pub mod datasets;
mod error;
pub mod fft;
pub mod lstsq;
pub mod metrics;
pub mod nn;
pub mod pamsys;
pub mod rng;
pub mod signal;
pub mod slidingwindow;

pub use error::{Error, Result};
pub use num_complex::Complex64;
