//! Sampled signals and the elementary operations applied to them.
//!
//! All DFT-based filters act on the whole record with periodic boundary
//! conditions, so results are bit-reproducible for a given input.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

use crate::error::{param, Error, Result};
use crate::fft;

/// Scalar sample type of a [`Waveform`]: `f64` or `Complex64`.
pub trait Sample: Copy + Default + PartialEq + core::fmt::Debug + Send + Sync + 'static {
    fn to_complex(self) -> Complex64;
    /// Real samples keep only the real part.
    fn from_complex(c: Complex64) -> Self;
    fn norm_sqr(self) -> f64;
    fn scale(self, k: f64) -> Self;
}

impl Sample for f64 {
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn from_complex(c: Complex64) -> Self {
        c.re
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

impl Sample for Complex64 {
    fn to_complex(self) -> Complex64 {
        self
    }
    fn from_complex(c: Complex64) -> Self {
        c
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

/// A non-empty sampled signal with its sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<S = f64> {
    samples: Vec<S>,
    sample_rate_hz: f64,
}

impl<S: Sample> Waveform<S> {
    pub fn new(samples: Vec<S>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Degenerate("waveform has no samples"));
        }
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(param("sample rate must be positive and finite"));
        }
        Ok(Waveform { samples, sample_rate_hz })
    }

    pub fn samples(&self) -> &[S] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<S> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `Σ|x|²`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    pub fn mean_square(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    /// Same rate, new samples. The caller guarantees non-emptiness.
    pub(crate) fn with_samples<T: Sample>(&self, samples: Vec<T>) -> Waveform<T> {
        debug_assert!(!samples.is_empty());
        Waveform {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn to_complex(&self) -> Waveform<Complex64> {
        self.with_samples(self.samples.iter().map(|s| s.to_complex()).collect())
    }
}

impl Waveform<Complex64> {
    pub fn real_part(&self) -> Waveform<f64> {
        self.with_samples(self.samples.iter().map(|s| s.re).collect())
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        libm::sin(PI * x) / (PI * x)
    }
}

/// Raised-cosine FIR taps, peak-normalized so the center tap is 1.
///
/// Returns `span_symbols * samples_per_symbol + 1` even-symmetric taps.
pub fn raised_cosine_taps(rolloff: f64, span_symbols: usize, samples_per_symbol: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(param("raised-cosine rolloff must lie in [0, 1]"));
    }
    if span_symbols == 0 || !span_symbols.is_multiple_of(2) {
        return Err(param("raised-cosine span must be a positive even number of symbols"));
    }
    if samples_per_symbol == 0 {
        return Err(param("samples per symbol must be at least 1"));
    }
    let len = span_symbols * samples_per_symbol + 1;
    let center = (len - 1) / 2;
    let mut taps: Vec<f64> = (0..len)
        .map(|k| {
            let t = (k as f64 - center as f64) / samples_per_symbol as f64;
            let denom = 1.0 - (2.0 * rolloff * t) * (2.0 * rolloff * t);
            if rolloff > 0.0 && libm::fabs(denom) < 1e-12 {
                // Removable singularity at |t| = T / (2 rolloff).
                PI / 4.0 * sinc(1.0 / (2.0 * rolloff))
            } else {
                sinc(t) * libm::cos(PI * rolloff * t) / denom
            }
        })
        .collect();
    let peak = taps[center];
    for t in taps.iter_mut() {
        *t /= peak;
    }
    // Enforce exact symmetry against rounding in the formula.
    for k in 0..center {
        taps[len - 1 - k] = taps[k];
    }
    Ok(taps)
}

/// Zeroes every DFT bin whose frequency magnitude exceeds `cutoff_hz`.
pub fn brickwall_lpf<S: Sample>(w: &Waveform<S>, cutoff_hz: f64) -> Result<Waveform<S>> {
    let fs = w.sample_rate_hz();
    if !(cutoff_hz > 0.0) || cutoff_hz >= fs / 2.0 {
        return Err(param("brick-wall cutoff must lie in (0, fs/2)"));
    }
    let mut buf: Vec<Complex64> = w.samples().iter().map(|s| s.to_complex()).collect();
    let n = buf.len();
    fft::fft(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        if libm::fabs(fft::bin_frequency(k, n, fs)) > cutoff_hz {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    fft::ifft(&mut buf);
    Ok(w.with_samples(buf.into_iter().map(S::from_complex).collect()))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Anti-alias mask applied in the zero-inserted domain of length
/// `len * up`. Bins sitting exactly on the cutoff get weight one half so the
/// mask stays real and even and the two images of a Nyquist component sum
/// to one.
fn resample_mask(buf: &mut [Complex64], len: usize, up: usize, down: usize) {
    let total = buf.len();
    // |k| / total * fs_up  vs  min(fs_in, fs_out)/2, in integers.
    let limit = len * up.min(down);
    for (k, v) in buf.iter_mut().enumerate() {
        let mag = if 2 * k > total { total - k } else { k };
        let lhs = 2 * down * mag;
        if lhs > limit {
            *v = Complex64::new(0.0, 0.0);
        } else if lhs == limit {
            *v *= 0.5;
        }
    }
}

fn reduced_ratio(up: usize, down: usize) -> Result<(usize, usize)> {
    if up == 0 || down == 0 {
        return Err(param("resampling factors must be at least 1"));
    }
    let g = gcd(up, down);
    Ok((up / g, down / g))
}

/// Rational resampling by `up / down`: zero insertion, brick-wall
/// anti-aliasing at the lower of the two Nyquist rates, then decimation.
pub fn resample<S: Sample>(w: &Waveform<S>, up: usize, down: usize) -> Result<Waveform<S>> {
    let (up, down) = reduced_ratio(up, down)?;
    if up == 1 && down == 1 {
        return Ok(w.clone());
    }
    let len = w.len();
    let mut buf = vec![Complex64::new(0.0, 0.0); len * up];
    for (i, s) in w.samples().iter().enumerate() {
        buf[i * up] = s.to_complex() * up as f64;
    }
    fft::fft(&mut buf);
    resample_mask(&mut buf, len, up, down);
    fft::ifft(&mut buf);
    let out: Vec<S> = buf.iter().step_by(down).map(|c| S::from_complex(*c)).collect();
    Ok(Waveform {
        samples: out,
        sample_rate_hz: w.sample_rate_hz() * up as f64 / down as f64,
    })
}

/// Length of `resample` output for an input of `len` samples.
pub fn resampled_len(len: usize, up: usize, down: usize) -> usize {
    let g = gcd(up, down);
    let (up, down) = (up / g, down / g);
    (len * up).div_ceil(down)
}

/// Transpose of the linear map implemented by [`resample`] for real signals.
pub fn resample_vjp(grad_out: &[f64], input_len: usize, up: usize, down: usize) -> Result<Vec<f64>> {
    let (up, down) = reduced_ratio(up, down)?;
    if up == 1 && down == 1 {
        return Ok(grad_out.to_vec());
    }
    crate::error::check_len("resample gradient", resampled_len(input_len, up, down), grad_out.len())?;
    let mut buf = vec![Complex64::new(0.0, 0.0); input_len * up];
    for (j, g) in grad_out.iter().enumerate() {
        buf[j * down] = Complex64::new(*g, 0.0);
    }
    fft::fft(&mut buf);
    resample_mask(&mut buf, input_len, up, down);
    fft::ifft(&mut buf);
    Ok(buf.iter().step_by(up).map(|c| c.re * up as f64).collect())
}

/// Transpose of [`brickwall_lpf`] for real signals; the filter is
/// symmetric so this is the filter itself.
pub fn brickwall_lpf_vjp(grad_out: &Waveform<f64>, cutoff_hz: f64) -> Result<Waveform<f64>> {
    brickwall_lpf(grad_out, cutoff_hz)
}

/// Scales a real waveform to the requested mean square, optionally
/// subtracting its mean first.
pub fn normalize_power(w: &Waveform<f64>, target_mean_square: f64, remove_mean: bool) -> Result<Waveform<f64>> {
    let (out, _) = normalize_with_stats(w, target_mean_square, remove_mean)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub(crate) struct NormStats {
    pub scale: f64,
    pub mean_square: f64,
}

pub(crate) fn normalize_with_stats(w: &Waveform<f64>, target_mean_square: f64, remove_mean: bool) -> Result<(Waveform<f64>, NormStats)> {
    if !(target_mean_square > 0.0) {
        return Err(param("target mean square must be positive"));
    }
    let n = w.len() as f64;
    let mean = if remove_mean { w.samples().iter().sum::<f64>() / n } else { 0.0 };
    let centered: Vec<f64> = w.samples().iter().map(|x| x - mean).collect();
    let ms = centered.iter().map(|x| x * x).sum::<f64>() / n;
    if !(ms > 0.0) {
        return Err(Error::Degenerate("cannot normalize a zero-power waveform"));
    }
    let scale = libm::sqrt(target_mean_square / ms);
    let out = centered.into_iter().map(|x| x * scale).collect();
    Ok((w.with_samples(out), NormStats { scale, mean_square: ms }))
}

/// Vector-Jacobian product of [`normalize_power`], given its output `y`.
pub(crate) fn normalize_vjp(grad_out: &[f64], output: &[f64], stats: &NormStats, remove_mean: bool) -> Vec<f64> {
    // y = s c, c = x - mean, s = sqrt(target / ms(c)).
    // dL/dc_j = s (g_j - c_j <g, c> / (N ms)), with c = y / s.
    let n = grad_out.len() as f64;
    let s = stats.scale;
    let gc: f64 = grad_out.iter().zip(output).map(|(g, y)| g * y / s).sum();
    let mut dc: Vec<f64> = grad_out
        .iter()
        .zip(output)
        .map(|(g, y)| s * (g - (y / s) * gc / (n * stats.mean_square)))
        .collect();
    if remove_mean {
        let m = dc.iter().sum::<f64>() / n;
        for v in dc.iter_mut() {
            *v -= m;
        }
    }
    dc
}

/// Linear ("full") convolution truncated to the input length with the
/// kernel centered, i.e. a zero-phase FIR filter with zero padding.
pub fn convolve_same(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let half = taps.len() / 2;
    (0..x.len())
        .map(|i| {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                // output[i] = Σ_k taps[k] x[i + half - k]
                let j = i as isize + half as isize - k as isize;
                if j >= 0 && (j as usize) < x.len() {
                    acc += t * x[j as usize];
                }
            }
            acc
        })
        .collect()
}
