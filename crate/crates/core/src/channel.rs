//! Simulated optical IM/DD link.
//!
//! The forward chain is: brick-wall LPF, resampling to the DAC rate,
//! optional DAC quantization, Mach-Zehnder modulation, chromatic dispersion,
//! square-law detection, receiver AWGN, optional ADC quantization, brick-wall
//! LPF, resampling back to the simulation rate and power normalization.
//!
//! [`simulate_link_differentiable`] runs the very same forward code and keeps
//! the intermediates needed for vector-Jacobian products, so end-to-end
//! training can backpropagate through the channel.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_4;
use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, param, Error, Result};
use crate::fft;
use crate::signal::{self, NormStats, Sample, Waveform};

/// Slack tolerated on MZM drive values before they count as clipped.
pub const DRIVE_SLACK: f64 = 1e-9;

/// Parameters of one simulated link scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub distance_km: f64,
    /// Group-velocity dispersion.
    pub beta2_ps2_per_km: f64,
    pub dac_rate_hz: f64,
    /// Simulation samples per DAC sample.
    pub oversampling: usize,
    /// Brick-wall bandwidth at transmitter and receiver. Values at or above
    /// the Nyquist rate of a stage disable filtering there.
    pub lpf_cutoff_hz: f64,
    pub launch_power_dbm: f64,
    /// Receiver noise standard deviation, in units of detected power (mW).
    pub noise_sigma: f64,
    pub dac_bits: Option<u32>,
    pub adc_bits: Option<u32>,
    /// Samples per transmitted block at the simulation rate.
    pub samples_per_block: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            distance_km: 0.0,
            beta2_ps2_per_km: -21.7,
            dac_rate_hz: 84e9,
            oversampling: 4,
            lpf_cutoff_hz: 32e9,
            launch_power_dbm: 1.0,
            noise_sigma: 0.01,
            dac_bits: None,
            adc_bits: None,
            samples_per_block: 48,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_km >= 0.0) || !self.distance_km.is_finite() {
            return Err(param("distance must be non-negative"));
        }
        if !self.beta2_ps2_per_km.is_finite() {
            return Err(param("beta2 must be finite"));
        }
        if !(self.dac_rate_hz > 0.0) {
            return Err(param("DAC rate must be positive"));
        }
        if self.oversampling == 0 {
            return Err(param("oversampling must be at least 1"));
        }
        if !(self.lpf_cutoff_hz > 0.0) || self.lpf_cutoff_hz > self.dac_rate_hz / 2.0 {
            return Err(param("LPF cutoff must lie in (0, dac_rate/2]"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(param("noise sigma must be non-negative"));
        }
        if !self.launch_power_dbm.is_finite() {
            return Err(param("launch power must be finite"));
        }
        for bits in [self.dac_bits, self.adc_bits].into_iter().flatten() {
            if !(2..=16).contains(&bits) {
                return Err(param("quantizer resolution must be within [2, 16] bits"));
            }
        }
        if self.samples_per_block == 0 || !self.samples_per_block.is_multiple_of(self.oversampling) {
            return Err(param("samples per block must be a positive multiple of the oversampling"));
        }
        Ok(())
    }

    pub fn sim_rate_hz(&self) -> f64 {
        self.dac_rate_hz * self.oversampling as f64
    }

    pub fn launch_power_mw(&self) -> f64 {
        libm::pow(10.0, self.launch_power_dbm / 10.0)
    }

    /// Accumulated dispersion `β2·L` in s².
    pub fn accumulated_dispersion_s2(&self) -> f64 {
        self.beta2_ps2_per_km * 1e-24 * self.distance_km
    }

    pub fn has_quantization(&self) -> bool {
        self.dac_bits.is_some() || self.adc_bits.is_some()
    }
}

/// Mach-Zehnder modulator: `sqrt(P)·sin(drive)` with the drive clipped to
/// `[0, π/4]`. Returns the field and the number of samples clipped by more
/// than [`DRIVE_SLACK`].
pub fn mzm_modulate(drive: &Waveform<f64>, launch_power_mw: f64) -> (Waveform<f64>, usize) {
    let amp = libm::sqrt(launch_power_mw);
    let mut clipped = 0;
    let field = drive
        .samples()
        .iter()
        .map(|&v| {
            if !(-DRIVE_SLACK..=FRAC_PI_4 + DRIVE_SLACK).contains(&v) {
                clipped += 1;
            }
            amp * libm::sin(v.clamp(0.0, FRAC_PI_4))
        })
        .collect();
    (drive.with_samples(field), clipped)
}

/// VJP of [`mzm_modulate`]; zero gradient where the drive was clipped.
pub fn mzm_vjp(grad_field: &[f64], drive: &[f64], launch_power_mw: f64) -> Vec<f64> {
    let amp = libm::sqrt(launch_power_mw);
    grad_field
        .iter()
        .zip(drive)
        .map(|(g, &v)| {
            if (0.0..=FRAC_PI_4).contains(&v) {
                g * amp * libm::cos(v)
            } else {
                0.0
            }
        })
        .collect()
}

fn disperse(samples: &mut [Complex64], fs: f64, beta2_l_s2: f64) {
    if beta2_l_s2 == 0.0 {
        return;
    }
    let n = samples.len();
    fft::fft(samples);
    for (k, v) in samples.iter_mut().enumerate() {
        let omega = 2.0 * core::f64::consts::PI * fft::bin_frequency(k, n, fs);
        *v *= Complex64::from_polar(1.0, 0.5 * beta2_l_s2 * omega * omega);
    }
    fft::ifft(samples);
}

/// All-pass chromatic dispersion `H(ω) = exp(i (β2/2) ω² L)`.
pub fn apply_dispersion<S: Sample>(field: &Waveform<S>, cfg: &LinkConfig) -> Waveform<Complex64> {
    let mut buf: Vec<Complex64> = field.samples().iter().map(|s| s.to_complex()).collect();
    disperse(&mut buf, field.sample_rate_hz(), cfg.accumulated_dispersion_s2());
    field.with_samples(buf)
}

/// VJP of [`apply_dispersion`] on a real input field, given the gradient
/// with respect to the complex output (`∂L/∂Re + i ∂L/∂Im`).
pub fn dispersion_vjp(grad_out: &[Complex64], fs: f64, cfg: &LinkConfig) -> Vec<f64> {
    let mut buf = grad_out.to_vec();
    disperse(&mut buf, fs, -cfg.accumulated_dispersion_s2());
    buf.into_iter().map(|c| c.re).collect()
}

/// Square-law detection `|field|²`.
pub fn photodiode<S: Sample>(field: &Waveform<S>) -> Waveform<f64> {
    field.with_samples(field.samples().iter().map(|s| s.norm_sqr()).collect())
}

/// VJP of [`photodiode`]: `2 g · field` in the complex gradient convention.
pub fn photodiode_vjp(grad_out: &[f64], field: &[Complex64]) -> Vec<Complex64> {
    grad_out.iter().zip(field).map(|(g, f)| f * (2.0 * g)).collect()
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `sigma`.
pub fn add_awgn<R: RngCore + ?Sized>(w: &Waveform<f64>, sigma: f64, rng: &mut R) -> Result<Waveform<f64>> {
    if !(sigma >= 0.0) {
        return Err(param("noise sigma must be non-negative"));
    }
    if sigma == 0.0 {
        return Ok(w.clone());
    }
    let out = w
        .samples()
        .iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(rng);
            x + sigma * z
        })
        .collect();
    Ok(w.with_samples(out))
}

/// Uniform mid-rise quantizer with `2^bits` levels over `[-fs, +fs]`,
/// saturating outside.
pub fn quantize(w: &Waveform<f64>, bits: u32, full_scale: f64) -> Result<Waveform<f64>> {
    if !(2..=16).contains(&bits) {
        return Err(param("quantizer resolution must be within [2, 16] bits"));
    }
    if !(full_scale > 0.0) {
        return Err(param("quantizer full scale must be positive"));
    }
    let levels = 1u32 << bits;
    let step = 2.0 * full_scale / levels as f64;
    let out = w
        .samples()
        .iter()
        .map(|&x| {
            let idx = libm::floor((x + full_scale) / step).clamp(0.0, (levels - 1) as f64);
            (idx + 0.5) * step - full_scale
        })
        .collect();
    Ok(w.with_samples(out))
}

/// Intermediates of one forward pass through the link.
#[derive(Debug, Clone)]
pub struct LinkTape {
    cfg: LinkConfig,
    input_len: usize,
    dac_drive: Vec<f64>,
    dispersed: Vec<Complex64>,
    rx_len: usize,
    norm: NormStats,
    output: Waveform<f64>,
    clipped: usize,
}

/// Output mean square of the received waveform.
pub const RX_TARGET_POWER: f64 = 1.0;

impl LinkTape {
    pub fn output(&self) -> &Waveform<f64> {
        &self.output
    }

    pub fn into_output(self) -> Waveform<f64> {
        self.output
    }

    /// Drive samples clipped by the modulator in this pass.
    pub fn clipped_samples(&self) -> usize {
        self.clipped
    }

    /// Gradient of the loss with respect to the transmitted drive, given its
    /// gradient with respect to the received samples. Noise is treated as an
    /// additive constant.
    pub fn backward(&self, grad_out: &[f64]) -> Result<Vec<f64>> {
        check_len("link output gradient", self.output.len(), grad_out.len())?;
        let cfg = &self.cfg;
        let ovs = cfg.oversampling;
        let dac_rate = cfg.dac_rate_hz;
        let g = signal::normalize_vjp(grad_out, self.output.samples(), &self.norm, true);
        let g = signal::resample_vjp(&g, self.rx_len, ovs, 1)?;
        let g = lpf_vjp(g, dac_rate, cfg.lpf_cutoff_hz)?;
        let g = photodiode_vjp(&g, &self.dispersed);
        let g = dispersion_vjp(&g, dac_rate, cfg);
        let g = mzm_vjp(&g, &self.dac_drive, cfg.launch_power_mw());
        let g = signal::resample_vjp(&g, self.input_len, 1, ovs)?;
        lpf_vjp(g, cfg.sim_rate_hz(), cfg.lpf_cutoff_hz)
    }
}

fn maybe_lpf(w: Waveform<f64>, cutoff: f64) -> Result<Waveform<f64>> {
    if cutoff >= w.sample_rate_hz() / 2.0 {
        Ok(w)
    } else {
        signal::brickwall_lpf(&w, cutoff)
    }
}

fn lpf_vjp(g: Vec<f64>, fs: f64, cutoff: f64) -> Result<Vec<f64>> {
    let w = Waveform::new(g, fs)?;
    Ok(maybe_lpf(w, cutoff)?.into_samples())
}

fn run_link<R: RngCore + ?Sized>(tx: &Waveform<f64>, cfg: &LinkConfig, rng: &mut R) -> Result<LinkTape> {
    cfg.validate()?;
    let sim_rate = cfg.sim_rate_hz();
    if libm::fabs(tx.sample_rate_hz() - sim_rate) > 1e-9 * sim_rate {
        return Err(param("transmit waveform must be sampled at dac_rate * oversampling"));
    }
    if !tx.len().is_multiple_of(cfg.oversampling) {
        return Err(param("transmit length must be a multiple of the oversampling"));
    }
    let ovs = cfg.oversampling;
    let x = maybe_lpf(tx.clone(), cfg.lpf_cutoff_hz)?;
    let mut x = signal::resample(&x, 1, ovs)?;
    if let Some(bits) = cfg.dac_bits {
        x = quantize(&x, bits, FRAC_PI_4)?;
    }
    let (field, clipped) = mzm_modulate(&x, cfg.launch_power_mw());
    let dispersed = apply_dispersion(&field, cfg);
    let detected = photodiode(&dispersed);
    let mut y = add_awgn(&detected, cfg.noise_sigma, rng)?;
    if let Some(bits) = cfg.adc_bits {
        let peak = y.samples().iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        if peak > 0.0 {
            y = quantize(&y, bits, peak)?;
        }
    }
    let y = maybe_lpf(y, cfg.lpf_cutoff_hz)?;
    let rx_len = y.len();
    let y = signal::resample(&y, ovs, 1)?;
    let (output, norm) = signal::normalize_with_stats(&y, RX_TARGET_POWER, true)?;
    Ok(LinkTape {
        cfg: cfg.clone(),
        input_len: tx.len(),
        dac_drive: x.into_samples(),
        dispersed: dispersed.into_samples(),
        rx_len,
        norm,
        output,
        clipped,
    })
}

/// Runs the full link on a drive waveform sampled at `dac_rate * oversampling`.
pub fn simulate_link<R: RngCore + ?Sized>(tx: &Waveform<f64>, cfg: &LinkConfig, rng: &mut R) -> Result<Waveform<f64>> {
    Ok(run_link(tx, cfg, rng)?.into_output())
}

/// Same forward numerics as [`simulate_link`], keeping a tape for
/// [`LinkTape::backward`]. Quantization must be disabled.
pub fn simulate_link_differentiable<R: RngCore + ?Sized>(tx: &Waveform<f64>, cfg: &LinkConfig, rng: &mut R) -> Result<LinkTape> {
    if cfg.has_quantization() {
        return Err(Error::Contract("differentiable link requires quantization to be disabled"));
    }
    run_link(tx, cfg, rng)
}
