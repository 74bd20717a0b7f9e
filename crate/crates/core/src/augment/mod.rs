//! Training-mixture synthesis: additive mixing at a target SNR, room
//! impulse response convolution, spectral augmentation and
//! attenuation-limited targets.
//!
//! For reverberant speech the clean target is the reverberant signal
//! `s * h`; there is no dereverberation objective.

mod dataset;
mod filters;
mod resample;

pub use dataset::{
    synthesize_dataset, AugmentSpec, FailureRecord, IndexRecord, ManifestRow, SynthConfig, SynthSummary,
    DEFAULT_GAINS_DB, DEFAULT_SNRS_DB, MAX_NOISES,
};
pub use filters::{apply_eq, biquad_augment, random_eq, Biquad, PeakingBand, RANDOM_COEF_BOUND};
pub use resample::resample;

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Frames whose RMS is at or above this level count as active speech.
pub const ACTIVITY_THRESHOLD_DBFS: f64 = -50.0;
/// Activity frame length.
pub const ACTIVITY_FRAME_MS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture<T> {
    pub noisy: Vec<T>,
    pub clean: Vec<T>,
    /// Scaled noise sum; `noisy = clean + noise`.
    pub noise: Vec<T>,
    /// Factor applied to the summed input noises.
    pub noise_scale: f64,
}

/// Sample ranges of the active frames of `speech`.
pub fn active_frames<T: Real>(speech: &[T], sample_rate: u32) -> Vec<std::ops::Range<usize>> {
    let frame = ((sample_rate as f64 * ACTIVITY_FRAME_MS / 1000.0).round() as usize).max(1);
    let threshold = 10f64.powf(ACTIVITY_THRESHOLD_DBFS / 10.0);
    (0..speech.len())
        .step_by(frame)
        .map(|start| start..(start + frame).min(speech.len()))
        .filter(|r| {
            let e: f64 = speech[r.clone()].iter().map(|v| v.as_f64().powi(2)).sum();
            e / r.len() as f64 >= threshold
        })
        .collect()
}

fn active_energies<T: Real>(speech: &[T], noise: &[T], sample_rate: u32) -> Result<(f64, f64)> {
    let frames = active_frames(speech, sample_rate);
    if frames.is_empty() {
        return Err(Error::SilentSpeech);
    }
    let (mut es, mut ez) = (0.0, 0.0);
    for r in frames {
        es += speech[r.clone()].iter().map(|v| v.as_f64().powi(2)).sum::<f64>();
        ez += noise[r].iter().map(|v| v.as_f64().powi(2)).sum::<f64>();
    }
    Ok((es, ez))
}

/// SNR in dB measured over the active frames of `speech`.
pub fn measure_snr<T: Real>(speech: &[T], noise: &[T], sample_rate: u32) -> Result<f64> {
    if speech.len() != noise.len() {
        return Err(Error::contract("speech and noise lengths differ"));
    }
    let (es, ez) = active_energies(speech, noise, sample_rate)?;
    Ok(10.0 * (es / ez).log10())
}

/// Sums `noises` and scales the sum so that the active-frame SNR against
/// `speech` equals `snr_db`.
pub fn mix<T: Real>(speech: &[T], noises: &[Vec<T>], snr_db: f64, sample_rate: u32) -> Result<Mixture<T>> {
    if noises.is_empty() {
        return Err(Error::contract("at least one noise signal is required"));
    }
    if !snr_db.is_finite() {
        return Err(Error::contract(format!("SNR must be finite, got {snr_db}")));
    }
    let mut sum = vec![0.0f64; speech.len()];
    for (i, n) in noises.iter().enumerate() {
        if n.len() != speech.len() {
            return Err(Error::contract(format!(
                "noise {i} has {} samples, speech has {}",
                n.len(),
                speech.len()
            )));
        }
        sum.iter_mut().zip(n).for_each(|(s, v)| *s += v.as_f64());
    }
    let sum: Vec<T> = sum.into_iter().map(T::lit).collect();
    let (es, ez) = active_energies(speech, &sum, sample_rate)?;
    if ez == 0.0 {
        return Err(Error::contract("noise is silent over the active speech frames"));
    }
    let noise_scale = (es / (ez * 10f64.powf(snr_db / 10.0))).sqrt();
    let noise: Vec<T> = sum.iter().map(|&v| v * T::lit(noise_scale)).collect();
    let noisy = speech.iter().zip(&noise).map(|(&s, &z)| s + z).collect();
    Ok(Mixture {
        noisy,
        clean: speech.to_vec(),
        noise,
        noise_scale,
    })
}

/// `clean + noise * 10^(-extra_db / 20)`: the mixture with its SNR raised by
/// `extra_db`. An infinite `extra_db` yields `clean`.
pub fn attenuation_target<T: Real>(clean: &[T], noise: &[T], extra_db: f64) -> Result<Vec<T>> {
    if clean.len() != noise.len() {
        return Err(Error::contract("clean and noise lengths differ"));
    }
    if extra_db.is_nan() || extra_db < 0.0 {
        return Err(Error::contract(format!("extra SNR must be >= 0 dB, got {extra_db}")));
    }
    let g = T::lit(10f64.powf(-extra_db / 20.0));
    Ok(clean.iter().zip(noise).map(|(&s, &z)| s + z * g).collect())
}

fn fft_real<T: Real>(x: &[T], n: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v.as_f64(), 0.0)).collect();
    buf.resize(n, Complex::default());
    planner.plan_fft_forward(n).process(&mut buf);
    buf
}

fn ifft_real<T: Real>(mut buf: Vec<Complex<f64>>, len: usize, planner: &mut FftPlanner<f64>) -> Vec<T> {
    let n = buf.len();
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().take(len).map(|c| T::lit(c.re / n as f64)).collect()
}

/// Linear convolution with `rir`, truncated to the speech length.
pub fn convolve_rir<T: Real>(speech: &[T], rir: &[T]) -> Result<Vec<T>> {
    if rir.is_empty() {
        return Err(Error::contract("room impulse response is empty"));
    }
    if speech.is_empty() {
        return Ok(Vec::new());
    }
    let n = speech.len() + rir.len() - 1;
    let mut planner = FftPlanner::new();
    let a = fft_real(speech, n, &mut planner);
    let b = fft_real(rir, n, &mut planner);
    let prod = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    Ok(ifft_real(prod, speech.len(), &mut planner))
}

/// Scales an impulse response to unit peak magnitude.
pub fn normalize_rir<T: Real>(rir: &[T]) -> Result<Vec<T>> {
    let peak = rir.iter().map(|v| v.abs()).fold(T::zero(), T::max);
    if peak == T::zero() {
        return Err(Error::contract("room impulse response is silent or empty"));
    }
    Ok(rir.iter().map(|&v| v / peak).collect())
}

/// Removes noise content above `speech_bandwidth` Hz with an FFT brick-wall
/// filter whose edge is a raised-cosine ramp over the last 5 % below the
/// cutoff. Identity when the bandwidth reaches the Nyquist frequency.
pub fn lowpass_match<T: Real>(noise: &[T], speech_bandwidth: f64, model_rate: u32) -> Vec<T> {
    let nyquist = model_rate as f64 / 2.0;
    if speech_bandwidth >= nyquist || noise.is_empty() {
        return noise.to_vec();
    }
    let n = noise.len();
    let mut planner = FftPlanner::new();
    let mut spec = fft_real(noise, n, &mut planner);
    let ramp_start = 0.95 * speech_bandwidth;
    for (k, c) in spec.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * model_rate as f64 / n as f64;
        let g = if f >= speech_bandwidth {
            0.0
        } else if f > ramp_start {
            let t = (f - ramp_start) / (speech_bandwidth - ramp_start);
            0.5 + 0.5 * (std::f64::consts::PI * t).cos()
        } else {
            1.0
        };
        *c *= g;
    }
    ifft_real(spec, n, &mut planner)
}

/// Loops or trims `noise` to `len` samples starting at `offset`.
pub fn fit_length<T: Real>(noise: &[T], len: usize, offset: usize) -> Result<Vec<T>> {
    if noise.is_empty() {
        return Err(Error::contract("noise signal is empty"));
    }
    Ok((0..len).map(|i| noise[(offset + i) % noise.len()]).collect())
}
