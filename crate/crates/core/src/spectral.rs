//! Streaming STFT analysis and weighted overlap-add synthesis.
//!
//! Both directions use a periodic square-root Hann window. The forward FFT is
//! unnormalized; synthesis applies `1/fft_size` together with the inverse of
//! the window's overlap-add constant, so that `analyze -> synthesize` is a
//! pure delay of `fft_size - hop_size` samples.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{expect_len, Error, Result};
use crate::scalar::Real;

const MIN_WINDOW_MS: f64 = 5.0;
const MAX_WINDOW_MS: f64 = 30.0;
const COLA_TOLERANCE: f64 = 1e-10;
// f32 windows carry their own rounding error into the check
const COLA_TOLERANCE_F32: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Overlap {
    /// hop = fft_size / 2
    Half,
    /// hop = fft_size / 4
    ThreeQuarters,
}

impl Overlap {
    pub fn from_percent(percent: u32) -> Result<Self> {
        match percent {
            50 => Ok(Overlap::Half),
            75 => Ok(Overlap::ThreeQuarters),
            p => Err(Error::config(format!(
                "unsupported overlap {p}%, expected 50 or 75"
            ))),
        }
    }

    pub fn percent(self) -> u32 {
        match self {
            Overlap::Half => 50,
            Overlap::ThreeQuarters => 75,
        }
    }

    fn divisor(self) -> usize {
        match self {
            Overlap::Half => 2,
            Overlap::ThreeQuarters => 4,
        }
    }
}

/// Immutable STFT configuration. Cheap to clone; FFT plans are shared.
#[derive(Clone)]
pub struct StftConfig<T: Real> {
    sample_rate: u32,
    fft_size: usize,
    hop_size: usize,
    window: Arc<[T]>,
    synthesis_scale: T,
    fft: Arc<dyn Fft<T>>,
    ifft: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for StftConfig<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StftConfig")
            .field("sample_rate", &self.sample_rate)
            .field("fft_size", &self.fft_size)
            .field("hop_size", &self.hop_size)
            .finish_non_exhaustive()
    }
}

/// Periodic square-root Hann window.
pub fn sqrt_hann<T: Real>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            let phase = T::TAU() * T::from_count(i) / T::from_count(n);
            (T::lit(0.5) - T::lit(0.5) * phase.cos()).sqrt()
        })
        .collect()
}

impl<T: Real> StftConfig<T> {
    /// Square-root Hann configuration with the given overlap.
    pub fn new(sample_rate: u32, fft_size: usize, overlap: Overlap) -> Result<Self> {
        if fft_size % overlap.divisor() != 0 {
            return Err(Error::config(format!(
                "fft size {fft_size} is not divisible by {} for {}% overlap",
                overlap.divisor(),
                overlap.percent()
            )));
        }
        let hop = fft_size / overlap.divisor();
        Self::with_window(sample_rate, fft_size, hop, sqrt_hann(fft_size))
    }

    /// Configuration with a caller-supplied window, used for both analysis and
    /// synthesis. The window must be COLA-compliant (squared) at `hop_size`.
    pub fn with_window(
        sample_rate: u32,
        fft_size: usize,
        hop_size: usize,
        window: Vec<T>,
    ) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if fft_size < 4 || hop_size == 0 || fft_size % hop_size != 0 {
            return Err(Error::config(format!(
                "hop size {hop_size} must divide fft size {fft_size}"
            )));
        }
        let ratio = fft_size / hop_size;
        if ratio != 2 && ratio != 4 {
            return Err(Error::config(format!(
                "overlap must be 50% or 75% (fft/hop = {ratio})"
            )));
        }
        let window_ms = 1000.0 * fft_size as f64 / sample_rate as f64;
        if !(MIN_WINDOW_MS - 1e-9..=MAX_WINDOW_MS + 1e-9).contains(&window_ms) {
            return Err(Error::config(format!(
                "fft size {fft_size} is {window_ms:.3} ms at {sample_rate} Hz; \
                 supported window lengths are {MIN_WINDOW_MS}-{MAX_WINDOW_MS} ms"
            )));
        }
        expect_len("window", window.len(), fft_size)?;

        // Overlap-add of the squared window (analysis * synthesis) must be flat.
        let mut ola = vec![0f64; hop_size];
        for (i, w) in window.iter().enumerate() {
            let w = w.as_f64();
            ola[i % hop_size] += w * w;
        }
        let mean = ola.iter().sum::<f64>() / hop_size as f64;
        let worst = ola.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        let tolerance = if T::epsilon().as_f64() > 1e-10 { COLA_TOLERANCE_F32 } else { COLA_TOLERANCE };
        if mean <= 0.0 || worst / mean > tolerance {
            return Err(Error::config(format!(
                "window violates constant overlap-add at hop {hop_size} \
                 (relative deviation {:.3e})",
                worst / mean.max(f64::MIN_POSITIVE)
            )));
        }

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(fft_size);
        let ifft = planner.plan_fft_inverse(fft_size);
        Ok(Self {
            sample_rate,
            fft_size,
            hop_size,
            window: window.into(),
            synthesis_scale: T::lit(1.0 / (fft_size as f64 * mean)),
            fft,
            ifft,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop_size(&self) -> usize {
        self.hop_size
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    /// Fraction of each frame shared with the next one (0.5 or 0.75).
    pub fn overlap_ratio(&self) -> f64 {
        1.0 - self.hop_size as f64 / self.fft_size as f64
    }

    pub fn window_ms(&self) -> f64 {
        1000.0 * self.fft_size as f64 / self.sample_rate as f64
    }

    pub fn hop_ms(&self) -> f64 {
        1000.0 * self.hop_size as f64 / self.sample_rate as f64
    }

    /// Frames per second produced by the analysis.
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop_size as f64
    }

    /// Delay of an analysis/synthesis round trip, in samples.
    pub fn roundtrip_delay(&self) -> usize {
        self.fft_size - self.hop_size
    }

    /// Center frequency of a bin in Hz.
    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.fft_size as f64
    }
}

/// Algorithmic latency in milliseconds: one window plus `max(l_dnn, l_df)` hops.
pub fn latency<T: Real>(config: &StftConfig<T>, l_dnn: usize, l_df: usize) -> f64 {
    1000.0 * latency_samples(config, l_dnn, l_df) as f64 / config.sample_rate as f64
}

/// [`latency`] expressed in samples.
pub fn latency_samples<T: Real>(config: &StftConfig<T>, l_dnn: usize, l_df: usize) -> usize {
    config.fft_size + l_dnn.max(l_df) * config.hop_size
}

/// Streaming analysis state for one audio stream.
#[derive(Debug, Clone)]
pub struct AnalysisState<T: Real> {
    config: StftConfig<T>,
    buffer: Vec<T>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> AnalysisState<T> {
    pub fn new(config: &StftConfig<T>) -> Self {
        Self {
            config: config.clone(),
            buffer: vec![T::zero(); config.fft_size],
            scratch: vec![Complex::default(); config.fft_size],
        }
    }

    pub fn config(&self) -> &StftConfig<T> {
        &self.config
    }

    /// Consumes `hop_size` new samples and returns the windowed spectrum of
    /// the most recent `fft_size` samples.
    pub fn analyze_frame(&mut self, samples: &[T]) -> Result<Vec<Complex<T>>> {
        let mut out = vec![Complex::default(); self.config.n_bins()];
        self.analyze_into(samples, &mut out)?;
        Ok(out)
    }

    pub fn analyze_into(&mut self, samples: &[T], out: &mut [Complex<T>]) -> Result<()> {
        let hop = self.config.hop_size;
        let n = self.config.fft_size;
        expect_len("analysis input", samples.len(), hop)?;
        expect_len("analysis output", out.len(), self.config.n_bins())?;

        self.buffer.copy_within(hop.., 0);
        self.buffer[n - hop..].copy_from_slice(samples);
        for ((dst, &x), &w) in self
            .scratch
            .iter_mut()
            .zip(self.buffer.iter())
            .zip(self.config.window.iter())
        {
            *dst = Complex::new(x * w, T::zero());
        }
        self.config.fft.process(&mut self.scratch);
        out.copy_from_slice(&self.scratch[..out.len()]);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.buffer.fill(T::zero());
    }
}

/// Streaming weighted overlap-add synthesis state for one audio stream.
#[derive(Debug, Clone)]
pub struct SynthesisState<T: Real> {
    config: StftConfig<T>,
    accumulator: Vec<T>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> SynthesisState<T> {
    pub fn new(config: &StftConfig<T>) -> Self {
        Self {
            config: config.clone(),
            accumulator: vec![T::zero(); config.fft_size],
            scratch: vec![Complex::default(); config.fft_size],
        }
    }

    /// Inverse-transforms one frame and returns the next `hop_size` completed
    /// output samples.
    pub fn synthesize_frame(&mut self, bins: &[Complex<T>]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.config.hop_size];
        self.synthesize_into(bins, &mut out)?;
        Ok(out)
    }

    pub fn synthesize_into(&mut self, bins: &[Complex<T>], out: &mut [T]) -> Result<()> {
        let n = self.config.fft_size;
        let hop = self.config.hop_size;
        let n_bins = self.config.n_bins();
        expect_len("synthesis input", bins.len(), n_bins)?;
        expect_len("synthesis output", out.len(), hop)?;

        // Hermitian extension; DC and Nyquist imaginary parts drop out of the real part.
        self.scratch[..n_bins].copy_from_slice(bins);
        for k in 1..n / 2 {
            self.scratch[n - k] = bins[k].conj();
        }
        self.config.ifft.process(&mut self.scratch);

        let scale = self.config.synthesis_scale;
        for ((acc, z), &w) in self
            .accumulator
            .iter_mut()
            .zip(self.scratch.iter())
            .zip(self.config.window.iter())
        {
            *acc += z.re * w * scale;
        }
        out.copy_from_slice(&self.accumulator[..hop]);
        self.accumulator.copy_within(hop.., 0);
        self.accumulator[n - hop..].fill(T::zero());
        Ok(())
    }

    pub fn reset(&mut self) {
        self.accumulator.fill(T::zero());
    }
}

/// Complex time-frequency matrix, frames x bins, row-major.
#[derive(Debug, Clone)]
pub struct Spectrogram<T: Real> {
    data: Vec<Complex<T>>,
    n_frames: usize,
    config: StftConfig<T>,
}

impl<T: Real> Spectrogram<T> {
    pub fn zeros(config: &StftConfig<T>, n_frames: usize) -> Self {
        Self {
            data: vec![Complex::default(); n_frames * config.n_bins()],
            n_frames,
            config: config.clone(),
        }
    }

    pub fn from_data(config: &StftConfig<T>, n_frames: usize, data: Vec<Complex<T>>) -> Result<Self> {
        expect_len("spectrogram data", data.len(), n_frames * config.n_bins())?;
        Ok(Self {
            data,
            n_frames,
            config: config.clone(),
        })
    }

    /// Streams `signal` through an [`AnalysisState`]. The tail is zero padded so
    /// every input sample is covered by the full window support; frame `k`
    /// ends at sample `(k + 1) * hop`.
    pub fn analyze(signal: &[T], config: &StftConfig<T>) -> Self {
        let hop = config.hop_size;
        let n_frames = (signal.len() + config.roundtrip_delay()).div_ceil(hop);
        let mut state = AnalysisState::new(config);
        let mut spec = Self::zeros(config, n_frames);
        let mut block = vec![T::zero(); hop];
        let n_bins = config.n_bins();
        for k in 0..n_frames {
            block.fill(T::zero());
            let start = (k * hop).min(signal.len());
            let end = ((k + 1) * hop).min(signal.len());
            block[..end - start].copy_from_slice(&signal[start..end]);
            state
                .analyze_into(&block, &mut spec.data[k * n_bins..(k + 1) * n_bins])
                .expect("block sized to hop");
        }
        spec
    }

    /// Overlap-add resynthesis with the round-trip delay removed, truncated to
    /// `len` samples.
    pub fn synthesize(&self, len: usize) -> Vec<T> {
        let hop = self.config.hop_size;
        let delay = self.config.roundtrip_delay();
        let mut state = SynthesisState::new(&self.config);
        let mut out = Vec::with_capacity(self.n_frames * hop);
        let mut block = vec![T::zero(); hop];
        for k in 0..self.n_frames {
            state
                .synthesize_into(self.frame(k), &mut block)
                .expect("frame sized to bins");
            out.extend_from_slice(&block);
        }
        out.extend(std::iter::repeat(T::zero()).take(delay));
        out.drain(..delay);
        out.truncate(len);
        out.resize(len, T::zero());
        out
    }

    pub fn config(&self) -> &StftConfig<T> {
        &self.config
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.config.n_bins()
    }

    pub fn frame(&self, k: usize) -> &[Complex<T>] {
        let n = self.n_bins();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn frame_mut(&mut self, k: usize) -> &mut [Complex<T>] {
        let n = self.n_bins();
        &mut self.data[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn get(&self, k: usize, f: usize) -> Complex<T> {
        self.data[k * self.n_bins() + f]
    }

    #[inline]
    pub fn set(&mut self, k: usize, f: usize, value: Complex<T>) {
        let n = self.n_bins();
        self.data[k * n + f] = value;
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    /// Checks that two spectrograms share frame count and bin layout.
    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.n_frames != other.n_frames || self.n_bins() != other.n_bins() {
            return Err(Error::contract(format!(
                "spectrogram shapes differ: {}x{} vs {}x{}",
                self.n_frames,
                self.n_bins(),
                other.n_frames,
                other.n_bins()
            )));
        }
        Ok(())
    }
}
