//! Real-time enhancement engine: STFT -> features -> network -> gains -> deep
//! filter -> blend -> overlap-add, one hop at a time.
//!
//! At input hop `t` the engine renders frame `k = t - L` with
//! `L = max(l_dnn, l_df)`, then holds the synthesized hop for one more block.
//! The end-to-end delay is therefore `fft_size + L * hop` samples, and every
//! output sample depends only on strictly earlier input samples.
//!
//! When `l_df > l_dnn`, the newest frames in the deep-filter window arrive
//! before their gains; they reuse the most recent predicted gains.

use std::sync::Arc;

use num_complex::Complex;

use super::{apply_df, blend_into_frame, clamp_gains_in_place, nb_df_bins, AttenLimit};
use crate::erb::{apply_inverse_fb_into, build_erb_fb, ErbFilterBank, DEFAULT_MIN_BINS_PER_BAND};
use crate::error::{Error, Result};
use crate::features::{df_feat_into, erb_feat_into, smoothing_coef, NormState, DEFAULT_NORM_DECAY_S};
use crate::net::{DfNet, FrameOutput, StreamingNet};
use crate::scalar::Real;
use crate::spectral::{latency_samples, AnalysisState, Overlap, StftConfig, SynthesisState};

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub overlap: Overlap,
    pub nb_erb: usize,
    pub min_bins_per_band: usize,
    /// Upper frequency of the deep-filter band in Hz.
    pub f_df: f64,
    pub df_order: usize,
    pub df_lookahead: usize,
    pub conv_lookahead: usize,
    pub atten_limit: AttenLimit,
    pub norm_decay_s: f64,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            sample_rate: 48_000,
            fft_size: 960,
            overlap: Overlap::Half,
            nb_erb: 32,
            min_bins_per_band: DEFAULT_MIN_BINS_PER_BAND,
            f_df: 5000.0,
            df_order: 5,
            df_lookahead: 1,
            conv_lookahead: 2,
            atten_limit: AttenLimit::Unlimited,
            norm_decay_s: DEFAULT_NORM_DECAY_S,
        }
    }
}

impl EnhanceConfig {
    pub fn stft<T: Real>(&self) -> Result<StftConfig<T>> {
        StftConfig::new(self.sample_rate, self.fft_size, self.overlap)
    }

    pub fn nb_df(&self) -> usize {
        nb_df_bins(self.f_df, self.fft_size, self.sample_rate)
    }

    /// Frames between analysis and rendering: `max(l_dnn, l_df)`.
    pub fn frame_delay(&self) -> usize {
        self.conv_lookahead.max(self.df_lookahead)
    }

    /// End-to-end delay in samples.
    pub fn latency_samples(&self) -> Result<usize> {
        Ok(latency_samples(&self.stft::<f64>()?, self.conv_lookahead, self.df_lookahead))
    }

    /// Checks that a network was built for this configuration.
    pub fn check_network<T: Real>(&self, net: &DfNet<T>) -> Result<()> {
        let d = net.descriptor();
        let pairs = [
            ("ERB bands", self.nb_erb, d.nb_erb),
            ("DF bins", self.nb_df(), d.nb_df),
            ("DF order", self.df_order, d.df_order),
            ("DF lookahead", self.df_lookahead, d.df_lookahead),
            ("conv lookahead", self.conv_lookahead, d.conv_lookahead),
        ];
        for (what, cfg, weights) in pairs {
            if cfg != weights {
                return Err(Error::config(format!(
                    "weights were built for {what} = {weights}, configuration uses {cfg}"
                )));
            }
        }
        Ok(())
    }
}

/// Fixed-capacity store of per-frame data addressed by absolute frame index.
#[derive(Debug, Clone)]
struct FrameRing<V> {
    slots: Vec<Option<(usize, V)>>,
}

impl<V> FrameRing<V> {
    fn new(cap: usize) -> Self {
        Self {
            slots: (0..cap).map(|_| None).collect(),
        }
    }

    fn insert(&mut self, idx: usize, value: V) {
        let n = self.slots.len();
        self.slots[idx % n] = Some((idx, value));
    }

    fn get(&self, idx: usize) -> Option<&V> {
        match &self.slots[idx % self.slots.len()] {
            Some((i, v)) if *i == idx => Some(v),
            _ => None,
        }
    }

    fn clear(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = None);
    }
}

/// Per-stream enhancement state.
#[derive(Debug, Clone)]
pub struct Enhancer<T: Real> {
    config: EnhanceConfig,
    stft: StftConfig<T>,
    fb: ErbFilterBank,
    nb_df: usize,
    analysis: AnalysisState<T>,
    synthesis: SynthesisState<T>,
    norm: NormState<T>,
    net: StreamingNet<T>,
    spectra: FrameRing<Vec<Complex<T>>>,
    gains: FrameRing<Vec<T>>,
    outputs: FrameRing<(Vec<Complex<T>>, T)>,
    latest_gain: Option<usize>,
    held_block: Vec<T>,
    frames_in: usize,
    erb_scratch: Vec<T>,
    df_scratch: Vec<Complex<T>>,
}

impl<T: Real> Enhancer<T> {
    pub fn new(config: EnhanceConfig, net: Arc<DfNet<T>>) -> Result<Self> {
        let stft = config.stft::<T>()?;
        config.check_network(&net)?;
        if !(config.norm_decay_s > 0.0) {
            return Err(Error::config("normalization decay must be positive"));
        }
        let fb = build_erb_fb(config.sample_rate, config.fft_size, config.nb_erb, config.min_bins_per_band)?;
        let nb_df = config.nb_df();
        let alpha = smoothing_coef(config.norm_decay_s, stft.hop_size(), config.sample_rate);
        let cap = config.frame_delay() + config.df_order + 2;
        Ok(Self {
            analysis: AnalysisState::new(&stft),
            synthesis: SynthesisState::new(&stft),
            norm: NormState::new(config.nb_erb, nb_df, alpha),
            net: StreamingNet::new(net),
            spectra: FrameRing::new(cap),
            gains: FrameRing::new(cap),
            outputs: FrameRing::new(cap),
            latest_gain: None,
            held_block: vec![T::zero(); stft.hop_size()],
            frames_in: 0,
            erb_scratch: vec![T::zero(); config.nb_erb],
            df_scratch: vec![Complex::default(); nb_df],
            fb,
            nb_df,
            stft,
            config,
        })
    }

    pub fn config(&self) -> &EnhanceConfig {
        &self.config
    }

    pub fn stft(&self) -> &StftConfig<T> {
        &self.stft
    }

    pub fn hop_size(&self) -> usize {
        self.stft.hop_size()
    }

    /// End-to-end delay in samples.
    pub fn latency_samples(&self) -> usize {
        latency_samples(&self.stft, self.config.conv_lookahead, self.config.df_lookahead)
    }

    pub fn reset(&mut self) {
        self.analysis.reset();
        self.synthesis.reset();
        self.norm.reset();
        self.net.reset();
        self.spectra.clear();
        self.gains.clear();
        self.outputs.clear();
        self.latest_gain = None;
        self.held_block.fill(T::zero());
        self.frames_in = 0;
    }

    /// Processes one hop of input and returns one hop of output.
    pub fn process_block(&mut self, input: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.hop_size()];
        self.process_into(input, &mut out)?;
        Ok(out)
    }

    pub fn process_into(&mut self, input: &[T], output: &mut [T]) -> Result<()> {
        if output.len() != self.hop_size() {
            return Err(Error::contract(format!(
                "output block has {} samples, hop is {}",
                output.len(),
                self.hop_size()
            )));
        }
        let t = self.frames_in;
        let spectrum = self.analysis.analyze_frame(input)?;
        erb_feat_into(&spectrum, &self.fb, &mut self.norm, &mut self.erb_scratch)?;
        df_feat_into(&spectrum[..self.nb_df], &mut self.norm, &mut self.df_scratch)?;
        self.spectra.insert(t, spectrum);
        self.frames_in += 1;

        if let Some(frame) = self.net.push(&self.erb_scratch, &self.df_scratch)? {
            let u = t - self.config.conv_lookahead;
            self.store_net_output(u, frame)?;
        }

        output.copy_from_slice(&self.held_block);
        let rendered = match t.checked_sub(self.config.frame_delay()) {
            Some(k) => self.render(k)?,
            None => vec![Complex::default(); self.stft.n_bins()],
        };
        self.synthesis.synthesize_into(&rendered, &mut self.held_block)?;
        Ok(())
    }

    fn store_net_output(&mut self, u: usize, frame: FrameOutput<T>) -> Result<()> {
        let mut bin_gains = vec![T::zero(); self.stft.n_bins()];
        apply_inverse_fb_into(&frame.band_gains, &self.fb, &mut bin_gains)?;
        clamp_gains_in_place(&mut bin_gains, self.config.atten_limit);
        self.gains.insert(u, bin_gains);
        self.outputs.insert(u, (frame.coefs, frame.alpha));
        self.latest_gain = Some(u);
        Ok(())
    }

    /// Gain-enhanced spectrum `Y^G(j)`; frames without a prediction yet use
    /// the latest available gains.
    fn gained(&self, j: usize) -> Result<Vec<Complex<T>>> {
        let x = self
            .spectra
            .get(j)
            .ok_or_else(|| Error::contract(format!("spectrum of frame {j} no longer buffered")))?;
        let latest = self
            .latest_gain
            .ok_or_else(|| Error::contract("no gains predicted yet"))?;
        let g = self
            .gains
            .get(j.min(latest))
            .ok_or_else(|| Error::contract(format!("gains of frame {j} no longer buffered")))?;
        Ok(x.iter().zip(g).map(|(&x, &g)| x * g).collect())
    }

    fn render(&self, k: usize) -> Result<Vec<Complex<T>>> {
        let order = self.config.df_order;
        let la = self.config.df_lookahead;
        let mut y = self.gained(k)?;
        let window: Vec<Vec<Complex<T>>> = (0..order)
            .map(|i| {
                // oldest first: frames k - N + 1 + l ..= k + l
                let j = (k + la + i + 1).checked_sub(order);
                match j {
                    Some(j) if j == k => Ok(y[..self.nb_df].to_vec()),
                    Some(j) => self.gained(j).map(|mut v| {
                        v.truncate(self.nb_df);
                        v
                    }),
                    None => Ok(vec![Complex::default(); self.nb_df]),
                }
            })
            .collect::<Result<_>>()?;
        let (coefs, alpha) = self
            .outputs
            .get(k)
            .ok_or_else(|| Error::contract(format!("network output of frame {k} missing")))?;
        let y_df = apply_df(&window, coefs, order, la)?;
        blend_into_frame(&mut y, &y_df, *alpha)?;
        Ok(y)
    }
}

/// Enhances a whole signal through the streaming engine. With
/// `compensate_delay` the engine latency is removed so the output aligns
/// sample-for-sample with the input; otherwise the raw streaming output is
/// returned. The result has the input's length either way.
pub fn enhance_signal<T: Real>(
    signal: &[T],
    config: &EnhanceConfig,
    net: Arc<DfNet<T>>,
    compensate_delay: bool,
) -> Result<Vec<T>> {
    let mut enh = Enhancer::new(config.clone(), net)?;
    let hop = enh.hop_size();
    let delay = if compensate_delay { enh.latency_samples() } else { 0 };
    let n_blocks = (signal.len() + delay).div_ceil(hop);
    let mut out = Vec::with_capacity(n_blocks * hop);
    let mut block = vec![T::zero(); hop];
    let mut y = vec![T::zero(); hop];
    for b in 0..n_blocks {
        block.fill(T::zero());
        let start = (b * hop).min(signal.len());
        let end = ((b + 1) * hop).min(signal.len());
        block[..end - start].copy_from_slice(&signal[start..end]);
        enh.process_into(&block, &mut y)?;
        out.extend_from_slice(&y);
    }
    out.drain(..delay.min(out.len()));
    out.resize(signal.len(), T::zero());
    Ok(out)
}
