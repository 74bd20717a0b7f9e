//! Inference primitives: frame-wise 2-D convolutions (full, depthwise
//! separable, freq-transposed), grouped linear and grouped GRU layers, and
//! channel shuffling.
//!
//! Feature frames are flat `channels x freqs` buffers (channel-major). The
//! time axis is handled by the caller: a conv layer with time kernel `kt` and
//! time shift `s` computes output frame `u` from input frames
//! `u - (kt - 1) + s ..= u + s`, so `s` is the layer's lookahead.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => sigmoid(x),
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Sequence of feature frames, each `channels x freqs`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T: Real> {
    pub channels: usize,
    pub freqs: usize,
    pub frames: Vec<Vec<T>>,
}

impl<T: Real> FeatureMap<T> {
    pub fn zeros(channels: usize, freqs: usize, n_frames: usize) -> Self {
        Self {
            channels,
            freqs,
            frames: vec![vec![T::zero(); channels * freqs]; n_frames],
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    #[inline]
    pub fn at(&self, c: usize, t: usize, f: usize) -> T {
        self.frames[t][c * self.freqs + f]
    }
}

/// Convolution over (freq, time) with batch norm already folded into the
/// weights and bias.
#[derive(Debug, Clone)]
pub struct ConvLayer<T: Real> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_freq: usize,
    pub out_freq: usize,
    pub kernel_freq: usize,
    pub kernel_time: usize,
    pub freq_stride: usize,
    /// Transposed (upsampling) along frequency.
    pub upsample: bool,
    pub time_shift: usize,
    /// Separable layers: `[in_ch][kf][kt]` depthwise kernel; `weight` is then
    /// the `[out_ch][in_ch]` pointwise matrix. Full layers: `None`, and
    /// `weight` is `[out_ch][in_ch][kf][kt]`.
    pub depthwise: Option<Vec<T>>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

/// Output length along frequency for a strided conv with symmetric padding.
pub fn strided_len(in_freq: usize, kernel: usize, stride: usize) -> usize {
    let pad = (kernel - 1) / 2;
    (in_freq + 2 * pad - kernel) / stride + 1
}

impl<T: Real> ConvLayer<T> {
    pub fn is_separable(&self) -> bool {
        self.depthwise.is_some()
    }

    pub fn in_len(&self) -> usize {
        self.in_ch * self.in_freq
    }

    pub fn out_len(&self) -> usize {
        self.out_ch * self.out_freq
    }

    /// Checks internal shape consistency.
    pub fn validate(&self, name: &str) -> Result<()> {
        let taps = self.kernel_freq * self.kernel_time;
        let bad = |what: &str| Err(Error::Weights(format!("{name}: {what}")));
        if self.time_shift >= self.kernel_time + 2 {
            return bad("time shift exceeds supported lookahead");
        }
        match &self.depthwise {
            Some(dw) => {
                if dw.len() != self.in_ch * taps {
                    return bad("depthwise kernel size mismatch");
                }
                if self.weight.len() != self.out_ch * self.in_ch {
                    return bad("pointwise weight size mismatch");
                }
            }
            None => {
                if self.weight.len() != self.out_ch * self.in_ch * taps {
                    return bad("conv weight size mismatch");
                }
            }
        }
        if self.bias.len() != self.out_ch {
            return bad("bias size mismatch");
        }
        let expected = if self.upsample {
            self.in_freq * self.freq_stride
        } else {
            strided_len(self.in_freq, self.kernel_freq, self.freq_stride)
        };
        if self.out_freq > expected || self.out_freq == 0 {
            return bad("output frequency size inconsistent with stride");
        }
        Ok(())
    }

    /// Frequency-axis correlation of one input channel with one kernel row
    /// set, accumulated into `acc` (length `out_freq`).
    #[inline]
    fn freq_accumulate(&self, input: &[T], kernel: &[T], time_tap: usize, acc: &mut [T]) {
        let kf_n = self.kernel_freq;
        let kt_n = self.kernel_time;
        let pad = (kf_n - 1) / 2;
        if self.upsample {
            for (fi, &x) in input.iter().enumerate() {
                for kf in 0..kf_n {
                    let fo = (fi * self.freq_stride + kf) as isize - pad as isize;
                    if fo >= 0 && (fo as usize) < self.out_freq {
                        acc[fo as usize] += kernel[kf * kt_n + time_tap] * x;
                    }
                }
            }
        } else {
            for (fo, a) in acc.iter_mut().enumerate() {
                let base = (fo * self.freq_stride) as isize - pad as isize;
                for kf in 0..kf_n {
                    let fi = base + kf as isize;
                    if fi >= 0 && (fi as usize) < self.in_freq {
                        *a += kernel[kf * kt_n + time_tap] * input[fi as usize];
                    }
                }
            }
        }
    }

    /// Computes one output frame. `taps[j]` is the input frame at time
    /// `u - (kt - 1) + j + time_shift`, `None` outside the sequence.
    pub fn forward_frame(&self, taps: &[Option<&[T]>], out: &mut [T]) {
        debug_assert_eq!(taps.len(), self.kernel_time);
        debug_assert_eq!(out.len(), self.out_len());
        let fi_n = self.in_freq;
        let fo_n = self.out_freq;
        let taps_per_ch = self.kernel_freq * self.kernel_time;
        match &self.depthwise {
            Some(dw) => {
                let mut mid = vec![T::zero(); self.in_ch * fo_n];
                for c in 0..self.in_ch {
                    let kernel = &dw[c * taps_per_ch..(c + 1) * taps_per_ch];
                    let acc = &mut mid[c * fo_n..(c + 1) * fo_n];
                    for (j, tap) in taps.iter().enumerate() {
                        if let Some(frame) = tap {
                            self.freq_accumulate(&frame[c * fi_n..(c + 1) * fi_n], kernel, j, acc);
                        }
                    }
                }
                for o in 0..self.out_ch {
                    let row = &self.weight[o * self.in_ch..(o + 1) * self.in_ch];
                    let dst = &mut out[o * fo_n..(o + 1) * fo_n];
                    dst.fill(self.bias[o]);
                    for (c, &w) in row.iter().enumerate() {
                        if w == T::zero() {
                            continue;
                        }
                        for (d, &m) in dst.iter_mut().zip(&mid[c * fo_n..(c + 1) * fo_n]) {
                            *d += w * m;
                        }
                    }
                }
            }
            None => {
                for o in 0..self.out_ch {
                    let dst = &mut out[o * fo_n..(o + 1) * fo_n];
                    dst.fill(self.bias[o]);
                    for c in 0..self.in_ch {
                        let off = (o * self.in_ch + c) * taps_per_ch;
                        let kernel = &self.weight[off..off + taps_per_ch];
                        for (j, tap) in taps.iter().enumerate() {
                            if let Some(frame) = tap {
                                self.freq_accumulate(&frame[c * fi_n..(c + 1) * fi_n], kernel, j, dst);
                            }
                        }
                    }
                }
            }
        }
        for v in out.iter_mut() {
            *v = self.activation.apply(*v);
        }
    }

    /// Offline application over a whole sequence, zero padded in time.
    pub fn forward_sequence(&self, input: &[Vec<T>]) -> Vec<Vec<T>> {
        let n = input.len() as isize;
        let kt = self.kernel_time as isize;
        (0..input.len())
            .map(|u| {
                let taps: Vec<Option<&[T]>> = (0..kt)
                    .map(|j| {
                        let t = u as isize - (kt - 1) + j + self.time_shift as isize;
                        (0..n).contains(&t).then(|| input[t as usize].as_slice())
                    })
                    .collect();
                let mut out = vec![T::zero(); self.out_len()];
                self.forward_frame(&taps, &mut out);
                out
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.depthwise.as_ref().map_or(0, Vec::len) + self.weight.len() + self.bias.len()
    }

    /// Multiply-accumulates for one output frame.
    pub fn macs_per_frame(&self) -> usize {
        let taps = self.kernel_freq * self.kernel_time;
        // transposed layers touch every input position once per kernel tap
        let positions = if self.upsample { self.in_freq } else { self.out_freq };
        match &self.depthwise {
            Some(_) => self.in_ch * positions * taps + self.out_ch * self.in_ch * self.out_freq,
            None => self.out_ch * self.in_ch * positions * taps,
        }
    }
}

/// Separable convolution over a whole [`FeatureMap`] (depthwise kernel
/// followed by the 1x1 pointwise mix). The time receptive field of output
/// frame `t` ends at `t + layer.time_shift`.
pub fn separable_conv_forward<T: Real>(input: &FeatureMap<T>, layer: &ConvLayer<T>) -> Result<FeatureMap<T>> {
    if !layer.is_separable() {
        return Err(Error::contract("layer is not depthwise separable"));
    }
    layer.validate("separable conv")?;
    if input.channels != layer.in_ch || input.freqs != layer.in_freq {
        return Err(Error::contract(format!(
            "separable conv expects {}x{} input frames, got {}x{}",
            layer.in_ch, layer.in_freq, input.channels, input.freqs
        )));
    }
    if let Some(bad) = input.frames.iter().find(|f| f.len() != layer.in_len()) {
        return Err(Error::contract(format!(
            "feature frame of length {} (expected {})",
            bad.len(),
            layer.in_len()
        )));
    }
    Ok(FeatureMap {
        channels: layer.out_ch,
        freqs: layer.out_freq,
        frames: layer.forward_sequence(&input.frames),
    })
}

/// Transposes the `(groups x len/groups)` grouping of a feature vector:
/// the element at `(g, i)` moves to `(i, g)`.
pub fn channel_shuffle<T: Copy>(input: &[T], groups: usize) -> Result<Vec<T>> {
    if groups == 0 || input.len() % groups != 0 {
        return Err(Error::contract(format!(
            "cannot shuffle {} features into {groups} groups",
            input.len()
        )));
    }
    let per = input.len() / groups;
    let mut out = Vec::with_capacity(input.len());
    for i in 0..per {
        for g in 0..groups {
            out.push(input[g * per + i]);
        }
    }
    Ok(out)
}

/// Block-diagonal linear layer: `groups` independent `in/P -> out/P`
/// matrices, outputs concatenated and channel-shuffled.
#[derive(Debug, Clone)]
pub struct GroupedLinear<T: Real> {
    pub input: usize,
    pub output: usize,
    pub groups: usize,
    /// `[groups][output / groups][input / groups]`
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
    pub activation: Activation,
}

impl<T: Real> GroupedLinear<T> {
    pub fn new(
        input: usize,
        output: usize,
        groups: usize,
        weight: Vec<T>,
        bias: Option<Vec<T>>,
        activation: Activation,
    ) -> Result<Self> {
        if groups == 0 || input % groups != 0 || output % groups != 0 {
            return Err(Error::contract(format!(
                "grouped linear {input}->{output} is not divisible into {groups} groups"
            )));
        }
        if weight.len() != input * output / groups {
            return Err(Error::contract(format!(
                "grouped linear {input}->{output}/{groups}: weight has {} values, expected {}",
                weight.len(),
                input * output / groups
            )));
        }
        if let Some(b) = &bias {
            if b.len() != output {
                return Err(Error::contract("grouped linear bias length mismatch"));
            }
        }
        Ok(Self {
            input,
            output,
            groups,
            weight,
            bias,
            activation,
        })
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input {
            return Err(Error::contract(format!(
                "grouped linear expects {} inputs, got {}",
                self.input,
                x.len()
            )));
        }
        let ig = self.input / self.groups;
        let og = self.output / self.groups;
        let mut y = vec![T::zero(); self.output];
        for g in 0..self.groups {
            let xg = &x[g * ig..(g + 1) * ig];
            for o in 0..og {
                let row = &self.weight[(g * og + o) * ig..(g * og + o + 1) * ig];
                let mut acc = self.bias.as_ref().map_or(T::zero(), |b| b[g * og + o]);
                for (&w, &v) in row.iter().zip(xg) {
                    acc += w * v;
                }
                y[g * og + o] = self.activation.apply(acc);
            }
        }
        if self.groups > 1 {
            y = channel_shuffle(&y, self.groups)?;
        }
        Ok(y)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    pub fn weight_count(&self) -> usize {
        self.weight.len()
    }
}

/// `groups` independent GRUs (PyTorch gate layout r, z, n) over contiguous
/// input/hidden slices; the concatenated hidden output is channel-shuffled.
/// The recurrent state is kept unshuffled, group by group.
#[derive(Debug, Clone)]
pub struct GroupedGru<T: Real> {
    pub input: usize,
    pub hidden: usize,
    pub groups: usize,
    /// `[groups][3 * hidden/P][input/P]`
    pub w_ih: Vec<T>,
    /// `[groups][3 * hidden/P][hidden/P]`
    pub w_hh: Vec<T>,
    /// `[groups][3 * hidden/P]`
    pub b_ih: Vec<T>,
    pub b_hh: Vec<T>,
}

impl<T: Real> GroupedGru<T> {
    pub fn new(
        input: usize,
        hidden: usize,
        groups: usize,
        w_ih: Vec<T>,
        w_hh: Vec<T>,
        b_ih: Vec<T>,
        b_hh: Vec<T>,
    ) -> Result<Self> {
        if groups == 0 || input % groups != 0 || hidden % groups != 0 {
            return Err(Error::contract(format!(
                "grouped GRU {input}->{hidden} is not divisible into {groups} groups"
            )));
        }
        let (ig, hg) = (input / groups, hidden / groups);
        let ok = w_ih.len() == groups * 3 * hg * ig
            && w_hh.len() == groups * 3 * hg * hg
            && b_ih.len() == 3 * hidden
            && b_hh.len() == 3 * hidden;
        if !ok {
            return Err(Error::contract(format!(
                "grouped GRU {input}->{hidden}/{groups}: parameter shapes mismatch"
            )));
        }
        Ok(Self {
            input,
            hidden,
            groups,
            w_ih,
            w_hh,
            b_ih,
            b_hh,
        })
    }

    pub fn zero_state(&self) -> Vec<T> {
        vec![T::zero(); self.hidden]
    }

    /// One recurrence step. Returns the shuffled hidden output.
    pub fn step(&self, x: &[T], state: &mut [T]) -> Result<Vec<T>> {
        if x.len() != self.input || state.len() != self.hidden {
            return Err(Error::contract(format!(
                "grouped GRU expects input {} / state {}, got {} / {}",
                self.input,
                self.hidden,
                x.len(),
                state.len()
            )));
        }
        let (ig, hg) = (self.input / self.groups, self.hidden / self.groups);
        let mut gi = vec![T::zero(); 3 * hg];
        let mut gh = vec![T::zero(); 3 * hg];
        for g in 0..self.groups {
            let xg = &x[g * ig..(g + 1) * ig];
            let hprev = state[g * hg..(g + 1) * hg].to_vec();
            for r in 0..3 * hg {
                let wi = &self.w_ih[(g * 3 * hg + r) * ig..(g * 3 * hg + r + 1) * ig];
                let wh = &self.w_hh[(g * 3 * hg + r) * hg..(g * 3 * hg + r + 1) * hg];
                gi[r] = self.b_ih[g * 3 * hg + r] + dot(wi, xg);
                gh[r] = self.b_hh[g * 3 * hg + r] + dot(wh, &hprev);
            }
            for j in 0..hg {
                let r = sigmoid(gi[j] + gh[j]);
                let z = sigmoid(gi[hg + j] + gh[hg + j]);
                let n = (gi[2 * hg + j] + r * gh[2 * hg + j]).tanh();
                state[g * hg + j] = (T::one() - z) * n + z * hprev[j];
            }
        }
        if self.groups > 1 {
            channel_shuffle(state, self.groups)
        } else {
            Ok(state.to_vec())
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.b_ih.len() + self.b_hh.len()
    }

    pub fn weight_count(&self) -> usize {
        self.w_ih.len() + self.w_hh.len()
    }

    pub fn macs_per_frame(&self) -> usize {
        self.weight_count()
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    fn identity_separable(ch: usize, freqs: usize, shift: usize) -> ConvLayer<f64> {
        let mut dw = vec![0.0; ch * 6];
        for c in 0..ch {
            // center freq tap (kf = 1), time tap j = 1 -> frame u + shift
            dw[c * 6 + 2 + 1] = 1.0;
        }
        let mut pw = vec![0.0; ch * ch];
        for c in 0..ch {
            pw[c * ch + c] = 1.0;
        }
        ConvLayer {
            in_ch: ch,
            out_ch: ch,
            in_freq: freqs,
            out_freq: freqs,
            kernel_freq: 3,
            kernel_time: 2,
            freq_stride: 1,
            upsample: false,
            time_shift: shift,
            depthwise: Some(dw),
            weight: pw,
            bias: vec![0.0; ch],
            activation: Activation::Identity,
        }
    }

    fn random_map(rng: &mut ChaCha8Rng, ch: usize, freqs: usize, t: usize) -> FeatureMap<f64> {
        FeatureMap {
            channels: ch,
            freqs,
            frames: (0..t).map(|_| rand_vec(rng, ch * freqs, 1.0)).collect(),
        }
    }

    #[test]
    fn identity_separable_conv_passes_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_map(&mut rng, 4, 7, 6);
        let y = separable_conv_forward(&x, &identity_separable(4, 7, 0)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn separable_conv_is_causal_up_to_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for shift in 0..=2 {
            let mut layer = identity_separable(3, 5, shift);
            layer.depthwise = Some(rand_vec(&mut rng, 3 * 6, 1.0));
            layer.weight = rand_vec(&mut rng, 9, 1.0);
            let x = random_map(&mut rng, 3, 5, 10);
            let y = separable_conv_forward(&x, &layer).unwrap();
            for t in 0..10 {
                let mut x2 = x.clone();
                for frame in x2.frames.iter_mut().skip(t + shift + 1) {
                    frame.fill(0.0);
                }
                let y2 = separable_conv_forward(&x2, &layer).unwrap();
                assert_eq!(y.frames[t], y2.frames[t], "shift {shift} frame {t}");
            }
        }
    }

    #[test]
    fn separable_reduction_factor() {
        let c = 64usize;
        let sep = c * 3 * 2 + c * c;
        let full = c * c * 3 * 2;
        let factor = full as f64 / sep as f64;
        assert!((factor - 6.0 * c as f64 / (6.0 + c as f64)).abs() < 1e-12);
    }

    #[test]
    fn strided_and_transposed_lengths() {
        assert_eq!(strided_len(32, 3, 2), 16);
        assert_eq!(strided_len(101, 3, 2), 51);
        assert_eq!(strided_len(8, 3, 1), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut layer = identity_separable(2, 4, 0);
        layer.upsample = true;
        layer.freq_stride = 2;
        layer.out_freq = 8;
        layer.depthwise = Some(rand_vec(&mut rng, 12, 1.0));
        layer.validate("t").unwrap();
        let x = random_map(&mut rng, 2, 4, 3);
        let y = separable_conv_forward(&x, &layer).unwrap();
        assert_eq!(y.freqs, 8);
    }

    #[test]
    fn shuffle_examples() {
        assert_eq!(channel_shuffle(&["a1", "a2", "b1", "b2"], 2).unwrap(), ["a1", "b1", "a2", "b2"]);
        let x: Vec<u32> = (0..12).collect();
        assert_eq!(channel_shuffle(&x, 1).unwrap(), x);
        let once = channel_shuffle(&x, 3).unwrap();
        assert_eq!(channel_shuffle(&once, 4).unwrap(), x);
        assert!(channel_shuffle(&x, 5).is_err());
    }

    #[test]
    fn grouped_linear_single_group_is_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = rand_vec(&mut rng, 12, 1.0);
        let b = rand_vec(&mut rng, 3, 1.0);
        let layer = GroupedLinear::new(4, 3, 1, w.clone(), Some(b.clone()), Activation::Identity).unwrap();
        let x = rand_vec(&mut rng, 4, 1.0);
        let y = layer.forward(&x).unwrap();
        for o in 0..3 {
            let expect: f64 = b[o] + (0..4).map(|i| w[o * 4 + i] * x[i]).sum::<f64>();
            assert!((y[o] - expect).abs() < 1e-12);
        }
        // zero input gives bias only
        assert_eq!(layer.forward(&[0.0; 4]).unwrap(), b);
    }

    #[test]
    fn grouped_linear_is_block_diagonal_then_shuffled() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = rand_vec(&mut rng, 8 * 6 / 2, 1.0);
        let layer = GroupedLinear::new(8, 6, 2, w.clone(), None, Activation::Identity).unwrap();
        let x = rand_vec(&mut rng, 8, 1.0);
        let y = layer.forward(&x).unwrap();
        let mut blocks = vec![0.0; 6];
        for g in 0..2 {
            for o in 0..3 {
                blocks[g * 3 + o] = (0..4).map(|i| w[(g * 3 + o) * 4 + i] * x[g * 4 + i]).sum();
            }
        }
        let expect = channel_shuffle(&blocks, 2).unwrap();
        for (a, b) in y.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(layer.weight_count() * 2, 8 * 6);
        assert!(GroupedLinear::<f64>::new(8, 6, 4, vec![0.0; 12], None, Activation::Identity).is_err());
    }

    /// Textbook GRU cell used as an independent reference.
    fn reference_gru(
        x: &[f64],
        h: &[f64],
        w_ih: &[f64],
        w_hh: &[f64],
        b_ih: &[f64],
        b_hh: &[f64],
    ) -> Vec<f64> {
        let n_h = h.len();
        let n_i = x.len();
        let lin = |w: &[f64], b: &[f64], v: &[f64], n: usize, row: usize| -> f64 {
            b[row] + (0..n).map(|c| w[row * n + c] * v[c]).sum::<f64>()
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        (0..n_h)
            .map(|j| {
                let r = sig(lin(w_ih, b_ih, x, n_i, j) + lin(w_hh, b_hh, h, n_h, j));
                let z = sig(lin(w_ih, b_ih, x, n_i, n_h + j) + lin(w_hh, b_hh, h, n_h, n_h + j));
                let n = (lin(w_ih, b_ih, x, n_i, 2 * n_h + j) + r * lin(w_hh, b_hh, h, n_h, 2 * n_h + j)).tanh();
                (1.0 - z) * n + z * h[j]
            })
            .collect()
    }

    #[test]
    fn single_group_gru_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (ni, nh) = (5, 4);
        let w_ih = rand_vec(&mut rng, 3 * nh * ni, 0.5);
        let w_hh = rand_vec(&mut rng, 3 * nh * nh, 0.5);
        let b_ih = rand_vec(&mut rng, 3 * nh, 0.5);
        let b_hh = rand_vec(&mut rng, 3 * nh, 0.5);
        let gru = GroupedGru::new(ni, nh, 1, w_ih.clone(), w_hh.clone(), b_ih.clone(), b_hh.clone()).unwrap();
        let mut state = gru.zero_state();
        let mut h_ref = vec![0.0; nh];
        for _ in 0..5 {
            let x = rand_vec(&mut rng, ni, 1.0);
            let out = gru.step(&x, &mut state).unwrap();
            h_ref = reference_gru(&x, &h_ref, &w_ih, &w_hh, &b_ih, &b_hh);
            for (a, b) in out.iter().zip(&h_ref) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weight_gru_stays_zero_and_outputs_are_bounded() {
        let gru = GroupedGru::new(8, 8, 2, vec![0.0; 96], vec![0.0; 96], vec![0.0; 24], vec![0.0; 24]).unwrap();
        let mut s = gru.zero_state();
        let out = gru.step(&[1.0; 8], &mut s).unwrap();
        assert!(out.iter().all(|&v| v == 0.0) && s.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gru = GroupedGru::new(
            8,
            8,
            2,
            rand_vec(&mut rng, 96, 1.0),
            rand_vec(&mut rng, 96, 1.0),
            rand_vec(&mut rng, 24, 1.0),
            rand_vec(&mut rng, 24, 1.0),
        )
        .unwrap();
        let mut s = gru.zero_state();
        for _ in 0..50 {
            let out = gru.step(&rand_vec(&mut rng, 8, 10.0), &mut s).unwrap();
            assert!(out.iter().all(|v| v.abs() <= 1.0));
        }
    }
}
