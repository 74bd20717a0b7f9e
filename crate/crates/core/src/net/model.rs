//! The two-stage enhancement network: ERB encoder/decoder producing band
//! gains, and a DF head producing deep-filter coefficients and the blend
//! weight.
//!
//! ```text
//! erb feats -> e0 -> e1 (/2) -> e2 (/2) -> e3 --+-- erb_fc --+
//! df feats  -> c0 -> c1 (/2) ----------------------- df_fc --+-> enc GRU -> emb
//! emb -> erb GRU -> fc -> [+p3(e3)] conv3 -> [+p2(e2)] convt2 (x2)
//!     -> [+p1(e1)] convt1 (x2) -> [+p0(e0)] conv0 -> sigmoid band gains
//! emb -> df GRU -> out (+ pconv(c0) global pathway) -> coefficients
//!               -> alpha (sigmoid)
//! ```
//!
//! Batch norms are folded into the preceding convolution at load time.

use std::collections::VecDeque;
use std::sync::Arc;

use num_complex::Complex;

use super::layers::{Activation, ConvLayer, GroupedGru, GroupedLinear};
use super::weights::{ArchDescriptor, NetworkWeights, BN_EPS, DF_CONV_LAYERS, ERB_CONV_LAYERS};
use crate::enhance::DfCoefficients;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Network outputs for a sequence of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct NetOutputs<T: Real> {
    /// frames x nb_erb, each in `[0, 1]`
    pub band_gains: Vec<Vec<T>>,
    pub df_coefs: DfCoefficients<T>,
    /// per frame, in `[0, 1]`
    pub alpha: Vec<T>,
}

impl<T: Real> NetOutputs<T> {
    pub fn n_frames(&self) -> usize {
        self.alpha.len()
    }
}

/// Network outputs for a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput<T: Real> {
    pub band_gains: Vec<T>,
    /// `order x nb_df`, tap-major
    pub coefs: Vec<Complex<T>>,
    pub alpha: T,
}

/// Recurrent state of the three GRU stacks.
#[derive(Debug, Clone, PartialEq)]
pub struct NetState<T: Real> {
    enc: Vec<Vec<T>>,
    erb_dec: Vec<Vec<T>>,
    df_dec: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct DfNet<T: Real> {
    desc: ArchDescriptor,
    erb_enc: Vec<ConvLayer<T>>,
    df_enc: Vec<ConvLayer<T>>,
    erb_fc: GroupedLinear<T>,
    df_fc: GroupedLinear<T>,
    enc_gru: Vec<GroupedGru<T>>,
    erb_dec_gru: Vec<GroupedGru<T>>,
    erb_dec_fc: GroupedLinear<T>,
    /// indexed by encoder level
    pconv: Vec<ConvLayer<T>>,
    /// indexed by encoder level: conv0, convt1, convt2, conv3
    erb_dec: Vec<ConvLayer<T>>,
    df_dec_gru: Vec<GroupedGru<T>>,
    df_out: GroupedLinear<T>,
    df_pconv: ConvLayer<T>,
    alpha_head: GroupedLinear<T>,
}

struct LayerBuilder<'a> {
    w: &'a NetworkWeights,
}

struct ConvSpec {
    in_ch: usize,
    out_ch: usize,
    in_freq: usize,
    out_freq: usize,
    kernel: [usize; 2],
    stride: usize,
    upsample: bool,
    shift: usize,
    separable: bool,
    activation: Activation,
}

impl LayerBuilder<'_> {
    fn values<T: Real>(&self, name: &str) -> Result<Vec<T>> {
        Ok(self.w.get(name)?.data.iter().map(|&v| T::lit(f64::from(v))).collect())
    }

    /// Folds `prefix.bn.*` into a per-channel `(scale, shift)`.
    fn batch_norm(&self, prefix: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        let get = |p: &str| -> Result<Vec<f64>> {
            Ok(self.w.get(&format!("{prefix}.bn.{p}"))?.data.iter().map(|&v| f64::from(v)).collect())
        };
        let (gamma, beta, mean, var) = (get("weight")?, get("bias")?, get("running_mean")?, get("running_var")?);
        if let Some(v) = var.iter().find(|&&v| v < 0.0) {
            return Err(Error::Weights(format!("{prefix}: negative running variance {v}")));
        }
        let scale: Vec<f64> = gamma.iter().zip(&var).map(|(g, v)| g / (v + BN_EPS).sqrt()).collect();
        let shift = beta.iter().zip(&mean).zip(&scale).map(|((b, m), s)| b - m * s).collect();
        Ok((scale, shift))
    }

    fn conv<T: Real>(&self, prefix: &str, s: ConvSpec) -> Result<ConvLayer<T>> {
        let (scale, shift) = self.batch_norm(prefix)?;
        let taps = s.kernel[0] * s.kernel[1];
        let (depthwise, raw) = if s.separable {
            (
                Some(self.values::<T>(&format!("{prefix}.depthwise"))?),
                self.values::<f64>(&format!("{prefix}.pointwise"))?,
            )
        } else {
            (None, self.values::<f64>(&format!("{prefix}.weight"))?)
        };
        let per_out = if s.separable { s.in_ch } else { s.in_ch * taps };
        let weight = raw
            .chunks(per_out)
            .zip(&scale)
            .flat_map(|(row, &k)| row.iter().map(move |&v| T::lit(v * k)))
            .collect();
        let layer = ConvLayer {
            in_ch: s.in_ch,
            out_ch: s.out_ch,
            in_freq: s.in_freq,
            out_freq: s.out_freq,
            kernel_freq: s.kernel[0],
            kernel_time: s.kernel[1],
            freq_stride: s.stride,
            upsample: s.upsample,
            time_shift: s.shift,
            depthwise,
            weight,
            bias: shift.iter().map(|&b| T::lit(b)).collect(),
            activation: s.activation,
        };
        layer.validate(prefix)?;
        Ok(layer)
    }

    fn grouped<T: Real>(&self, name: &str, input: usize, output: usize, groups: usize, act: Activation) -> Result<GroupedLinear<T>> {
        GroupedLinear::new(input, output, groups, self.values(&format!("{name}.weight"))?, None, act)
            .map_err(|e| Error::Weights(format!("{name}: {e}")))
    }

    fn dense<T: Real>(&self, name: &str, input: usize, output: usize, act: Activation) -> Result<GroupedLinear<T>> {
        let bias = self.values(&format!("{name}.bias"))?;
        GroupedLinear::new(input, output, 1, self.values(&format!("{name}.weight"))?, Some(bias), act)
            .map_err(|e| Error::Weights(format!("{name}: {e}")))
    }

    fn gru_stack<T: Real>(&self, prefix: &str, layers: usize, hidden: usize, groups: usize) -> Result<Vec<GroupedGru<T>>> {
        (0..layers)
            .map(|l| {
                let p = format!("{prefix}.gru{l}");
                GroupedGru::new(
                    hidden,
                    hidden,
                    groups,
                    self.values(&format!("{p}.weight_ih"))?,
                    self.values(&format!("{p}.weight_hh"))?,
                    self.values(&format!("{p}.bias_ih"))?,
                    self.values(&format!("{p}.bias_hh"))?,
                )
                .map_err(|e| Error::Weights(format!("{p}: {e}")))
            })
            .collect()
    }
}

fn run_stack<T: Real>(stack: &[GroupedGru<T>], state: &mut [Vec<T>], x: Vec<T>) -> Result<Vec<T>> {
    stack
        .iter()
        .zip(state.iter_mut())
        .try_fold(x, |x, (gru, h)| gru.step(&x, h))
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<T: Real> DfNet<T> {
    /// Validates the weights and prepares inference layers.
    pub fn from_weights(weights: &NetworkWeights) -> Result<Self> {
        let d = weights.descriptor().clone();
        d.check_tensor_list()?;
        let b = LayerBuilder { w: weights };
        let c = d.conv_channels;
        let k = d.conv_kernel;
        let ef = d.erb_freqs();
        let df = d.df_freqs();
        let (h, p) = (d.hidden, d.groups);
        let relu = Activation::Relu;
        let spec = |in_ch, out_ch, in_freq, out_freq, stride, shift, separable, activation| ConvSpec {
            in_ch,
            out_ch,
            in_freq,
            out_freq,
            kernel: k,
            stride,
            upsample: false,
            shift,
            separable,
            activation,
        };

        let erb_enc = (0..ERB_CONV_LAYERS)
            .map(|i| {
                let (in_ch, in_freq, stride) = match i {
                    0 => (1, ef[0], 1),
                    3 => (c, ef[2], 1),
                    _ => (c, ef[i - 1], 2),
                };
                b.conv(&format!("enc.erb_conv{i}"), spec(in_ch, c, in_freq, ef[i], stride, d.conv_shift(i), i > 0, relu))
            })
            .collect::<Result<Vec<_>>>()?;
        let df_enc = (0..DF_CONV_LAYERS)
            .map(|i| {
                let (in_ch, in_freq, stride) = if i == 0 { (2, df[0], 1) } else { (c, df[i - 1], 2) };
                b.conv(&format!("enc.df_conv{i}"), spec(in_ch, c, in_freq, df[i], stride, d.conv_shift(i), i > 0, relu))
            })
            .collect::<Result<Vec<_>>>()?;

        let pconv = (0..ERB_CONV_LAYERS)
            .map(|i| {
                b.conv(
                    &format!("erb_dec.pconv{i}"),
                    ConvSpec {
                        kernel: [1, 1],
                        ..spec(c, c, ef[i], ef[i], 1, 0, false, Activation::Identity)
                    },
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let up = |name: &str, in_freq: usize, out_freq: usize| {
            b.conv(
                name,
                ConvSpec {
                    upsample: true,
                    ..spec(c, c, in_freq, out_freq, 2, 0, true, relu)
                },
            )
        };
        let erb_dec = vec![
            b.conv("erb_dec.conv0", spec(c, 1, ef[0], ef[0], 1, 0, true, Activation::Sigmoid))?,
            up("erb_dec.convt1", ef[1], ef[0])?,
            up("erb_dec.convt2", ef[2], ef[1])?,
            b.conv("erb_dec.conv3", spec(c, c, ef[3], ef[3], 1, 0, true, relu))?,
        ];
        let df_pconv = b.conv(
            "df_dec.pconv",
            ConvSpec {
                kernel: [1, 1],
                ..spec(c, 2 * d.df_order, df[0], df[0], 1, 0, false, Activation::Identity)
            },
        )?;

        Ok(Self {
            erb_fc: b.grouped("enc.erb_fc", d.erb_embedding(), h, p, relu)?,
            df_fc: b.grouped("enc.df_fc", d.df_embedding(), h, p, relu)?,
            enc_gru: b.gru_stack("enc", d.enc_gru_layers, h, p)?,
            erb_dec_gru: b.gru_stack("erb_dec", d.erb_dec_gru_layers, h, p)?,
            erb_dec_fc: b.grouped("erb_dec.fc", h, d.erb_embedding(), p, relu)?,
            df_dec_gru: b.gru_stack("df_dec", d.df_gru_layers, h, p)?,
            df_out: b.dense("df_dec.out", h, d.df_out_len(), Activation::Identity)?,
            alpha_head: b.dense("df_dec.alpha", h, 1, Activation::Sigmoid)?,
            erb_enc,
            df_enc,
            pconv,
            erb_dec,
            df_pconv,
            desc: d,
        })
    }

    pub fn descriptor(&self) -> &ArchDescriptor {
        &self.desc
    }

    /// Frames of lookahead in the network (`l_dnn`).
    pub fn lookahead(&self) -> usize {
        self.desc.conv_lookahead
    }

    pub fn initial_state(&self) -> NetState<T> {
        let zeros = |stack: &[GroupedGru<T>]| stack.iter().map(GroupedGru::zero_state).collect();
        NetState {
            enc: zeros(&self.enc_gru),
            erb_dec: zeros(&self.erb_dec_gru),
            df_dec: zeros(&self.df_dec_gru),
        }
    }

    fn check_state(&self, state: &NetState<T>) -> Result<()> {
        let ok = |s: &[Vec<T>], stack: &[GroupedGru<T>]| {
            s.len() == stack.len() && s.iter().zip(stack).all(|(h, g)| h.len() == g.hidden)
        };
        if ok(&state.enc, &self.enc_gru) && ok(&state.erb_dec, &self.erb_dec_gru) && ok(&state.df_dec, &self.df_dec_gru) {
            Ok(())
        } else {
            Err(Error::contract("recurrent state does not match the network"))
        }
    }

    fn df_input(&self, frame: &[Complex<T>]) -> Result<Vec<T>> {
        if frame.len() != self.desc.nb_df {
            return Err(Error::contract(format!(
                "DF feature frame has {} bins, network expects {}",
                frame.len(),
                self.desc.nb_df
            )));
        }
        Ok(frame.iter().map(|z| z.re).chain(frame.iter().map(|z| z.im)).collect())
    }

    fn check_erb(&self, frame: &[T]) -> Result<()> {
        if frame.len() != self.desc.nb_erb {
            return Err(Error::contract(format!(
                "ERB feature frame has {} bands, network expects {}",
                frame.len(),
                self.desc.nb_erb
            )));
        }
        Ok(())
    }

    /// Embedding and recurrent stacks for one aligned frame. Returns the
    /// decoder fc output and the DF GRU output.
    fn recurrent_step(&self, e3: &[T], c1: &[T], state: &mut NetState<T>) -> Result<(Vec<T>, Vec<T>)> {
        let mut emb = self.erb_fc.forward(e3)?;
        add_into(&mut emb, &self.df_fc.forward(c1)?);
        let emb = run_stack(&self.enc_gru, &mut state.enc, emb)?;
        let h_erb = run_stack(&self.erb_dec_gru, &mut state.erb_dec, emb.clone())?;
        let h_df = run_stack(&self.df_dec_gru, &mut state.df_dec, emb)?;
        Ok((self.erb_dec_fc.forward(&h_erb)?, h_df))
    }

    fn df_head(&self, h_df: &[T], c0: &[T]) -> Result<(Vec<Complex<T>>, T)> {
        let raw = self.df_out.forward(h_df)?;
        let mut skip = vec![T::zero(); self.df_pconv.out_len()];
        self.df_pconv.forward_frame(&[Some(c0)], &mut skip);
        let nb_df = self.desc.nb_df;
        let coefs = (0..self.desc.df_order * nb_df)
            .map(|j| {
                let (tap, f) = (j / nb_df, j % nb_df);
                Complex::new(
                    raw[2 * j] + skip[(2 * tap) * nb_df + f],
                    raw[2 * j + 1] + skip[(2 * tap + 1) * nb_df + f],
                )
            })
            .collect();
        let alpha = self.alpha_head.forward(h_df)?[0];
        Ok((coefs, alpha))
    }

    fn pathway(&self, level: usize, frame: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.pconv[level].out_len()];
        self.pconv[level].forward_frame(&[Some(frame)], &mut out);
        out
    }

    /// Offline forward pass over a whole feature sequence (zero padded past
    /// the last frame), advancing `state`.
    pub fn forward(&self, erb_feats: &[Vec<T>], df_feats: &[Vec<Complex<T>>], state: &mut NetState<T>) -> Result<NetOutputs<T>> {
        self.check_state(state)?;
        if erb_feats.len() != df_feats.len() {
            return Err(Error::contract(format!(
                "{} ERB frames but {} DF frames",
                erb_feats.len(),
                df_feats.len()
            )));
        }
        for f in erb_feats {
            self.check_erb(f)?;
        }
        let df_in = df_feats.iter().map(|f| self.df_input(f)).collect::<Result<Vec<_>>>()?;
        let n = erb_feats.len();

        let mut e = Vec::with_capacity(ERB_CONV_LAYERS);
        let mut x = erb_feats.to_vec();
        for layer in &self.erb_enc {
            x = layer.forward_sequence(&x);
            e.push(x.clone());
        }
        let c0 = self.df_enc[0].forward_sequence(&df_in);
        let c1 = self.df_enc[1].forward_sequence(&c0);

        let mut dec_in = Vec::with_capacity(n);
        let mut heads = Vec::with_capacity(n);
        for t in 0..n {
            let (mut fc, h_df) = self.recurrent_step(&e[3][t], &c1[t], state)?;
            add_into(&mut fc, &self.pathway(3, &e[3][t]));
            dec_in.push(fc);
            heads.push(self.df_head(&h_df, &c0[t])?);
        }
        let mut y = dec_in;
        for level in (0..ERB_CONV_LAYERS).rev() {
            if level < ERB_CONV_LAYERS - 1 {
                for (t, frame) in y.iter_mut().enumerate() {
                    add_into(frame, &self.pathway(level, &e[level][t]));
                }
            }
            y = self.erb_dec[level].forward_sequence(&y);
        }

        let d = &self.desc;
        let mut df_coefs = DfCoefficients::zeros(n, d.df_order, d.df_lookahead, d.nb_df)?;
        let mut alpha = Vec::with_capacity(n);
        for (t, (coefs, a)) in heads.into_iter().enumerate() {
            df_coefs.frame_mut(t).copy_from_slice(&coefs);
            alpha.push(a);
        }
        Ok(NetOutputs {
            band_gains: y,
            df_coefs,
            alpha,
        })
    }

    pub fn param_count(&self) -> usize {
        let conv: usize = self
            .erb_enc
            .iter()
            .chain(&self.df_enc)
            .chain(&self.pconv)
            .chain(&self.erb_dec)
            .chain(std::iter::once(&self.df_pconv))
            .map(ConvLayer::param_count)
            .sum();
        let lin: usize = [&self.erb_fc, &self.df_fc, &self.erb_dec_fc, &self.df_out, &self.alpha_head]
            .iter()
            .map(|l| l.param_count())
            .sum();
        let gru: usize = self
            .enc_gru
            .iter()
            .chain(&self.erb_dec_gru)
            .chain(&self.df_dec_gru)
            .map(GroupedGru::param_count)
            .sum();
        conv + lin + gru
    }

    /// Per-layer `(name, params, macs per frame)`; grouped layers also report
    /// their dense-equivalent weight count.
    pub fn layer_costs(&self) -> Vec<LayerCost> {
        let mut out = Vec::new();
        let conv = |out: &mut Vec<LayerCost>, name: String, l: &ConvLayer<T>| {
            out.push(LayerCost {
                name,
                params: l.param_count(),
                macs_per_frame: l.macs_per_frame(),
                groups: 1,
                grouped_weights: None,
                dense_weights: None,
            });
        };
        for (i, l) in self.erb_enc.iter().enumerate() {
            conv(&mut out, format!("enc.erb_conv{i}"), l);
        }
        for (i, l) in self.df_enc.iter().enumerate() {
            conv(&mut out, format!("enc.df_conv{i}"), l);
        }
        let lin = |out: &mut Vec<LayerCost>, name: &str, l: &GroupedLinear<T>| {
            out.push(LayerCost {
                name: name.to_string(),
                params: l.param_count(),
                macs_per_frame: l.weight_count(),
                groups: l.groups,
                grouped_weights: Some(l.weight_count()),
                dense_weights: Some(l.input * l.output),
            });
        };
        let gru = |out: &mut Vec<LayerCost>, prefix: &str, stack: &[GroupedGru<T>]| {
            for (i, g) in stack.iter().enumerate() {
                out.push(LayerCost {
                    name: format!("{prefix}.gru{i}"),
                    params: g.param_count(),
                    macs_per_frame: g.macs_per_frame(),
                    groups: g.groups,
                    grouped_weights: Some(g.weight_count()),
                    dense_weights: Some(3 * g.hidden * (g.input + g.hidden)),
                });
            }
        };
        lin(&mut out, "enc.erb_fc", &self.erb_fc);
        lin(&mut out, "enc.df_fc", &self.df_fc);
        gru(&mut out, "enc", &self.enc_gru);
        gru(&mut out, "erb_dec", &self.erb_dec_gru);
        lin(&mut out, "erb_dec.fc", &self.erb_dec_fc);
        for i in (0..ERB_CONV_LAYERS).rev() {
            conv(&mut out, format!("erb_dec.pconv{i}"), &self.pconv[i]);
        }
        for (i, name) in ["conv0", "convt1", "convt2", "conv3"].iter().enumerate().rev() {
            conv(&mut out, format!("erb_dec.{name}"), &self.erb_dec[i]);
        }
        gru(&mut out, "df_dec", &self.df_dec_gru);
        lin(&mut out, "df_dec.out", &self.df_out);
        conv(&mut out, "df_dec.pconv".into(), &self.df_pconv);
        lin(&mut out, "df_dec.alpha", &self.alpha_head);
        out
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LayerCost {
    pub name: String,
    pub params: usize,
    pub macs_per_frame: usize,
    pub groups: usize,
    /// Weight count of a grouped layer (biases excluded).
    pub grouped_weights: Option<usize>,
    /// Weight count of the same layer without grouping.
    pub dense_weights: Option<usize>,
}

/// Frame history keyed by absolute frame index.
#[derive(Debug, Clone)]
struct History<T> {
    frames: VecDeque<(usize, Vec<T>)>,
    cap: usize,
}

impl<T> History<T> {
    fn new(cap: usize) -> Self {
        Self {
            frames: VecDeque::with_capacity(cap),
            cap,
        }
    }

    fn push(&mut self, idx: usize, frame: Vec<T>) {
        if self.frames.len() == self.cap {
            self.frames.pop_front();
        }
        self.frames.push_back((idx, frame));
    }

    fn get(&self, idx: usize) -> Option<&[T]> {
        self.frames.iter().find(|(i, _)| *i == idx).map(|(_, f)| f.as_slice())
    }
}

/// Incremental evaluation of one conv layer: keeps the last `kernel_time`
/// input frames and emits output frame `j - time_shift` on input frame `j`.
#[derive(Debug, Clone)]
struct ConvStream<T> {
    inputs: VecDeque<Vec<T>>,
    received: usize,
}

impl<T: Real> ConvStream<T> {
    fn new() -> Self {
        Self {
            inputs: VecDeque::new(),
            received: 0,
        }
    }

    fn push(&mut self, layer: &ConvLayer<T>, frame: Vec<T>) -> Option<(usize, Vec<T>)> {
        let kt = layer.kernel_time;
        if self.inputs.len() == kt {
            self.inputs.pop_front();
        }
        self.inputs.push_back(frame);
        let j = self.received;
        self.received += 1;
        let u = j.checked_sub(layer.time_shift)?;
        let missing = kt - self.inputs.len();
        let taps: Vec<Option<&[T]>> = (0..kt)
            .map(|jj| (jj >= missing).then(|| self.inputs[jj - missing].as_slice()))
            .collect();
        let mut out = vec![T::zero(); layer.out_len()];
        layer.forward_frame(&taps, &mut out);
        Some((u, out))
    }
}

/// Frame-by-frame inference. Output frame `u` is emitted on the call that
/// delivers feature frame `u + l_dnn`.
#[derive(Debug, Clone)]
pub struct StreamingNet<T: Real> {
    net: Arc<DfNet<T>>,
    state: NetState<T>,
    erb_streams: Vec<ConvStream<T>>,
    df_streams: Vec<ConvStream<T>>,
    dec_streams: Vec<ConvStream<T>>,
    erb_hist: Vec<History<T>>,
    c0_hist: History<T>,
    pending_c1: VecDeque<(usize, Vec<T>)>,
    frames_in: usize,
}

impl<T: Real> StreamingNet<T> {
    pub fn new(net: Arc<DfNet<T>>) -> Self {
        let cap = net.lookahead() + 2;
        Self {
            state: net.initial_state(),
            erb_streams: (0..ERB_CONV_LAYERS).map(|_| ConvStream::new()).collect(),
            df_streams: (0..DF_CONV_LAYERS).map(|_| ConvStream::new()).collect(),
            dec_streams: (0..ERB_CONV_LAYERS).map(|_| ConvStream::new()).collect(),
            erb_hist: (0..ERB_CONV_LAYERS).map(|_| History::new(cap)).collect(),
            c0_hist: History::new(cap),
            pending_c1: VecDeque::new(),
            frames_in: 0,
            net,
        }
    }

    pub fn net(&self) -> &Arc<DfNet<T>> {
        &self.net
    }

    pub fn lookahead(&self) -> usize {
        self.net.lookahead()
    }

    pub fn frames_in(&self) -> usize {
        self.frames_in
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.net.clone());
    }

    /// Feeds one feature frame. Returns the output for frame
    /// `frames_in - 1 - l_dnn` once enough lookahead is buffered.
    pub fn push(&mut self, erb_feat: &[T], df_feat: &[Complex<T>]) -> Result<Option<FrameOutput<T>>> {
        let net = self.net.clone();
        net.check_erb(erb_feat)?;
        let df_in = net.df_input(df_feat)?;
        self.frames_in += 1;

        let mut df_out = Some((0, df_in));
        for (i, layer) in net.df_enc.iter().enumerate() {
            df_out = df_out.and_then(|(_, x)| self.df_streams[i].push(layer, x));
            if let Some((u, frame)) = &df_out {
                if i == 0 {
                    self.c0_hist.push(*u, frame.clone());
                } else {
                    self.pending_c1.push_back((*u, frame.clone()));
                }
            }
        }

        let mut erb_out = Some((0, erb_feat.to_vec()));
        for (i, layer) in net.erb_enc.iter().enumerate() {
            erb_out = erb_out.and_then(|(_, x)| self.erb_streams[i].push(layer, x));
            if let Some((u, frame)) = &erb_out {
                self.erb_hist[i].push(*u, frame.clone());
            }
        }
        let Some((u, e3)) = erb_out else {
            return Ok(None);
        };
        let (c1_idx, c1) = self
            .pending_c1
            .pop_front()
            .ok_or_else(|| Error::contract("DF encoder fell behind the ERB encoder"))?;
        debug_assert_eq!(c1_idx, u);

        let (mut x, h_df) = net.recurrent_step(&e3, &c1, &mut self.state)?;
        add_into(&mut x, &net.pathway(3, &e3));
        for level in (0..ERB_CONV_LAYERS).rev() {
            if level < ERB_CONV_LAYERS - 1 {
                let skip = self.erb_hist[level]
                    .get(u)
                    .ok_or_else(|| Error::contract("missing encoder history frame"))?;
                add_into(&mut x, &net.pathway(level, skip));
            }
            let (v, y) = self.dec_streams[level]
                .push(&net.erb_dec[level], x)
                .expect("decoder layers have no lookahead");
            debug_assert_eq!(v, u);
            x = y;
        }
        let c0 = self
            .c0_hist
            .get(u)
            .ok_or_else(|| Error::contract("missing DF encoder history frame"))?;
        let (coefs, alpha) = net.df_head(&h_df, c0)?;
        Ok(Some(FrameOutput {
            band_gains: x,
            coefs,
            alpha,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(conv_lookahead: usize) -> ArchDescriptor {
        let mut d = ArchDescriptor::new(12, 9, 3, 1, conv_lookahead);
        d.conv_channels = 4;
        d.hidden = 16;
        d.groups = 4;
        d.df_gru_layers = 2;
        d.tensors = d.expected_tensors();
        d
    }

    fn features(d: &ArchDescriptor, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<Complex<f64>>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let erb = (0..n).map(|_| (0..d.nb_erb).map(|_| rng.gen_range(-20.0..20.0)).collect()).collect();
        let df = (0..n)
            .map(|_| {
                (0..d.nb_df)
                    .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        (erb, df)
    }

    #[test]
    fn output_shapes_and_ranges() {
        let d = small(2);
        let net = DfNet::<f64>::from_weights(&NetworkWeights::random(&d, 3).unwrap()).unwrap();
        let (erb, df) = features(&d, 7, 1);
        let out = net.forward(&erb, &df, &mut net.initial_state()).unwrap();
        assert_eq!(out.band_gains.len(), 7);
        assert!(out.band_gains.iter().all(|g| g.len() == 12));
        assert_eq!(out.df_coefs.n_frames(), 7);
        assert_eq!(out.df_coefs.order(), 3);
        assert_eq!(out.df_coefs.nb_df(), 9);
        assert_eq!(out.alpha.len(), 7);
        assert!(out.band_gains.iter().flatten().all(|&g| (0.0..=1.0).contains(&g)));
        assert!(out.alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
    }

    #[test]
    fn streaming_matches_offline() {
        for la in 0..=2 {
            let d = small(la);
            let net = Arc::new(DfNet::<f64>::from_weights(&NetworkWeights::random(&d, 5).unwrap()).unwrap());
            let (erb, df) = features(&d, 12, 2);
            let offline = net.forward(&erb, &df, &mut net.initial_state()).unwrap();
            let mut stream = StreamingNet::new(net.clone());
            let mut outs = Vec::new();
            for (e, f) in erb.iter().zip(&df) {
                if let Some(o) = stream.push(e, f).unwrap() {
                    outs.push(o);
                }
            }
            assert_eq!(outs.len(), 12 - la);
            for (t, o) in outs.iter().enumerate() {
                for (a, b) in o.band_gains.iter().zip(&offline.band_gains[t]) {
                    assert!((a - b).abs() < 1e-12, "lookahead {la} frame {t}");
                }
                for (a, b) in o.coefs.iter().zip(offline.df_coefs.frame(t)) {
                    assert!((a - b).norm() < 1e-12);
                }
                assert!((o.alpha - offline.alpha[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_fixture_outputs() {
        let d = small(2);
        let net = DfNet::<f32>::from_weights(&NetworkWeights::identity(&d).unwrap()).unwrap();
        let (erb, df) = features(&d, 4, 3);
        let erb: Vec<Vec<f32>> = erb.iter().map(|f| f.iter().map(|&v| v as f32).collect()).collect();
        let df: Vec<Vec<Complex<f32>>> = df
            .iter()
            .map(|f| f.iter().map(|z| Complex::new(z.re as f32, z.im as f32)).collect())
            .collect();
        let out = net.forward(&erb, &df, &mut net.initial_state()).unwrap();
        assert!(out.band_gains.iter().flatten().all(|&g| g == 1.0));
        let id = DfCoefficients::<f32>::identity(4, 3, 1, 9).unwrap();
        assert_eq!(out.df_coefs, id);
    }

    #[test]
    fn mismatched_features_are_rejected() {
        let d = small(1);
        let net = DfNet::<f64>::from_weights(&NetworkWeights::random(&d, 1).unwrap()).unwrap();
        let (erb, df) = features(&d, 3, 1);
        assert!(net.forward(&erb[..2], &df, &mut net.initial_state()).is_err());
        let bad: Vec<Vec<f64>> = erb.iter().map(|f| f[..5].to_vec()).collect();
        assert!(net.forward(&bad, &df, &mut net.initial_state()).is_err());
    }
}
