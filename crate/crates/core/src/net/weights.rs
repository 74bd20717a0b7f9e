//! Architecture descriptor, named tensor container and the `DFNW` weight file.
//!
//! File layout (little endian):
//!
//! ```text
//! b"DFNW" | u32 version (1) | u32 descriptor length | descriptor JSON | f32 tensor data
//! ```
//!
//! Tensor data follows the order of the descriptor's `tensors` list. The list
//! must equal the one derived from the architecture hyperparameters, so a file
//! that declares a different layer list is rejected before any forward pass.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::strided_len;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"DFNW";
pub const WEIGHTS_VERSION: u32 = 1;
pub const BN_EPS: f64 = 1e-5;

/// Conv blocks on the ERB side of the encoder (and of the decoder).
pub const ERB_CONV_LAYERS: usize = 4;
/// Conv blocks on the DF side of the encoder.
pub const DF_CONV_LAYERS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    fn new(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub nb_erb: usize,
    pub nb_df: usize,
    pub df_order: usize,
    pub df_lookahead: usize,
    pub conv_channels: usize,
    /// `[freq, time]`
    pub conv_kernel: [usize; 2],
    pub groups: usize,
    pub hidden: usize,
    /// Frames of lookahead in the conv stacks (`l_dnn`). The first
    /// `conv_lookahead` conv blocks of each encoder path look one frame ahead.
    pub conv_lookahead: usize,
    pub enc_gru_layers: usize,
    pub erb_dec_gru_layers: usize,
    pub df_gru_layers: usize,
    #[serde(default)]
    pub tensors: Vec<TensorSpec>,
}

impl ArchDescriptor {
    /// Default architecture: C = 64, kernel 3x2, P = 8, hidden 512.
    pub fn new(nb_erb: usize, nb_df: usize, df_order: usize, df_lookahead: usize, conv_lookahead: usize) -> Self {
        let mut d = Self {
            nb_erb,
            nb_df,
            df_order,
            df_lookahead,
            conv_channels: 64,
            conv_kernel: [3, 2],
            groups: 8,
            hidden: 512,
            conv_lookahead,
            enc_gru_layers: 1,
            erb_dec_gru_layers: 1,
            df_gru_layers: 3,
            tensors: Vec::new(),
        };
        d.tensors = d.expected_tensors();
        d
    }

    /// Frequency sizes of the four ERB encoder blocks.
    pub fn erb_freqs(&self) -> [usize; ERB_CONV_LAYERS] {
        let kf = self.conv_kernel[0];
        let e0 = self.nb_erb;
        let e1 = strided_len(e0, kf, 2);
        let e2 = strided_len(e1, kf, 2);
        [e0, e1, e2, e2]
    }

    /// Frequency sizes of the two DF encoder blocks.
    pub fn df_freqs(&self) -> [usize; DF_CONV_LAYERS] {
        [self.nb_df, strided_len(self.nb_df, self.conv_kernel[0], 2)]
    }

    pub fn erb_embedding(&self) -> usize {
        self.conv_channels * self.erb_freqs()[ERB_CONV_LAYERS - 1]
    }

    pub fn df_embedding(&self) -> usize {
        self.conv_channels * self.df_freqs()[DF_CONV_LAYERS - 1]
    }

    pub fn df_out_len(&self) -> usize {
        self.df_order * self.nb_df * 2
    }

    /// Time shift (lookahead frames) of encoder block `i`.
    pub fn conv_shift(&self, i: usize) -> usize {
        usize::from(i < self.conv_lookahead)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Weights(msg));
        let [kf, kt] = self.conv_kernel;
        if kf == 0 || kf % 2 == 0 || kt == 0 {
            return bad(format!("conv kernel {kf}x{kt} must have an odd freq size and nonzero time size"));
        }
        if self.nb_erb < 2 || self.nb_df < 2 {
            return bad(format!("need at least 2 ERB bands and 2 DF bins (got {}, {})", self.nb_erb, self.nb_df));
        }
        if self.df_order == 0 || self.df_lookahead >= self.df_order {
            return bad(format!(
                "DF order {} / lookahead {} invalid",
                self.df_order, self.df_lookahead
            ));
        }
        if self.conv_lookahead > DF_CONV_LAYERS {
            return bad(format!(
                "conv lookahead {} exceeds the {DF_CONV_LAYERS} lookahead-capable layers",
                self.conv_lookahead
            ));
        }
        let p = self.groups;
        if p == 0 || self.conv_channels == 0 || self.hidden == 0 {
            return bad("groups, channels and hidden size must be positive".into());
        }
        for (what, n) in [
            ("hidden size", self.hidden),
            ("ERB embedding", self.erb_embedding()),
            ("DF embedding", self.df_embedding()),
        ] {
            if n % p != 0 {
                return bad(format!("{what} {n} is not divisible by {p} groups"));
            }
        }
        if self.enc_gru_layers == 0 || self.erb_dec_gru_layers == 0 || self.df_gru_layers == 0 {
            return bad("every GRU stack needs at least one layer".into());
        }
        Ok(())
    }

    /// Tensor list implied by the hyperparameters, in file order.
    pub fn expected_tensors(&self) -> Vec<TensorSpec> {
        let c = self.conv_channels;
        let [kf, kt] = self.conv_kernel;
        let p = self.groups;
        let h = self.hidden;
        let n = self.df_order;
        let mut t = Vec::new();
        let bn = |t: &mut Vec<TensorSpec>, prefix: &str, ch: usize| {
            for p in ["weight", "bias", "running_mean", "running_var"] {
                t.push(TensorSpec::new(format!("{prefix}.bn.{p}"), &[ch]));
            }
        };
        let full = |t: &mut Vec<TensorSpec>, prefix: &str, out: usize, inp: usize, kf: usize, kt: usize| {
            t.push(TensorSpec::new(format!("{prefix}.weight"), &[out, inp, kf, kt]));
            bn(t, prefix, out);
        };
        let sep = |t: &mut Vec<TensorSpec>, prefix: &str, out: usize, inp: usize| {
            t.push(TensorSpec::new(format!("{prefix}.depthwise"), &[inp, 1, kf, kt]));
            t.push(TensorSpec::new(format!("{prefix}.pointwise"), &[out, inp, 1, 1]));
            bn(t, prefix, out);
        };
        let glin = |t: &mut Vec<TensorSpec>, prefix: &str, out: usize, inp: usize| {
            t.push(TensorSpec::new(format!("{prefix}.weight"), &[p, out / p, inp / p]));
        };
        let gru = |t: &mut Vec<TensorSpec>, prefix: &str, layers: usize| {
            for l in 0..layers {
                t.push(TensorSpec::new(format!("{prefix}.gru{l}.weight_ih"), &[p, 3 * h / p, h / p]));
                t.push(TensorSpec::new(format!("{prefix}.gru{l}.weight_hh"), &[p, 3 * h / p, h / p]));
                t.push(TensorSpec::new(format!("{prefix}.gru{l}.bias_ih"), &[p, 3 * h / p]));
                t.push(TensorSpec::new(format!("{prefix}.gru{l}.bias_hh"), &[p, 3 * h / p]));
            }
        };

        full(&mut t, "enc.erb_conv0", c, 1, kf, kt);
        for i in 1..ERB_CONV_LAYERS {
            sep(&mut t, &format!("enc.erb_conv{i}"), c, c);
        }
        full(&mut t, "enc.df_conv0", c, 2, kf, kt);
        sep(&mut t, "enc.df_conv1", c, c);
        glin(&mut t, "enc.erb_fc", h, self.erb_embedding());
        glin(&mut t, "enc.df_fc", h, self.df_embedding());
        gru(&mut t, "enc", self.enc_gru_layers);

        gru(&mut t, "erb_dec", self.erb_dec_gru_layers);
        glin(&mut t, "erb_dec.fc", self.erb_embedding(), h);
        for i in (0..ERB_CONV_LAYERS).rev() {
            full(&mut t, &format!("erb_dec.pconv{i}"), c, c, 1, 1);
        }
        sep(&mut t, "erb_dec.conv3", c, c);
        sep(&mut t, "erb_dec.convt2", c, c);
        sep(&mut t, "erb_dec.convt1", c, c);
        sep(&mut t, "erb_dec.conv0", 1, c);

        gru(&mut t, "df_dec", self.df_gru_layers);
        t.push(TensorSpec::new("df_dec.out.weight", &[self.df_out_len(), h]));
        t.push(TensorSpec::new("df_dec.out.bias", &[self.df_out_len()]));
        full(&mut t, "df_dec.pconv", 2 * n, c, 1, 1);
        t.push(TensorSpec::new("df_dec.alpha.weight", &[1, h]));
        t.push(TensorSpec::new("df_dec.alpha.bias", &[1]));
        t
    }

    /// Checks the declared tensor list against the derived one.
    pub fn check_tensor_list(&self) -> Result<()> {
        self.validate()?;
        let expected = self.expected_tensors();
        for (i, want) in expected.iter().enumerate() {
            match self.tensors.get(i) {
                None => {
                    return Err(Error::Weights(format!(
                        "descriptor is missing tensor '{}' {:?}",
                        want.name, want.shape
                    )))
                }
                Some(got) if got.name != want.name => {
                    return Err(Error::Weights(format!(
                        "tensor #{i}: expected '{}', descriptor declares '{}'",
                        want.name, got.name
                    )))
                }
                Some(got) if got.shape != want.shape => {
                    return Err(Error::Weights(format!(
                        "tensor '{}': expected shape {:?}, descriptor declares {:?}",
                        want.name, want.shape, got.shape
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self.tensors.get(expected.len()) {
            return Err(Error::Weights(format!("unexpected extra tensor '{}'", extra.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Named tensors plus the descriptor they were validated against.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    descriptor: ArchDescriptor,
    tensors: Vec<Tensor>,
}

impl NetworkWeights {
    /// Builds a container, validating names and shapes against the descriptor.
    pub fn new(mut descriptor: ArchDescriptor, tensors: Vec<Tensor>) -> Result<Self> {
        descriptor.tensors = tensors
            .iter()
            .map(|t| TensorSpec::new(t.name.clone(), &t.shape))
            .collect();
        descriptor.check_tensor_list()?;
        for t in &tensors {
            let n: usize = t.shape.iter().product();
            if t.data.len() != n {
                return Err(Error::Weights(format!(
                    "tensor '{}' has {} values for shape {:?}",
                    t.name,
                    t.data.len(),
                    t.shape
                )));
            }
            if let Some(bad) = t.data.iter().find(|v| !v.is_finite()) {
                return Err(Error::Weights(format!("tensor '{}' contains {bad}", t.name)));
            }
        }
        Ok(Self { descriptor, tensors })
    }

    pub fn descriptor(&self) -> &ArchDescriptor {
        &self.descriptor
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Weights(format!("missing tensor '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Weights(format!("missing tensor '{name}'")))
    }

    /// Total number of stored values.
    pub fn stored_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.descriptor).map_err(|source| Error::Json {
            context: "serializing weight descriptor".into(),
            source,
        })?;
        let mut out = Vec::with_capacity(12 + json.len() + 4 * self.stored_values());
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != WEIGHTS_MAGIC {
            return Err(Error::Weights("not a DFNW weight file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != WEIGHTS_VERSION {
            return Err(Error::Weights(format!("unsupported weight file version {version}")));
        }
        let desc_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = &bytes[12..];
        if body.len() < desc_len {
            return Err(Error::Weights("truncated descriptor".into()));
        }
        let descriptor: ArchDescriptor =
            serde_json::from_slice(&body[..desc_len]).map_err(|source| Error::Json {
                context: "parsing weight descriptor".into(),
                source,
            })?;
        descriptor.check_tensor_list()?;
        let data = &body[desc_len..];
        let total: usize = descriptor.tensors.iter().map(TensorSpec::numel).sum();
        if data.len() != 4 * total {
            return Err(Error::Weights(format!(
                "tensor payload has {} bytes, descriptor requires {}",
                data.len(),
                4 * total
            )));
        }
        let mut values = data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")));
        let tensors = descriptor
            .tensors
            .iter()
            .map(|spec| Tensor {
                name: spec.name.clone(),
                shape: spec.shape.clone(),
                data: values.by_ref().take(spec.numel()).collect(),
            })
            .collect();
        Self::new(descriptor, tensors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    fn with_fill(descriptor: &ArchDescriptor, mut fill: impl FnMut(&TensorSpec) -> Vec<f32>) -> Result<Self> {
        descriptor.validate()?;
        let tensors = descriptor
            .expected_tensors()
            .iter()
            .map(|spec| Tensor {
                name: spec.name.clone(),
                shape: spec.shape.clone(),
                data: fill(spec),
            })
            .collect();
        Self::new(descriptor.clone(), tensors)
    }

    /// All weights zero, batch norms neutral (unit scale and variance).
    pub fn zeros(descriptor: &ArchDescriptor) -> Result<Self> {
        Self::with_fill(descriptor, |spec| {
            let v = if spec.name.ends_with(".bn.weight") || spec.name.ends_with(".bn.running_var") {
                1.0
            } else {
                0.0
            };
            vec![v; spec.numel()]
        })
    }

    /// Fixture whose output is the delayed input: gains saturate at 1 and the
    /// deep filter is a unit tap on the current frame.
    pub fn identity(descriptor: &ArchDescriptor) -> Result<Self> {
        Self::fixed_gain(descriptor, 30.0)
    }

    /// Fixture whose gains saturate at 0 (silence out), with identity DF taps.
    pub fn zero_gain(descriptor: &ArchDescriptor) -> Result<Self> {
        Self::fixed_gain(descriptor, -30.0)
    }

    fn fixed_gain(descriptor: &ArchDescriptor, logit: f32) -> Result<Self> {
        let mut w = Self::zeros(descriptor)?;
        w.get_mut("erb_dec.conv0.bn.bias")?.data[0] = logit;
        let d = w.descriptor.clone();
        let bias = &mut w.get_mut("df_dec.out.bias")?.data;
        for f in 0..d.nb_df {
            bias[(d.df_lookahead * d.nb_df + f) * 2] = 1.0;
        }
        Ok(w)
    }

    /// Seeded random weights with fan-in scaled magnitudes.
    pub fn random(descriptor: &ArchDescriptor, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_fill(descriptor, |spec| {
            let n = spec.numel();
            let name = spec.name.as_str();
            let mut uniform = |lo: f32, hi: f32| (0..n).map(|_| rng.gen_range(lo..hi)).collect::<Vec<_>>();
            if name.ends_with(".bn.weight") || name.ends_with(".bn.running_var") {
                uniform(0.5, 1.5)
            } else if name.ends_with(".bn.bias") || name.ends_with(".bn.running_mean") {
                uniform(-0.1, 0.1)
            } else {
                let fan_in: usize = spec.shape[1..].iter().product::<usize>().max(1);
                let scale = 1.0 / (fan_in as f32).sqrt();
                uniform(-scale, scale)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ArchDescriptor {
        let mut d = ArchDescriptor::new(8, 6, 3, 1, 2);
        d.conv_channels = 4;
        d.hidden = 8;
        d.groups = 2;
        d.df_gru_layers = 1;
        d.tensors = d.expected_tensors();
        d
    }

    #[test]
    fn default_descriptor_is_valid() {
        let d = ArchDescriptor::new(32, 101, 5, 1, 2);
        d.check_tensor_list().unwrap();
        assert_eq!(d.erb_freqs(), [32, 16, 8, 8]);
        assert_eq!(d.df_freqs(), [101, 51]);
        assert_eq!(d.erb_embedding(), 512);
    }

    #[test]
    fn byte_roundtrip() {
        let w = NetworkWeights::random(&small(), 7).unwrap();
        let bytes = w.to_bytes().unwrap();
        assert_eq!(NetworkWeights::from_bytes(&bytes).unwrap(), w);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.dfnw");
        let w = NetworkWeights::identity(&small()).unwrap();
        w.save(&path).unwrap();
        assert_eq!(NetworkWeights::load(&path).unwrap(), w);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let w = NetworkWeights::random(&small(), 1).unwrap();
        let bytes = w.to_bytes().unwrap();
        assert!(NetworkWeights::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(NetworkWeights::from_bytes(&bad).is_err());
        assert!(NetworkWeights::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn shape_mismatch_is_descriptive() {
        let w = NetworkWeights::random(&small(), 1).unwrap();
        let mut tensors = w.tensors().to_vec();
        tensors[3].shape = vec![99];
        tensors[3].data = vec![0.0; 99];
        let err = NetworkWeights::new(w.descriptor().clone(), tensors).unwrap_err();
        assert!(err.to_string().contains(&w.tensors()[3].name), "{err}");

        let mut tensors = w.tensors().to_vec();
        tensors.pop();
        assert!(NetworkWeights::new(w.descriptor().clone(), tensors).is_err());
    }

    #[test]
    fn invalid_hyperparameters() {
        let mut d = small();
        d.groups = 3;
        assert!(d.validate().is_err());
        let mut d = small();
        d.conv_lookahead = 3;
        assert!(d.validate().is_err());
        let mut d = small();
        d.df_lookahead = 3;
        assert!(d.validate().is_err());
    }
}
