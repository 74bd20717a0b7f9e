//! Parameter and multiply-accumulate accounting.

use serde::Serialize;

use super::model::{DfNet, LayerCost};
use super::weights::NetworkWeights;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    /// Trainable values (batch-norm running statistics excluded, scale and
    /// shift included).
    pub param_count: usize,
    /// Parameters of the inference graph after batch-norm folding.
    pub folded_param_count: usize,
    pub macs_per_frame: usize,
    pub frames_per_second: f64,
    pub macs_per_second: f64,
    pub layers: Vec<LayerCost>,
}

/// Counts parameters and MACs; `frames_per_second` is `sample_rate / hop`.
pub fn complexity_report(weights: &NetworkWeights, sample_rate: u32, hop_size: usize) -> Result<ComplexityReport> {
    let net = DfNet::<f32>::from_weights(weights)?;
    let param_count = weights
        .tensors()
        .iter()
        .filter(|t| !t.name.ends_with(".running_mean") && !t.name.ends_with(".running_var"))
        .map(|t| t.data.len())
        .sum();
    let layers = net.layer_costs();
    let macs_per_frame = layers.iter().map(|l| l.macs_per_frame).sum();
    let frames_per_second = sample_rate as f64 / hop_size as f64;
    Ok(ComplexityReport {
        param_count,
        folded_param_count: net.param_count(),
        macs_per_frame,
        frames_per_second,
        macs_per_second: macs_per_frame as f64 * frames_per_second,
        layers,
    })
}

impl ComplexityReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s += &format!("params: {} ({:.3} M)\n", self.param_count, self.param_count as f64 / 1e6);
        s += &format!("macs/frame: {}\n", self.macs_per_frame);
        s += &format!("frames/s: {}\n", self.frames_per_second);
        s += &format!("macs/s: {:.4} G\n", self.macs_per_second / 1e9);
        s += "layer,params,macs_per_frame,groups,dense_weights\n";
        for l in &self.layers {
            let dense = l.dense_weights.map(|d| d.to_string()).unwrap_or_default();
            s += &format!("{},{},{},{},{}\n", l.name, l.params, l.macs_per_frame, l.groups, dense);
        }
        s
    }
}
