//! Inference-only enhancement network with loadable weights.

mod complexity;
mod layers;
mod model;
mod weights;

pub use complexity::{complexity_report, ComplexityReport};
pub use layers::{
    channel_shuffle, separable_conv_forward, sigmoid, strided_len, Activation, ConvLayer, FeatureMap, GroupedGru,
    GroupedLinear,
};
pub use model::{DfNet, FrameOutput, LayerCost, NetOutputs, NetState, StreamingNet};
pub use weights::{
    ArchDescriptor, NetworkWeights, Tensor, TensorSpec, BN_EPS, DF_CONV_LAYERS, ERB_CONV_LAYERS, WEIGHTS_MAGIC,
    WEIGHTS_VERSION,
};
