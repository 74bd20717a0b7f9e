//! Two-stage speech enhancement: ERB-band gains for the spectral envelope
//! followed by deep filtering of the low-frequency periodic components.

pub mod audio;
pub mod augment;
pub mod enhance;
pub mod erb;
pub mod error;
pub mod features;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod oracle;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};

pub type StftConfigF32 = spectral::StftConfig<f32>;
pub type StftConfigF64 = spectral::StftConfig<f64>;
pub type SpectrogramF32 = spectral::Spectrogram<f32>;
pub type SpectrogramF64 = spectral::Spectrogram<f64>;
pub type DfCoefficientsF32 = enhance::DfCoefficients<f32>;
pub type DfCoefficientsF64 = enhance::DfCoefficients<f64>;
pub type DfNetF32 = net::DfNet<f32>;
pub type DfNetF64 = net::DfNet<f64>;
pub type EnhancerF32 = enhance::Enhancer<f32>;
pub type EnhancerF64 = enhance::Enhancer<f64>;
