//! Tractable approximate Gaussian inference for deep networks.
//!
//! Every activation, hidden unit, weight and bias is a Gaussian. The forward
//! pass propagates means and variances analytically; the backward pass
//! conditions on the observations layer by layer and updates the parameter
//! moments in closed form. No gradients are computed.

pub mod error;
pub mod gan;
pub mod gaussian;
pub mod inference;
pub mod layers;
pub mod network;
mod scalar;

pub use error::{Result, TagiError};
pub use gan::{generate_grid, sample_latent, GanBundle, LatentCode, LatentSpec, Model};
pub use gaussian::{
    gaussian_product_moments, linear_combination_moments, linearize_activation, mixture_reduce, ActivationKind,
    ActivationLinearization, GaussianScalar, GaussianVector, MixtureStats,
};
pub use inference::{
    decay_noise, infer_minibatch, output_innovation, output_update, smooth_layer, BatchReport, ClampReport, Deltas,
    Innovation, LayerParams, ObservationModel, ParamAccumulator, ParameterStore, SmoothedLayer, VARIANCE_FLOOR,
};
pub use layers::{Layer, LayerCache, LayerKind, LayerSpec, Shape};
pub use network::{build, classify, encode_target, preset, Network, NetworkConfig, OutputHead, Trace};
pub use scalar::Scalar;

/// Default working precision.
pub type Real = f32;
pub type Gaussian = GaussianScalar<Real>;
pub type Moments = GaussianVector<Real>;
pub type Params = ParameterStore<Real>;
pub type Gaussian64 = GaussianScalar<f64>;
pub type Moments64 = GaussianVector<f64>;
pub type Params64 = ParameterStore<f64>;
