//! Dense feed-forward networks with manual backpropagation.
//!
//! Layers compute `x·Wᵀ + b`, optionally LayerNorm (per sample, across
//! features, before the nonlinearity), then the activation. CReLU and
//! Fourier activations double the width seen by the next layer. Only dense
//! layers exist, so channel-wise normalization for convolutions does not
//! apply here.

mod checkpoint;
mod network;
mod params;
mod spec;

pub use checkpoint::{
    load_checkpoint, read_manifest, save_checkpoint, HeadMeta, Manifest, TensorMeta,
    CHECKPOINT_VERSION,
};
pub use network::{ForwardTrace, Gradients, InjectedHead, LayerTrace, NetworkState, LN_EPS};
pub use params::{LayerParams, NormAffine};
pub use spec::{mlp_specs, validate_chain, Activation, Init, LayerSpec, MlpShape};
