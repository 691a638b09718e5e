//! Generalized convolutional networks with patch-based layers, exact backpropagation,
//! constructive weight synthesis and loss-landscape diagnostics.
//!
//! Samples are rows. A layer of width `n_k` maps `F_{k-1}` (`N x n_{k-1}`) to
//! `F_k = sigma_k(F_{k-1} U_k + 1 b_k^T)`, where `U_k` is the lifted filter matrix.

pub mod activation;
pub mod analysis;
pub mod assumptions;
pub mod backprop;
pub mod constructions;
pub mod dataset;
pub mod error;
pub mod forward;
pub mod layout;
pub mod netspec_file;
pub mod network;

pub use activation::{ActivationKind, ActivationProfile};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use forward::{forward, lift_weights, ForwardTrace};
pub use layout::{LayoutDescriptor, PatchLayout};
pub use network::{LayerParams, LayerSpec, NetworkSpec, Params};
