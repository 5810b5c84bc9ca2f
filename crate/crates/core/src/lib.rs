//! Simulator for federated learning over an analog wireless uplink.
//!
//! Workers compute local gradients of a small MLP on PCA-reduced features,
//! transmit them over Rayleigh-fading channels with truncated channel
//! inversion, and the server updates the model from the over-the-air
//! aggregate with plain or Nesterov-accelerated descent.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dpca;
pub mod error;
pub mod harness;
pub mod learner;
pub mod mathkit;
pub mod optim;
pub mod parallel;

pub use error::{Error, Result};
