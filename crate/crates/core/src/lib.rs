//! Cluster-to-predict (C2P) core: discovers affect-contour clusters that are
//! predictable from speech features.
//!
//! Each epoch, a frozen [`affectnet::AffectNet`] pass encodes every affect
//! window into an 8-dimensional latent, [`clustering::kmeans_fit`] turns the
//! latents into pseudo-labels, and both networks are trained against those
//! labels under the weighted joint loss (see [`trainer`]).
//!
//! The crate is `no_std` + `alloc`; file formats, checkpoint archives and the
//! command-line driver live in the companion `c2p` crate.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is how config checks reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod adam;
pub mod affectnet;
pub mod analysis;
pub mod baselines;
pub mod clustering;
pub mod error;
pub mod gradcheck;
pub mod hungarian;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod real;
pub mod speechnet;
pub mod synth;
pub mod trainer;
pub mod window;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use real::Real;
