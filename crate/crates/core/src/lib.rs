//! Two-level facial feature extraction.
//!
//! A bottleneck autoencoder yields a compressed vector `v_c` describing the
//! general composition of a face, and a frozen perceptual network applied to
//! the original and its blurred reconstruction yields a differential vector
//! `v_d` carrying local detail. A small verification head fuses the two
//! vectors of an image pair; [`eval`] runs identity-disjoint k-fold ablations
//! over the fusion modes.

pub mod autoencoder;
pub mod bands;
pub mod cli;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fusiform;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod nn;
pub mod optim;
pub mod param;
pub mod perceptual;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod verifier;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::{Real, Tensor};
