//! Multimodal MRI outcome prediction: per-modality sparse autoencoders, a
//! fusion autoencoder over their codes, and a two-layer LSTM classifier over
//! the resulting per-slice feature sequences.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod lstm;
pub mod nn;
pub mod sparse_ae;

pub use error::{Error, Result};
