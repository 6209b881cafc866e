//! Anchor-guided masked-diffusion text generation over a synthetic
//! structured-report domain.
//!
//! The pipeline is: [`corpus`] generates reports with exact entity graphs,
//! [`anchor`] turns those graphs into per-token anchor levels, masking
//! exponents and loss weights, [`diffusion`] corrupts sequences and scores the
//! weighted objective, [`denoiser`] is a small bidirectional transformer with
//! hand-written backpropagation, [`inference`] runs confidence decoding with
//! perturbation-based rewriting, and [`eval`] scores the output.

pub mod anchor;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod inference;
pub mod seed;

pub use error::{Error, Result};
