//! Two-stage probabilistic solar forecasting at desk scale.
//!
//! Stage one is a stochastic sky-video predictor: a space-time VQ-VAE learns
//! a discrete latent for 16-frame sky clips, and a physics-informed
//! autoregressive prior (causal transformer fused with a PDE-constrained
//! recurrent cell) samples diverse future clips conditioned on the past 15
//! minutes of sky. Stage two maps each predicted frame at t+15 through a
//! 10-member U-Net ensemble to photovoltaic power, yielding a 10 x N_f member
//! range forecast scored with CRPS and Winkler alongside smart-persistence
//! and hybrid-CNN baselines.
//!
//! A built-in advection-diffusion sky simulator generates synthetic corpora
//! with known dynamics so the whole pipeline can be trained and verified on
//! one workstation. See the `examples/` directory for runnable entry points
//! per capability, and the `skygpt` binary for the pipeline CLI.

pub mod analysis;
pub mod baselines;
pub mod config;
pub mod corpus;
pub mod data;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod prior;
pub mod pvnet;
pub mod sim;
pub mod svgplot;
pub mod vqvae;

pub use config::Config;
pub use error::{Error, Result};
