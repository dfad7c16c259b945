//! Sparse-to-dense trajectory-controlled video generation on a synthetic
//! 2D articulated world.
//!
//! The crate implements a two-stage pipeline: a trajectory *augmentor* that
//! densifies sparse part-colored point tracks into part-colored interaction
//! mask videos, and a *dense control model* that generates the final RGB
//! video conditioned on those masks. Both stages share a small
//! velocity-prediction diffusion transformer; all training data comes from
//! a procedural 2D figure-and-object world, so masks, tracks, visibility
//! and contact ground truth are exact.
//!
//! Layout:
//! - [`hoi`]: part palette, mask videos, trajectory rendering/blurring,
//!   compositing, palette quantization, trajectory sampling.
//! - [`synth`]: procedural scene generation, rasterization, prompts,
//!   dataset import/export.
//! - [`codec`]: invertible video <-> latent rearrangement.
//! - [`tensor`]: the tape-based autodiff engine and optimizer.
//! - [`backbone`], [`control`]: the diffusion transformer and the
//!   conditioning branches (extractors, fusers, gates).
//! - [`diffusion`]: noise schedule, velocity objective, sampler.
//! - [`pipelines`]: the three trainers and two-stage inference.
//! - [`eval`]: metrics (trajectory error, mask IoU, contact accuracy) and
//!   experiment orchestration.
//! - [`cli`]: the `vhoi` command-line surface.

pub mod backbone;
pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod control;
pub mod diffusion;
pub mod eval;
pub mod hoi;
pub mod pipelines;
pub mod synth;
pub mod tensor;

mod error;

pub use error::{Error, Result};
