//! Generative Bayesian deep learning for semi-supervised volumetric
//! segmentation.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense tensors with a define-by-run reverse-mode tape.
//! - [`gaussian`]: per-slice Gaussians, product-of-experts fusion and the
//!   closed-form KL losses.
//! - [`model`]: the latent-representation network and the MC-dropout
//!   segmentation network, plus checkpoints.
//! - [`losses`]: cross-entropy, Dice, MSE and the two composite objectives.
//! - [`train`]: the two-stage training procedure and Bayesian prediction.
//! - [`metrics`]: Dice, Jaccard, 95HD, ASD and PAvPU.
//! - [`data`]: synthetic ellipsoid volumes and the on-disk formats.

pub mod data;
pub mod model;
pub mod gaussian;
pub mod losses;
pub mod metrics;
pub mod tensor;
pub mod train;
pub mod rng;
