//! Semantic-mask face deblurring toolkit.
//!
//! The crate bundles everything needed to run the deblurring stack at desk
//! scale:
//!
//! - [`tensor`]: a minimal dense-tensor engine with analytic adjoints for
//!   every layer, verified by finite differences.
//! - [`degrade`]: the seeded synthetic-degradation pipeline (randomized heavy
//!   blur, resolution round trip, Gaussian noise) plus exact combination
//!   counting.
//! - [`maskops`]: semantic-mask and image preprocessing (label merging,
//!   one-hot encoding, resizing, grayscale, normalization).
//! - [`metrics`]: full-reference quality and segmentation metrics (MSE, PSNR,
//!   SSIM, Dice, Jaccard, Gaussian Frechet distance).
//! - [`nets`]: graph builders, forward/backward evaluation, parameter
//!   counting and weight I/O for the Mask Generator and SMFD-UNet.
//! - [`train`]: Adam, LR-plateau and early-stop state machines, augmentation,
//!   fold splitting, and a smoke-scale training loop.
//! - [`cli`]: the command surface used by the `smfd` binary.
//! - [`rng`]: the pinned seeded random streams behind every sampled value.
//! - [`imageio`]: PNG adapters for images and label masks.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod cli;
pub mod degrade;
pub mod imageio;
pub mod maskops;
pub mod metrics;
pub mod nets;
pub mod rng;
pub mod tensor;
pub mod train;
