//! Edge-preserving despeckling of single-look SAR intensity images.
//!
//! The crate covers the whole experimental loop at desk scale:
//!
//! * [`speckle_sim`] draws fully developed Gamma speckle, applies the
//!   multiplicative model `Y = N * X` and cuts reproducible patch datasets.
//! * [`losses`] implements the three cost terms (pixel MSE, KL divergence
//!   between the ratio-image histogram and the Gamma law, and the
//!   row/column derivative mismatch) together with analytic gradients.
//! * [`net`] is a small fully convolutional network with hand-written
//!   backpropagation, Adam and a binary weight format.
//! * [`metrics`] provides MSE, SNR, SSIM and the edge-fidelity diagnostic.
//! * [`corpus`] generates synthetic clean scenes with sharp edges so that
//!   nothing has to be downloaded to run the experiments.

pub mod corpus;
pub mod error;
pub mod image;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod speckle_sim;

pub use error::{Error, Result};
pub use image::ImageGray;
