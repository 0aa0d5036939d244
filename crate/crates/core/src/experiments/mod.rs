//! Pre-wired experiments: box-truncated Gaussians with a Toeplitz
//! covariance, and Fourier-subsampled tomography with a TV prior.

pub mod tomography;
pub mod truncgauss;

pub use tomography::{tomography_experiment, TomographyConfig, TomographyReport, TomographySetup};
pub use truncgauss::{fig1_curves, truncated_gaussian_experiment, Fig1Curves, TruncGaussConfig, TruncGaussReport};
