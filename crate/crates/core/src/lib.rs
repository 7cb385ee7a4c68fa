//! Spectrally robust covariance shrinkage for Hotelling's T² in high
//! dimension: kernel estimates of the sample spectral density, the
//! detection-optimal precision shrinker, standardized detection scores, and a
//! Monte-Carlo evaluation harness.

pub mod detector;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod methods;
pub mod mp_kernel;
pub mod rng;
pub mod rss;
pub mod shrinkage;
pub mod sim;

pub use error::{Error, Result};
pub use linalg::{DataMatrix, Spectrum, SymMat};
pub use methods::Method;
