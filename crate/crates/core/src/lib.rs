//! Compressed MVDR beamforming with random projections.
//!
//! The crate covers the whole chain from a simulated shoebox room to
//! per-talker SNR/SIR/SINR gains:
//!
//! - [`stft`]: windowed analysis and overlap-add synthesis.
//! - [`room`]: image-source impulse responses, array geometry, mixtures.
//! - [`projection`]: Gaussian projection banks and their distortion.
//! - [`covariance`]: narrowband correlation matrices with diagonal loading.
//! - [`beamformer`]: sensorspace and compressed MVDR weights.
//! - [`mixture`]: min-power selection and softmax blending across projections.
//! - [`bounds`]: regret, output-power bounds and the multiplicative
//!   Lidskii-Mirsky-Wielandt check.
//! - [`metrics`]: shadow filtering and gain reports.
//! - [`audio_io`]: WAV files and surrogate test signals.
//! - [`experiment`]: configuration, the dimension sweep and reporting.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio_io;
pub mod beamformer;
pub mod bounds;
pub mod covariance;
mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod mixture;
pub mod projection;
pub mod room;
pub mod stft;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
/// Complex dense matrix.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
