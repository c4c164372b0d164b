//! GAN inversion at desk scale: a miniature wavelet-domain style generator,
//! a basic encoder producing layered latent codes, a delta branch that
//! recovers high-frequency detail lost by the first inversion pass, and the
//! image-quality metrics to measure the difference.
//!
//! The pipeline (all seeded, all CPU):
//!
//! 1. `imagecore` renders or loads face images in `[-1, 1]`.
//! 2. `generator` synthesizes images from layered style codes by
//!    accumulating Haar subband predictions (`wavelet`).
//! 3. `encoders` invert images to style codes and encode residuals.
//! 4. `fusion` injects gated residual detail into the generator.
//! 5. `losses` + `trainer` fit the encoders against a frozen generator.
//! 6. `metrics` + `identity` score reconstructions (SSIM, SCC, VIF,
//!    face-embedding cosine, embedding-magnitude quality).

pub mod checkpoint;
pub mod encoders;
pub mod fusion;
pub mod generator;
pub mod graph;
pub mod identity;
pub mod imagecore;
mod layers;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod trainer;
pub mod wavelet;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode error on {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate embedding: zero magnitude")]
    DegenerateEmbedding,

    #[error("numeric error in {term}: {message}")]
    Numeric { term: String, message: String },

    #[error("checkpoint version mismatch: found {found:?}, expected {expected:?}")]
    CheckpointVersion { found: String, expected: String },

    #[error("incompatible checkpoint: {0}")]
    CheckpointIncompatible(String),

    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
