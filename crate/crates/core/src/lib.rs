//! Spectrogram-masking speech enhancement trained by the cross-entropy
//! feedback of a frozen speaker-verification network, a denoising-autoencoder
//! baseline, and EER/DCF evaluation under controlled noise conditions.

pub mod cli;
pub mod data;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
