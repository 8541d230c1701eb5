//! Graph builders and inference entry points for the three networks:
//! speaker verifier, masking network and the DAE baseline.

pub mod checks;
mod composite;
mod dae;
mod masker;
mod verifier;

pub use composite::{masked_ce_loss, masked_ce_step, masked_forward};
pub use dae::{Dae, DaeConfig};
pub use masker::{Masker, MaskerConfig};
pub use verifier::{Verifier, VerifierConfig};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{self, ComplexSpec, Matrix, Spectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Compression exponent all network features use.
pub const FEATURE_COMPRESSION: f64 = 0.3;

pub(crate) fn check_compressed(s: &Spectrogram, context: &str) -> Result<()> {
    if (s.compression_exponent - FEATURE_COMPRESSION).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "{} expects spectrograms compressed with p = {}, got p = {}",
            context, FEATURE_COMPRESSION, s.compression_exponent
        )));
    }
    Ok(())
}

pub(crate) fn matrix_to_tensor(m: &Matrix) -> Tensor {
    Tensor {
        shape: vec![m.rows, m.cols],
        data: m.data.clone(),
    }
}

pub(crate) fn tensor_to_matrix(t: &Tensor) -> Result<Matrix> {
    let (rows, cols) = match t.shape.as_slice() {
        [r, c] => (*r, *c),
        [1, r, c] => (*r, *c),
        other => {
            return Err(Error::shape(
                "tensor_to_matrix",
                "[rows, cols]",
                format!("{:?}", other),
            ))
        }
    };
    Matrix::from_vec(rows, cols, t.data.clone())
}

/// Checkpoint header: model kind plus its build configuration.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelDescription {
    #[serde(rename = "verifier")]
    Verifier { config: VerifierConfig },
    #[serde(rename = "masker")]
    Masker { config: MaskerConfig },
    #[serde(rename = "dae")]
    Dae { config: DaeConfig },
}

pub enum Model {
    Verifier(Verifier),
    Masker(Masker),
    Dae(Dae),
}

/// Load any model checkpoint by its self-describing header.
pub fn load_model(path: &Path) -> Result<Model> {
    let (desc, params) = crate::nn::checkpoint::load(path)?;
    let desc: ModelDescription = serde_json::from_str(&desc)
        .map_err(|e| Error::Data(format!("bad checkpoint header in {:?}: {}", path, e)))?;
    match desc {
        ModelDescription::Verifier { config } => {
            let mut m = Verifier::build(config)?;
            crate::nn::checkpoint::restore_params(&params, &mut m.params_mut())?;
            Ok(Model::Verifier(m))
        }
        ModelDescription::Masker { config } => {
            let mut m = Masker::build(config)?;
            crate::nn::checkpoint::restore_params(&params, &mut m.params_mut())?;
            Ok(Model::Masker(m))
        }
        ModelDescription::Dae { config } => {
            let mut m = Dae::build(config)?;
            crate::nn::checkpoint::restore_params(&params, &mut m.params_mut())?;
            Ok(Model::Dae(m))
        }
    }
}

/// Invert an enhanced compressed magnitude back to a waveform using the
/// original noisy phase.
pub fn enhance_to_waveform(
    enhanced: &Spectrogram,
    original: &ComplexSpec,
    cfg: &StftConfig,
) -> Result<Waveform> {
    if !enhanced.values.same_shape(&original.phase) {
        return Err(Error::shape(
            "enhance_to_waveform",
            format!("{}x{}", original.phase.rows, original.phase.cols),
            format!("{}x{}", enhanced.values.rows, enhanced.values.cols),
        ));
    }
    let raw = dsp::decompress(enhanced, enhanced.compression_exponent)?;
    dsp::istft_with_phase(&raw.values, &original.phase, cfg, original.sample_rate)
}

#[cfg(test)]
mod tests;
