use serde::{Deserialize, Serialize};

use super::{check_compressed, matrix_to_tensor, tensor_to_matrix};
use crate::dsp::Spectrogram;
use crate::error::Result;
use crate::nn::{Graph, LayerSpec, Padding, Param, Tensor};

/// Denoising-autoencoder baseline: an 8-layer TDNN mapping noisy compressed
/// spectrogram frames to clean ones. Layers 1..6 splice offsets {-2, 0, +2}
/// and layers 7..8 use {0}, for an effective context of 25 frames (+-12).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeConfig {
    pub hidden: usize,
    pub n_bins: usize,
    pub seed: u64,
}

impl DaeConfig {
    pub fn full(seed: u64) -> Self {
        DaeConfig {
            hidden: 1000,
            n_bins: 257,
            seed,
        }
    }

    pub fn toy(seed: u64) -> Self {
        DaeConfig {
            hidden: 64,
            n_bins: 257,
            seed,
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let frame_linear = |in_ch, out_ch| LayerSpec::Conv1d {
            in_ch,
            out_ch,
            kernel: 1,
            stride: 1,
            padding: Padding::Valid,
        };
        let mut specs = Vec::new();
        let mut in_ch = self.n_bins;
        // Six spliced layers: context +-2 each.
        for _ in 0..6 {
            specs.push(LayerSpec::TdnnSplice {
                offsets: vec![-2, 0, 2],
            });
            specs.push(frame_linear(in_ch * 3, self.hidden));
            specs.push(LayerSpec::Relu);
            in_ch = self.hidden;
        }
        // Two center-only layers.
        for _ in 0..2 {
            specs.push(frame_linear(in_ch, self.hidden));
            specs.push(LayerSpec::Relu);
            in_ch = self.hidden;
        }
        specs.push(frame_linear(in_ch, self.n_bins));
        specs
    }

    /// Effective temporal context in frames (center +- 2 per spliced layer).
    pub fn context_frames(&self) -> usize {
        2 * 6 * 2 + 1
    }
}

pub struct Dae {
    pub cfg: DaeConfig,
    pub graph: Graph,
}

impl Dae {
    pub fn build(cfg: DaeConfig) -> Result<Self> {
        let graph = Graph::build("tdnn", &cfg.specs(), cfg.seed)?;
        Ok(Dae { cfg, graph })
    }

    /// Raw network output for a compressed spectrogram tensor [bins, T].
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.graph.forward(input)
    }

    /// Enhanced compressed spectrogram, clamped to >= 0 for downstream
    /// magnitude use.
    pub fn enhance(&mut self, s: &Spectrogram) -> Result<Spectrogram> {
        check_compressed(s, "dae")?;
        let out = self.graph.forward(&matrix_to_tensor(&s.values))?;
        let mut values = tensor_to_matrix(&out)?;
        for v in &mut values.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(Spectrogram {
            values,
            compression_exponent: s.compression_exponent,
        })
    }

    pub fn params(&self) -> Vec<&Param> {
        self.graph.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.graph.params_mut()
    }

    pub fn description(&self) -> String {
        serde_json::to_string(&super::ModelDescription::Dae {
            config: self.cfg.clone(),
        })
        .expect("serializable")
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::nn::checkpoint::save(path, &self.description(), &self.params())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        match super::load_model(path)? {
            super::Model::Dae(m) => Ok(m),
            _ => Err(crate::error::Error::Data(format!(
                "{:?} is not a dae checkpoint",
                path
            ))),
        }
    }
}
