use serde::{Deserialize, Serialize};

use super::{check_compressed, matrix_to_tensor, tensor_to_matrix};
use crate::dsp::{Matrix, Spectrogram};
use crate::error::Result;
use crate::nn::{receptive_field, Graph, LayerSpec, Padding, Param, Tensor};

/// Ratio-masking network: 11 dilated 2D convolutions over the
/// [frequency x time] plane, ReLU activations, sigmoid on the final
/// 1-filter 1x1 layer. Same-zero padding keeps the mask shaped like the
/// input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskerConfig {
    pub filters: usize,
    pub n_bins: usize,
    /// The published layer table lists conv4..conv6 as 5x5 kernels, but its
    /// context column is only consistent with 5x1 there. `false` (default)
    /// follows the context column; `true` takes the literal 5x5 reading.
    pub literal_5x5: bool,
    pub seed: u64,
}

impl MaskerConfig {
    pub fn full(seed: u64) -> Self {
        MaskerConfig {
            filters: 48,
            n_bins: 257,
            literal_5x5: false,
            seed,
        }
    }

    pub fn toy(seed: u64) -> Self {
        MaskerConfig {
            filters: 8,
            n_bins: 257,
            literal_5x5: false,
            seed,
        }
    }

    /// (kernel, dilation) per conv layer, frequency first.
    pub fn layer_geometry(&self) -> Vec<((usize, usize), (usize, usize))> {
        let mid = if self.literal_5x5 { (5, 5) } else { (5, 1) };
        vec![
            ((1, 7), (1, 1)),
            ((7, 1), (1, 1)),
            ((5, 5), (1, 1)),
            (mid, (2, 1)),
            (mid, (4, 1)),
            (mid, (8, 1)),
            ((5, 5), (1, 1)),
            ((5, 5), (2, 2)),
            ((5, 5), (4, 4)),
            ((5, 5), (8, 8)),
            ((1, 1), (1, 1)),
        ]
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let geometry = self.layer_geometry();
        let n = geometry.len();
        let mut specs = Vec::new();
        let mut in_ch = 1;
        for (i, (kernel, dilation)) in geometry.into_iter().enumerate() {
            let last = i == n - 1;
            let out_ch = if last { 1 } else { self.filters };
            specs.push(LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                dilation,
                padding: Padding::SameZero,
            });
            specs.push(if last { LayerSpec::Sigmoid } else { LayerSpec::Relu });
            in_ch = out_ch;
        }
        specs
    }

    pub fn receptive_field(&self) -> (usize, usize) {
        receptive_field(&self.specs())
    }
}

pub struct Masker {
    pub cfg: MaskerConfig,
    pub graph: Graph,
}

impl Masker {
    pub fn build(cfg: MaskerConfig) -> Result<Self> {
        let graph = Graph::build("conv", &cfg.specs(), cfg.seed)?;
        Ok(Masker { cfg, graph })
    }

    /// Ratio mask in (0,1) for a compressed spectrogram tensor [1, bins, T].
    pub fn mask(&mut self, input: &Tensor) -> Result<Tensor> {
        self.graph.forward(input)
    }

    /// Generate the mask and apply it pointwise.
    pub fn apply_mask(&mut self, s: &Spectrogram) -> Result<(Matrix, Spectrogram)> {
        check_compressed(s, "masker")?;
        let mut input = matrix_to_tensor(&s.values);
        input.shape = vec![1, s.values.rows, s.values.cols];
        let mask = self.graph.forward(&input)?;
        let mask = tensor_to_matrix(&mask)?;
        let mut masked = s.values.clone();
        for (v, m) in masked.data.iter_mut().zip(mask.data.iter()) {
            *v *= m;
        }
        Ok((
            mask,
            Spectrogram {
                values: masked,
                compression_exponent: s.compression_exponent,
            },
        ))
    }

    pub fn params(&self) -> Vec<&Param> {
        self.graph.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.graph.params_mut()
    }

    pub fn description(&self) -> String {
        serde_json::to_string(&super::ModelDescription::Masker {
            config: self.cfg.clone(),
        })
        .expect("serializable")
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::nn::checkpoint::save(path, &self.description(), &self.params())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        match super::load_model(path)? {
            super::Model::Masker(m) => Ok(m),
            _ => Err(crate::error::Error::Data(format!(
                "{:?} is not a masker checkpoint",
                path
            ))),
        }
    }
}
