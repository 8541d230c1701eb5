use serde::{Deserialize, Serialize};

use super::{check_compressed, matrix_to_tensor};
use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::nn::{Graph, LayerSpec, Padding, Param, Tensor};

/// Speaker verification network: four 1D convolutions over all frequency
/// bins at once, global average pooling over time, two FC layers, softmax
/// head. Defaults follow the reference architecture; widths are scalable
/// for desk-size runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    pub n_speakers: usize,
    pub n_bins: usize,
    /// Filter counts of conv1..conv4.
    pub conv_filters: [usize; 4],
    pub fc1_dim: usize,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl VerifierConfig {
    /// Full-size configuration: conv filters 1000/1000/1000/1500, FC 1500
    /// and 600, kernels 5/7/1/1 with strides 1/2/1/1 on 257-bin input.
    pub fn full(n_speakers: usize, seed: u64) -> Self {
        VerifierConfig {
            n_speakers,
            n_bins: 257,
            conv_filters: [1000, 1000, 1000, 1500],
            fc1_dim: 1500,
            embedding_dim: 600,
            seed,
        }
    }

    /// Reduced widths for minute-scale end-to-end runs; same topology.
    pub fn toy(n_speakers: usize, seed: u64) -> Self {
        VerifierConfig {
            n_speakers,
            n_bins: 257,
            conv_filters: [48, 48, 48, 64],
            fc1_dim: 64,
            embedding_dim: 32,
            seed,
        }
    }

    fn conv_specs(&self) -> Vec<LayerSpec> {
        let [f1, f2, f3, f4] = self.conv_filters;
        let conv = |in_ch, out_ch, kernel, stride| LayerSpec::Conv1d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding: Padding::Valid,
        };
        vec![
            conv(self.n_bins, f1, 5, 1),
            LayerSpec::Relu,
            conv(f1, f2, 7, 2),
            LayerSpec::Relu,
            conv(f2, f3, 1, 1),
            LayerSpec::Relu,
            conv(f3, f4, 1, 1),
            LayerSpec::Relu,
        ]
    }
}

pub struct Verifier {
    pub cfg: VerifierConfig,
    /// conv1..conv4 with ReLUs; output is the pre-pooling frame features.
    pub conv: Graph,
    /// Pool + FC stack ending at the pre-activation embedding.
    pub pool_fc: Graph,
    /// ReLU + softmax-head linear producing logits.
    pub head: Graph,
}

impl Verifier {
    pub fn build(cfg: VerifierConfig) -> Result<Self> {
        if cfg.n_speakers < 2 {
            return Err(Error::InvalidArgument(format!(
                "need >= 2 speakers, got {}",
                cfg.n_speakers
            )));
        }
        let conv = Graph::build("conv", &cfg.conv_specs(), cfg.seed)?;
        let pool_fc = Graph::build(
            "fc",
            &[
                LayerSpec::GlobalAvgPool,
                LayerSpec::Linear {
                    in_dim: cfg.conv_filters[3],
                    out_dim: cfg.fc1_dim,
                },
                LayerSpec::Relu,
                LayerSpec::Linear {
                    in_dim: cfg.fc1_dim,
                    out_dim: cfg.embedding_dim,
                },
            ],
            cfg.seed.wrapping_add(1),
        )?;
        let head = Graph::build(
            "head",
            &[
                LayerSpec::Relu,
                LayerSpec::Linear {
                    in_dim: cfg.embedding_dim,
                    out_dim: cfg.n_speakers,
                },
            ],
            cfg.seed.wrapping_add(2),
        )?;
        Ok(Verifier { cfg, conv, pool_fc, head })
    }

    /// Minimum number of input frames the conv stack accepts.
    pub fn min_frames(&self) -> usize {
        // conv1 k5 s1 drops 4 frames, conv2 needs 7 after that.
        11
    }

    fn input_tensor(&self, s: &Spectrogram) -> Result<Tensor> {
        check_compressed(s, "verifier")?;
        if s.values.rows != self.cfg.n_bins {
            return Err(Error::shape(
                "verifier input",
                format!("{} bins", self.cfg.n_bins),
                format!("{} bins", s.values.rows),
            ));
        }
        if s.values.cols < self.min_frames() {
            return Err(Error::InvalidArgument(format!(
                "verifier needs >= {} frames, got {}",
                self.min_frames(),
                s.values.cols
            )));
        }
        Ok(matrix_to_tensor(&s.values))
    }

    /// Logits over speakers for a compressed spectrogram tensor [bins, T].
    pub fn logits(&mut self, input: &Tensor) -> Result<Tensor> {
        let features = self.conv.forward(input)?;
        let emb = self.pool_fc.forward(&features)?;
        self.head.forward(&emb)
    }

    /// Backward from a logits gradient down to the input gradient.
    pub fn backward_from_logits(&mut self, grad_logits: &Tensor) -> Result<Tensor> {
        let g = self.head.backward(grad_logits)?;
        let g = self.pool_fc.backward(&g)?;
        self.conv.backward(&g)
    }

    /// Speaker embedding: pre-activation output of the last FC layer.
    pub fn embed(&mut self, s: &Spectrogram) -> Result<Vec<f64>> {
        let input = self.input_tensor(s)?;
        let features = self.conv.forward(&input)?;
        let emb = self.pool_fc.forward(&features)?;
        Ok(emb.data)
    }

    /// Per-frame activations of the last conv layer (pre-pooling),
    /// [filters x frames].
    pub fn frame_features(&mut self, s: &Spectrogram) -> Result<Tensor> {
        let input = self.input_tensor(s)?;
        self.conv.forward(&input)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.conv.params();
        v.extend(self.pool_fc.params());
        v.extend(self.head.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.conv.params_mut();
        v.extend(self.pool_fc.params_mut());
        v.extend(self.head.params_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        self.conv.zero_grad();
        self.pool_fc.zero_grad();
        self.head.zero_grad();
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.conv.set_trainable(trainable);
        self.pool_fc.set_trainable(trainable);
        self.head.set_trainable(trainable);
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.numel()).sum()
    }

    pub fn description(&self) -> String {
        serde_json::to_string(&super::ModelDescription::Verifier {
            config: self.cfg.clone(),
        })
        .expect("serializable")
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::nn::checkpoint::save(path, &self.description(), &self.params())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        match super::load_model(path)? {
            super::Model::Verifier(v) => Ok(v),
            _ => Err(Error::Data(format!("{:?} is not a verifier checkpoint", path))),
        }
    }
}
