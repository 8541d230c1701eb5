use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::layer::{Layer, LayerSpec};
use super::tensor::{Param, Tensor};
use crate::error::Result;

/// An ordered stack of layers executed sequentially. Forward retains the
/// per-layer caches that backward consumes.
pub struct Graph {
    pub layers: Vec<Layer>,
}

impl Graph {
    /// Build from specs with seeded fan-in uniform initialization. Layer
    /// names are `prefix<N>` by position.
    pub fn build(prefix: &str, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            layers.push(Layer::build(format!("{}{}", prefix, i), spec.clone(), &mut rng)?);
        }
        Ok(Graph { layers })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Forward that also returns the activation after layer `tap` (0-based).
    pub fn forward_with_tap(&mut self, input: &Tensor, tap: usize) -> Result<(Tensor, Tensor)> {
        let mut x = input.clone();
        let mut tapped = None;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            x = layer.forward(&x)?;
            if i == tap {
                tapped = Some(x.clone());
            }
        }
        let tapped = tapped.ok_or_else(|| {
            crate::error::Error::InvalidArgument(format!(
                "tap index {} out of range ({} layers)",
                tap,
                self.layers.len()
            ))
        })?;
        Ok((x, tapped))
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params.iter()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params.iter_mut())
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.zero_grad();
        }
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for p in self.params_mut() {
            p.trainable = trainable;
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.numel()).sum()
    }
}
