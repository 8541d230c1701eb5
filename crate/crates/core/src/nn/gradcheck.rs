//! Central finite-difference gradient verification. The finite-difference
//! side only ever calls the forward path, keeping it independent of the
//! backward implementation it checks.

use rand::seq::SliceRandom;
use rand::Rng;

use super::graph::Graph;
use super::tensor::{Param, Tensor};
use crate::error::Result;

pub const FD_EPS: f64 = 1e-3;

/// Relative error with a small floor so that near-zero gradient pairs
/// (e.g. dead ReLU paths) compare on an absolute scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Anything whose parameter gradients can be checked against finite
/// differences of a scalar forward-only loss.
pub trait GradCheckable {
    /// Forward-only scalar loss; must not touch gradients.
    fn loss(&mut self) -> Result<f64>;
    /// Forward + backward, leaving gradients in the params.
    fn compute_grads(&mut self) -> Result<()>;
    fn check_params_mut(&mut self) -> Vec<&mut Param>;

    /// Distance of the closest ReLU pre-activation to its kink. Checks at
    /// inputs closer than a few epsilons are invalid and should resample.
    fn kink_distance(&mut self) -> Result<f64> {
        Ok(f64::INFINITY)
    }
}

/// Smallest |pre-activation| seen at any ReLU in a forward pass.
pub fn graph_kink_distance(graph: &mut Graph, input: &Tensor) -> Result<f64> {
    use super::layer::LayerSpec;
    let mut x = input.clone();
    let mut dist = f64::INFINITY;
    for layer in &mut graph.layers {
        if matches!(layer.spec, LayerSpec::Relu) {
            for &v in &x.data {
                dist = dist.min(v.abs());
            }
        }
        x = layer.forward(&x)?;
    }
    Ok(dist)
}

/// Margin below which an input is too close to a ReLU kink for a central
/// difference with [`FD_EPS`] to be trusted.
pub const KINK_MARGIN: f64 = 0.05;

/// Maximum relative error between analytic and central-difference gradients
/// over (up to) `max_components` randomly sampled parameter components.
pub fn max_fd_rel_err<M: GradCheckable>(
    model: &mut M,
    max_components: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    max_fd_rel_err_eps(model, max_components, FD_EPS, rng)
}

/// [`max_fd_rel_err`] with an explicit difference step. Large networks need
/// a smaller step so the required kink clearance (a few multiples of the
/// step) stays reachable by input resampling.
pub fn max_fd_rel_err_eps<M: GradCheckable>(
    model: &mut M,
    max_components: usize,
    eps: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    model.compute_grads()?;
    let analytic: Vec<Vec<f64>> = model
        .check_params_mut()
        .iter()
        .map(|p| p.grad.data.clone())
        .collect();
    for p in model.check_params_mut() {
        p.zero_grad();
    }

    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (pi, grads) in analytic.iter().enumerate() {
        for ci in 0..grads.len() {
            coords.push((pi, ci));
        }
    }
    coords.shuffle(rng);
    coords.truncate(max_components);

    let mut worst = 0.0f64;
    for (pi, ci) in coords {
        let orig = model.check_params_mut()[pi].value.data[ci];
        model.check_params_mut()[pi].value.data[ci] = orig + eps;
        let up = model.loss()?;
        model.check_params_mut()[pi].value.data[ci] = orig - eps;
        let down = model.loss()?;
        model.check_params_mut()[pi].value.data[ci] = orig;
        let fd = (up - down) / (2.0 * eps);
        worst = worst.max(rel_err(analytic[pi][ci], fd));
    }
    Ok(worst)
}

/// A graph under a fixed random linear readout: loss = sum(w .* output).
/// Smooth in the parameters, so central differences are well behaved.
pub struct GraphUnderLoss {
    pub graph: Graph,
    pub input: Tensor,
    pub readout: Option<Tensor>,
}

impl GraphUnderLoss {
    pub fn new(graph: Graph, input: Tensor, rng: &mut impl Rng) -> Result<Self> {
        let mut s = GraphUnderLoss {
            graph,
            input,
            readout: None,
        };
        let out = s.graph.forward(&s.input)?;
        let readout = Tensor::from_vec(
            &out.shape,
            (0..out.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )?;
        s.readout = Some(readout);
        Ok(s)
    }

    fn weighted(&self, out: &Tensor) -> f64 {
        out.data
            .iter()
            .zip(self.readout.as_ref().unwrap().data.iter())
            .map(|(o, w)| o * w)
            .sum()
    }
}

impl GradCheckable for GraphUnderLoss {
    fn loss(&mut self) -> Result<f64> {
        let out = self.graph.forward(&self.input)?;
        Ok(self.weighted(&out))
    }

    fn compute_grads(&mut self) -> Result<()> {
        self.graph.zero_grad();
        let _ = self.graph.forward(&self.input)?;
        let grad = self.readout.as_ref().unwrap().clone();
        let _ = self.graph.backward(&grad)?;
        Ok(())
    }

    fn check_params_mut(&mut self) -> Vec<&mut Param> {
        self.graph.params_mut()
    }

    fn kink_distance(&mut self) -> Result<f64> {
        graph_kink_distance(&mut self.graph, &self.input)
    }
}
