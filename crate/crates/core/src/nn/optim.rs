use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimKind {
    pub fn adam_default() -> Self {
        OptimKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Gradient-descent state: step size, optional global-norm clipping and
/// per-parameter Adam moments. Frozen params are never touched.
pub struct Optimizer {
    pub kind: OptimKind,
    pub step_size: f64,
    pub clip_norm: Option<f64>,
    moments: Vec<(Tensor, Tensor)>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimKind, step_size: f64, clip_norm: Option<f64>) -> Result<Self> {
        if !(step_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {}",
                step_size
            )));
        }
        if let Some(c) = clip_norm {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "clip norm must be positive, got {}",
                    c
                )));
            }
        }
        Ok(Optimizer {
            kind,
            step_size,
            clip_norm,
            moments: Vec::new(),
            t: 0,
        })
    }

    pub fn set_step_size(&mut self, lr: f64) {
        self.step_size = lr;
    }

    /// Clip the global gradient norm over trainable params, apply one
    /// update, and zero the consumed gradients. A non-finite gradient
    /// aborts the step and names the offending parameter.
    pub fn clip_and_step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        let mut sq = 0.0f64;
        for p in params.iter().filter(|p| p.trainable) {
            for &g in &p.grad.data {
                if !g.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient in {}; step aborted",
                        p.name
                    )));
                }
                sq += g * g;
            }
        }
        let norm = sq.sqrt();
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };

        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (Tensor::zeros(&p.value.shape), Tensor::zeros(&p.value.shape)))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::InvalidArgument(
                "optimizer state does not match parameter list".into(),
            ));
        }
        self.t += 1;

        for (idx, p) in params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            match self.kind {
                OptimKind::Sgd => {
                    for (v, g) in p.value.data.iter_mut().zip(p.grad.data.iter()) {
                        *v -= self.step_size * scale * g;
                    }
                }
                OptimKind::Adam { beta1, beta2, eps } => {
                    let (m, v2) = &mut self.moments[idx];
                    let bc1 = 1.0 - beta1.powi(self.t as i32);
                    let bc2 = 1.0 - beta2.powi(self.t as i32);
                    for i in 0..p.value.data.len() {
                        let g = p.grad.data[i] * scale;
                        m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g;
                        v2.data[i] = beta2 * v2.data[i] + (1.0 - beta2) * g * g;
                        let mh = m.data[i] / bc1;
                        let vh = v2.data[i] / bc2;
                        p.value.data[i] -= self.step_size * mh / (vh.sqrt() + eps);
                    }
                }
            }
            p.zero_grad();
        }
        Ok(())
    }
}
