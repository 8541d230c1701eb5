//! Gradient-check adapters binding each full network to a fixed input and
//! loss, so the finite-difference verifier can drive them.

use super::composite::{masked_ce_loss, masked_ce_step};
use super::{Dae, Masker, Verifier};
use crate::error::Result;
use crate::nn::gradcheck::{graph_kink_distance, GradCheckable};
use crate::nn::{cross_entropy, l2_loss, Param, Tensor};

pub struct VerifierUnderCe {
    pub verifier: Verifier,
    pub input: Tensor,
    pub label: usize,
}

impl GradCheckable for VerifierUnderCe {
    fn loss(&mut self) -> Result<f64> {
        let logits = self.verifier.logits(&self.input)?;
        Ok(cross_entropy(&logits, self.label)?.0)
    }

    fn compute_grads(&mut self) -> Result<()> {
        self.verifier.zero_grad();
        let logits = self.verifier.logits(&self.input)?;
        let (_, grad) = cross_entropy(&logits, self.label)?;
        let _ = self.verifier.backward_from_logits(&grad)?;
        Ok(())
    }

    fn check_params_mut(&mut self) -> Vec<&mut Param> {
        self.verifier.params_mut()
    }

    fn kink_distance(&mut self) -> Result<f64> {
        let d1 = graph_kink_distance(&mut self.verifier.conv, &self.input)?;
        let feats = self.verifier.conv.forward(&self.input)?;
        let d2 = graph_kink_distance(&mut self.verifier.pool_fc, &feats)?;
        let emb = self.verifier.pool_fc.forward(&feats)?;
        let d3 = graph_kink_distance(&mut self.verifier.head, &emb)?;
        Ok(d1.min(d2).min(d3))
    }
}

pub struct MaskedVerifierUnderCe {
    pub masker: Masker,
    pub verifier: Verifier,
    pub input: Tensor,
    pub label: usize,
}

impl GradCheckable for MaskedVerifierUnderCe {
    fn loss(&mut self) -> Result<f64> {
        masked_ce_loss(&mut self.masker, &mut self.verifier, &self.input, self.label)
    }

    fn compute_grads(&mut self) -> Result<()> {
        self.masker.graph.zero_grad();
        self.verifier.zero_grad();
        masked_ce_step(
            &mut self.masker,
            &mut self.verifier,
            &self.input,
            self.label,
            1.0,
        )?;
        Ok(())
    }

    fn check_params_mut(&mut self) -> Vec<&mut Param> {
        // Both networks: the verifier is frozen during training but its
        // gradients must still be exact for the flow to be right.
        let mut v = self.masker.params_mut();
        v.extend(self.verifier.params_mut());
        v
    }

    fn kink_distance(&mut self) -> Result<f64> {
        let mut x3 = self.input.clone();
        x3.shape = vec![1, self.input.shape[0], self.input.shape[1]];
        let d1 = graph_kink_distance(&mut self.masker.graph, &x3)?;
        let mask = self.masker.graph.forward(&x3)?;
        let mut masked = self.input.clone();
        for (v, m) in masked.data.iter_mut().zip(mask.data.iter()) {
            *v *= m;
        }
        let d2 = graph_kink_distance(&mut self.verifier.conv, &masked)?;
        let feats = self.verifier.conv.forward(&masked)?;
        let d3 = graph_kink_distance(&mut self.verifier.pool_fc, &feats)?;
        let emb = self.verifier.pool_fc.forward(&feats)?;
        let d4 = graph_kink_distance(&mut self.verifier.head, &emb)?;
        Ok(d1.min(d2).min(d3).min(d4))
    }
}

pub struct DaeUnderL2 {
    pub dae: Dae,
    pub input: Tensor,
    pub target: Tensor,
}

impl GradCheckable for DaeUnderL2 {
    fn loss(&mut self) -> Result<f64> {
        let out = self.dae.forward(&self.input)?;
        Ok(l2_loss(&out, &self.target)?.0)
    }

    fn compute_grads(&mut self) -> Result<()> {
        self.dae.graph.zero_grad();
        let out = self.dae.forward(&self.input)?;
        let (_, grad) = l2_loss(&out, &self.target)?;
        let _ = self.dae.graph.backward(&grad)?;
        Ok(())
    }

    fn check_params_mut(&mut self) -> Vec<&mut Param> {
        self.dae.params_mut()
    }

    fn kink_distance(&mut self) -> Result<f64> {
        graph_kink_distance(&mut self.dae.graph, &self.input)
    }
}
