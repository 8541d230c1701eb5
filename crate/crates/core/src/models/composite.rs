//! The masked-verification wiring: the mask is generated from the input
//! spectrogram, multiplied pointwise with it, and the product is classified
//! by the verifier. Cross entropy against the ground-truth speaker label is
//! the enhancement training signal; the verifier stays frozen and only
//! relays gradients.

use super::{Masker, Verifier};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, Tensor};

fn to_planes(input: &Tensor) -> Result<(usize, usize)> {
    match input.shape.as_slice() {
        [r, c] => Ok((*r, *c)),
        other => Err(Error::shape(
            "masked verification input",
            "[bins, frames]",
            format!("{:?}", other),
        )),
    }
}

/// Forward-only loss of the composite network.
pub fn masked_ce_loss(
    masker: &mut Masker,
    verifier: &mut Verifier,
    input: &Tensor,
    label: usize,
) -> Result<f64> {
    let (logits, _) = masked_forward(masker, verifier, input)?;
    Ok(cross_entropy(&logits, label)?.0)
}

/// Forward pass returning the logits and the mask tensor.
pub fn masked_forward(
    masker: &mut Masker,
    verifier: &mut Verifier,
    input: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (rows, cols) = to_planes(input)?;
    let mut x3 = input.clone();
    x3.shape = vec![1, rows, cols];
    let mask = masker.graph.forward(&x3)?;
    let mut masked = input.clone();
    for (v, m) in masked.data.iter_mut().zip(mask.data.iter()) {
        *v *= m;
    }
    let logits = verifier.logits(&masked)?;
    Ok((logits, mask))
}

/// Forward + backward: cross entropy at `label`, gradients accumulated into
/// both networks' params (the verifier's exist only to carry the flow).
/// Loss gradient is scaled by `grad_scale` for batch averaging.
pub fn masked_ce_step(
    masker: &mut Masker,
    verifier: &mut Verifier,
    input: &Tensor,
    label: usize,
    grad_scale: f64,
) -> Result<f64> {
    let (rows, cols) = to_planes(input)?;
    let (logits, _) = masked_forward(masker, verifier, input)?;
    let (loss, mut grad_logits) = cross_entropy(&logits, label)?;
    for g in &mut grad_logits.data {
        *g *= grad_scale;
    }
    let grad_masked = verifier.backward_from_logits(&grad_logits)?;
    // d loss / d mask = d loss / d masked * input
    let mut grad_mask = grad_masked;
    for (g, x) in grad_mask.data.iter_mut().zip(input.data.iter()) {
        *g *= x;
    }
    grad_mask.shape = vec![1, rows, cols];
    masker.graph.backward(&grad_mask)?;
    Ok(loss)
}
