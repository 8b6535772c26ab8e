//! Bias-corrected Adam over [`MlpParams`]-shaped tensors.

use crate::error::{Error, Result};
use crate::mlp::MlpParams;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam step. Gradients are checked before anything is written, so a
/// non-finite entry leaves both `params` and `state` untouched.
pub fn adam_step(
    params: &mut MlpParams,
    state: &mut AdamState,
    grads: &MlpParams,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Contract(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if params.layer_sizes() != grads.layer_sizes() || params.layer_sizes() != state.m.layer_sizes()
    {
        return Err(Error::Contract("adam: shape disagreement".into()));
    }
    for (i, layer) in grads.layers.iter().enumerate() {
        if layer
            .slices()
            .iter()
            .any(|s| s.iter().any(|g| !g.is_finite()))
        {
            return Err(Error::Diverged {
                what: "gradient",
                layer: i,
            });
        }
    }

    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.m.layers.iter_mut())
        .zip(state.v.layers.iter_mut())
    {
        for (((ps, gs), ms), vs) in p
            .slices_mut()
            .into_iter()
            .zip(g.slices())
            .zip(m.slices_mut())
            .zip(v.slices_mut())
        {
            for (((p, &g), m), v) in ps.iter_mut().zip(gs).zip(ms.iter_mut()).zip(vs.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
    Ok(())
}
