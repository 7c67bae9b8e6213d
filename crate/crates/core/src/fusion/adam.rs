use super::{FusionError, FusionNetwork, Gradients, TrainConfig};
use crate::scalar::Scalar;

/// Adam moments plus an exponentially decaying learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Gradients<T>,
    pub second_moment: Gradients<T>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub base_learning_rate: f64,
    pub decay: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &FusionNetwork<T>, config: &TrainConfig) -> Self {
        Self {
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
            step: 0,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            base_learning_rate: config.learning_rate,
            decay: config.decay,
        }
    }

    /// `η0 · γ^epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.base_learning_rate * self.decay.powi(epoch as i32)
    }
}

/// One bias-corrected Adam update at the learning rate scheduled for `epoch`.
/// Non-finite gradients abort before any parameter is touched.
pub fn adam_step<T: Scalar>(
    net: &mut FusionNetwork<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    epoch: usize,
) -> Result<(), FusionError> {
    if let Some(layer) = grads
        .layers
        .iter()
        .position(|l| !l.weights.iter().chain(&l.bias).all(|g| g.is_finite()))
    {
        return Err(FusionError::NonFiniteGradient { layer });
    }
    let shapes_match = grads.layers.len() == net.layers().len()
        && grads
            .layers
            .iter()
            .zip(net.layers())
            .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len());
    if !shapes_match {
        return Err(FusionError::InvalidNetwork(
            "gradient shape does not match network".into(),
        ));
    }

    state.step += 1;
    let t = state.step as i32;
    let b1 = T::of(state.beta1);
    let b2 = T::of(state.beta2);
    let correction1 = T::one() - T::of(state.beta1.powi(t));
    let correction2 = T::one() - T::of(state.beta2.powi(t));
    let lr = T::of(state.learning_rate(epoch));
    let eps = T::of(state.epsilon);

    let moments = state
        .first_moment
        .layers
        .iter_mut()
        .zip(state.second_moment.layers.iter_mut());
    for ((layer, g), (m, v)) in net.layers_mut().iter_mut().zip(&grads.layers).zip(moments) {
        let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
        let gs = g.weights.iter().chain(&g.bias);
        let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
        let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
        for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / correction1;
            let v_hat = *vi / correction2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
