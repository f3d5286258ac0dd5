use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{shape_err, Error, Result};

/// Bias-corrected Adam moments for one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first_moment: Gradients,
    second_moment: Gradients,
}

impl AdamState {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPS: f64 = 1e-8;

    pub fn new(net: &Mlp) -> Self {
        Self::with_hyperparams(net, Self::DEFAULT_BETA1, Self::DEFAULT_BETA2, Self::DEFAULT_EPS)
    }

    pub fn with_hyperparams(net: &Mlp, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            beta1,
            beta2,
            eps,
            step: 0,
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.second_moment
    }
}

/// Applies one Adam update to a flat parameter slice. `step` is the 1-based step index.
#[allow(clippy::too_many_arguments)]
pub fn adam_update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
) {
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One descent step: `params <- params - lr * m_hat / (sqrt(v_hat) + eps)`.
///
/// A gradient containing NaN or infinity is rejected before anything is modified.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")));
    }
    if !grads.shapes_match(net) || !state.first_moment.shapes_match(net) {
        return Err(shape_err!("gradient or optimizer state does not match network dims {:?}", net.dims()));
    }
    if !grads.all_finite() {
        return Err(Error::Numeric("non-finite gradient, update rejected".into()));
    }
    state.step += 1;
    let AdamState { beta1, beta2, eps, step, first_moment, second_moment } = state;
    for (((p, g), m), v) in net
        .tensors_mut()
        .zip(grads.tensors())
        .zip(first_moment.tensors_mut())
        .zip(second_moment.tensors_mut())
    {
        adam_update_slice(p, g, m, v, lr, *beta1, *beta2, *eps, *step);
    }
    if !net.all_finite() {
        return Err(Error::Numeric("parameters became non-finite after update".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputSquash;
    use ndarray::array;

    fn scalar_net(w: f64) -> Mlp {
        Mlp::from_parts(vec![array![[w]]], vec![array![0.0]], OutputSquash::Identity).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut net = Mlp::new(&[3, 4, 2], OutputSquash::Identity, 2).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net);
        let zero = Gradients::zeros_like(&net);
        adam_step(&mut net, &zero, &mut state, 1e-3).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.001, m_hat = 1, v_hat = 1 => delta = -lr / (1 + eps)
        let mut net = scalar_net(0.0);
        let mut state = AdamState::new(&net);
        let mut g = Gradients::zeros_like(&net);
        g.weights[0][[0, 0]] = 1.0;
        adam_step(&mut net, &g, &mut state, 1e-3).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((net.weights()[0][[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn minimizes_quadratic() {
        // Scalar reference recurrence for f(x) = x^2 run side by side.
        let mut net = scalar_net(1.0);
        let mut state = AdamState::new(&net);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let mut g = Gradients::zeros_like(&net);
            g.weights[0][[0, 0]] = 2.0 * net.weights()[0][[0, 0]];
            adam_step(&mut net, &g, &mut state, 0.1).unwrap();

            let gx = 2.0 * x;
            m = 0.9 * m + 0.1 * gx;
            v = 0.999 * v + 0.001 * gx * gx;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((net.weights()[0][[0, 0]] - x).abs() < 1e-12);
        }
        assert!(net.weights()[0][[0, 0]].abs() < 1.0);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut net = scalar_net(0.5);
        let before = net.clone();
        let mut state = AdamState::new(&net);
        let mut g = Gradients::zeros_like(&net);
        g.weights[0][[0, 0]] = f64::NAN;
        assert!(matches!(adam_step(&mut net, &g, &mut state, 1e-3), Err(Error::Numeric(_))));
        assert_eq!(net, before);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn rejects_bad_learning_rate() {
        let mut net = scalar_net(0.5);
        let mut state = AdamState::new(&net);
        let g = Gradients::zeros_like(&net);
        assert!(adam_step(&mut net, &g, &mut state, 0.0).is_err());
    }
}
