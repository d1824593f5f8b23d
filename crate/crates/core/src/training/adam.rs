use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{DgnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for every tensor of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, p)| Tensor::zeros(p.shape())).collect();
        AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(DgnError::Invalid(format!(
                "adam tracks {} tensors, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.values_mut().iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[k].shape() {
                return Err(DgnError::shape("adam_step", p.shape(), g.shape()));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((x, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(p: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.register("p", Tensor::new(vec![1], vec![p]).unwrap());
        s
    }

    fn grad(g: f64) -> Vec<Tensor> {
        vec![Tensor::new(vec![1], vec![g]).unwrap()]
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.7, -0.02, 1e4] {
            let mut store = scalar_store(0.0);
            let mut adam = AdamState::new(AdamConfig::default(), &store);
            adam.step(&mut store, &grad(g)).unwrap();
            let moved = store.iter().next().unwrap().1.data()[0];
            assert!((moved + 1e-3 * g.signum()).abs() < 1e-9, "{g}: {moved}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = scalar_store(0.25);
        let before = store.clone();
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        for _ in 0..5 {
            adam.step(&mut store, &grad(0.0)).unwrap();
        }
        assert_eq!(store, before);
        assert_eq!(adam.t, 5);
    }

    #[test]
    fn three_steps_on_quadratic_match_hand_computation() {
        // f(p) = p², ∇f = 2p, p₀ = 1, β₁ = 0.9, β₂ = 0.999, lr = 1e-3, ε = 1e-8.
        let (lr, eps) = (1e-3, 1e-8);
        let p0 = 1.0_f64;
        let g1 = 2.0 * p0;
        let (m1, v1) = (0.1 * g1, 0.001 * g1 * g1);
        let p1 = p0 - lr * (m1 / 0.1) / ((v1 / 0.001).sqrt() + eps);
        let g2 = 2.0 * p1;
        let (m2, v2) = (0.9 * m1 + 0.1 * g2, 0.999 * v1 + 0.001 * g2 * g2);
        let p2 = p1 - lr * (m2 / 0.19) / ((v2 / (1.0 - 0.998001)).sqrt() + eps);
        let g3 = 2.0 * p2;
        let (m3, v3) = (0.9 * m2 + 0.1 * g3, 0.999 * v2 + 0.001 * g3 * g3);
        let p3 = p2 - lr * (m3 / 0.271) / ((v3 / (1.0 - 0.997002999)).sqrt() + eps);

        let mut store = scalar_store(p0);
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        let mut trajectory = vec![];
        for _ in 0..3 {
            let p = store.iter().next().unwrap().1.data()[0];
            adam.step(&mut store, &grad(2.0 * p)).unwrap();
            trajectory.push(store.iter().next().unwrap().1.data()[0]);
        }
        for (got, want) in trajectory.iter().zip([p1, p2, p3]) {
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut store = scalar_store(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        assert!(adam
            .step(&mut store, &[Tensor::zeros(&[2])])
            .is_err());
        assert!(adam.step(&mut store, &[]).is_err());
    }
}
