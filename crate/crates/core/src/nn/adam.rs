use super::ParamStore;
use crate::autodiff::AutodiffError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments, one moment pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.params().iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update from the gradients stored in `store`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), AutodiffError> {
        if store.len() != self.m.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam",
                left: vec![self.m.len()],
                right: vec![store.len()],
            });
        }
        for (p, m) in store.params().iter().zip(&self.m) {
            if p.value.len() != m.len() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "adam",
                    left: vec![m.len()],
                    right: p.value.shape().to_vec(),
                });
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in store.params_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.data();
            let value = p.value.data_mut();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Step decay: the rate halves every 5 epochs.
pub fn lr_schedule(epoch: usize, lr0: f64) -> f64 {
    lr0 * 0.5f64.powi((epoch / 5) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Graph, Tensor};

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::scalar(x));
        s
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.0, -0.02, 1e-3] {
            let mut store = scalar_store(1.0);
            store.params_mut()[0].grad = Tensor::scalar(g);
            let cfg = AdamConfig { lr: 0.1, ..Default::default() };
            let mut adam = Adam::new(&store, cfg);
            adam.step(&mut store).unwrap();
            let delta = store.params()[0].value.item() - 1.0;
            // m_hat = g and v_hat = g^2 after one step
            let expected = -0.1 * g / (g.abs() + 1e-8);
            assert!((delta - expected).abs() < 1e-15, "{delta} vs {expected}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = scalar_store(0.7);
        let mut adam = Adam::new(&store, AdamConfig::default());
        for _ in 0..50 {
            adam.step(&mut store).unwrap();
        }
        assert_eq!(store.params()[0].value.item(), 0.7);
        assert_eq!(adam.steps(), 50);
    }

    #[test]
    fn minimizes_a_parabola() {
        let mut store = scalar_store(1.0);
        let mut adam = Adam::new(&store, AdamConfig { lr: 0.1, ..Default::default() });
        for _ in 0..200 {
            store.zero_grads();
            let mut g = Graph::new();
            let bound = store.bind(&mut g);
            let y = g.square(bound.get(crate::nn::ParamId(0)));
            g.backward(y).unwrap();
            store.accumulate_grads(&g, &bound);
            adam.step(&mut store).unwrap();
        }
        assert!(store.params()[0].value.item().abs() < 0.05);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let store = scalar_store(1.0);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let mut other = ParamStore::new();
        other.add("x", Tensor::zeros(&[2]));
        assert!(adam.step(&mut other).is_err());
    }

    #[test]
    fn schedule_halves_every_five_epochs() {
        assert_eq!(lr_schedule(0, 1e-3), 1e-3);
        assert_eq!(lr_schedule(4, 1e-3), 1e-3);
        assert_eq!(lr_schedule(5, 1e-3), 5e-4);
        assert_eq!(lr_schedule(59, 1e-3), 1e-3 * 0.5f64.powi(11));
    }
}
