use super::{GraphError, ParamStore, Real};

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
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam. Moments live here, one buffer per parameter
/// tensor of the store it is first stepped with.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients in `store`. A non-finite
    /// gradient leaves parameters, moments and the step counter untouched.
    pub fn step<T: Real>(&mut self, store: &mut ParamStore<T>) -> Result<(), GraphError> {
        if let Some(bad) = store.tensors().iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(GraphError::NonFiniteGradient(bad.name.clone()));
        }
        if self.m.is_empty() {
            self.m = store.tensors().iter().map(|p| vec![0.0; p.data.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), store.len(), "optimizer used with a different parameter store");
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in store.tensors_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for (((w, g), m), v) in p.data.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g.to_f();
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let update = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                *w = T::from_f(w.to_f() - update);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(store: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm && norm.is_finite() {
        let s = T::from_f(max_norm / norm);
        for p in store.tensors_mut() {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}
