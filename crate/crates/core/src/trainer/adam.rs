use crate::autodiff::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Moment-adaptive update with bias correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { learning_rate: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl Adam {
    /// Applies update number `t` (1-based). Missing gradients count as zero.
    /// Fails without touching any parameter if a gradient is not finite.
    pub fn step(&self, store: &mut ParamStore, grads: &Gradients, t: u64) -> Result<()> {
        for i in 0..store.len() {
            let id = ParamId(i);
            if let Some(g) = grads.get(id) {
                if let Some(k) = g.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("{}[{k}] (gradient)", store.get(id).name)));
                }
            }
        }
        let c1 = 1.0 - self.beta1.powf(t as f64);
        let c2 = 1.0 - self.beta2.powf(t as f64);
        for i in 0..store.len() {
            let id = ParamId(i);
            let g = grads.get(id);
            let tensor = store.get_mut(id);
            for k in 0..tensor.data.len() {
                let gk = g.map_or(0.0, |g| g[k]);
                let m = self.beta1 * tensor.m[k] + (1.0 - self.beta1) * gk;
                let v = self.beta2 * tensor.v[k] + (1.0 - self.beta2) * gk * gk;
                tensor.m[k] = m;
                tensor.v[k] = v;
                tensor.data[k] -= self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.epsilon);
            }
            if let Some(k) = tensor.data.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{}[{k}]", tensor.name)));
            }
        }
        Ok(())
    }
}
