use crate::real::Real;

use super::{Mlp, MlpGrads, NetError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam moments for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(net: &Mlp<T>, config: AdamConfig) -> Self {
        let m: Vec<Vec<T>> = net.slices().map(|s| vec![T::zero(); s.len()]).collect();
        Self { config, step: 0, v: m.clone(), m }
    }

    pub fn matches(&self, net: &Mlp<T>) -> bool {
        self.m.len() == net.slices().count()
            && self.m.iter().zip(&self.v).zip(net.slices()).all(|((m, v), p)| m.len() == p.len() && v.len() == p.len())
    }

    pub fn apply(&mut self, net: &mut Mlp<T>, grads: &MlpGrads<T>) -> Result<(), NetError> {
        if !self.matches(net) || grads.slices().map(<[T]>::len).ne(net.slices().map(<[T]>::len)) {
            return Err(NetError::Shape("optimizer state, gradients and parameters differ".into()));
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let t = self.step as f64;
        let bc1 = T::lit(1.0 - c.beta1.powf(t));
        let bc2 = T::lit(1.0 - c.beta2.powf(t));
        let one = T::one();
        for (((p, g), m), v) in net.slices_mut().zip(grads.slices()).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] = p[i] - lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
