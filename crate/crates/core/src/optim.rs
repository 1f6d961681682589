//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<T: Real = f32> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        AdamState {
            m: Tensor::zeros(shape.to_vec()),
            v: Tensor::zeros(shape.to_vec()),
            t: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T: Real = f32> {
    pub config: AdamConfig,
    states: Vec<AdamState<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        Adam {
            config,
            states: store
                .iter()
                .map(|(_, p)| AdamState::zeros(p.value.shape()))
                .collect(),
        }
    }

    pub fn states(&self) -> &[AdamState<T>] {
        &self.states
    }

    /// Applies one update to every trainable parameter from its accumulated
    /// gradient. Frozen parameters and their states are left untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if self.states.len() != store.len() {
            return Err(Error::Incompatible(format!(
                "optimizer tracks {} parameters, store has {}",
                self.states.len(),
                store.len()
            )));
        }
        let c = self.config;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let one = T::one();
        for (state, p) in self.states.iter_mut().zip(store.iter_mut()) {
            if state.m.shape() != p.value.shape() {
                return Err(Error::shape("adam_step", state.m.shape(), p.value.shape()));
            }
            if !p.trainable {
                continue;
            }
            state.t += 1;
            let t = state.t as i32;
            let bc1 = T::from_f64(1.0 - c.beta1.powi(t));
            let bc2 = T::from_f64(1.0 - c.beta2.powi(t));
            let lr = T::from_f64(c.learning_rate);
            let eps = T::from_f64(c.epsilon);
            let m = state.m.data_mut();
            let v = state.v.data_mut();
            let g = p.grad.data();
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
