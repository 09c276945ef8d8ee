//! Adam, optionally with the AMSGrad running maximum of the second moment.

use crate::autodiff::{ParamStore, Tensor};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub amsgrad: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            amsgrad: false,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    m: Tensor,
    v: Tensor,
    v_max: Tensor,
}

/// Descends on the gradients accumulated in a [`ParamStore`]. To ascend,
/// accumulate the negated gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every block at rate `lr` (pass the annealed rate, or
    /// `config.learning_rate`); gradients are left untouched.
    pub fn step_with_lr(&mut self, store: &mut ParamStore, lr: f64) {
        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powf(self.t as f64);
        let bc2 = 1.0 - c.beta2.powf(self.t as f64);
        for (name, block) in store.iter_mut() {
            let (r, k) = block.value.shape();
            let st = self.state.entry(name.to_string()).or_insert_with(|| Moments {
                m: Tensor::zeros(r, k),
                v: Tensor::zeros(r, k),
                v_max: Tensor::zeros(r, k),
            });
            let g = block.grad.data();
            let (m, v, vm) = (st.m.data_mut(), st.v.data_mut(), st.v_max.data_mut());
            for (i, w) in block.value.data_mut().iter_mut().enumerate() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let second = if c.amsgrad {
                    vm[i] = vm[i].max(v[i]);
                    vm[i]
                } else {
                    v[i]
                };
                *w -= lr * (m[i] / bc1) / ((second / bc2).sqrt() + c.eps);
            }
        }
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        let lr = self.config.learning_rate;
        self.step_with_lr(store, lr);
    }
}
