//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.0005,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first/second moments plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        AdamState {
            config,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }

    pub fn for_store(config: AdamConfig, store: &ParamStore) -> Self {
        AdamState {
            config,
            m: store.iter().map(|(_, _, p)| Tensor::zeros(p.shape())).collect(),
            v: store.iter().map(|(_, _, p)| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }

    /// One update over every parameter of `store`. A `None` gradient leaves
    /// that parameter and its moments untouched; `t` advances regardless.
    pub fn step_store(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>]) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(TensorError::shape("adam_step", &[store.len()], &[grads.len()]));
        }
        self.check_shapes(store.iter().map(|(_, _, p)| p), grads)?;
        self.t += 1;
        let ids: Vec<_> = store.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            if let Some(g) = &grads[i] {
                self.update_one(i, store.get_mut(id), g);
            }
        }
        Ok(())
    }

    fn check_shapes<'a>(&self, params: impl Iterator<Item = &'a Tensor>, grads: &[Option<Tensor>]) -> Result<()> {
        for ((p, g), m) in params.zip(grads).zip(&self.m) {
            if p.shape() != m.shape() {
                return Err(TensorError::shape("adam_step", p.shape(), m.shape()));
            }
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(TensorError::shape("adam_step", p.shape(), g.shape()));
                }
            }
        }
        Ok(())
    }

    fn update_one(&mut self, i: usize, param: &mut Tensor, grad: &Tensor) {
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let m = self.m[i].data_mut();
        let v = self.v[i].data_mut();
        for (((p, &g), m), v) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Updates `params` in place from `grads` using `state`.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TensorError::shape(
            "adam_step",
            &[params.len(), state.m.len()],
            &[grads.len()],
        ));
    }
    let wrapped: Vec<Option<Tensor>> = grads.iter().cloned().map(Some).collect();
    state.check_shapes(params.iter(), &wrapped)?;
    state.t += 1;
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        state.update_one(i, p, g);
    }
    Ok(())
}
