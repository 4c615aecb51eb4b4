//! Gradient-descent parameter updates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam(lr)
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u64,
    moments: BTreeMap<ParamId, (Vec<f64>, Vec<f64>)>,
    lr_scale: BTreeMap<ParamId, f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
            lr_scale: BTreeMap::new(),
        }
    }

    /// Multiplies the learning rate of one parameter.
    pub fn set_lr_scale(&mut self, id: ParamId, scale: f64) {
        self.lr_scale.insert(id, scale);
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates every trainable parameter from its accumulated gradient and
    /// clears all gradients. A trainable parameter without a gradient means
    /// the loss never reached it, which is reported as an error.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let trainable: Vec<ParamId> = store.ids().filter(|&id| store.is_trainable(id)).collect();
        for &id in &trainable {
            if store.grad(id).is_none() {
                return Err(Error::Contract(format!(
                    "trainable parameter '{}' has no gradient",
                    store.param(id).name
                )));
            }
        }
        self.step += 1;
        let cfg = self.config;
        let t = self.step as i32;
        for id in trainable {
            let grad = store.grad(id).expect("checked above").data().to_vec();
            let lr = cfg.lr * self.lr_scale.get(&id).copied().unwrap_or(1.0);
            let mask = store.param(id).row_mask.clone();
            let value = store.value_mut(id);
            let cols = value.shape().get(1).copied().unwrap_or(1).max(1);
            let active = |i: usize| mask.as_ref().is_none_or(|m| m[i / cols]);
            match cfg.kind {
                OptimizerKind::Sgd => {
                    for (i, (w, g)) in value.data_mut().iter_mut().zip(&grad).enumerate() {
                        if active(i) {
                            *w -= lr * g;
                        }
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = self
                        .moments
                        .entry(id)
                        .or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
                    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
                    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
                    for (i, w) in value.data_mut().iter_mut().enumerate() {
                        if !active(i) {
                            continue;
                        }
                        let g = grad[i];
                        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        *w -= lr * mhat / (libm::sqrt(vhat) + cfg.eps);
                    }
                }
            }
        }
        store.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;
    use crate::tensor::Tensor;

    fn one_param(w: f64, g: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(w));
        // loss = g * w has gradient g
        let mut tape = Tape::new();
        let wv = tape.param(&store, id);
        let loss = tape.scale(wv, g).unwrap();
        let grads = tape.backward(loss).unwrap();
        store.accumulate(&grads).unwrap();
        (store, id)
    }

    #[test]
    fn plain_descent_step() {
        let (mut store, id) = one_param(1.0, 2.0);
        Optimizer::new(OptimizerConfig::sgd(0.1)).step(&mut store).unwrap();
        assert!((store.value(id).data()[0] - 0.8).abs() < 1e-15);
        assert!(store.grad(id).is_none());
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        for cfg in [OptimizerConfig::sgd(0.0), OptimizerConfig::adam(0.0)] {
            let (mut store, id) = one_param(1.5, -3.0);
            Optimizer::new(cfg).step(&mut store).unwrap();
            assert_eq!(store.value(id).data()[0], 1.5);
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // m1 = 0.1, v1 = 0.001 -> mhat = 1, vhat = 1 -> step = lr / (1 + eps)
        let (mut store, id) = one_param(0.0, 1.0);
        Optimizer::new(OptimizerConfig::adam(0.01)).step(&mut store).unwrap();
        let moved = -store.value(id).data()[0];
        assert!((moved - 0.01 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_is_a_contract_violation() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(1.0));
        let err = Optimizer::new(OptimizerConfig::sgd(0.1)).step(&mut store);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn masked_rows_do_not_move() {
        let mut store = ParamStore::new();
        let id = store.add("e", Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        store.set_row_mask(id, Some(vec![true, false])).unwrap();
        let mut tape = Tape::new();
        let e = tape.param(&store, id);
        let loss = tape.sum(e).unwrap();
        let grads = tape.backward(loss).unwrap();
        store.accumulate(&grads).unwrap();
        assert_eq!(store.grad(id).unwrap().data(), &[1.0, 0.0]);
        Optimizer::new(OptimizerConfig::adam(0.1)).step(&mut store).unwrap();
        assert!(store.value(id).data()[0] < 1.0);
        assert_eq!(store.value(id).data()[1], 1.0);
    }
}
