//! Adam optimizer with named state slots so one instance can drive any
//! mix of network weights and free tensors (the learnable clouds).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::networks::WeightBlob;
use crate::{Error, Result};

const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    t: u64,
    slots: BTreeMap<String, Slot>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            t: 0,
            slots: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Advance the shared timestep. Call once per optimization step, before
    /// the per-tensor updates belonging to that step.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// In-place Adam update of one named tensor.
    pub fn update(&mut self, key: &str, param: &mut [f64], grad: &[f64]) -> Result<()> {
        if self.t == 0 {
            return Err(Error::invalid("Adam::update before begin_step".to_string()));
        }
        if param.len() != grad.len() {
            return Err(Error::ShapeMismatch {
                op: "adam update",
                detail: format!(
                    "param '{}' has {} values, gradient has {}",
                    key,
                    param.len(),
                    grad.len()
                ),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient for '{}'",
                key
            )));
        }
        let slot = self.slots.entry(key.to_string()).or_insert_with(|| Slot {
            m: vec![0.0; param.len()],
            v: vec![0.0; param.len()],
        });
        if slot.m.len() != param.len() {
            return Err(Error::ShapeMismatch {
                op: "adam update",
                detail: format!("slot '{}' was created with a different size", key),
            });
        }
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..param.len() {
            slot.m[i] = self.beta1 * slot.m[i] + (1.0 - self.beta1) * grad[i];
            slot.v[i] = self.beta2 * slot.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = slot.m[i] / bc1;
            let v_hat = slot.v[i] / bc2;
            param[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }

    /// One full step over a blob's trainable tensors. `grads` must align
    /// with the trainable tensors in blob order, as produced by calling
    /// backward on the ids from `WeightBlob::trainable_ids`.
    pub fn step_weights(&mut self, blob: &mut WeightBlob, grads: &[Vec<f64>]) -> Result<()> {
        let names: Vec<String> = blob
            .tensors
            .iter()
            .filter(|t| t.trainable)
            .map(|t| t.name.clone())
            .collect();
        if names.len() != grads.len() {
            return Err(Error::ShapeMismatch {
                op: "adam step",
                detail: format!(
                    "{} trainable tensors but {} gradients",
                    names.len(),
                    grads.len()
                ),
            });
        }
        self.begin_step();
        for (name, grad) in names.iter().zip(grads) {
            let tensor = blob.get_mut(name)?;
            let mut data = std::mem::take(&mut tensor.data);
            let res = self.update(name, &mut data, grad);
            blob.get_mut(name)?.data = data;
            res?;
        }
        Ok(())
    }
}
