//! Adam optimizer with bias correction.
//!
//! Tensors are immutable, so a step produces fresh parameter leaves; the
//! moment buffers live here, keyed by parameter name.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::DiffTensor;

#[derive(Debug, Clone, Default)]
pub struct AdamState {
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&BTreeMap<String, Vec<f64>>, &BTreeMap<String, Vec<f64>>) {
        (&self.m, &self.v)
    }

    /// Rebuild state from serialized buffers (checkpoint restore).
    pub fn from_parts(step: u64, m: BTreeMap<String, Vec<f64>>, v: BTreeMap<String, Vec<f64>>) -> Self {
        Self { step, m, v }
    }
}

/// One Adam update over a named parameter map. Gradients are read from each
/// tensor's grad buffer (missing buffer = zero gradient); updated parameters
/// replace the map entries. The step counter increments exactly once.
pub fn adam_step(
    params: &mut BTreeMap<String, DiffTensor>,
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
        return Err(Error::Parameter(format!(
            "adam betas must lie in [0,1), got {beta1}, {beta2}"
        )));
    }
    if lr < 0.0 || eps <= 0.0 {
        return Err(Error::Parameter("adam needs lr >= 0 and eps > 0".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (name, tensor) in params.iter_mut() {
        let n = tensor.numel();
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        if m.len() != n || v.len() != n {
            return Err(Error::Dimension(format!(
                "adam state for '{name}' holds {} values, parameter has {n}",
                m.len()
            )));
        }
        let grad = tensor.grad();
        let mut new_values = tensor.values().to_vec();
        for i in 0..n {
            let g = grad.as_ref().map_or(0.0, |g| g[i]);
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            new_values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        *tensor = DiffTensor::parameter(tensor.shape().to_vec(), new_values)?;
    }
    Ok(())
}
