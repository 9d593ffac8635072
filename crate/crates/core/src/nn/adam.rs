use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParameterStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

/// First and second moment estimates for every parameter value.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(store: &ParameterStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.params().iter().map(|p| vec![0.0; p.values.len()]).collect();
        AdamState { m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update. Non-finite gradients abort without touching `store`.
pub fn adam_step(store: &mut ParameterStore, grads: &Gradients, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::shape("optimizer state does not match the parameter store"));
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("non-finite gradient".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for id in store.ids().collect::<Vec<_>>() {
        let g = grads.get(id);
        let m = &mut state.m[id.index()];
        let v = &mut state.v[id.index()];
        let w = store.values_mut(id);
        if g.len() != w.len() {
            return Err(Error::shape("gradient length does not match parameter"));
        }
        for k in 0..w.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            w[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>) -> ParameterStore {
        let mut s = ParameterStore::new(0);
        s.insert("w", vec![values.len()], values).unwrap();
        s
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = store(vec![0.5, -2.0]);
        let before = s.clone();
        let mut st = AdamState::new(&s);
        let g = Gradients::zeros_like(&s);
        for _ in 0..5 {
            adam_step(&mut s, &g, &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(s, before);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        for scale in [1e-6, 1.0, 1e6] {
            let mut s = store(vec![0.0, 0.0, 0.0]);
            let mut st = AdamState::new(&s);
            let mut g = Gradients::zeros_like(&s);
            let id = s.find("w").unwrap();
            g.get_mut(id).copy_from_slice(&[scale, -scale, 3.0 * scale]);
            adam_step(&mut s, &g, &mut st, &AdamConfig::default()).unwrap();
            let w = &s.get(id).values;
            for (x, sign) in w.iter().zip([-1.0, 1.0, -1.0]) {
                assert!((x - sign * 1e-3).abs() < 1e-3 * 1e-2, "scale {scale}: {x}");
            }
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut s = store(vec![1.0]);
        let mut st = AdamState::new(&s);
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(s.find("w").unwrap())[0] = f64::NAN;
        assert!(matches!(adam_step(&mut s, &g, &mut st, &AdamConfig::default()), Err(Error::NonFinite(_))));
        assert_eq!(s.get(s.find("w").unwrap()).values, vec![1.0]);
    }
}
