use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `p *= 1 - lr * wd`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// AdamW moment state for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamW {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        adamw_step(params, grads, self, lr);
    }
}

pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut AdamW, lr: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    let AdamConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] *= 1.0 - lr * weight_decay;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = AdamW::new(cfg, 2);
        let mut p = vec![1.0, -2.0];
        st.step(&mut p, &[3.0, -0.5], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn decay_shrinks_with_zero_gradient() {
        let mut st = AdamW::new(AdamConfig::default(), 1);
        let mut p = vec![2.0];
        st.step(&mut p, &[0.0], 0.5);
        assert_eq!(p[0], 2.0 * (1.0 - 0.5 * 1e-2));
    }

    #[test]
    fn minimizes_quadratic() {
        let mut st = AdamW::new(AdamConfig { weight_decay: 0.0, ..Default::default() }, 3);
        let target = [1.0, -3.0, 0.5];
        let mut p = vec![0.0; 3];
        for _ in 0..3000 {
            let g: Vec<f64> = p.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
            st.step(&mut p, &g, 0.01);
        }
        for (a, b) in p.iter().zip(target) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
