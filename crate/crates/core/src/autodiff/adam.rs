use crate::error::{Error, Result};

use super::Scalar;

/// Adam hyper-constants (learning rate is passed per step).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One parameter buffer together with its gradient.
pub struct ParamGrad<'a, F> {
    pub name: &'a str,
    pub value: &'a mut [F],
    pub grad: &'a [F],
}

/// Adam optimizer with bias-corrected first and second moments.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    pub config: AdamConfig,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
    steps: u64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update. A non-finite gradient anywhere rejects the whole
    /// step, leaving parameters and moments untouched.
    pub fn step(&mut self, params: &mut [ParamGrad<'_, F>], lr: f64) -> Result<()> {
        for p in params.iter() {
            if p.grad.len() != p.value.len() {
                return Err(Error::Shape(format!("gradient size for `{}`", p.name)));
            }
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient(p.name.to_string()));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![F::zero(); p.value.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len() {
            return Err(Error::Shape("parameter count changed between Adam steps".into()));
        }
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.steps as i32;
        let step_size = F::of(lr / (1.0 - beta1.powi(t)));
        let v_corr = F::of(1.0 / (1.0 - beta2.powi(t)));
        let (b1, b2, eps) = (F::of(beta1), F::of(beta2), F::of(eps));
        let (one_b1, one_b2) = (F::one() - b1, F::one() - b2);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                p.value[i] -= step_size * m[i] / ((v[i] * v_corr).sqrt() + eps);
            }
        }
        Ok(())
    }
}
