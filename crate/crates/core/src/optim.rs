//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::nn::{Gradients, ModelParams};
use crate::scalar::Scalar;

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

/// Optimizer state: first and second moments per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn from_state(config: AdamConfig, step: u64, m: Vec<Vec<T>>, v: Vec<Vec<T>>) -> Result<Self> {
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::InvalidValue("Adam moment shapes disagree".into()));
        }
        if v.iter().flatten().any(|&x| x < T::zero()) {
            return Err(Error::InvalidValue("Adam second moment must be nonnegative".into()));
        }
        Ok(Self { config, step, m, v })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<T>] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Vec<T>] {
        &self.v
    }

    /// One update over parallel lists of parameter and gradient tensors.
    /// Moments are allocated on the first call and must keep their shapes.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::InvalidValue("parameter and gradient shapes differ".into()));
        }
        if self.m.is_empty() && !params.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::InvalidValue("parameter shapes changed since the first step".into()));
        }

        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let k = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bc1 = T::one() - b1.powi(k);
        let bc2 = T::one() - b2.powi(k);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_model(&mut self, params: &mut ModelParams<T>, grads: &Gradients<T>) -> Result<()> {
        let g = grads.slices();
        self.step(&mut params.learnable_mut(), &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Adam::<f64>::new(AdamConfig::default());
        let mut p = vec![1.0, -2.0];
        opt.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_unit_gradient() {
        let mut opt = Adam::<f64>::new(AdamConfig::default());
        let mut p = vec![0.0];
        opt.step(&mut [&mut p], &[&[1.0]]).unwrap();
        assert!((p[0] - (-5e-4 / (1.0 + 1e-8))).abs() < 1e-18);
        assert!((p[0] + 4.99999995e-4).abs() < 1e-15);
    }

    #[test]
    fn two_steps_by_hand() {
        let mut opt = Adam::<f64>::new(AdamConfig::default());
        let mut p = vec![0.0];
        opt.step(&mut [&mut p], &[&[1.0]]).unwrap();
        opt.step(&mut [&mut p], &[&[1.0]]).unwrap();
        // m2 = 0.1*0.9 + 0.1 = 0.19; v2 = 0.001*0.999 + 0.001 = 0.001999
        assert!((opt.first_moment()[0][0] - 0.19).abs() < 1e-12);
        assert!((opt.second_moment()[0][0] - 0.001999).abs() < 1e-12);
        let m_hat = 0.19 / (1.0 - 0.81);
        let v_hat = 0.001999 / (1.0 - 0.998001);
        let second = 5e-4 * m_hat / (f64::sqrt(v_hat) + 1e-8);
        let first = 5e-4 / (1.0 + 1e-8);
        assert!((p[0] + first + second).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let mut opt = Adam::<f64>::new(AdamConfig::default());
        let mut p = vec![0.0; 2];
        assert!(opt.step(&mut [&mut p], &[&[1.0]]).is_err());
        opt.step(&mut [&mut p], &[&[1.0, 1.0]]).unwrap();
        let mut q = vec![0.0; 3];
        assert!(opt.step(&mut [&mut q], &[&[1.0, 1.0, 1.0]]).is_err());
    }

    #[test]
    fn constant_gradient_steps_are_bounded_by_lr() {
        let mut opt = Adam::<f64>::new(AdamConfig::default());
        let mut p = vec![0.0; 3];
        let g = [3.0, -0.001, 1e4];
        for _ in 0..50 {
            let before = p.clone();
            opt.step(&mut [&mut p], &[&g]).unwrap();
            for (a, b) in p.iter().zip(&before) {
                assert!((a - b).abs() <= 5e-4 * (1.0 + 1e-9));
            }
        }
    }
}
