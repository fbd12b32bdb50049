//! Per-channel batch normalization over batch and spatial positions.

use crate::error::{Error, Result};
use crate::image::Tensor3;
use crate::scalar::Scalar;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: T,
    pub momentum: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnGrads<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Scalar> BnGrads<T> {
    pub fn zeros(channels: usize) -> Self {
        Self { gamma: vec![T::zero(); channels], beta: vec![T::zero(); channels] }
    }
}

/// Statistics of one train-mode pass: batch mean and unbiased variance.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct BnCache<T> {
    mode: Mode,
    xhat: Vec<Tensor3<T>>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon: T::lit(BN_EPSILON),
            momentum: T::lit(BN_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, batch: &[Tensor3<T>]) -> Result<()> {
        let first = batch
            .first()
            .ok_or_else(|| Error::InvalidValue("batch norm on an empty batch".into()))?;
        for x in batch {
            if x.channels() != self.channels() || x.shape() != first.shape() {
                return Err(Error::Shape {
                    expected: (self.channels(), first.height(), first.width()),
                    actual: x.shape(),
                });
            }
        }
        Ok(())
    }

    /// Normalizes a batch without touching the running statistics. In train
    /// mode the batch statistics are returned so the caller can fold them in
    /// with [`BatchNorm::update_running`].
    pub fn forward_pure(
        &self,
        batch: &[Tensor3<T>],
        mode: Mode,
    ) -> Result<(Vec<Tensor3<T>>, BnCache<T>, Option<BatchStats<T>>)> {
        self.check(batch)?;
        let channels = self.channels();
        let count = batch.len() * batch[0].plane_len();
        let (mean, inv_std, stats) = match mode {
            Mode::Eval => {
                let inv: Vec<T> = self
                    .running_var
                    .iter()
                    .map(|&v| T::one() / (v + self.epsilon).sqrt())
                    .collect();
                (self.running_mean.clone(), inv, None)
            }
            Mode::Train => {
                let n = T::from_usize(count).unwrap();
                let mut mean = vec![T::zero(); channels];
                let mut var = vec![T::zero(); channels];
                for c in 0..channels {
                    let s = batch
                        .iter()
                        .flat_map(|x| x.channel(c))
                        .fold(T::zero(), |a, &b| a + b);
                    mean[c] = s / n;
                    let m = mean[c];
                    var[c] = batch
                        .iter()
                        .flat_map(|x| x.channel(c))
                        .fold(T::zero(), |a, &b| a + (b - m) * (b - m))
                        / n;
                }
                let inv = var.iter().map(|&v| T::one() / (v + self.epsilon).sqrt()).collect();
                let unbiased = if count > 1 {
                    let f = n / (n - T::one());
                    var.iter().map(|&v| v * f).collect()
                } else {
                    var.clone()
                };
                (mean.clone(), inv, Some(BatchStats { mean, var: unbiased }))
            }
        };

        let mut outs = Vec::with_capacity(batch.len());
        let mut xhats = Vec::with_capacity(batch.len());
        for x in batch {
            let mut xhat = x.clone();
            let mut y = x.clone();
            for c in 0..channels {
                let (m, s, g, b) = (mean[c], inv_std[c], self.gamma[c], self.beta[c]);
                for (h, o) in xhat.channel_mut(c).iter_mut().zip(y.channel_mut(c)) {
                    *h = (*h - m) * s;
                    *o = g * *h + b;
                }
            }
            outs.push(y);
            xhats.push(xhat);
        }
        Ok((outs, BnCache { mode, xhat: xhats, inv_std }, stats))
    }

    /// Exponential moving average with the layer's momentum.
    pub fn update_running(&mut self, stats: &BatchStats<T>) {
        let m = self.momentum;
        for c in 0..self.channels() {
            self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * stats.mean[c];
            self.running_var[c] = (T::one() - m) * self.running_var[c] + m * stats.var[c];
        }
    }

    /// Forward pass that also updates running statistics in train mode.
    pub fn forward(&mut self, batch: &[Tensor3<T>], mode: Mode) -> Result<Vec<Tensor3<T>>> {
        let (out, _, stats) = self.forward_pure(batch, mode)?;
        if let Some(s) = stats {
            self.update_running(&s);
        }
        Ok(out)
    }

    pub fn backward(&self, cache: &BnCache<T>, grad_out: &[Tensor3<T>], grads: &mut BnGrads<T>) -> Result<Vec<Tensor3<T>>> {
        if grad_out.len() != cache.xhat.len() {
            return Err(Error::MissingCache("batch norm cache batch size differs from gradient"));
        }
        let channels = self.channels();
        let count = grad_out.len() * grad_out[0].plane_len();
        let n = T::from_usize(count).unwrap();
        let mut sum_dy = vec![T::zero(); channels];
        let mut sum_dy_xhat = vec![T::zero(); channels];
        for (dy, xh) in grad_out.iter().zip(&cache.xhat) {
            if dy.shape() != xh.shape() {
                return Err(Error::Shape { expected: xh.shape(), actual: dy.shape() });
            }
            for c in 0..channels {
                for (&d, &h) in dy.channel(c).iter().zip(xh.channel(c)) {
                    sum_dy[c] += d;
                    sum_dy_xhat[c] += d * h;
                }
            }
        }
        for c in 0..channels {
            grads.gamma[c] += sum_dy_xhat[c];
            grads.beta[c] += sum_dy[c];
        }
        let mut out = Vec::with_capacity(grad_out.len());
        for (dy, xh) in grad_out.iter().zip(&cache.xhat) {
            let mut dx = dy.clone();
            for c in 0..channels {
                let scale = self.gamma[c] * cache.inv_std[c];
                match cache.mode {
                    Mode::Eval => {
                        for d in dx.channel_mut(c) {
                            *d *= scale;
                        }
                    }
                    Mode::Train => {
                        let (mdy, mdyx) = (sum_dy[c] / n, sum_dy_xhat[c] / n);
                        for (d, &h) in dx.channel_mut(c).iter_mut().zip(xh.channel(c)) {
                            *d = scale * (*d - mdy - h * mdyx);
                        }
                    }
                }
            }
            out.push(dx);
        }
        Ok(out)
    }
}
