//! The restoration network.
//!
//! ```text
//! x (6 ch) -> conv 6->32 -> lrelu -> [residual block] x 4 -> conv 32->1 -> + x[0]
//! residual block: a -> conv -> bn -> lrelu -> conv -> bn -> (+ a)
//! ```
//!
//! The tail convolution starts at zero, so a fresh model returns its
//! degraded input frame unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::activation::{leaky_relu, leaky_relu_backward, LEAKY_SLOPE};
use super::batchnorm::{BatchNorm, BatchStats, BnCache, BnGrads, Mode};
use super::conv::{Conv2d, ConvGrads};
use crate::error::{Error, Result};
use crate::image::{Plane, Tensor3};
use crate::scalar::Scalar;

/// Channel widths and depth of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub in_channels: usize,
    pub features: usize,
    pub blocks: usize,
    pub out_channels: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { in_channels: 6, features: 32, blocks: 4, out_channels: 1 }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}->{}x{} blocks->{}",
            self.in_channels, self.features, self.blocks, self.out_channels
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock<T> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    arch: Architecture,
    pub head: Conv2d<T>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub tail: Conv2d<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrads<T> {
    pub conv1: ConvGrads<T>,
    pub bn1: BnGrads<T>,
    pub conv2: ConvGrads<T>,
    pub bn2: BnGrads<T>,
}

/// Gradients of every learnable tensor, laid out like [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub head: ConvGrads<T>,
    pub blocks: Vec<BlockGrads<T>>,
    pub tail: ConvGrads<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// He-uniform kernels from `seed`, identity batch norms, zero tail.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = Conv2d::he_uniform(arch.in_channels, arch.features, &mut rng);
        let blocks = (0..arch.blocks)
            .map(|_| ResidualBlock {
                conv1: Conv2d::he_uniform(arch.features, arch.features, &mut rng),
                bn1: BatchNorm::new(arch.features),
                conv2: Conv2d::he_uniform(arch.features, arch.features, &mut rng),
                bn2: BatchNorm::new(arch.features),
            })
            .collect();
        let tail = Conv2d::zeros(arch.features, arch.out_channels);
        Self { arch, head, blocks, tail }
    }

    pub fn from_parts(arch: Architecture, head: Conv2d<T>, blocks: Vec<ResidualBlock<T>>, tail: Conv2d<T>) -> Result<Self> {
        let bad = || Error::Architecture {
            expected: arch.to_string(),
            found: format!(
                "{}->{}x{} blocks->{}",
                head.in_channels(),
                head.out_channels(),
                blocks.len(),
                tail.out_channels()
            ),
        };
        if head.in_channels() != arch.in_channels
            || head.out_channels() != arch.features
            || tail.in_channels() != arch.features
            || tail.out_channels() != arch.out_channels
            || blocks.len() != arch.blocks
        {
            return Err(bad());
        }
        for b in &blocks {
            let f = arch.features;
            if b.conv1.in_channels() != f
                || b.conv1.out_channels() != f
                || b.conv2.in_channels() != f
                || b.conv2.out_channels() != f
                || b.bn1.channels() != f
                || b.bn2.channels() != f
            {
                return Err(bad());
            }
        }
        Ok(Self { arch, head, blocks, tail })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    /// Learnable tensors in canonical order: head, then per block conv1,
    /// bn1 (gamma, beta), conv2, bn2, then tail. Weights precede biases.
    pub fn learnable(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = vec![&self.head.weight, &self.head.bias];
        for b in &self.blocks {
            v.extend([
                &b.conv1.weight[..],
                &b.conv1.bias,
                &b.bn1.gamma,
                &b.bn1.beta,
                &b.conv2.weight,
                &b.conv2.bias,
                &b.bn2.gamma,
                &b.bn2.beta,
            ]);
        }
        v.extend([&self.tail.weight[..], &self.tail.bias]);
        v
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = vec![&mut self.head.weight, &mut self.head.bias];
        for b in &mut self.blocks {
            v.extend([
                &mut b.conv1.weight[..],
                &mut b.conv1.bias,
                &mut b.bn1.gamma,
                &mut b.bn1.beta,
                &mut b.conv2.weight,
                &mut b.conv2.bias,
                &mut b.bn2.gamma,
                &mut b.bn2.beta,
            ]);
        }
        v.extend([&mut self.tail.weight[..], &mut self.tail.bias]);
        v
    }

    pub fn learnable_count(&self) -> usize {
        self.learnable().iter().map(|s| s.len()).sum()
    }

    /// Learnable values plus running statistics.
    pub fn total_count(&self) -> usize {
        self.learnable_count() + self.blocks.len() * 4 * self.arch.features
    }

    fn check_input(&self, x: &Tensor3<T>) -> Result<()> {
        let (c, h, w) = x.shape();
        if c != self.arch.in_channels || h == 0 || w == 0 {
            return Err(Error::Shape { expected: (self.arch.in_channels, h, w), actual: x.shape() });
        }
        Ok(())
    }

    /// Batched forward pass returning unclamped outputs and the activations
    /// needed by [`ModelParams::backward`]. Running statistics are left
    /// untouched; apply them with [`ModelParams::apply_batch_stats`].
    pub fn forward_batch(&self, batch: &[Tensor3<T>], mode: Mode) -> Result<(Vec<Plane<T>>, ForwardCache<T>)> {
        let first = batch
            .first()
            .ok_or_else(|| Error::InvalidValue("empty batch".into()))?;
        for x in batch {
            self.check_input(x)?;
            if x.shape() != first.shape() {
                return Err(Error::Shape { expected: first.shape(), actual: x.shape() });
            }
        }
        let slope = T::lit(LEAKY_SLOPE);
        let mut cols = Vec::new();

        let head_pre = batch
            .iter()
            .map(|x| self.head.forward_with(x, &mut cols))
            .collect::<Result<Vec<_>>>()?;
        let mut act: Vec<Tensor3<T>> = head_pre.iter().map(|h| leaky_relu(h, slope)).collect();

        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut stats = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let z1 = act
                .iter()
                .map(|a| b.conv1.forward_with(a, &mut cols))
                .collect::<Result<Vec<_>>>()?;
            let (n1, bn1, s1) = b.bn1.forward_pure(&z1, mode)?;
            drop(z1);
            let u: Vec<_> = n1.iter().map(|v| leaky_relu(v, slope)).collect();
            let z2 = u
                .iter()
                .map(|v| b.conv2.forward_with(v, &mut cols))
                .collect::<Result<Vec<_>>>()?;
            let (n2, bn2, s2) = b.bn2.forward_pure(&z2, mode)?;
            drop(z2);
            let mut next = act.clone();
            for (a, n) in next.iter_mut().zip(&n2) {
                a.add_assign(n);
            }
            blocks.push(BlockCache { input: std::mem::replace(&mut act, next), bn1_out: n1, u, bn1, bn2 });
            stats.push((s1, s2));
        }

        let mut outputs = Vec::with_capacity(batch.len());
        for (x, a) in batch.iter().zip(&act) {
            let t = self.tail.forward_with(a, &mut cols)?;
            let mut r = x.channel_plane(0);
            for (o, &d) in r.data_mut().iter_mut().zip(t.channel(0)) {
                *o += d;
            }
            outputs.push(r);
        }
        let cache = ForwardCache { input: batch.to_vec(), head_pre, blocks, tail_in: act, stats };
        Ok((outputs, cache))
    }

    /// Eval-mode restoration of one input volume, clamped to `[0, 1]`.
    pub fn restore(&self, x: &Tensor3<T>) -> Result<Plane<T>> {
        let (mut out, _) = self.forward_batch(std::slice::from_ref(x), Mode::Eval)?;
        Ok(out.remove(0).clamp01())
    }

    /// Reverse-mode gradients of `sum_i <grad_out[i], r_i>` with respect to
    /// every learnable parameter.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &[Plane<T>]) -> Result<Gradients<T>> {
        if grad_out.len() != cache.input.len() || cache.blocks.len() != self.blocks.len() {
            return Err(Error::MissingCache("forward cache does not match this model or batch"));
        }
        let slope = T::lit(LEAKY_SLOPE);
        let mut cols = Vec::new();
        let mut grads = Gradients::zeros(self);

        let mut d_act = Vec::with_capacity(grad_out.len());
        for (g, a) in grad_out.iter().zip(&cache.tail_in) {
            if g.dims() != (a.height(), a.width()) {
                return Err(Error::Shape {
                    expected: (1, a.height(), a.width()),
                    actual: (1, g.height(), g.width()),
                });
            }
            let dt = Tensor3::from_vec(1, g.height(), g.width(), g.data().to_vec())?;
            let da = self
                .tail
                .backward_with(a, &dt, &mut grads.tail, true, &mut cols)?
                .expect("input gradient requested");
            d_act.push(da);
        }

        for ((b, bc), bg) in self.blocks.iter().zip(&cache.blocks).zip(&mut grads.blocks).rev() {
            let dz2 = b.bn2.backward(&bc.bn2, &d_act, &mut bg.bn2)?;
            let mut dn1 = Vec::with_capacity(dz2.len());
            for ((u, n1), dz) in bc.u.iter().zip(&bc.bn1_out).zip(&dz2) {
                let du = b
                    .conv2
                    .backward_with(u, dz, &mut bg.conv2, true, &mut cols)?
                    .expect("input gradient requested");
                dn1.push(leaky_relu_backward(n1, &du, slope));
            }
            let dz1 = b.bn1.backward(&bc.bn1, &dn1, &mut bg.bn1)?;
            for ((a, dz), da) in bc.input.iter().zip(&dz1).zip(&mut d_act) {
                let extra = b
                    .conv1
                    .backward_with(a, dz, &mut bg.conv1, true, &mut cols)?
                    .expect("input gradient requested");
                da.add_assign(&extra);
            }
        }

        for ((x, h), da) in cache.input.iter().zip(&cache.head_pre).zip(&d_act) {
            let dh = leaky_relu_backward(h, da, slope);
            self.head.backward_with(x, &dh, &mut grads.head, false, &mut cols)?;
        }
        Ok(grads)
    }

    /// Folds the batch statistics recorded by a train-mode pass into the
    /// running statistics.
    pub fn apply_batch_stats(&mut self, cache: &ForwardCache<T>) {
        for (b, (s1, s2)) in self.blocks.iter_mut().zip(&cache.stats) {
            if let Some(s) = s1 {
                b.bn1.update_running(s);
            }
            if let Some(s) = s2 {
                b.bn2.update_running(s);
            }
        }
    }
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros(params: &ModelParams<T>) -> Self {
        Self {
            head: ConvGrads::zeros_like(&params.head),
            blocks: params
                .blocks
                .iter()
                .map(|b| BlockGrads {
                    conv1: ConvGrads::zeros_like(&b.conv1),
                    bn1: BnGrads::zeros(b.bn1.channels()),
                    conv2: ConvGrads::zeros_like(&b.conv2),
                    bn2: BnGrads::zeros(b.bn2.channels()),
                })
                .collect(),
            tail: ConvGrads::zeros_like(&params.tail),
        }
    }

    /// Same order as [`ModelParams::learnable`].
    pub fn slices(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = vec![&self.head.weight, &self.head.bias];
        for b in &self.blocks {
            v.extend([
                &b.conv1.weight[..],
                &b.conv1.bias,
                &b.bn1.gamma,
                &b.bn1.beta,
                &b.conv2.weight,
                &b.conv2.bias,
                &b.bn2.gamma,
                &b.bn2.beta,
            ]);
        }
        v.extend([&self.tail.weight[..], &self.tail.bias]);
        v
    }

    pub fn flatten(&self) -> Vec<T> {
        self.slices().concat()
    }
}

#[derive(Clone, Debug)]
struct BlockCache<T> {
    input: Vec<Tensor3<T>>,
    bn1_out: Vec<Tensor3<T>>,
    u: Vec<Tensor3<T>>,
    bn1: BnCache<T>,
    bn2: BnCache<T>,
}

/// Activations saved by a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    input: Vec<Tensor3<T>>,
    head_pre: Vec<Tensor3<T>>,
    blocks: Vec<BlockCache<T>>,
    tail_in: Vec<Tensor3<T>>,
    stats: Vec<(Option<BatchStats<T>>, Option<BatchStats<T>>)>,
}

/// A model together with the cache of its most recent forward pass.
#[derive(Clone, Debug)]
pub struct Network<T> {
    pub params: ModelParams<T>,
    cache: Option<ForwardCache<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(params: ModelParams<T>) -> Self {
        Self { params, cache: None }
    }

    /// Forward pass that keeps its activations for [`Network::backward`]
    /// and, in train mode, updates the batch-norm running statistics.
    pub fn forward(&mut self, batch: &[Tensor3<T>], mode: Mode) -> Result<Vec<Plane<T>>> {
        let (out, cache) = self.params.forward_batch(batch, mode)?;
        if mode == Mode::Train {
            self.params.apply_batch_stats(&cache);
        }
        self.cache = Some(cache);
        Ok(out)
    }

    pub fn backward(&self, grad_out: &[Plane<T>]) -> Result<Gradients<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::MissingCache("backward called before forward"))?;
        self.params.backward(cache, grad_out)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
