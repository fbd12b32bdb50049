//! 3x3 convolution, stride 1, zero padding 1, lowered to GEMM via im2col.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Tensor3;
use crate::scalar::Scalar;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    in_channels: usize,
    out_channels: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvGrads<T> {
    pub fn zeros_like(layer: &Conv2d<T>) -> Self {
        Self {
            weight: vec![T::zero(); layer.weight.len()],
            bias: vec![T::zero(); layer.bias.len()],
        }
    }
}

/// Unfolds `input` into a `(C*9) x (H*W)` matrix; row `c*9 + ky*3 + kx`
/// holds the input shifted by `(ky-1, kx-1)` with zeros outside.
pub(crate) fn im2col<T: Scalar>(input: &Tensor3<T>, cols: &mut Vec<T>) {
    let (c, h, w) = input.shape();
    let hw = h * w;
    cols.clear();
    cols.resize(c * TAPS * hw, T::zero());
    for ch in 0..c {
        let src = input.channel(ch);
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[((ch * TAPS) + ky * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let srow = &src[sy as usize * w..][..w];
                    let drow = &mut row[y * w..][..w];
                    match kx {
                        0 => drow[1..].copy_from_slice(&srow[..w - 1]),
                        1 => drow.copy_from_slice(srow),
                        _ => drow[..w - 1].copy_from_slice(&srow[1..]),
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
pub(crate) fn col2im<T: Scalar>(cols: &[T], out: &mut Tensor3<T>) {
    let (c, h, w) = out.shape();
    let hw = h * w;
    for ch in 0..c {
        let dst = out.channel_mut(ch);
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[((ch * TAPS) + ky * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[sy as usize * w..][..w];
                    let srow = &row[y * w..][..w];
                    let (d, s) = match kx {
                        0 => (&mut drow[..w - 1], &srow[1..]),
                        1 => (&mut drow[..], srow),
                        _ => (&mut drow[1..], &srow[..w - 1]),
                    };
                    for (a, &b) in d.iter_mut().zip(s) {
                        *a += b;
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: vec![T::zero(); out_channels * in_channels * TAPS],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// He-uniform kernels (`U(-b, b)`, `b = sqrt(6 / fan_in)`), zero bias.
    pub fn he_uniform(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels);
        let bound = (6.0 / (in_channels * TAPS) as f64).sqrt();
        for w in &mut layer.weight {
            *w = T::lit(rng.gen_range(-bound..bound));
        }
        layer
    }

    pub fn from_parts(in_channels: usize, out_channels: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weight.len() != out_channels * in_channels * TAPS || bias.len() != out_channels {
            return Err(Error::InvalidValue(format!(
                "conv {in_channels}->{out_channels} needs {} weights and {out_channels} biases",
                out_channels * in_channels * TAPS
            )));
        }
        Ok(Self { in_channels, out_channels, weight, bias })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn check_input(&self, input: &Tensor3<T>) -> Result<()> {
        if input.channels() != self.in_channels {
            return Err(Error::Shape {
                expected: (self.in_channels, input.height(), input.width()),
                actual: input.shape(),
            });
        }
        if input.height() == 0 || input.width() == 0 {
            return Err(Error::InvalidValue("convolution input is empty".into()));
        }
        Ok(())
    }

    /// Cross-correlation with zero padding; output keeps the input's size.
    pub fn forward(&self, input: &Tensor3<T>) -> Result<Tensor3<T>> {
        let mut scratch = Vec::new();
        self.forward_with(input, &mut scratch)
    }

    pub(crate) fn forward_with(&self, input: &Tensor3<T>, cols: &mut Vec<T>) -> Result<Tensor3<T>> {
        self.check_input(input)?;
        let (_, h, w) = input.shape();
        let hw = h * w;
        let k = self.in_channels * TAPS;
        im2col(input, cols);
        let mut out = Tensor3::zeros(self.out_channels, h, w);
        for (o, &b) in self.bias.iter().enumerate() {
            out.channel_mut(o).fill(b);
        }
        T::gemm(
            self.out_channels,
            k,
            hw,
            T::one(),
            &self.weight,
            (k as isize, 1),
            cols,
            (hw as isize, 1),
            T::one(),
            out.data_mut(),
            (hw as isize, 1),
        );
        Ok(out)
    }

    /// Accumulates parameter gradients into `grads` and, when requested,
    /// returns the gradient with respect to `input`.
    pub fn backward(
        &self,
        input: &Tensor3<T>,
        grad_out: &Tensor3<T>,
        grads: &mut ConvGrads<T>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor3<T>>> {
        let mut scratch = Vec::new();
        self.backward_with(input, grad_out, grads, want_input_grad, &mut scratch)
    }

    pub(crate) fn backward_with(
        &self,
        input: &Tensor3<T>,
        grad_out: &Tensor3<T>,
        grads: &mut ConvGrads<T>,
        want_input_grad: bool,
        cols: &mut Vec<T>,
    ) -> Result<Option<Tensor3<T>>> {
        self.check_input(input)?;
        let (_, h, w) = input.shape();
        if grad_out.shape() != (self.out_channels, h, w) {
            return Err(Error::Shape {
                expected: (self.out_channels, h, w),
                actual: grad_out.shape(),
            });
        }
        let hw = h * w;
        let k = self.in_channels * TAPS;
        for (o, gb) in grads.bias.iter_mut().enumerate() {
            *gb += grad_out.channel(o).iter().fold(T::zero(), |a, &b| a + b);
        }
        im2col(input, cols);
        // dW += dY * cols^T
        T::gemm(
            self.out_channels,
            hw,
            k,
            T::one(),
            grad_out.data(),
            (hw as isize, 1),
            cols,
            (1, hw as isize),
            T::one(),
            &mut grads.weight,
            (k as isize, 1),
        );
        if !want_input_grad {
            return Ok(None);
        }
        // dcols = W^T * dY
        T::gemm(
            k,
            self.out_channels,
            hw,
            T::one(),
            &self.weight,
            (1, k as isize),
            grad_out.data(),
            (hw as isize, 1),
            T::zero(),
            cols,
            (hw as isize, 1),
        );
        let mut grad_in = Tensor3::zeros(self.in_channels, h, w);
        col2im(cols, &mut grad_in);
        Ok(Some(grad_in))
    }
}
