//! Event-weighted training objective.
//!
//! `L = sum (1 + l_fid*E)^2 (f - r)^2  +  sum_{d in x,y} (l_tv*(4 - E))^2 g_d(r)^2`
//!
//! where `E` is the per-pixel event count (0..=4) and `g_x`, `g_y` are the
//! Sobel responses of the restored frame `r`. Both terms are sums over
//! pixels. Pixels where many events fired get a heavier fidelity weight and
//! a lighter smoothness penalty.

use crate::error::{Error, Result};
use crate::image::Plane;
use crate::scalar::Scalar;

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Maximum value of the event-count map.
pub const MAX_EVENT_COUNT: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_fid: f64,
    pub lambda_tv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_fid: 0.5, lambda_tv: 0.05 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_fid >= 0.0 && self.lambda_tv >= 0.0) {
            return Err(Error::InvalidValue(format!("loss weights must be nonnegative: {self:?}")));
        }
        Ok(())
    }
}

/// Horizontal and vertical Sobel responses.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientPair<T> {
    pub gx: Plane<T>,
    pub gy: Plane<T>,
}

fn check_min_size<T: Copy>(img: &Plane<T>) -> Result<()> {
    if img.height() < 3 || img.width() < 3 {
        return Err(Error::InvalidValue(format!(
            "Sobel gradients need at least 3x3 pixels, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

#[inline]
fn clamp_index(i: usize, d: usize, n: usize) -> usize {
    (i + d).saturating_sub(1).min(n - 1)
}

#[cfg(test)]
fn correlate_replicate<T: Scalar>(img: &Plane<T>, kernel: &[[f64; 3]; 3]) -> Plane<T> {
    let (h, w) = img.dims();
    let k = kernel.map(|row| row.map(T::lit));
    Plane::from_fn(h, w, |y, x| {
        let mut acc = T::zero();
        for (ky, row) in k.iter().enumerate() {
            let sy = clamp_index(y, ky, h);
            for (kx, &kv) in row.iter().enumerate() {
                if kv != T::zero() {
                    acc += kv * img.get(sy, clamp_index(x, kx, w));
                }
            }
        }
        acc
    })
}

/// Adjoint of correlating with `kernel` under replicate padding: accumulates `kernel^T` applied to
/// `grad` into `out`, folding border taps back onto the edge pixels.
fn correlate_replicate_adjoint<T: Scalar>(grad: &Plane<T>, kernel: &[[f64; 3]; 3], out: &mut Plane<T>) {
    let (h, w) = grad.dims();
    let k = kernel.map(|row| row.map(T::lit));
    for y in 0..h {
        for x in 0..w {
            let g = grad.get(y, x);
            if g == T::zero() {
                continue;
            }
            for (ky, row) in k.iter().enumerate() {
                let sy = clamp_index(y, ky, h);
                for (kx, &kv) in row.iter().enumerate() {
                    if kv != T::zero() {
                        let sx = clamp_index(x, kx, w);
                        out.set(sy, sx, out.get(sy, sx) + kv * g);
                    }
                }
            }
        }
    }
}

/// 3x3 Sobel responses with replicated borders.
pub fn sobel_gradients<T: Scalar>(img: &Plane<T>) -> Result<GradientPair<T>> {
    check_min_size(img)?;
    let (h, w) = img.dims();
    let two = T::lit(2.0);
    // separable form: central difference along one axis, [1 2 1] along the other
    let dx = Plane::from_fn(h, w, |y, x| img.get(y, clamp_index(x, 2, w)) - img.get(y, clamp_index(x, 0, w)));
    let dy = Plane::from_fn(h, w, |y, x| img.get(clamp_index(y, 2, h), x) - img.get(clamp_index(y, 0, h), x));
    let gx = Plane::from_fn(h, w, |y, x| {
        dx.get(clamp_index(y, 0, h), x) + two * dx.get(y, x) + dx.get(clamp_index(y, 2, h), x)
    });
    let gy = Plane::from_fn(h, w, |y, x| {
        dy.get(y, clamp_index(x, 0, w)) + two * dy.get(y, x) + dy.get(y, clamp_index(x, 2, w))
    });
    Ok(GradientPair { gx, gy })
}

/// Weighted fidelity term and its gradient with respect to `r`.
pub fn fidelity_loss<T: Scalar>(f: &Plane<T>, r: &Plane<T>, ebar: &Plane<T>, w: LossWeights) -> Result<(T, Plane<T>)> {
    f.check_same_dims(r)?;
    f.check_same_dims(ebar)?;
    let lf = T::lit(w.lambda_fid);
    let two = T::lit(2.0);
    let mut total = T::zero();
    let mut grad = Plane::zeros(r.height(), r.width());
    for (((&fv, &rv), &e), g) in f.data().iter().zip(r.data()).zip(ebar.data()).zip(grad.data_mut()) {
        let weight = T::one() + lf * e;
        let d = fv - rv;
        let wd = weight * d;
        total += wd * wd;
        *g = -two * weight * weight * d;
    }
    Ok((total, grad))
}

/// Event-weighted total-variation term and its gradient with respect to `r`.
pub fn tv_loss<T: Scalar>(r: &Plane<T>, ebar: &Plane<T>, w: LossWeights) -> Result<(T, Plane<T>)> {
    r.check_same_dims(ebar)?;
    let grads = sobel_gradients(r)?;
    let lt = T::lit(w.lambda_tv);
    let four = T::lit(MAX_EVENT_COUNT);
    let two = T::lit(2.0);
    let (h, wd) = r.dims();
    let mut total = T::zero();
    let mut dgx = Plane::zeros(h, wd);
    let mut dgy = Plane::zeros(h, wd);
    for i in 0..r.len() {
        let k = lt * (four - ebar.data()[i]);
        let k2 = k * k;
        let (gx, gy) = (grads.gx.data()[i], grads.gy.data()[i]);
        total += k2 * (gx * gx + gy * gy);
        dgx.data_mut()[i] = two * k2 * gx;
        dgy.data_mut()[i] = two * k2 * gy;
    }
    let mut grad = Plane::zeros(h, wd);
    correlate_replicate_adjoint(&dgx, &SOBEL_X, &mut grad);
    correlate_replicate_adjoint(&dgy, &SOBEL_Y, &mut grad);
    Ok((total, grad))
}

/// Breakdown of one loss evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<T> {
    pub fidelity: T,
    pub tv: T,
    pub total: T,
    pub grad: Plane<T>,
}

pub fn total_loss<T: Scalar>(f: &Plane<T>, r: &Plane<T>, ebar: &Plane<T>, w: LossWeights) -> Result<LossValue<T>> {
    let (fid, mut grad) = fidelity_loss(f, r, ebar, w)?;
    let (tv, g_tv) = tv_loss(r, ebar, w)?;
    for (a, &b) in grad.data_mut().iter_mut().zip(g_tv.data()) {
        *a += b;
    }
    Ok(LossValue { fidelity: fid, tv, total: fid + tv, grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(step: f64) -> Plane<f64> {
        Plane::from_fn(3, 3, |_, x| x as f64 * step)
    }

    #[test]
    fn constant_image_has_zero_gradient() {
        let g = sobel_gradients(&Plane::filled(4, 5, 0.7)).unwrap();
        assert!(g.gx.data().iter().chain(g.gy.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_response() {
        // columns 0, 0.5, 1: centre tap sees 1.0 across two columns, times 1+2+1
        let g = sobel_gradients(&ramp(0.5)).unwrap();
        assert_eq!(g.gx.get(1, 1), 4.0);
        assert_eq!(g.gy.get(1, 1), 0.0);
        let g = sobel_gradients(&ramp(0.25)).unwrap();
        assert_eq!(g.gx.get(1, 1), 2.0);
        // replicate border: left column sees (0.25 - 0) * 4
        assert_eq!(g.gx.get(1, 0), 1.0);
    }

    #[test]
    fn separable_matches_direct_kernel() {
        let img = Plane::from_fn(5, 7, |y, x| ((y * 11 + x * 5) % 9) as f64 / 8.0);
        let g = sobel_gradients(&img).unwrap();
        let (dx, dy) = (correlate_replicate(&img, &SOBEL_X), correlate_replicate(&img, &SOBEL_Y));
        for i in 0..img.len() {
            assert!((g.gx.data()[i] - dx.data()[i]).abs() < 1e-12);
            assert!((g.gy.data()[i] - dy.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_symmetry() {
        let img = Plane::from_fn(4, 6, |y, x| ((y * 13 + x * 7) % 5) as f64 / 4.0);
        let a = sobel_gradients(&img.transpose()).unwrap();
        let b = sobel_gradients(&img).unwrap();
        assert_eq!(a.gx, b.gy.transpose());
    }

    #[test]
    fn too_small() {
        assert!(sobel_gradients(&Plane::<f64>::zeros(2, 5)).is_err());
    }

    #[test]
    fn fidelity_worked_values() {
        let f = Plane::filled(1, 1, 0.75);
        let r = Plane::filled(1, 1, 0.25);
        let w = LossWeights::default();
        let (l4, _) = fidelity_loss(&f, &r, &Plane::filled(1, 1, 4.0), w).unwrap();
        assert_eq!(l4, 2.25);
        let (l0, g0) = fidelity_loss(&f, &r, &Plane::filled(1, 1, 0.0), w).unwrap();
        assert_eq!(l0, 0.25);
        assert_eq!(g0.get(0, 0), -1.0);
        let (same, g) = fidelity_loss(&f, &f, &Plane::filled(1, 1, 2.0), w).unwrap();
        assert_eq!(same, 0.0);
        assert_eq!(g.get(0, 0), 0.0);
    }

    #[test]
    fn tv_worked_values() {
        let w = LossWeights::default();
        let (l, g) = tv_loss(&Plane::filled(5, 5, 0.3), &Plane::zeros(5, 5), w).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));

        let img = Plane::from_fn(5, 5, |y, x| ((x * 3 + y) % 4) as f64 / 3.0);
        let (l, _) = tv_loss(&img, &Plane::filled(5, 5, 4.0), w).unwrap();
        assert_eq!(l, 0.0);

        // interior x-term of the 0.25-step ramp: (0.05 * 4 * 2)^2
        let term = (0.05f64 * 4.0 * 2.0).powi(2);
        assert!((term - 0.16).abs() < 1e-15);
        let grads = sobel_gradients(&ramp(0.25)).unwrap();
        let k = 0.05 * (4.0 - 0.0);
        assert!(((k * grads.gx.get(1, 1)).powi(2) - 0.16).abs() < 1e-15);
    }

    #[test]
    fn zero_lambdas_reduce_to_sse() {
        let f = Plane::from_fn(4, 4, |y, x| (y + x) as f64 / 6.0);
        let r = Plane::from_fn(4, 4, |y, x| (y * x) as f64 / 9.0);
        let e = Plane::filled(4, 4, 3.0);
        let v = total_loss(&f, &r, &e, LossWeights { lambda_fid: 0.0, lambda_tv: 0.0 }).unwrap();
        let sse: f64 = f.data().iter().zip(r.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((v.total - sse).abs() < 1e-12);
        assert_eq!(v.tv, 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Plane::<f64>::zeros(4, 4);
        let b = Plane::<f64>::zeros(4, 5);
        assert!(fidelity_loss(&a, &b, &a, LossWeights::default()).is_err());
        assert!(tv_loss(&a, &b, LossWeights::default()).is_err());
    }
}
