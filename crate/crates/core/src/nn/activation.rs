use crate::image::Tensor3;
use crate::scalar::Scalar;

pub const LEAKY_SLOPE: f64 = 0.2;

#[inline]
pub fn leaky<T: Scalar>(v: T, slope: T) -> T {
    if v >= T::zero() {
        v
    } else {
        v * slope
    }
}

pub fn leaky_relu<T: Scalar>(x: &Tensor3<T>, slope: T) -> Tensor3<T> {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = leaky(*v, slope);
    }
    out
}

/// Gradient through leaky ReLU given the pre-activation `x`.
pub fn leaky_relu_backward<T: Scalar>(x: &Tensor3<T>, grad_out: &Tensor3<T>, slope: T) -> Tensor3<T> {
    let mut g = grad_out.clone();
    for (d, &v) in g.data_mut().iter_mut().zip(x.data()) {
        if v < T::zero() {
            *d *= slope;
        }
    }
    g
}
