//! Forward computations of the non-convolutional layers and losses.
//!
//! These are the plain-tensor forms; [`crate::graph::Graph`] records them for
//! reverse-mode differentiation.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Clamp applied to predictions before taking logarithms in [`bce_loss`].
pub const BCE_EPSILON: f64 = 1e-7;

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Logistic sigmoid, kept strictly inside (0, 1) at the working precision.
pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

#[inline]
pub fn sigmoid_scalar<T: Real>(v: T) -> T {
    let one = T::one();
    let s = if v >= T::zero() {
        one / (one + (-v).exp())
    } else {
        let e = v.exp();
        e / (one + e)
    };
    let hi = one - T::epsilon() / T::from_f64(2.0);
    s.max(T::min_positive_value()).min(hi)
}

/// N×C×H×W → N×C, mean over the spatial dims.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = match *x.shape() {
        [n, c, h, w] => (n, c, h, w),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "global_avg_pool expects NCHW, got {:?}",
                x.shape()
            )))
        }
    };
    let area = T::from_f64((h * w) as f64);
    let out = x
        .data()
        .chunks_exact(h * w)
        .map(|plane| plane.iter().copied().sum::<T>() / area)
        .collect();
    Tensor::new([n, c], out)
}

/// `x·W + b` for x: N×D, W: D×M, b: M.
pub fn dense<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d) = match *x.shape() {
        [n, d] => (n, d),
        _ => return Err(Error::shape("dense", x.shape(), weight.shape())),
    };
    let m = match *weight.shape() {
        [wd, m] if wd == d => m,
        _ => return Err(Error::shape("dense", x.shape(), weight.shape())),
    };
    if bias.shape() != [m] {
        return Err(Error::shape("dense bias", weight.shape(), bias.shape()));
    }
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    T::gemm(n, d, m, x.data(), false, weight.data(), false, &mut out, true);
    Tensor::new([n, m], out)
}

/// Adds a per-channel bias to an N×C×H×W tensor.
pub fn add_channel_bias<T: Real>(x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c, h, w) = match *x.shape() {
        [n, c, h, w] => (n, c, h, w),
        _ => return Err(Error::shape("add_channel_bias", x.shape(), bias.shape())),
    };
    if bias.shape() != [c] {
        return Err(Error::shape("add_channel_bias", x.shape(), bias.shape()));
    }
    let mut out = x.clone();
    for (i, plane) in out.data_mut().chunks_exact_mut(h * w).enumerate() {
        let b = bias.data()[i % c];
        plane.iter_mut().for_each(|v| *v += b);
    }
    Ok(out)
}

/// Pixel-wise reconstruction loss: for each sample,
/// `(1/(h·w)) Σ_y Σ_x Σ_c (I − R)²`, averaged over the batch.
///
/// Accepts C×H×W or N×C×H×W. Squared differences are summed over channels
/// at each pixel, pixels are summed row-major, and the per-sample value is
/// divided by the pixel count.
pub fn mse_pixel_loss<T: Real>(original: &Tensor<T>, reconstruction: &Tensor<T>) -> Result<T> {
    if original.shape() != reconstruction.shape() {
        return Err(Error::shape("mse_pixel_loss", original.shape(), reconstruction.shape()));
    }
    let (n, c, h, w) = original.nchw()?;
    let plane = h * w;
    let sample = c * plane;
    let (a, b) = (original.data(), reconstruction.data());
    let pixels = T::from_f64(plane as f64);
    let mut total = T::zero();
    for s in 0..n {
        let mut per_sample = T::zero();
        for y in 0..h {
            for x in 0..w {
                let mut px = T::zero();
                for ch in 0..c {
                    let i = s * sample + ch * plane + y * w + x;
                    let d = a[i] - b[i];
                    px += d * d;
                }
                per_sample += px;
            }
        }
        total += per_sample / pixels;
    }
    Ok(total / T::from_f64(n as f64))
}

/// Binary cross-entropy of one prediction against a {0,1} label, with the
/// prediction clamped to `[ε, 1 − ε]`.
pub fn bce_loss<T: Real>(prediction: T, label: T) -> T {
    let eps = T::from_f64(BCE_EPSILON);
    let p = prediction.max(eps).min(T::one() - eps);
    -(label * p.ln() + (T::one() - label) * (T::one() - p).ln())
}

/// Row-wise numerically stable softmax of an N×K tensor.
pub fn softmax_rows<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let k = match *logits.shape() {
        [_, k] => k,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "softmax expects N×K, got {:?}",
                logits.shape()
            )))
        }
    };
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v = *v / z);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_of_zero_is_half() {
        assert_eq!(sigmoid_scalar(0.0f32), 0.5);
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
    }

    #[test]
    fn sigmoid_strictly_inside_unit_interval() {
        for v in [-1e4f32, -100.0, -20.0, 20.0, 100.0, 1e4] {
            let s = sigmoid_scalar(v);
            assert!(s > 0.0 && s < 1.0, "sigmoid({v}) = {s}");
        }
    }

    #[test]
    fn relu_clamps_negative() {
        let t = Tensor::<f32>::new([3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn pool_hand_mean() {
        let x = Tensor::<f32>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[2.5]);
        let c = Tensor::<f32>::full([2, 3, 5, 4], 0.75);
        assert!(global_avg_pool(&c).unwrap().data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn dense_identity_and_zero_weights() {
        let x = Tensor::<f64>::from_fn([2, 3], |i| i as f64 - 1.5);
        let eye = Tensor::<f64>::from_fn([3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let zero_b = Tensor::<f64>::zeros([3]);
        assert_eq!(dense(&x, &eye, &zero_b).unwrap(), x);

        let bias = Tensor::<f64>::new([3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = dense(&x, &Tensor::zeros([3, 3]), &bias).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn dense_dim_mismatch() {
        let x = Tensor::<f32>::zeros([2, 3]);
        let w = Tensor::<f32>::zeros([4, 3]);
        assert!(dense(&x, &w, &Tensor::zeros([3])).is_err());
    }

    #[test]
    fn mse_hand_computation() {
        let i = Tensor::<f64>::new([1, 2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let r = Tensor::<f64>::new([1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(mse_pixel_loss(&i, &r).unwrap(), 1.0);
        assert_eq!(mse_pixel_loss(&i, &i).unwrap(), 0.0);
    }

    #[test]
    fn mse_sums_channels_per_pixel() {
        // Two channels each off by 1 at every pixel: ‖·‖² = 2 per pixel.
        let i = Tensor::<f64>::zeros([2, 3, 3]);
        let r = Tensor::<f64>::full([2, 3, 3], 1.0);
        assert_eq!(mse_pixel_loss(&i, &r).unwrap(), 2.0);
    }

    #[test]
    fn mse_shape_mismatch() {
        let a = Tensor::<f32>::zeros([1, 2, 2]);
        let b = Tensor::<f32>::zeros([1, 2, 3]);
        assert!(matches!(mse_pixel_loss(&a, &b), Err(Error::Shape { .. })));
    }

    #[test]
    fn bce_reference_values() {
        assert!((bce_loss(0.5f64, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5f64, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(1.0f64, 1.0) < 2.0 * BCE_EPSILON);
        assert!(bce_loss(0.0f64, 0.0) < 2.0 * BCE_EPSILON);
        assert!(bce_loss(0.0f64, 1.0).is_finite());
    }
}
