//! im2col-based 2-D convolution kernels.
//!
//! Kernels are `[C_out, C_in, K, K]`. The transposed convolution reuses
//! [`conv2d_backward_data`] as its forward pass, so the two are adjoint by
//! construction.

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// `floor((size + 2·pad − k) / stride) + 1`, or `None` when the kernel does
/// not fit.
pub fn conv_output_dim(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// `(size − 1)·stride − 2·pad + k`, or `None` when that is not positive.
pub fn transposed_conv_output_dim(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let full = (size.checked_sub(1)?) * stride + k;
    full.checked_sub(2 * pad).filter(|&d| d > 0)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<T: Real>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let plane = g.col_cols();
    for c in 0..g.c {
        let src = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &Geometry, x: &mut [T]) {
    let plane = g.col_cols();
    for c in 0..g.c {
        let dst = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn kernel_dims<T: Real>(kernel: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *kernel.shape() {
        [co, ci, kh, kw] if kh == kw => Ok((co, ci, kh)),
        _ => Err(Error::InvalidArgument(format!(
            "conv kernel must be [C_out, C_in, K, K], got {:?}",
            kernel.shape()
        ))),
    }
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::InvalidArgument("conv stride must be ≥ 1".into()));
    }
    Ok(())
}

fn batched(t: &Tensor<impl Real>) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::InvalidArgument(format!(
            "expected NCHW tensor, got shape {:?}",
            t.shape()
        ))),
    }
}

pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    check_stride(stride)?;
    let (n, c, h, w) = batched(input)?;
    let (co, ci, k) = kernel_dims(kernel)?;
    if ci != c {
        return Err(Error::shape("conv2d", input.shape(), kernel.shape()));
    }
    let (ho, wo) = match (
        conv_output_dim(h, k, stride, pad),
        conv_output_dim(w, k, stride, pad),
    ) {
        (Some(ho), Some(wo)) => (ho, wo),
        _ => return Err(Error::shape("conv2d", input.shape(), kernel.shape())),
    };
    let g = Geometry {
        c,
        h,
        w,
        k,
        stride,
        pad,
        ho,
        wo,
    };
    let mut cols = vec![T::zero(); g.col_rows() * g.col_cols()];
    let mut out = Tensor::zeros([n, co, ho, wo]);
    let out_stride = co * ho * wo;
    for s in 0..n {
        im2col(input.sample(s), &g, &mut cols);
        let dst = &mut out.data_mut()[s * out_stride..(s + 1) * out_stride];
        T::gemm(
            co,
            g.col_rows(),
            g.col_cols(),
            kernel.data(),
            false,
            &cols,
            false,
            dst,
            false,
        );
    }
    Ok(out)
}

/// Gradient of [`conv2d_forward`] with respect to its input, for an input of
/// spatial size `h`×`w`.
pub fn conv2d_backward_data<T: Real>(
    grad_out: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    check_stride(stride)?;
    let (n, co_g, ho, wo) = batched(grad_out)?;
    let (co, ci, k) = kernel_dims(kernel)?;
    if co_g != co {
        return Err(Error::shape("conv2d_backward_data", grad_out.shape(), kernel.shape()));
    }
    if conv_output_dim(h, k, stride, pad) != Some(ho) || conv_output_dim(w, k, stride, pad) != Some(wo)
    {
        return Err(Error::shape(
            "conv2d_backward_data",
            grad_out.shape(),
            &[n, ci, h, w],
        ));
    }
    let g = Geometry {
        c: ci,
        h,
        w,
        k,
        stride,
        pad,
        ho,
        wo,
    };
    let mut cols = vec![T::zero(); g.col_rows() * g.col_cols()];
    let mut out = Tensor::zeros([n, ci, h, w]);
    let in_stride = ci * h * w;
    for s in 0..n {
        T::gemm(
            g.col_rows(),
            co,
            g.col_cols(),
            kernel.data(),
            true,
            grad_out.sample(s),
            false,
            &mut cols,
            false,
        );
        col2im(&cols, &g, &mut out.data_mut()[s * in_stride..(s + 1) * in_stride]);
    }
    Ok(out)
}

/// Gradient of [`conv2d_forward`] with respect to its kernel, summed over the
/// batch in sample order.
pub fn conv2d_backward_weight<T: Real>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    check_stride(stride)?;
    let (n, c, h, w) = batched(input)?;
    let (n2, co, ho, wo) = batched(grad_out)?;
    if n != n2
        || conv_output_dim(h, k, stride, pad) != Some(ho)
        || conv_output_dim(w, k, stride, pad) != Some(wo)
    {
        return Err(Error::shape("conv2d_backward_weight", input.shape(), grad_out.shape()));
    }
    let g = Geometry {
        c,
        h,
        w,
        k,
        stride,
        pad,
        ho,
        wo,
    };
    let mut cols = vec![T::zero(); g.col_rows() * g.col_cols()];
    let mut dw = Tensor::zeros([co, c, k, k]);
    for s in 0..n {
        im2col(input.sample(s), &g, &mut cols);
        T::gemm(
            co,
            g.col_cols(),
            g.col_rows(),
            grad_out.sample(s),
            false,
            &cols,
            true,
            dw.data_mut(),
            true,
        );
    }
    Ok(dw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_dims() {
        assert_eq!(conv_output_dim(32, 4, 2, 1), Some(16));
        assert_eq!(conv_output_dim(3, 3, 1, 0), Some(1));
        assert_eq!(conv_output_dim(2, 3, 1, 0), None);
        assert_eq!(transposed_conv_output_dim(16, 4, 2, 1), Some(32));
        assert_eq!(transposed_conv_output_dim(3, 1, 1, 0), Some(3));
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = Tensor::<f64>::from_fn([2, 1, 3, 3], |i| i as f64 * 0.5 - 2.0);
        let k = Tensor::<f64>::full([1, 1, 1, 1], 1.0);
        assert_eq!(conv2d_forward(&x, &k, 1, 0).unwrap(), x);
    }

    #[test]
    fn all_ones_sums_to_nine() {
        let x = Tensor::<f32>::full([1, 1, 3, 3], 1.0);
        let k = Tensor::<f32>::full([1, 1, 3, 3], 1.0);
        let y = conv2d_forward(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let k = Tensor::<f32>::zeros([1, 3, 3, 3]);
        let msg = conv2d_forward(&x, &k, 1, 0).unwrap_err().to_string();
        assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
    }

    #[test]
    fn zero_stride_rejected() {
        let x = Tensor::<f32>::zeros([1, 1, 4, 4]);
        let k = Tensor::<f32>::zeros([1, 1, 3, 3]);
        assert!(conv2d_forward(&x, &k, 0, 0).is_err());
    }
}
