use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Bilinear resize of a C×H×W image with half-pixel centres and edge clamp.
pub fn resize_bilinear(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = match *image.shape() {
        [c, h, w] => (c, h, w),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "expected a C×H×W image, got {:?}",
                image.shape()
            )))
        }
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be positive".into()));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(image.clone());
    }
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f32) {
        let pos = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
            .clamp(0.0, (src_len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, (pos - lo as f64) as f32)
    };
    let ys: Vec<_> = (0..out_h).map(|y| axis(y, h, out_h)).collect();
    let xs: Vec<_> = (0..out_w).map(|x| axis(x, w, out_w)).collect();
    let src = image.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new([c, out_h, out_w], out)
}

/// Brings an image to `size`×`size` with values in [0, 1]. No augmentation.
///
/// Images already in [0, 1] keep their values; images in [0, 255] are
/// divided by 255; any other range is min-max rescaled.
pub fn preprocess(image: &Tensor, size: usize) -> Result<Tensor> {
    let (min, max) = image
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::InvalidArgument("image contains non-finite pixels".into()));
    }
    let ranged = if min >= 0.0 && max <= 1.0 {
        image.clone()
    } else if min >= 0.0 && max <= 255.0 {
        image.map(|v| v / 255.0)
    } else {
        let span = max - min;
        if span > 0.0 {
            image.map(|v| (v - min) / span)
        } else {
            image.map(|_| 0.0)
        }
    };
    let resized = resize_bilinear(&ranged, size, size)?;
    Ok(resized.map(|v| v.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_when_sized_and_ranged() {
        let img = Tensor::from_fn([3, 8, 8], |i| (i % 17) as f32 / 16.0);
        assert_eq!(preprocess(&img, 8).unwrap(), img);
    }

    #[test]
    fn constant_downscale_is_constant() {
        let img = Tensor::full([3, 64, 64], 0.3);
        let out = preprocess(&img, 32).unwrap();
        assert_eq!(out.shape(), &[3, 32, 32]);
        assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn eight_bit_range_scaled() {
        let img = Tensor::new([1, 2, 2], vec![0.0, 255.0, 51.0, 102.0]).unwrap();
        assert_eq!(preprocess(&img, 2).unwrap().data(), &[0.0, 1.0, 0.2, 0.4]);
        let flat = Tensor::full([1, 2, 2], 300.0);
        assert!(preprocess(&flat, 2).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_image_shape_rejected() {
        assert!(preprocess(&Tensor::zeros([10]), 4).is_err());
        assert!(preprocess(&Tensor::zeros([2, 3, 4, 4]), 4).is_err());
    }

    proptest! {
        #[test]
        fn output_in_unit_range(
            values in proptest::collection::vec(-1000.0f32..1000.0, 3 * 10 * 10),
            size in 4usize..24,
        ) {
            let img = Tensor::new([3, 10, 10], values).unwrap();
            let out = preprocess(&img, size).unwrap();
            prop_assert_eq!(out.shape(), &[3, size, size]);
            prop_assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
