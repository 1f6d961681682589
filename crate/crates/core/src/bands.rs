//! Frequency-band measurements on C×H×W images.
//!
//! Low band = Gaussian blur, high band = blur residual. Used to quantify how
//! much local detail a reconstruction keeps.

use crate::tensor::{Real, Tensor};

/// Blur width used for band splits at the 32-px toy scale.
pub const DEFAULT_SIGMA: f64 = 1.0;

fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with edge replication, applied per channel of a
/// C×H×W (or 1×C×H×W) image.
pub fn gaussian_blur<T: Real>(img: &Tensor<T>, sigma: f64) -> Tensor<T> {
    let (_, c, h, w) = img.nchw().expect("image tensor");
    let k = kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut out = img.clone();
    let mut tmp = vec![0.0f64; h * w];
    for ch in 0..c {
        let plane = &img.data()[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (j, &kv) in k.iter().enumerate() {
                    let xx = (x as isize + j as isize - r).clamp(0, w as isize - 1) as usize;
                    acc += kv * plane[y * w + xx].to_f64();
                }
                tmp[y * w + x] = acc;
            }
        }
        let dst = &mut out.data_mut()[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (j, &kv) in k.iter().enumerate() {
                    let yy = (y as isize + j as isize - r).clamp(0, h as isize - 1) as usize;
                    acc += kv * tmp[yy * w + x];
                }
                dst[y * w + x] = T::from_f64(acc);
            }
        }
    }
    out
}

/// Mean squared 4-neighbour Laplacian over all channels and pixels (edge
/// replication).
pub fn laplacian_energy<T: Real>(img: &Tensor<T>) -> f64 {
    let (n, c, h, w) = img.nchw().expect("image tensor");
    let d = img.data();
    let mut total = 0.0;
    for plane in 0..n * c {
        let p = &d[plane * h * w..(plane + 1) * h * w];
        let at = |y: isize, x: isize| -> f64 {
            let y = y.clamp(0, h as isize - 1) as usize;
            let x = x.clamp(0, w as isize - 1) as usize;
            p[y * w + x].to_f64()
        };
        for y in 0..h as isize {
            for x in 0..w as isize {
                let lap = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * at(y, x);
                total += lap * lap;
            }
        }
    }
    total / (n * c * h * w) as f64
}

/// Mean squared value.
pub fn energy<T: Real>(img: &Tensor<T>) -> f64 {
    img.data().iter().map(|&v| Real::to_f64(v).powi(2)).sum::<f64>() / img.numel() as f64
}

/// (low-band energy, high-band energy) of `img`.
pub fn band_energies<T: Real>(img: &Tensor<T>, sigma: f64) -> (f64, f64) {
    let low = gaussian_blur(img, sigma);
    let high = img.zip_map(&low, |a, b| a - b).expect("same shape");
    (energy(&low), energy(&high))
}

/// Per-band MSE between two images: (blur-band MSE, detail-band MSE).
pub fn band_mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>, sigma: f64) -> (f64, f64) {
    let diff = a.zip_map(b, |x, y| x - y).expect("same shape");
    band_energies(&diff, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constants() {
        let img = Tensor::<f32>::full([3, 8, 8], 0.4);
        let b = gaussian_blur(&img, 1.5);
        assert!(b.data().iter().all(|v| (v - 0.4).abs() < 1e-6));
        assert_eq!(laplacian_energy(&img), 0.0);
    }

    #[test]
    fn checkerboard_is_high_band() {
        let img = Tensor::<f64>::from_fn([1, 16, 16], |i| ((i / 16 + i % 16) % 2) as f64 - 0.5);
        let (low, high) = band_energies(&img, 1.0);
        assert!(high > 20.0 * low, "low {low} high {high}");
        assert!(laplacian_energy(&img) > 10.0);
    }

    #[test]
    fn linear_ramp_has_zero_interior_laplacian() {
        let img = Tensor::<f64>::from_fn([1, 8, 8], |i| (i % 8) as f64);
        // Only the replicated left/right edges contribute.
        let e = laplacian_energy(&img);
        assert!((e - 16.0 / 64.0).abs() < 1e-12, "{e}");
    }
}
