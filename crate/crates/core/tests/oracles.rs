//! Independent reference implementations compared against the engine.

use fusiform::graph::transposed_conv2d_forward;
use fusiform::layers::mse_pixel_loss;
use fusiform::tensor::{conv2d_backward_data, conv2d_forward};
use fusiform::{Real, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
    Tensor::from_fn(shape.to_vec(), |_| T::from_f64(rng.gen_range(-1.0..1.0)))
}

/// Per sample: sum over rows, columns, then channels of squared differences,
/// divided by the pixel count; then the batch mean.
fn naive_mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> T {
    let [n, c, h, w] = a.shape()[..] else { panic!("expected NCHW") };
    let at = |t: &Tensor<T>, s: usize, ch: usize, y: usize, x: usize| t.data()[((s * c + ch) * h + y) * w + x];
    let mut total = T::zero();
    for s in 0..n {
        let mut sample = T::zero();
        for y in 0..h {
            for x in 0..w {
                let mut px = T::zero();
                for ch in 0..c {
                    let d = at(a, s, ch, y, x) - at(b, s, ch, y, x);
                    px += d * d;
                }
                sample += px;
            }
        }
        total += sample / T::from_f64((h * w) as f64);
    }
    total / T::from_f64(n as f64)
}

/// Number of 50 random f32/f64 tensor pairs where the engine's loss is not
/// bit-equal to the triple loop.
pub fn mse_mismatches() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = 0;
    for _ in 0..50 {
        let shape = [rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..9), rng.gen_range(1..9)];
        let a: Tensor<f32> = random(&mut rng, &shape);
        let b: Tensor<f32> = random(&mut rng, &shape);
        bad += usize::from(mse_pixel_loss(&a, &b).unwrap().to_bits() != naive_mse(&a, &b).to_bits());
        let (a, b) = (a.cast::<f64>(), b.cast::<f64>());
        bad += usize::from(mse_pixel_loss(&a, &b).unwrap().to_bits() != naive_mse(&a, &b).to_bits());
    }
    bad
}

#[test]
fn mse_matches_triple_loop_exactly() {
    assert_eq!(mse_mismatches(), 0);
}

#[test]
fn mse_hand_value() {
    let a = Tensor::new([1, 1, 2, 2], vec![0.0f64, 1.0, 1.0, 0.0]).unwrap();
    let b = Tensor::new([1, 1, 2, 2], vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(mse_pixel_loss(&a, &b).unwrap(), 1.0);
}

/// Direct scatter form of a transposed convolution with a `[Cin, Cout, K, K]`
/// kernel.
fn naive_transposed(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let [n, ci, h, w] = x.shape()[..] else { panic!() };
    let [_, co, kk, _] = k.shape()[..] else { panic!() };
    let (ho, wo) = ((h - 1) * stride + kk - 2 * pad, (w - 1) * stride + kk - 2 * pad);
    let mut out = Tensor::zeros([n, co, ho, wo]);
    for s in 0..n {
        for i in 0..ci {
            for y in 0..h {
                for xx in 0..w {
                    let v = x.data()[((s * ci + i) * h + y) * w + xx];
                    for o in 0..co {
                        for ky in 0..kk {
                            for kx in 0..kk {
                                let oy = (y * stride + ky) as isize - pad as isize;
                                let ox = (xx * stride + kx) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= ho as isize || ox >= wo as isize {
                                    continue;
                                }
                                let kv = k.data()[((i * co + o) * kk + ky) * kk + kx];
                                out.data_mut()[((s * co + o) * ho + oy as usize) * wo + ox as usize] += v * kv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub struct AdjointReport {
    /// Instances where transposed conv and conv input-gradient differ at all.
    pub inexact: usize,
    /// Largest relative deviation from the scatter reference.
    pub scatter_error: f64,
    /// Largest relative violation of the inner-product identity.
    pub dot_error: f64,
}

pub fn adjoint_report(instances: usize) -> AdjointReport {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut r = AdjointReport {
        inexact: 0,
        scatter_error: 0.0,
        dot_error: 0.0,
    };
    for _ in 0..instances {
        let (k, stride, pad) = [(4, 2, 1), (3, 1, 1), (3, 2, 0), (2, 2, 0), (5, 1, 2)][rng.gen_range(0..5)];
        let (n, ci, co) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
        let (h, w) = (rng.gen_range(2..6), rng.gen_range(2..6));
        let x: Tensor<f64> = random(&mut rng, &[n, ci, h, w]);
        let kernel: Tensor<f64> = random(&mut rng, &[ci, co, k, k]);
        let t = transposed_conv2d_forward(&x, &kernel, stride, pad).unwrap();
        let [_, _, ho, wo] = t.shape()[..] else { panic!() };
        let g = conv2d_backward_data(&x, &kernel, stride, pad, ho, wo).unwrap();
        r.inexact += usize::from(t != g);

        let reference = naive_transposed(&x, &kernel, stride, pad);
        let scale = reference.max_abs().max(1.0);
        let err = t.data().iter().zip(reference.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        r.scatter_error = r.scatter_error.max(err / scale);

        // <conv(y, K), x> == <y, convT(x, K)> for every y.
        let y: Tensor<f64> = random(&mut rng, &[n, co, ho, wo]);
        let lhs = dot(&conv2d_forward(&y, &kernel, stride, pad).unwrap(), &x);
        let rhs = dot(&y, &t);
        r.dot_error = r.dot_error.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    r
}

#[test]
fn transposed_conv_equals_conv_input_gradient() {
    let r = adjoint_report(50);
    assert_eq!(r.inexact, 0);
    assert!(r.scatter_error < 1e-10, "{}", r.scatter_error);
    assert!(r.dot_error < 1e-10, "{}", r.dot_error);
}

#[test]
fn conv_all_ones_is_nine() {
    let x = Tensor::full([1, 1, 3, 3], 1.0f64);
    let k = Tensor::full([1, 1, 3, 3], 1.0f64);
    assert_eq!(conv2d_forward(&x, &k, 1, 0).unwrap().data(), [9.0]);
}
