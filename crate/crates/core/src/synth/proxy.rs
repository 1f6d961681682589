//! Generic shape/texture classification images used to pretrain the
//! perceptual backbone. 5 shapes × 4 textures = 20 classes.

use rand::Rng;

use super::{seeded_rng, MIN_RENDER_SIZE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NUM_SHAPES: usize = 5;
pub const NUM_TEXTURES: usize = 4;
pub const NUM_CLASSES: usize = NUM_SHAPES * NUM_TEXTURES;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Disk,
    Square,
    Triangle,
    Ring,
    Cross,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Texture {
    Flat,
    HorizontalStripes,
    VerticalStripes,
    Checker,
}

fn decode(class: usize) -> (Shape, Texture) {
    let shape = [Shape::Disk, Shape::Square, Shape::Triangle, Shape::Ring, Shape::Cross][class / NUM_TEXTURES];
    let texture = [
        Texture::Flat,
        Texture::HorizontalStripes,
        Texture::VerticalStripes,
        Texture::Checker,
    ][class % NUM_TEXTURES];
    (shape, texture)
}

/// Signed-ish inside test in shape-local coordinates scaled so the shape
/// spans roughly [-1, 1]. Returns coverage in [0, 1].
fn shape_coverage(shape: Shape, u: f32, v: f32, px: f32) -> f32 {
    let ramp = |sd: f32| (0.5 - sd / px).clamp(0.0, 1.0);
    match shape {
        Shape::Disk => ramp((u * u + v * v).sqrt() - 1.0),
        Shape::Square => ramp(u.abs().max(v.abs()) - 0.85),
        Shape::Triangle => {
            // Upward triangle with apex at v = -1, base at v = 0.8.
            let edge = (u.abs() * 1.8 + v * 1.0 - 0.8) / 2.06;
            ramp(edge.max(-v - 1.0).max(v - 0.8))
        }
        Shape::Ring => {
            let r = (u * u + v * v).sqrt();
            ramp((r - 1.0).max(0.55 - r))
        }
        Shape::Cross => {
            let bar = |a: f32, b: f32| (a.abs() - 1.0).max(b.abs() - 0.3);
            ramp(bar(u, v).min(bar(v, u)))
        }
    }
}

fn texture_value(texture: Texture, x: f32, y: f32, period: f32, phase: f32) -> f32 {
    let stripe = |t: f32| if (((t + phase) / period).floor() as i64).rem_euclid(2) == 0 { 1.0 } else { 0.0 };
    match texture {
        Texture::Flat => 1.0,
        Texture::HorizontalStripes => stripe(y),
        Texture::VerticalStripes => stripe(x),
        Texture::Checker => {
            let a = ((x + phase) / period).floor() as i64;
            let b = ((y + phase) / period).floor() as i64;
            if (a + b).rem_euclid(2) == 0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Renders one image of `class` with randomized colour, placement, size and
/// stripe period.
pub fn render_proxy(class: usize, size: usize, rng: &mut impl Rng) -> Result<Tensor> {
    if class >= NUM_CLASSES {
        return Err(Error::InvalidArgument(format!("proxy class {class} out of range")));
    }
    if size < MIN_RENDER_SIZE {
        return Err(Error::InvalidArgument(format!("proxy size {size} too small")));
    }
    let (shape, texture) = decode(class);
    let s = size as f32;
    let radius = rng.gen_range(0.25..0.4) * s;
    let cx = s / 2.0 + rng.gen_range(-0.12..0.12) * s;
    let cy = s / 2.0 + rng.gen_range(-0.12..0.12) * s;
    let period = rng.gen_range(2.0..4.0) * s / 32.0;
    let phase = rng.gen_range(0.0..period * 2.0);
    let fg: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let alt: [f32; 3] = fg.map(|c| (c + 0.5) % 1.0);
    let bg: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let mut data = vec![0.0f32; 3 * size * size];
    for py in 0..size {
        for px in 0..size {
            let (x, y) = (px as f32 + 0.5, py as f32 + 0.5);
            let a = shape_coverage(shape, (x - cx) / radius, (y - cy) / radius, 1.0 / radius);
            let t = texture_value(texture, x, y, period, phase);
            for ch in 0..3 {
                let f = fg[ch] * t + alt[ch] * (1.0 - t);
                data[ch * size * size + py * size + px] = bg[ch] * (1.0 - a) + f * a;
            }
        }
    }
    Tensor::new([3, size, size], data)
}

/// `n` images with balanced class labels, image `i` seeded from
/// `(seed, i)`.
pub fn generate_proxy_set(n: usize, size: usize, seed: u64) -> Result<Vec<(Tensor, usize)>> {
    (0..n)
        .map(|i| {
            let class = i % NUM_CLASSES;
            let mut rng = seeded_rng(seed, i as u64);
            render_proxy(class, size, &mut rng).map(|t| (t, class))
        })
        .collect()
}
