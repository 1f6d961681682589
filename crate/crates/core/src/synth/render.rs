use rand::Rng;

use super::{seeded_rng, IdentitySpec, Nuisance, Rgb, REFERENCE_SIZE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MIN_RENDER_SIZE: usize = 16;

const BROW_THICKNESS: f32 = 1.0 / REFERENCE_SIZE;
const MOUTH_THICKNESS: f32 = 0.022;
const FRECKLE_SIGMA: f32 = 0.5 / REFERENCE_SIZE;
const FRECKLE_DARKEN: f32 = 0.4;

/// Renders a face as a 3×size×size tensor in [0, 1].
pub fn render(spec: &IdentitySpec, nuisance: &Nuisance, size: usize) -> Result<Tensor> {
    Canvas::new(spec, nuisance, size, true).map(|c| c.draw())
}

/// [`render`] without the skin-texture layer.
pub fn render_smooth(spec: &IdentitySpec, nuisance: &Nuisance, size: usize) -> Result<Tensor> {
    Canvas::new(spec, nuisance, size, false).map(|c| c.draw())
}

struct Texture {
    dirs: [(f32, f32); 2],
    phases: [f32; 2],
}

struct Canvas<'a> {
    spec: &'a IdentitySpec,
    nuisance: &'a Nuisance,
    size: usize,
    center: (f32, f32),
    /// Pixels per face unit.
    unit: f32,
    texture: Option<Texture>,
    freckles: Vec<(f32, f32)>,
}

fn mix(a: Rgb, b: Rgb, alpha: f32) -> Rgb {
    [
        a[0] + (b[0] - a[0]) * alpha,
        a[1] + (b[1] - a[1]) * alpha,
        a[2] + (b[2] - a[2]) * alpha,
    ]
}

fn scale(c: Rgb, k: f32) -> Rgb {
    [c[0] * k, c[1] * k, c[2] * k]
}

/// Approximate signed distance to an axis-aligned ellipse, in the same units
/// as the inputs (negative inside).
fn ellipse_sd(u: f32, v: f32, a: f32, b: f32) -> f32 {
    let k = ((u / a).powi(2) + (v / b).powi(2)).sqrt();
    if k < 1e-6 {
        return -a.min(b);
    }
    let grad = ((u / (a * a)).powi(2) + (v / (b * b)).powi(2)).sqrt() / k;
    (k - 1.0) / grad.max(1e-6)
}

impl<'a> Canvas<'a> {
    fn new(spec: &'a IdentitySpec, nuisance: &'a Nuisance, size: usize, textured: bool) -> Result<Self> {
        if size < MIN_RENDER_SIZE {
            return Err(Error::InvalidArgument(format!(
                "render size {size} is below the minimum of {MIN_RENDER_SIZE}"
            )));
        }
        let px_per_ref = size as f32 / REFERENCE_SIZE;
        let center = (
            size as f32 / 2.0 + nuisance.shift[0] * px_per_ref,
            size as f32 / 2.0 + nuisance.shift[1] * px_per_ref,
        );
        let unit = size as f32 * nuisance.scale;

        let l = &spec.local;
        let g = &spec.general;
        let mut rng = seeded_rng(l.freckle_seed, 0);
        let area = std::f32::consts::PI * g.face_rx * g.face_ry;
        let count = (l.freckle_density * area).round() as usize;
        let mut freckles = Vec::with_capacity(count);
        while freckles.len() < count {
            let u = rng.gen_range(-g.face_rx..=g.face_rx);
            let v = rng.gen_range(-g.face_ry..=g.face_ry);
            if (u / g.face_rx).powi(2) + (v / g.face_ry).powi(2) <= 0.85 {
                freckles.push((u, v));
            }
        }
        let mut trng = seeded_rng(l.freckle_seed, 1);
        let texture = textured.then(|| {
            let mut dir = || {
                let t: f32 = trng.gen_range(0.0..std::f32::consts::PI);
                (t.cos(), t.sin())
            };
            let dirs = [dir(), dir()];
            let phases = [
                trng.gen_range(0.0..std::f32::consts::TAU),
                trng.gen_range(0.0..std::f32::consts::TAU),
            ];
            Texture { dirs, phases }
        });

        Ok(Canvas {
            spec,
            nuisance,
            size,
            center,
            unit,
            texture,
            freckles,
        })
    }

    /// Coverage of a shape with signed distance `sd` (face units), using a
    /// one-pixel linear ramp.
    fn coverage(&self, sd: f32) -> f32 {
        (0.5 - sd * self.unit).clamp(0.0, 1.0)
    }

    fn skin_at(&self, u: f32, v: f32) -> Rgb {
        let g = &self.spec.general;
        let l = &self.spec.local;
        let mut c = g.skin;
        if let Some(t) = &self.texture {
            // Cycles per face unit at this identity's texture frequency.
            let f = l.texture_freq * REFERENCE_SIZE * std::f32::consts::TAU;
            let s = t
                .dirs
                .iter()
                .zip(&t.phases)
                .map(|(&(dx, dy), &ph)| (f * (u * dx + v * dy) + ph).sin())
                .sum::<f32>()
                * 0.5;
            let d = l.texture_amplitude * s;
            c = [c[0] + d, c[1] + d, c[2] + d];
        }
        let mut shade = 0.0f32;
        for &(fu, fv) in &self.freckles {
            let r2 = (u - fu).powi(2) + (v - fv).powi(2);
            if r2 < 9.0 * FRECKLE_SIGMA * FRECKLE_SIGMA {
                shade = shade.max((-r2 / (2.0 * FRECKLE_SIGMA * FRECKLE_SIGMA)).exp());
            }
        }
        if shade > 0.0 {
            c = scale(c, 1.0 - FRECKLE_DARKEN * shade);
        }
        c
    }

    fn face_color(&self, u: f32, v: f32) -> Rgb {
        let g = &self.spec.general;
        let l = &self.spec.local;
        let mut c = self.skin_at(u, v);

        let nose_cy = g.eye_y + 0.02 + g.nose_length / 2.0;
        let a = self.coverage(ellipse_sd(u, v - nose_cy, g.nose_width / 2.0, g.nose_length / 2.0));
        c = mix(c, scale(g.skin, 0.7), a);

        for (i, side) in [-1.0f32, 1.0].into_iter().enumerate() {
            let ex = side * g.eye_dx;
            let by = g.eye_y - g.eye_radius * 1.6 - 0.03 + l.brow_offset[i] / REFERENCE_SIZE;
            let a = self.coverage(ellipse_sd(u - ex, v - by, g.eye_radius * 1.4, BROW_THICKNESS));
            c = mix(c, scale(g.skin, 0.35), a);

            let theta = side * l.eye_angle;
            let (du, dv) = (u - ex, v - g.eye_y);
            let (ru, rv) = (
                du * theta.cos() + dv * theta.sin(),
                -du * theta.sin() + dv * theta.cos(),
            );
            let a = self.coverage(ellipse_sd(ru, rv, g.eye_radius * 1.3, g.eye_radius * 0.8));
            c = mix(c, g.eye_color, a);
        }

        let half_w = g.mouth_width / 2.0;
        let t = (u / half_w).clamp(-1.0, 1.0);
        let curve_y = g.mouth_y + g.mouth_curvature * (1.0 - t * t);
        let sd = ((v - curve_y).abs() - MOUTH_THICKNESS).max(u.abs() - half_w);
        c = mix(c, g.lip_color, self.coverage(sd));
        c
    }

    fn draw(&self) -> Tensor {
        let s = self.size;
        let g = &self.spec.general;
        let n = self.nuisance;
        let (lx, ly) = (n.illumination_angle.cos(), n.illumination_angle.sin());
        let mut data = vec![0.0f32; 3 * s * s];
        for py in 0..s {
            for px in 0..s {
                let (x, y) = (px as f32 + 0.5, py as f32 + 0.5);
                let u = (x - self.center.0) / self.unit;
                let v = (y - self.center.1) / self.unit;
                let face_a = self.coverage(ellipse_sd(u, v, g.face_rx, g.face_ry));
                let color = if face_a > 0.0 {
                    mix(n.background, self.face_color(u, v), face_a)
                } else {
                    n.background
                };
                let xn = 2.0 * x / s as f32 - 1.0;
                let yn = 2.0 * y / s as f32 - 1.0;
                let light = n.brightness + super::ranges::ILLUMINATION_STRENGTH * (lx * xn + ly * yn);
                for (ch, value) in color.iter().enumerate() {
                    data[ch * s * s + py * s + px] = (value + light).clamp(0.0, 1.0);
                }
            }
        }
        Tensor::new([3, s, s], data).expect("3×size×size")
    }
}
