//! Procedural face-like images.
//!
//! Each identity is split into `general` parameters (layout, proportions,
//! base colours: low-frequency content) and `local` parameters (eye-corner
//! tilt, eyebrow micro-offsets, freckles, skin texture: high-frequency
//! content). Per-image [`Nuisance`] adds pose, scale, lighting and background
//! variation that is independent of identity.

mod pairs;
mod preprocess;
pub mod proxy;
mod render;

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use pairs::{build_pair_set, draw_pairs, generate_faces, FaceImage, IdentityGroup, LabeledPair, PairSet, PairSetConfig};
pub use preprocess::{preprocess, resize_bilinear};
pub use render::{render, render_smooth, MIN_RENDER_SIZE};

/// Reference canvas size at which pixel-denominated ranges are stated.
pub const REFERENCE_SIZE: f32 = 32.0;

/// Documented closed ranges for every sampled field.
pub mod ranges {
    use std::ops::RangeInclusive;

    pub const FACE_RX: RangeInclusive<f32> = 0.26..=0.40;
    pub const FACE_RY: RangeInclusive<f32> = 0.34..=0.46;
    pub const EYE_DX: RangeInclusive<f32> = 0.10..=0.18;
    pub const EYE_Y: RangeInclusive<f32> = -0.14..=-0.04;
    pub const EYE_RADIUS: RangeInclusive<f32> = 0.035..=0.07;
    pub const NOSE_LENGTH: RangeInclusive<f32> = 0.08..=0.20;
    pub const NOSE_WIDTH: RangeInclusive<f32> = 0.03..=0.08;
    pub const MOUTH_Y: RangeInclusive<f32> = 0.14..=0.26;
    pub const MOUTH_WIDTH: RangeInclusive<f32> = 0.10..=0.26;
    pub const MOUTH_CURVATURE: RangeInclusive<f32> = -0.06..=0.06;
    /// Position between the darkest and lightest skin colours.
    pub const SKIN_TONE: RangeInclusive<f32> = 0.0..=1.0;
    pub const SKIN_DARK: [f32; 3] = [0.36, 0.24, 0.17];
    pub const SKIN_LIGHT: [f32; 3] = [0.95, 0.80, 0.70];
    /// Per-channel deviation from the tone line.
    pub const SKIN_JITTER: RangeInclusive<f32> = -0.05..=0.05;
    pub const EYE_COLOR: [RangeInclusive<f32>; 3] = [0.05..=0.45, 0.05..=0.40, 0.05..=0.45];
    pub const LIP: [RangeInclusive<f32>; 3] = [0.45..=0.85, 0.12..=0.40, 0.15..=0.45];

    /// Radians.
    pub const EYE_ANGLE: RangeInclusive<f32> = -0.15..=0.15;
    /// Pixels at the 32-px reference scale.
    pub const BROW_OFFSET: RangeInclusive<f32> = -2.0..=2.0;
    /// Freckles per unit face area (fraction-of-canvas units).
    pub const FRECKLE_DENSITY: RangeInclusive<f32> = 0.0..=120.0;
    /// Cycles per pixel at the reference scale.
    pub const TEXTURE_FREQ: RangeInclusive<f32> = 0.18..=0.45;
    pub const TEXTURE_AMPLITUDE: RangeInclusive<f32> = 0.0..=0.12;

    /// Pixels at the reference scale.
    pub const POSE_SHIFT: RangeInclusive<f32> = -3.0..=3.0;
    pub const SCALE_JITTER: RangeInclusive<f32> = 0.9..=1.1;
    pub const BRIGHTNESS: RangeInclusive<f32> = -0.1..=0.1;
    pub const ILLUMINATION_ANGLE: RangeInclusive<f32> = 0.0..=std::f32::consts::TAU;
    pub const ILLUMINATION_STRENGTH: f32 = 0.1;
    /// Background grey level and per-channel tint around it.
    pub const BACKGROUND_LEVEL: RangeInclusive<f32> = 0.15..=0.85;
    pub const BACKGROUND_TINT: RangeInclusive<f32> = -0.1..=0.1;
}

pub type Rgb = [f32; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralParams {
    /// Face-oval semi-axes as fractions of the canvas.
    pub face_rx: f32,
    pub face_ry: f32,
    /// Half the inter-eye distance and the eye row offset from centre.
    pub eye_dx: f32,
    pub eye_y: f32,
    pub eye_radius: f32,
    pub nose_length: f32,
    pub nose_width: f32,
    pub mouth_y: f32,
    pub mouth_width: f32,
    pub mouth_curvature: f32,
    pub skin: Rgb,
    pub eye_color: Rgb,
    pub lip_color: Rgb,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalParams {
    pub eye_angle: f32,
    /// Vertical offsets of the left and right eyebrow, reference pixels.
    pub brow_offset: [f32; 2],
    pub freckle_seed: u64,
    pub freckle_density: f32,
    pub texture_freq: f32,
    pub texture_amplitude: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentitySpec {
    pub id: u64,
    pub general: GeneralParams,
    pub local: LocalParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Nuisance {
    /// Reference pixels.
    pub shift: [f32; 2],
    pub scale: f32,
    pub brightness: f32,
    pub illumination_angle: f32,
    pub background: Rgb,
}

impl Nuisance {
    /// No shift, unit scale, no lighting change, mid-grey background.
    pub fn neutral() -> Self {
        Nuisance {
            shift: [0.0, 0.0],
            scale: 1.0,
            brightness: 0.0,
            illumination_angle: 0.0,
            background: [0.5, 0.5, 0.5],
        }
    }

    pub fn sample(rng: &mut impl Rng) -> Self {
        Nuisance {
            shift: [uniform(rng, ranges::POSE_SHIFT), uniform(rng, ranges::POSE_SHIFT)],
            scale: uniform(rng, ranges::SCALE_JITTER),
            brightness: uniform(rng, ranges::BRIGHTNESS),
            illumination_angle: uniform(rng, ranges::ILLUMINATION_ANGLE),
            background: {
                let level = uniform(rng, ranges::BACKGROUND_LEVEL);
                [0; 3].map(|_| level + uniform(rng, ranges::BACKGROUND_TINT))
            },
        }
    }

    pub fn in_range(&self) -> bool {
        self.shift.iter().all(|s| ranges::POSE_SHIFT.contains(s))
            && ranges::SCALE_JITTER.contains(&self.scale)
            && ranges::BRIGHTNESS.contains(&self.brightness)
            && ranges::ILLUMINATION_ANGLE.contains(&self.illumination_angle)
            && self.background.iter().all(|c| {
                let lo = ranges::BACKGROUND_LEVEL.start() + ranges::BACKGROUND_TINT.start();
                let hi = ranges::BACKGROUND_LEVEL.end() + ranges::BACKGROUND_TINT.end();
                (lo..=hi).contains(c)
            })
    }
}

fn uniform(rng: &mut impl Rng, r: RangeInclusive<f32>) -> f32 {
    rng.gen_range(r)
}

fn rgb(rng: &mut impl Rng, r: &[RangeInclusive<f32>; 3]) -> Rgb {
    [
        uniform(rng, r[0].clone()),
        uniform(rng, r[1].clone()),
        uniform(rng, r[2].clone()),
    ]
}

fn skin(rng: &mut impl Rng) -> Rgb {
    use ranges::*;
    let t = uniform(rng, SKIN_TONE);
    let mut c = [0.0; 3];
    for (i, v) in c.iter_mut().enumerate() {
        *v = SKIN_DARK[i] + t * (SKIN_LIGHT[i] - SKIN_DARK[i]) + uniform(rng, SKIN_JITTER);
    }
    c
}

/// Whether `c` lies within the jitter band around the skin tone line.
fn skin_in_range(c: &Rgb) -> bool {
    use ranges::*;
    (0..3).all(|i| {
        let lo = SKIN_DARK[i] + SKIN_JITTER.start();
        let hi = SKIN_LIGHT[i] + SKIN_JITTER.end();
        (lo..=hi).contains(&c[i])
    })
}

fn rgb_in_range(c: &Rgb, r: &[RangeInclusive<f32>; 3]) -> bool {
    c.iter().zip(r).all(|(v, r)| r.contains(v))
}

/// SplitMix64 finaliser; derives independent per-item seeds from a base
/// seed and an index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded_rng(base: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, index))
}

impl IdentitySpec {
    /// Samples every field uniformly within its documented range.
    pub fn sample(id: u64, rng: &mut impl Rng) -> Self {
        use ranges::*;
        let general = GeneralParams {
            face_rx: uniform(rng, FACE_RX),
            face_ry: uniform(rng, FACE_RY),
            eye_dx: uniform(rng, EYE_DX),
            eye_y: uniform(rng, EYE_Y),
            eye_radius: uniform(rng, EYE_RADIUS),
            nose_length: uniform(rng, NOSE_LENGTH),
            nose_width: uniform(rng, NOSE_WIDTH),
            mouth_y: uniform(rng, MOUTH_Y),
            mouth_width: uniform(rng, MOUTH_WIDTH),
            mouth_curvature: uniform(rng, MOUTH_CURVATURE),
            skin: skin(rng),
            eye_color: rgb(rng, &EYE_COLOR),
            lip_color: rgb(rng, &LIP),
        };
        let local = LocalParams {
            eye_angle: uniform(rng, EYE_ANGLE),
            brow_offset: [uniform(rng, BROW_OFFSET), uniform(rng, BROW_OFFSET)],
            freckle_seed: rng.gen(),
            freckle_density: uniform(rng, FRECKLE_DENSITY),
            texture_freq: uniform(rng, TEXTURE_FREQ),
            texture_amplitude: uniform(rng, TEXTURE_AMPLITUDE),
        };
        IdentitySpec { id, general, local }
    }

    pub fn in_range(&self) -> bool {
        use ranges::*;
        let g = &self.general;
        let l = &self.local;
        FACE_RX.contains(&g.face_rx)
            && FACE_RY.contains(&g.face_ry)
            && EYE_DX.contains(&g.eye_dx)
            && EYE_Y.contains(&g.eye_y)
            && EYE_RADIUS.contains(&g.eye_radius)
            && NOSE_LENGTH.contains(&g.nose_length)
            && NOSE_WIDTH.contains(&g.nose_width)
            && MOUTH_Y.contains(&g.mouth_y)
            && MOUTH_WIDTH.contains(&g.mouth_width)
            && MOUTH_CURVATURE.contains(&g.mouth_curvature)
            && skin_in_range(&g.skin)
            && rgb_in_range(&g.eye_color, &EYE_COLOR)
            && rgb_in_range(&g.lip_color, &LIP)
            && EYE_ANGLE.contains(&l.eye_angle)
            && l.brow_offset.iter().all(|b| BROW_OFFSET.contains(b))
            && FRECKLE_DENSITY.contains(&l.freckle_density)
            && TEXTURE_FREQ.contains(&l.texture_freq)
            && TEXTURE_AMPLITUDE.contains(&l.texture_amplitude)
    }
}

/// Hands out identities with sequential ids. The spec for an id depends only
/// on the base seed and the id, so equal ids always give equal specs.
#[derive(Clone, Debug)]
pub struct IdentitySampler {
    base_seed: u64,
    next_id: u64,
}

impl IdentitySampler {
    pub fn new(base_seed: u64) -> Self {
        Self::starting_at(base_seed, 0)
    }

    pub fn starting_at(base_seed: u64, first_id: u64) -> Self {
        IdentitySampler {
            base_seed,
            next_id: first_id,
        }
    }

    pub fn spec(&self, id: u64) -> IdentitySpec {
        IdentitySpec::sample(id, &mut seeded_rng(self.base_seed, id))
    }

    pub fn sample_identity(&mut self) -> IdentitySpec {
        let spec = self.spec(self.next_id);
        self.next_id += 1;
        spec
    }
}
