//! Two-level feature extraction: `v_c` from the autoencoder bottleneck and
//! `v_d = perceive(I) − perceive(I')`, where `I'` is the autoencoder's
//! reconstruction of `I`.

use rayon::prelude::*;

use crate::autoencoder::AutoencoderModel;
use crate::error::{Error, Result};
use crate::perceptual::PerceptualModel;
use crate::tensor::Tensor;

/// Anything that maps an image to `(reconstruction, latent)`.
pub trait Reconstructor: Sync {
    fn image_size(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn is_frozen(&self) -> bool;
    fn reconstruct(&self, images: &Tensor) -> Result<(Tensor, Tensor)>;
}

impl Reconstructor for AutoencoderModel<f32> {
    fn image_size(&self) -> usize {
        self.config.image_size
    }

    fn latent_dim(&self) -> usize {
        self.config.bottleneck_dim
    }

    fn is_frozen(&self) -> bool {
        AutoencoderModel::is_frozen(self)
    }

    fn reconstruct(&self, images: &Tensor) -> Result<(Tensor, Tensor)> {
        AutoencoderModel::reconstruct(self, images)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBundle {
    pub v_c: Vec<f32>,
    pub v_d: Vec<f32>,
    /// `perceive(I)` itself, kept for the raw-perceptual baseline.
    pub perceived: Vec<f32>,
}

impl FeatureBundle {
    pub fn is_finite(&self) -> bool {
        self.v_c.iter().chain(&self.v_d).chain(&self.perceived).all(|v| v.is_finite())
    }

    /// Copy with each vector scaled to unit L2 norm (zero vectors stay zero).
    pub fn l2_normalized(&self) -> Self {
        fn unit(v: &[f32]) -> Vec<f32> {
            let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            if n > 0.0 {
                v.iter().map(|x| x / n).collect()
            } else {
                v.to_vec()
            }
        }
        FeatureBundle {
            v_c: unit(&self.v_c),
            v_d: unit(&self.v_d),
            perceived: unit(&self.perceived),
        }
    }

    pub fn vd_norm(&self) -> f32 {
        self.v_d.iter().map(|x| x * x).sum::<f32>().sqrt()
    }
}

#[derive(Clone, Copy)]
pub struct Extractor<'a, R: Reconstructor + ?Sized = AutoencoderModel<f32>> {
    pub autoencoder: &'a R,
    pub perceptual: &'a PerceptualModel<f32>,
}

impl<'a, R: Reconstructor + ?Sized> Extractor<'a, R> {
    /// Pairs two frozen models with matching input size.
    pub fn new(autoencoder: &'a R, perceptual: &'a PerceptualModel<f32>) -> Result<Self> {
        if !autoencoder.is_frozen() || !perceptual.is_frozen() {
            return Err(Error::Usage("feature extraction requires frozen models".into()));
        }
        if autoencoder.image_size() != perceptual.config.image_size {
            return Err(Error::Incompatible(format!(
                "autoencoder input {}px but perceptual input {}px",
                autoencoder.image_size(),
                perceptual.config.image_size
            )));
        }
        Ok(Extractor {
            autoencoder,
            perceptual,
        })
    }

    pub fn vc_dim(&self) -> usize {
        self.autoencoder.latent_dim()
    }

    pub fn vd_dim(&self) -> usize {
        self.perceptual.feature_dim()
    }

    /// Features of one C×H×W image.
    pub fn extract(&self, image: &Tensor) -> Result<FeatureBundle> {
        let (recon, v_c) = self.autoencoder.reconstruct(image)?;
        let orig = self.perceptual.perceive(image)?;
        let rec = self.perceptual.perceive(&recon)?;
        let v_d: Vec<f32> = orig.data().iter().zip(rec.data()).map(|(a, b)| a - b).collect();
        Ok(FeatureBundle {
            v_c: v_c.into_data(),
            v_d,
            perceived: orig.into_data(),
        })
    }

    /// `extract` over many images, in parallel, preserving order.
    pub fn extract_batch(&self, images: &[Tensor]) -> Result<Vec<FeatureBundle>> {
        images.par_iter().map(|img| self.extract(img)).collect()
    }
}

pub fn extract(image: &Tensor, ae: &AutoencoderModel<f32>, p: &PerceptualModel<f32>) -> Result<FeatureBundle> {
    Extractor::new(ae, p)?.extract(image)
}

pub fn extract_batch(images: &[Tensor], ae: &AutoencoderModel<f32>, p: &PerceptualModel<f32>) -> Result<Vec<FeatureBundle>> {
    Extractor::new(ae, p)?.extract_batch(images)
}
