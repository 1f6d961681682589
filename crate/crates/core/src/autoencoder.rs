//! Bottleneck autoencoder.
//!
//! Encoder: stride-2 conv blocks → flatten → linear dense layer, giving the
//! compressed vector `v_c`. Decoder: dense → ReLU → reshape → stride-2
//! transposed convs → sigmoid. Trained on the pixel-wise loss of
//! [`crate::layers::mse_pixel_loss`]; the narrow bottleneck forces the
//! reconstruction to drop local detail.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::{as_batch, check_divergence, divergence_on_nan, stack_images, BatchSampler, ConvSpec, Layer};
use crate::optim::{Adam, AdamConfig};
use crate::param::ParamStore;
use crate::synth::seeded_rng;
use crate::tensor::{Real, Tensor};

/// Images per forward pass during inference.
pub const INFERENCE_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderConfig {
    pub image_size: usize,
    pub in_channels: usize,
    /// Encoder conv widths; every block halves the spatial size.
    pub channels: Vec<usize>,
    pub bottleneck_dim: usize,
}

impl AutoencoderConfig {
    pub fn toy() -> Self {
        AutoencoderConfig {
            image_size: 32,
            in_channels: 3,
            channels: vec![16, 32, 64],
            bottleneck_dim: 64,
        }
    }

    pub fn paper_scale() -> Self {
        AutoencoderConfig {
            image_size: 224,
            in_channels: 3,
            channels: vec![32, 64, 128, 256, 512],
            bottleneck_dim: 2048,
        }
    }

    /// Spatial size at the end of the encoder conv stack.
    pub fn feature_size(&self) -> Result<usize> {
        let depth = self.channels.len() as u32;
        let div = 1usize << depth;
        if self.channels.is_empty() || !self.image_size.is_multiple_of(div) {
            return Err(Error::Config(format!(
                "image size {} must be divisible by 2^{depth} for {depth} encoder blocks",
                self.image_size
            )));
        }
        Ok(self.image_size / div)
    }

    pub fn flat_dim(&self) -> Result<usize> {
        let s = self.feature_size()?;
        Ok(self.channels.last().copied().unwrap_or(0) * s * s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Callback interval for checkpoints and logging; 0 disables.
    pub checkpoint_every: usize,
}

impl AutoencoderTrainConfig {
    pub fn toy() -> Self {
        AutoencoderTrainConfig {
            steps: 2000,
            batch_size: 64,
            adam: AdamConfig::with_learning_rate(1e-3),
            seed: 0,
            checkpoint_every: 0,
        }
    }

    pub fn paper_scale() -> Self {
        AutoencoderTrainConfig {
            steps: 80_000,
            batch_size: 600,
            adam: AdamConfig::with_learning_rate(1e-4),
            seed: 0,
            checkpoint_every: 5000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AutoencoderModel<T: Real = f32> {
    pub config: AutoencoderConfig,
    pub params: ParamStore<T>,
    encoder: Vec<Layer>,
    encoder_fc: Layer,
    decoder_fc: Layer,
    decoder: Vec<Layer>,
}

const DECONV_KERNEL: usize = 4;

impl<T: Real> AutoencoderModel<T> {
    pub fn new(config: AutoencoderConfig, seed: u64) -> Result<Self> {
        let flat = config.flat_dim()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut encoder = Vec::new();
        let mut in_c = config.in_channels;
        for (i, &c) in config.channels.iter().enumerate() {
            encoder.push(Layer::conv(&mut params, &format!("enc.conv{i}"), in_c, &ConvSpec::down(c), &mut rng)?);
            in_c = c;
        }
        let encoder_fc = Layer::dense(&mut params, "enc.fc", flat, config.bottleneck_dim, &mut rng)?;
        let decoder_fc = Layer::dense(&mut params, "dec.fc", config.bottleneck_dim, flat, &mut rng)?;
        let mut decoder = Vec::new();
        let mut widths: Vec<usize> = config.channels.iter().rev().copied().collect();
        widths.push(config.in_channels);
        for (i, pair) in widths.windows(2).enumerate() {
            decoder.push(Layer::transposed_conv(
                &mut params,
                &format!("dec.deconv{i}"),
                pair[0],
                pair[1],
                DECONV_KERNEL,
                &mut rng,
            )?);
        }
        Ok(AutoencoderModel {
            config,
            params,
            encoder,
            encoder_fc,
            decoder_fc,
            decoder,
        })
    }

    /// Rebuilds a model around loaded parameters, checking every shape.
    pub fn from_params(config: AutoencoderConfig, params: ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Incompatible(format!(
                "autoencoder expects {} tensors, checkpoint has {}",
                model.params.len(),
                params.len()
            )));
        }
        for (_, p) in params.iter() {
            model.params.set_value(&p.name, p.value.clone())?;
        }
        Ok(model)
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.config.bottleneck_dim
    }

    pub fn freeze(&mut self) {
        self.params.freeze();
    }

    pub fn is_frozen(&self) -> bool {
        self.params.all_frozen()
    }

    pub fn encode_graph(&self, g: &mut Graph<T>, x: NodeId) -> Result<NodeId> {
        self.encode_graph_with(&self.params, g, x)
    }

    /// Encoder graph reading weights from `store`, which must share this
    /// model's parameter layout (used by gradient checks).
    pub fn encode_graph_with(&self, store: &ParamStore<T>, g: &mut Graph<T>, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for (layer, &c) in self.encoder.iter().zip(&self.config.channels) {
            h = layer.apply_conv(g, store, h, &ConvSpec::down(c))?;
            h = g.relu(h)?;
        }
        let flat = g.flatten(h)?;
        self.encoder_fc.apply_dense(g, store, flat)
    }

    pub fn decode_graph(&self, g: &mut Graph<T>, z: NodeId) -> Result<NodeId> {
        self.decode_graph_with(&self.params, g, z)
    }

    pub fn decode_graph_with(&self, store: &ParamStore<T>, g: &mut Graph<T>, z: NodeId) -> Result<NodeId> {
        let n = g.value(z).batch();
        let s = self.config.feature_size()?;
        let c = *self.config.channels.last().expect("non-empty");
        let h = self.decoder_fc.apply_dense(g, store, z)?;
        let h = g.relu(h)?;
        let mut h = g.reshape(h, &[n, c, s, s])?;
        let last = self.decoder.len() - 1;
        for (i, layer) in self.decoder.iter().enumerate() {
            h = layer.apply_transposed_conv(g, store, h, 2, 1)?;
            if i < last {
                h = g.relu(h)?;
            }
        }
        g.sigmoid(h)
    }

    fn chunked<F>(&self, n: usize, mut f: F) -> Result<()>
    where
        F: FnMut(std::ops::Range<usize>) -> Result<()>,
    {
        let mut start = 0;
        while start < n {
            let end = (start + INFERENCE_CHUNK).min(n);
            f(start..end)?;
            start = end;
        }
        Ok(())
    }

    /// Latents (N×bottleneck_dim) for a C×H×W image or N×C×H×W batch.
    pub fn encode(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.reconstruct_inner(images, false)?.1)
    }

    /// Images (N×C×H×W, values in (0, 1)) for an N×bottleneck_dim batch or a
    /// single bottleneck vector.
    pub fn decode(&self, latents: &Tensor<T>) -> Result<Tensor<T>> {
        let d = self.config.bottleneck_dim;
        if !latents.numel().is_multiple_of(d) || latents.shape().last() != Some(&d) {
            return Err(Error::Incompatible(format!(
                "decoder expects vectors of length {d}, got shape {:?}",
                latents.shape()
            )));
        }
        let n = latents.numel() / d;
        let z = latents.reshape([n, d])?;
        let (s, c) = (self.config.image_size, self.config.in_channels);
        let mut out = Vec::with_capacity(n * c * s * s);
        self.chunked(n, |r| {
            let chunk = Tensor::new([r.len(), d], z.data()[r.start * d..r.end * d].to_vec())?;
            let mut g = Graph::new();
            let zi = g.input(chunk);
            let y = self.decode_graph(&mut g, zi)?;
            out.extend_from_slice(g.value(y).data());
            Ok(())
        })?;
        Tensor::new([n, c, s, s], out)
    }

    /// `(reconstruction, v_c)` for a C×H×W image or N×C×H×W batch.
    pub fn reconstruct(&self, images: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        self.reconstruct_inner(images, true)
    }

    fn reconstruct_inner(&self, images: &Tensor<T>, with_decode: bool) -> Result<(Tensor<T>, Tensor<T>)> {
        let batch = as_batch(images, self.config.in_channels, self.config.image_size)?;
        let n = batch.batch();
        let per = batch.numel() / n;
        let d = self.config.bottleneck_dim;
        let mut recon = Vec::with_capacity(if with_decode { batch.numel() } else { 0 });
        let mut latents = Vec::with_capacity(n * d);
        self.chunked(n, |r| {
            let mut shape = batch.shape().to_vec();
            shape[0] = r.len();
            let chunk = Tensor::new(shape, batch.data()[r.start * per..r.end * per].to_vec())?;
            let mut g = Graph::new();
            let x = g.input(chunk);
            let z = self.encode_graph(&mut g, x)?;
            latents.extend_from_slice(g.value(z).data());
            if with_decode {
                let y = self.decode_graph(&mut g, z)?;
                recon.extend_from_slice(g.value(y).data());
            }
            Ok(())
        })?;
        let recon = if with_decode {
            Tensor::new(batch.shape().to_vec(), recon)?
        } else {
            Tensor::scalar(T::zero())
        };
        Ok((recon, Tensor::new([n, d], latents)?))
    }

    /// Records the full reconstruction loss for a batch.
    pub fn loss_graph(&self, batch: Tensor<T>) -> Result<(Graph<T>, NodeId)> {
        self.loss_graph_with(&self.params, batch)
    }

    pub fn loss_graph_with(&self, store: &ParamStore<T>, batch: Tensor<T>) -> Result<(Graph<T>, NodeId)> {
        let mut g = Graph::new();
        let x = g.input(batch);
        let z = self.encode_graph_with(store, &mut g, x)?;
        let y = self.decode_graph_with(store, &mut g, z)?;
        let l = g.mse_pixel_loss(x, y)?;
        Ok((g, l))
    }
}

impl AutoencoderModel<f32> {
    /// Mean reconstruction loss over a dataset, weighting every image
    /// equally.
    pub fn evaluate_loss(&self, images: &[Tensor]) -> Result<f64> {
        if images.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        let mut total = 0.0;
        for chunk in images.chunks(INFERENCE_CHUNK) {
            let idx: Vec<usize> = (0..chunk.len()).collect();
            let batch = stack_images(chunk, &idx)?;
            let (recon, _) = self.reconstruct(&batch)?;
            total += crate::layers::mse_pixel_loss(&batch, &recon)? as f64 * chunk.len() as f64;
        }
        Ok(total / images.len() as f64)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Minibatch loss at every step, before that step's update.
    pub loss_history: Vec<f32>,
}

impl TrainReport {
    /// Mean of the first / last `window` recorded losses.
    pub fn head_tail_means(&self, window: usize) -> Option<(f64, f64)> {
        let n = self.loss_history.len();
        if n == 0 {
            return None;
        }
        let w = window.clamp(1, n);
        let mean = |s: &[f32]| s.iter().map(|&v| v as f64).sum::<f64>() / s.len() as f64;
        Some((mean(&self.loss_history[..w]), mean(&self.loss_history[n - w..])))
    }
}

/// Minimizes the pixel-wise loss with Adam. `on_checkpoint(step, model)` is
/// called every `checkpoint_every` steps and after the last step.
pub fn train_autoencoder(
    model: &mut AutoencoderModel<f32>,
    images: &[Tensor],
    hyper: &AutoencoderTrainConfig,
    mut on_checkpoint: impl FnMut(usize, &AutoencoderModel<f32>) -> Result<()>,
) -> Result<TrainReport> {
    if images.is_empty() {
        return Err(Error::Empty("autoencoder training set"));
    }
    let size = model.config.image_size;
    as_batch(&images[0], model.config.in_channels, size)?;
    let mut sampler = BatchSampler::new(images.len(), hyper.batch_size, seeded_rng(hyper.seed, 0xAE))?;
    let mut adam = Adam::new(hyper.adam, &model.params);
    let mut report = TrainReport::default();
    for step in 0..hyper.steps {
        let batch = stack_images(images, sampler.next_batch())?;
        model.params.zero_grad();
        let (mut g, l) = divergence_on_nan(step, model.loss_graph(batch))?;
        let loss = g.value(l).data()[0];
        let r = g.backward(l, &mut model.params);
        check_divergence(step, loss as f64, r)?;
        adam.step(&mut model.params)?;
        report.loss_history.push(loss);
        if hyper.checkpoint_every > 0 && (step + 1) % hyper.checkpoint_every == 0 {
            log::info!("autoencoder step {}: loss {loss:.5}", step + 1);
            on_checkpoint(step + 1, model)?;
        }
    }
    if hyper.checkpoint_every == 0 || !hyper.steps.is_multiple_of(hyper.checkpoint_every) {
        on_checkpoint(hyper.steps, model)?;
    }
    Ok(report)
}
