//! Frozen perceptual feature extractor `p`: a small conv backbone with a
//! global-average-pooled output, pretrained on the procedural proxy
//! classification task (or left random as a control) and then frozen.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::{as_batch, check_divergence, divergence_on_nan, stack_images, BatchSampler, ConvSpec, Layer};
use crate::optim::{Adam, AdamConfig};
use crate::param::ParamStore;
use crate::synth::proxy::NUM_CLASSES;
use crate::synth::seeded_rng;
use crate::tensor::{Real, Tensor};

const CHUNK: usize = 64;
const HEAD: &str = "head";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    ProxyPretrained,
    RandomFrozen,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::ProxyPretrained => "proxy-pretrained",
            Provenance::RandomFrozen => "random-frozen",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proxy-pretrained" => Ok(Provenance::ProxyPretrained),
            "random-frozen" => Ok(Provenance::RandomFrozen),
            other => Err(Error::Config(format!("unknown provenance {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerceptualConfig {
    pub image_size: usize,
    pub in_channels: usize,
    pub blocks: Vec<ConvSpec>,
}

impl PerceptualConfig {
    pub fn toy() -> Self {
        PerceptualConfig {
            image_size: 32,
            in_channels: 3,
            blocks: vec![ConvSpec::new(16, 3, 1, 1), ConvSpec::down(32), ConvSpec::down(64)],
        }
    }

    pub fn paper_scale() -> Self {
        PerceptualConfig {
            image_size: 224,
            in_channels: 3,
            blocks: vec![
                ConvSpec::new(32, 3, 2, 1),
                ConvSpec::down(64),
                ConvSpec::down(128),
                ConvSpec::down(256),
                ConvSpec::down(512),
                ConvSpec::new(2048, 3, 1, 1),
            ],
        }
    }

    /// D_p, the length of a perceived feature vector.
    pub fn feature_dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Config("perceptual backbone needs at least one block".into()));
        }
        let mut size = self.image_size;
        for (i, b) in self.blocks.iter().enumerate() {
            size = b
                .output_size(size)
                .ok_or_else(|| Error::Config(format!("perceptual block {i} does not fit a {size}px input")))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PerceptualModel<T: Real = f32> {
    pub config: PerceptualConfig,
    pub params: ParamStore<T>,
    pub provenance: Provenance,
    /// Held-out proxy accuracy, when pretrained in this process.
    pub proxy_accuracy: Option<f64>,
    layers: Vec<Layer>,
}

fn build_backbone<T: Real>(config: &PerceptualConfig, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<Vec<Layer>> {
    config.validate()?;
    let mut in_c = config.in_channels;
    let mut layers = Vec::with_capacity(config.blocks.len());
    for (i, b) in config.blocks.iter().enumerate() {
        layers.push(Layer::conv(store, &format!("p.conv{i}"), in_c, b, rng)?);
        in_c = b.channels;
    }
    Ok(layers)
}

impl<T: Real> PerceptualModel<T> {
    /// A randomly initialised backbone, frozen immediately.
    pub fn random_frozen(config: PerceptualConfig, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let layers = build_backbone(&config, &mut params, &mut ChaCha8Rng::seed_from_u64(seed))?;
        params.freeze();
        Ok(PerceptualModel {
            config,
            params,
            provenance: Provenance::RandomFrozen,
            proxy_accuracy: None,
            layers,
        })
    }

    /// Rebuilds a frozen model around loaded backbone parameters.
    pub fn from_params(config: PerceptualConfig, params: ParamStore<T>, provenance: Provenance) -> Result<Self> {
        let mut model = Self::random_frozen(config, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Incompatible(format!(
                "perceptual backbone expects {} tensors, checkpoint has {}",
                model.params.len(),
                params.len()
            )));
        }
        for (_, p) in params.iter() {
            model.params.set_value(&p.name, p.value.clone())?;
        }
        model.params.freeze();
        model.provenance = provenance;
        Ok(model)
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    pub fn is_frozen(&self) -> bool {
        self.params.all_frozen()
    }

    /// Pooled N×D_p features, reading weights from `store`.
    pub fn features_graph_with(&self, store: &ParamStore<T>, g: &mut Graph<T>, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for (layer, spec) in self.layers.iter().zip(&self.config.blocks) {
            h = layer.apply_conv(g, store, h, spec)?;
            h = g.relu(h)?;
        }
        g.global_avg_pool(h)
    }

    pub fn features_graph(&self, g: &mut Graph<T>, x: NodeId) -> Result<NodeId> {
        self.features_graph_with(&self.params, g, x)
    }

    /// Feature vectors (N×D_p) for a C×H×W image or N×C×H×W batch.
    pub fn perceive(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        if !self.is_frozen() {
            return Err(Error::Usage("perceive requires a frozen perceptual model".into()));
        }
        let batch = as_batch(images, self.config.in_channels, self.config.image_size)?;
        let n = batch.batch();
        let per = batch.numel() / n;
        let d = self.feature_dim();
        let mut out = Vec::with_capacity(n * d);
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let mut shape = batch.shape().to_vec();
            shape[0] = end - start;
            let chunk = Tensor::new(shape, batch.data()[start * per..end * per].to_vec())?;
            let mut g = Graph::new();
            let x = g.input(chunk);
            let f = self.features_graph(&mut g, x)?;
            out.extend_from_slice(g.value(f).data());
        }
        Tensor::new([n, d], out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProxyTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for ProxyTrainConfig {
    fn default() -> Self {
        ProxyTrainConfig {
            steps: 1500,
            batch_size: 64,
            adam: AdamConfig::with_learning_rate(1e-3),
            seed: 0,
        }
    }
}

fn classifier_loss(
    backbone: &PerceptualModel<f32>,
    store: &ParamStore<f32>,
    head: &Layer,
    batch: Tensor,
    labels: &[usize],
) -> Result<(Graph<f32>, NodeId, NodeId)> {
    let mut g = Graph::new();
    let x = g.input(batch);
    let f = backbone.features_graph_with(store, &mut g, x)?;
    let logits = head.apply_dense(&mut g, store, f)?;
    let l = g.softmax_cross_entropy(logits, labels)?;
    Ok((g, logits, l))
}

fn argmax(row: &[f32]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Trains backbone + linear head on the proxy classes, measures held-out
/// accuracy, discards the head and returns the frozen backbone.
pub fn pretrain_proxy(
    config: PerceptualConfig,
    train: &[(Tensor, usize)],
    held_out: &[(Tensor, usize)],
    hyper: &ProxyTrainConfig,
) -> Result<PerceptualModel<f32>> {
    if train.is_empty() {
        return Err(Error::Empty("proxy training set"));
    }
    if held_out.is_empty() {
        return Err(Error::Empty("proxy held-out set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut store = ParamStore::new();
    let layers = build_backbone(&config, &mut store, &mut rng)?;
    let head = Layer::dense(&mut store, HEAD, config.feature_dim(), NUM_CLASSES, &mut rng)?;
    let mut model = PerceptualModel {
        config,
        params: ParamStore::new(),
        provenance: Provenance::ProxyPretrained,
        proxy_accuracy: None,
        layers,
    };

    let images: Vec<Tensor> = train.iter().map(|(t, _)| t.clone()).collect();
    let mut sampler = BatchSampler::new(train.len(), hyper.batch_size, seeded_rng(hyper.seed, 0x9E))?;
    let mut adam = Adam::new(hyper.adam, &store);
    for step in 0..hyper.steps {
        let idx = sampler.next_batch();
        let labels: Vec<usize> = idx.iter().map(|&i| train[i].1).collect();
        let batch = stack_images(&images, idx)?;
        store.zero_grad();
        let (mut g, _, l) = divergence_on_nan(step, classifier_loss(&model, &store, &head, batch, &labels))?;
        let loss = g.value(l).data()[0];
        let r = g.backward(l, &mut store);
        check_divergence(step, loss as f64, r)?;
        adam.step(&mut store)?;
        if (step + 1) % 250 == 0 {
            log::info!("proxy step {}: loss {loss:.4}", step + 1);
        }
    }

    let held: Vec<Tensor> = held_out.iter().map(|(t, _)| t.clone()).collect();
    let mut correct = 0usize;
    for start in (0..held.len()).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(held.len())).collect();
        let labels: Vec<usize> = idx.iter().map(|&i| held_out[i].1).collect();
        let (g, logits, _) = classifier_loss(&model, &store, &head, stack_images(&held, &idx)?, &labels)?;
        let z = g.value(logits);
        correct += labels
            .iter()
            .enumerate()
            .filter(|&(r, &y)| argmax(&z.data()[r * NUM_CLASSES..(r + 1) * NUM_CLASSES]) == y)
            .count();
    }
    let accuracy = correct as f64 / held.len() as f64;
    log::info!("proxy held-out accuracy {accuracy:.3}");

    let mut backbone = ParamStore::new();
    for (_, p) in store.iter().filter(|(_, p)| !p.name.starts_with(HEAD)) {
        backbone.add(p.name.clone(), p.value.clone())?;
    }
    backbone.freeze();
    model.params = backbone;
    model.proxy_accuracy = Some(accuracy);
    Ok(model)
}
