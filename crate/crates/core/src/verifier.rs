//! Pairwise verification head: fuse two feature bundles into signed
//! difference and product blocks, then dense → ReLU → dense → sigmoid.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fusiform::{Extractor, FeatureBundle, Reconstructor};
use crate::graph::{Graph, NodeId};
use crate::nn::{check_divergence, divergence_on_nan, BatchSampler, Layer};
use crate::optim::{Adam, AdamConfig};
use crate::param::{ParamId, ParamStore};
use crate::synth::{seeded_rng, LabeledPair};
use crate::tensor::{Real, Tensor};

pub const DECISION_THRESHOLD: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionMode {
    Both,
    VcOnly,
    VdOnly,
    /// `perceive(I)` in place of `v_d`, without `v_c`.
    PerceptualRaw,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [
        FusionMode::Both,
        FusionMode::VcOnly,
        FusionMode::VdOnly,
        FusionMode::PerceptualRaw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Both => "both",
            FusionMode::VcOnly => "vc_only",
            FusionMode::VdOnly => "vd_only",
            FusionMode::PerceptualRaw => "perceptual_raw",
        }
    }

    /// Fused vector length for the given `v_c` and `v_d` dimensions.
    pub fn input_width(self, vc_dim: usize, vd_dim: usize) -> usize {
        match self {
            FusionMode::Both => 2 * vc_dim + 2 * vd_dim,
            FusionMode::VcOnly => 2 * vc_dim,
            FusionMode::VdOnly | FusionMode::PerceptualRaw => 2 * vd_dim,
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}; expected both, vc_only, vd_only or perceptual_raw")))
    }
}

fn push_blocks(out: &mut Vec<f32>, a: &[f32], b: &[f32], abs_diff: bool, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Incompatible(format!("{what} lengths differ: {} vs {}", a.len(), b.len())));
    }
    out.extend(a.iter().zip(b).map(|(x, y)| if abs_diff { (x - y).abs() } else { x - y }));
    out.extend(a.iter().zip(b).map(|(x, y)| x * y));
    Ok(())
}

/// `[v_c^a − v_c^b, v_c^a ⊙ v_c^b, v_d^a − v_d^b, v_d^a ⊙ v_d^b]`, keeping
/// only the blocks `mode` uses. `abs_diff` takes |a − b| instead.
pub fn fuse(a: &FeatureBundle, b: &FeatureBundle, mode: FusionMode, abs_diff: bool) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(2 * (a.v_c.len() + a.v_d.len()));
    match mode {
        FusionMode::Both => {
            push_blocks(&mut out, &a.v_c, &b.v_c, abs_diff, "v_c")?;
            push_blocks(&mut out, &a.v_d, &b.v_d, abs_diff, "v_d")?;
        }
        FusionMode::VcOnly => push_blocks(&mut out, &a.v_c, &b.v_c, abs_diff, "v_c")?,
        FusionMode::VdOnly => push_blocks(&mut out, &a.v_d, &b.v_d, abs_diff, "v_d")?,
        FusionMode::PerceptualRaw => push_blocks(&mut out, &a.perceived, &b.perceived, abs_diff, "perceived")?,
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifierConfig {
    pub mode: FusionMode,
    pub hidden: usize,
    pub abs_diff: bool,
}

impl VerifierConfig {
    pub fn toy(mode: FusionMode) -> Self {
        VerifierConfig {
            mode,
            hidden: 128,
            abs_diff: false,
        }
    }

    pub fn paper_scale(mode: FusionMode) -> Self {
        VerifierConfig {
            hidden: 1024,
            ..Self::toy(mode)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifierTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl VerifierTrainConfig {
    pub fn toy() -> Self {
        VerifierTrainConfig {
            steps: 3000,
            batch_size: 64,
            adam: AdamConfig::with_learning_rate(1e-3),
            seed: 0,
        }
    }

    pub fn paper_scale() -> Self {
        VerifierTrainConfig {
            steps: 80_000,
            batch_size: 600,
            adam: AdamConfig::with_learning_rate(1e-4),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifierModel<T: Real = f32> {
    pub config: VerifierConfig,
    pub input_width: usize,
    pub params: ParamStore<T>,
    input_mean: ParamId,
    input_scale: ParamId,
    hidden: Layer,
    output: Layer,
}

impl<T: Real> VerifierModel<T> {
    pub fn new(config: VerifierConfig, input_width: usize, seed: u64) -> Result<Self> {
        if input_width == 0 || config.hidden == 0 {
            return Err(Error::Config("verifier widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let input_mean = params.add("ver.input.mean", Tensor::zeros([input_width]))?;
        let input_scale = params.add("ver.input.scale", Tensor::full([input_width], T::one()))?;
        params.get_mut(input_mean).trainable = false;
        params.get_mut(input_scale).trainable = false;
        let hidden = Layer::dense(&mut params, "ver.hidden", input_width, config.hidden, &mut rng)?;
        let output = Layer::dense(&mut params, "ver.out", config.hidden, 1, &mut rng)?;
        Ok(VerifierModel {
            config,
            input_width,
            params,
            input_mean,
            input_scale,
            hidden,
            output,
        })
    }

    pub fn from_params(config: VerifierConfig, input_width: usize, params: ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config, input_width, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Incompatible(format!(
                "verifier expects {} tensors, checkpoint has {}",
                model.params.len(),
                params.len()
            )));
        }
        for (_, p) in params.iter() {
            model.params.set_value(&p.name, p.value.clone())?;
        }
        Ok(model)
    }

    /// Fixes the input standardization to the column statistics of `x`
    /// (N×width): inputs are mapped to `(x − mean) / std` before the
    /// hidden layer. Columns with zero spread are only centred.
    pub fn fit_input_standardization(&mut self, x: &Tensor<T>) -> Result<()> {
        let n = match *x.shape() {
            [n, w] if w == self.input_width && n > 0 => n,
            _ => return Err(Error::shape("fit_input_standardization", x.shape(), &[0, self.input_width])),
        };
        let w = self.input_width;
        let mut mean = vec![0.0f64; w];
        let mut sq = vec![0.0f64; w];
        for r in 0..n {
            for (j, &v) in x.sample(r).iter().enumerate() {
                mean[j] += v.to_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for r in 0..n {
            for (j, &v) in x.sample(r).iter().enumerate() {
                sq[j] += (v.to_f64() - mean[j]).powi(2);
            }
        }
        let scale: Vec<T> = sq
            .iter()
            .map(|&s| {
                let sd = (s / n as f64).sqrt();
                T::from_f64(if sd > 1e-12 { 1.0 / sd } else { 1.0 })
            })
            .collect();
        self.params.get_mut(self.input_mean).value = Tensor::new([w], mean.into_iter().map(T::from_f64).collect())?;
        self.params.get_mut(self.input_scale).value = Tensor::new([w], scale)?;
        Ok(())
    }

    /// Applies the stored input standardization to the rows of `x`.
    pub fn standardize(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let w = self.input_width;
        match *x.shape() {
            [_, c] if c == w => {}
            _ => return Err(Error::shape("standardize", x.shape(), &[0, w])),
        }
        let mean = self.params.value(self.input_mean).data();
        let scale = self.params.value(self.input_scale).data();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % w;
            *v = (*v - mean[j]) * scale[j];
        }
        Ok(out)
    }

    /// N×1 match probabilities for an N×width node of standardized inputs.
    pub fn forward_with(&self, store: &ParamStore<T>, g: &mut Graph<T>, x: NodeId) -> Result<NodeId> {
        let h = self.hidden.apply_dense(g, store, x)?;
        let h = g.relu(h)?;
        let z = self.output.apply_dense(g, store, h)?;
        g.sigmoid(z)
    }

    /// Mean BCE of the rows of `x` (N×width, already standardized) against
    /// `labels`.
    pub fn loss_graph_with(&self, store: &ParamStore<T>, x: Tensor<T>, labels: &[T]) -> Result<(Graph<T>, NodeId)> {
        let mut g = Graph::new();
        let xi = g.input(x);
        let p = self.forward_with(store, &mut g, xi)?;
        let l = g.bce_loss(p, labels)?;
        Ok((g, l))
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.input_width {
            return Err(Error::Incompatible(format!(
                "verifier for mode {} expects {} inputs, got {width}",
                self.config.mode, self.input_width
            )));
        }
        Ok(())
    }

    /// Similarity in (0, 1) for one fused vector.
    pub fn predict(&self, fused: &[T]) -> Result<T> {
        self.check_width(fused.len())?;
        let x = Tensor::new([1, fused.len()], fused.to_vec())?;
        Ok(self.predict_rows(&x)?[0])
    }

    /// Similarities for the rows of an N×width matrix.
    pub fn predict_rows(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        match *x.shape() {
            [_, w] => self.check_width(w)?,
            _ => return Err(Error::shape("predict", x.shape(), &[0, self.input_width])),
        }
        let mut g = Graph::new();
        let xi = g.input(self.standardize(x)?);
        let p = self.forward_with(&self.params, &mut g, xi)?;
        Ok(g.into_value(p).into_data())
    }
}

/// Fused rows and labels for `pairs`, with bundles indexed by image.
pub fn fuse_pairs(
    pairs: &[LabeledPair],
    bundles: &[FeatureBundle],
    mode: FusionMode,
    abs_diff: bool,
) -> Result<(Tensor, Vec<f32>)> {
    let first = pairs.first().ok_or(Error::Empty("pair list"))?;
    let get = |i: usize| {
        bundles
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("pair refers to image {i}, only {} bundles", bundles.len())))
    };
    let width = fuse(get(first.image_a)?, get(first.image_b)?, mode, abs_diff)?.len();
    let mut data = Vec::with_capacity(pairs.len() * width);
    for p in pairs {
        let row = fuse(get(p.image_a)?, get(p.image_b)?, mode, abs_diff)?;
        if row.len() != width {
            return Err(Error::Incompatible("feature bundles have inconsistent dimensions".into()));
        }
        data.extend(row);
    }
    let labels = pairs.iter().map(|p| p.label as f32).collect();
    Ok((Tensor::new([pairs.len(), width], data)?, labels))
}

#[derive(Clone, Debug, Default)]
pub struct VerifierReport {
    pub loss_history: Vec<f32>,
    /// Accuracy on the training pairs at the decision threshold.
    pub train_accuracy: f64,
}

/// Fraction of rows whose thresholded prediction equals the label.
pub fn accuracy(model: &VerifierModel, x: &Tensor, labels: &[f32]) -> Result<f64> {
    let scores = model.predict_rows(x)?;
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|&(&s, &y)| decide(s) == (y >= 0.5))
        .count();
    Ok(correct as f64 / labels.len().max(1) as f64)
}

pub fn decide(score: f32) -> bool {
    score >= DECISION_THRESHOLD
}

/// Trains a fresh verifier with BCE on precomputed feature bundles.
pub fn train_verifier_on_features(
    pairs: &[LabeledPair],
    bundles: &[FeatureBundle],
    config: &VerifierConfig,
    hyper: &VerifierTrainConfig,
) -> Result<(VerifierModel, VerifierReport)> {
    let (x, labels) = fuse_pairs(pairs, bundles, config.mode, config.abs_diff)?;
    let balance = labels.iter().sum::<f32>() as f64 / labels.len() as f64;
    if !(0.4..=0.6).contains(&balance) {
        log::warn!("verifier training set is unbalanced: {:.1}% matched pairs", balance * 100.0);
    }
    let width = x.shape()[1];
    let mut model = VerifierModel::new(config.clone(), width, hyper.seed)?;
    model.fit_input_standardization(&x)?;
    let xs = model.standardize(&x)?;
    let mut sampler = BatchSampler::new(pairs.len(), hyper.batch_size, seeded_rng(hyper.seed, 0x7E))?;
    let mut adam = Adam::new(hyper.adam, &model.params);
    let mut report = VerifierReport::default();
    let mut rows = Vec::new();
    let mut batch_labels = Vec::new();
    for step in 0..hyper.steps {
        let idx = sampler.next_batch();
        rows.clear();
        batch_labels.clear();
        for &i in idx {
            rows.extend_from_slice(xs.sample(i));
            batch_labels.push(labels[i]);
        }
        let batch = Tensor::new([idx.len(), width], rows.clone())?;
        model.params.zero_grad();
        let (mut g, l) = divergence_on_nan(step, model.loss_graph_with(&model.params, batch, &batch_labels))?;
        let loss = g.value(l).data()[0];
        let r = g.backward(l, &mut model.params);
        check_divergence(step, loss as f64, r)?;
        adam.step(&mut model.params)?;
        report.loss_history.push(loss);
    }
    report.train_accuracy = accuracy(&model, &x, &labels)?;
    Ok((model, report))
}

/// Extracts features for every image of the pair set through `extractor`
/// and trains a verifier on them.
pub fn train_verifier<R: Reconstructor + ?Sized>(
    pairs: &[LabeledPair],
    images: &[Tensor],
    extractor: &Extractor<'_, R>,
    config: &VerifierConfig,
    hyper: &VerifierTrainConfig,
) -> Result<(VerifierModel, VerifierReport)> {
    let bundles = extractor.extract_batch(images)?;
    train_verifier_on_features(pairs, &bundles, config, hyper)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verification {
    pub score: f32,
    pub same: bool,
}

/// End-to-end decision for one image pair, in the given order.
pub fn verify<R: Reconstructor + ?Sized>(
    model: &VerifierModel,
    extractor: &Extractor<'_, R>,
    image_a: &Tensor,
    image_b: &Tensor,
) -> Result<Verification> {
    let a = extractor.extract(image_a)?;
    let b = extractor.extract(image_b)?;
    let score = model.predict(&fuse(&a, &b, model.config.mode, model.config.abs_diff)?)?;
    Ok(Verification {
        score,
        same: decide(score),
    })
}
