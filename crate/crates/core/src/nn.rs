//! Building blocks shared by the models: conv/dense parameter pairs,
//! minibatch sampling and training-loop plumbing.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::param::{he_uniform, ParamId, ParamStore};
use crate::tensor::{conv_output_dim, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub const fn new(channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        ConvSpec {
            channels,
            kernel,
            stride,
            pad,
        }
    }

    /// 4×4 kernel, stride 2, pad 1: halves the spatial size.
    pub const fn down(channels: usize) -> Self {
        Self::new(channels, 4, 2, 1)
    }

    pub fn output_size(&self, size: usize) -> Option<usize> {
        conv_output_dim(size, self.kernel, self.stride, self.pad)
    }
}

/// A weight/bias pair.
#[derive(Clone, Copy, Debug)]
pub struct Layer {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Layer {
    pub fn conv<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        spec: &ConvSpec,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let k = spec.kernel;
        let fan_in = in_channels * k * k;
        let weight = store.add(
            format!("{name}.weight"),
            he_uniform(&[spec.channels, in_channels, k, k], fan_in, rng),
        )?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([spec.channels]))?;
        Ok(Layer { weight, bias })
    }

    /// Transposed-conv layer mapping `in_channels` → `out_channels`; the
    /// kernel is `[in, out, K, K]`.
    pub fn transposed_conv<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        // Each output pixel receives in·K²/stride² taps; in·K²/4 for stride 2.
        let fan_in = (in_channels * kernel * kernel / 4).max(1);
        let weight = store.add(
            format!("{name}.weight"),
            he_uniform(&[in_channels, out_channels, kernel, kernel], fan_in, rng),
        )?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([out_channels]))?;
        Ok(Layer { weight, bias })
    }

    pub fn dense<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let weight = store.add(format!("{name}.weight"), he_uniform(&[inputs, outputs], inputs, rng))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([outputs]))?;
        Ok(Layer { weight, bias })
    }

    /// Looks up `{name}.weight` / `{name}.bias` in an existing store.
    pub fn find<T: Real>(store: &ParamStore<T>, name: &str) -> Result<Self> {
        let get = |suffix: &str| {
            store
                .id(&format!("{name}.{suffix}"))
                .ok_or_else(|| Error::Incompatible(format!("missing parameter {name}.{suffix}")))
        };
        Ok(Layer {
            weight: get("weight")?,
            bias: get("bias")?,
        })
    }

    pub fn apply_conv<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
        spec: &ConvSpec,
    ) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.conv2d(x, w, spec.stride, spec.pad)?;
        g.channel_bias(y, b)
    }

    pub fn apply_transposed_conv<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.transposed_conv2d(x, w, stride, pad)?;
        g.channel_bias(y, b)
    }

    pub fn apply_dense<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.dense(x, w, b)
    }
}

/// Epoch-style minibatch index sampler: shuffles, hands out consecutive
/// slices, reshuffles when exhausted.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(len: usize, batch: usize, rng: ChaCha8Rng) -> Result<Self> {
        if len == 0 {
            return Err(Error::Empty("training set"));
        }
        if batch == 0 {
            return Err(Error::InvalidArgument("batch size must be ≥ 1".into()));
        }
        let mut s = BatchSampler {
            order: (0..len).collect(),
            cursor: len,
            batch: batch.min(len),
            rng,
        };
        s.reshuffle();
        Ok(s)
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.cursor + self.batch > self.order.len() {
            self.reshuffle();
        }
        let start = self.cursor;
        self.cursor += self.batch;
        &self.order[start..self.cursor]
    }
}

/// Stacks the selected C×H×W images into an N×C×H×W batch.
pub fn stack_images<T: Real>(images: &[Tensor<T>], indices: &[usize]) -> Result<Tensor<T>> {
    let refs: Vec<&Tensor<T>> = indices.iter().map(|&i| &images[i]).collect();
    let first = refs.first().ok_or(Error::Empty("batch"))?;
    let mut shape = vec![refs.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(first.numel() * refs.len());
    for t in &refs {
        if t.shape() != first.shape() {
            return Err(Error::shape("stack_images", first.shape(), t.shape()));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::new(shape, data)
}

/// Turns a non-finite loss or activation at `step` into a divergence error.
pub fn check_divergence(step: usize, loss: f64, result: Result<()>) -> Result<()> {
    match result {
        Err(Error::NonFinite(_)) => Err(Error::Divergence { step, loss }),
        Err(e) => Err(e),
        Ok(()) if !loss.is_finite() => Err(Error::Divergence { step, loss }),
        Ok(()) => Ok(()),
    }
}

/// Maps graph-construction errors caused by non-finite values to
/// [`Error::Divergence`].
pub fn divergence_on_nan<V>(step: usize, r: Result<V>) -> Result<V> {
    match r {
        Err(Error::NonFinite(_)) => Err(Error::Divergence { step, loss: f64::NAN }),
        other => other,
    }
}

/// Accepts C×H×W or N×C×H×W and returns an N×C×H×W tensor checked against
/// the expected channel count and square size.
pub fn as_batch<T: Real>(images: &Tensor<T>, channels: usize, size: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = images.nchw()?;
    if c != channels || h != size || w != size {
        return Err(Error::Incompatible(format!(
            "model expects {channels}×{size}×{size} images, got shape {:?}",
            images.shape()
        )));
    }
    if images.rank() == 4 {
        Ok(images.clone())
    } else {
        images.reshape([n, c, h, w])
    }
}
