//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes in execution
//! order. [`Graph::backward`] walks the tape in reverse from a scalar loss and
//! adds parameter gradients into a [`ParamStore`]. Frozen parameters are
//! recorded as constants and never receive gradient.

use crate::error::{Error, Result};
use crate::layers;
use crate::param::{ParamId, ParamStore};
use crate::tensor::{self, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op<T: Real> {
    Leaf,
    Param(ParamId),
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        pad: usize,
    },
    TransposedConv2d {
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        pad: usize,
    },
    ChannelBias {
        input: NodeId,
        bias: NodeId,
    },
    GlobalAvgPool(NodeId),
    Dense {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Reshape(NodeId),
    Sum(NodeId),
    MsePixel {
        original: NodeId,
        reconstruction: NodeId,
    },
    Bce {
        prediction: NodeId,
        labels: Vec<T>,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
    },
}

#[derive(Clone, Debug)]
struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Result<NodeId> {
        if cfg!(debug_assertions) && !value.all_finite() {
            return Err(Error::NonFinite(op_name));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn into_value(mut self, id: NodeId) -> Tensor<T> {
        std::mem::replace(&mut self.nodes[id.0].value, Tensor::scalar(T::zero()))
    }

    /// Gradient of the last `backward` loss with respect to node `id`, if it
    /// required one.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// A constant input.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// An input whose gradient is retained and readable via [`Graph::grad`].
    pub fn input_with_grad(&mut self, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Records a parameter leaf. Frozen parameters become constants.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        let p = store.get(id);
        self.nodes.push(Node {
            value: p.value.clone(),
            op: Op::Param(id),
            requires_grad: p.trainable,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let y = tensor::conv2d_forward(self.value(input), self.value(kernel), stride, pad)?;
        let rg = self.needs(&[input, kernel]);
        self.push(
            "conv2d",
            y,
            Op::Conv2d {
                input,
                kernel,
                stride,
                pad,
            },
            rg,
        )
    }

    /// Transposed convolution with a `[C_in, C_out, K, K]` kernel: the
    /// input-gradient map of a convolution using the same kernel.
    pub fn transposed_conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let y = transposed_conv2d_forward(self.value(input), self.value(kernel), stride, pad)?;
        let rg = self.needs(&[input, kernel]);
        self.push(
            "transposed_conv2d",
            y,
            Op::TransposedConv2d {
                input,
                kernel,
                stride,
                pad,
            },
            rg,
        )
    }

    pub fn channel_bias(&mut self, input: NodeId, bias: NodeId) -> Result<NodeId> {
        let y = layers::add_channel_bias(self.value(input), self.value(bias))?;
        let rg = self.needs(&[input, bias]);
        self.push("channel_bias", y, Op::ChannelBias { input, bias }, rg)
    }

    pub fn global_avg_pool(&mut self, input: NodeId) -> Result<NodeId> {
        let y = layers::global_avg_pool(self.value(input))?;
        let rg = self.needs(&[input]);
        self.push("global_avg_pool", y, Op::GlobalAvgPool(input), rg)
    }

    pub fn dense(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let y = layers::dense(self.value(input), self.value(weight), self.value(bias))?;
        let rg = self.needs(&[input, weight, bias]);
        self.push(
            "dense",
            y,
            Op::Dense {
                input,
                weight,
                bias,
            },
            rg,
        )
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        let y = layers::relu(self.value(input));
        let rg = self.needs(&[input]);
        self.push("relu", y, Op::Relu(input), rg)
    }

    pub fn sigmoid(&mut self, input: NodeId) -> Result<NodeId> {
        let y = layers::sigmoid(self.value(input));
        let rg = self.needs(&[input]);
        self.push("sigmoid", y, Op::Sigmoid(input), rg)
    }

    pub fn reshape(&mut self, input: NodeId, shape: &[usize]) -> Result<NodeId> {
        let y = self.value(input).reshape(shape)?;
        let rg = self.needs(&[input]);
        self.push("reshape", y, Op::Reshape(input), rg)
    }

    /// Flattens N×… to N×(product of the rest).
    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId> {
        let v = self.value(input);
        let n = v.batch();
        let rest = v.numel() / n;
        self.reshape(input, &[n, rest])
    }

    pub fn sum(&mut self, input: NodeId) -> Result<NodeId> {
        let y = Tensor::scalar(self.value(input).sum());
        let rg = self.needs(&[input]);
        self.push("sum", y, Op::Sum(input), rg)
    }

    pub fn mse_pixel_loss(&mut self, original: NodeId, reconstruction: NodeId) -> Result<NodeId> {
        let l = layers::mse_pixel_loss(self.value(original), self.value(reconstruction))?;
        let rg = self.needs(&[original, reconstruction]);
        self.push(
            "mse_pixel_loss",
            Tensor::scalar(l),
            Op::MsePixel {
                original,
                reconstruction,
            },
            rg,
        )
    }

    /// Mean binary cross-entropy of N predictions (N or N×1) against labels.
    pub fn bce_loss(&mut self, prediction: NodeId, labels: &[T]) -> Result<NodeId> {
        let p = self.value(prediction);
        if p.numel() != labels.len() {
            return Err(Error::shape("bce_loss", p.shape(), &[labels.len()]));
        }
        let n = T::from_f64(labels.len() as f64);
        let l = p
            .data()
            .iter()
            .zip(labels)
            .map(|(&p, &y)| layers::bce_loss(p, y))
            .sum::<T>()
            / n;
        let rg = self.needs(&[prediction]);
        self.push(
            "bce_loss",
            Tensor::scalar(l),
            Op::Bce {
                prediction,
                labels: labels.to_vec(),
            },
            rg,
        )
    }

    /// Mean softmax cross-entropy of N×K logits against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let z = self.value(logits);
        let k = match *z.shape() {
            [n, k] if n == labels.len() => k,
            _ => return Err(Error::shape("softmax_cross_entropy", z.shape(), &[labels.len()])),
        };
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for {k} classes")));
        }
        let probs = layers::softmax_rows(z)?;
        let eps = T::min_positive_value();
        let l = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -(probs.data()[i * k + y].max(eps)).ln())
            .sum::<T>()
            / T::from_f64(labels.len() as f64);
        let rg = self.needs(&[logits]);
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(l),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
            rg,
        )
    }

    /// Back-propagates from the scalar node `loss`, adding gradients into the
    /// trainable parameters of `store`. Gradients accumulate across calls
    /// until [`ParamStore::zero_grad`].
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore<T>) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(Tensor::full(self.value(loss).shape().to_vec(), T::one()));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(dy) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &dy, store)?;
            self.grads[idx] = Some(dy);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, g: Tensor<T>) -> Result<()> {
        if !self.nodes[id.0].requires_grad {
            return Ok(());
        }
        match &mut self.grads[id.0] {
            Some(existing) => existing.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&mut self, idx: usize, dy: &Tensor<T>, store: &mut ParamStore<T>) -> Result<()> {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::Param(pid) => store.accumulate_grad(pid, dy)?,
            Op::Conv2d {
                input,
                kernel,
                stride,
                pad,
            } => {
                if self.wants(input) {
                    let (_, _, h, w) = self.value(input).nchw()?;
                    let dx = tensor::conv2d_backward_data(dy, self.value(kernel), stride, pad, h, w)?;
                    self.accumulate(input, dx)?;
                }
                if self.wants(kernel) {
                    let k = self.value(kernel).shape()[2];
                    let dk = tensor::conv2d_backward_weight(self.value(input), dy, k, stride, pad)?;
                    self.accumulate(kernel, dk)?;
                }
            }
            Op::TransposedConv2d {
                input,
                kernel,
                stride,
                pad,
            } => {
                if self.wants(input) {
                    let dx = tensor::conv2d_forward(dy, self.value(kernel), stride, pad)?;
                    self.accumulate(input, dx)?;
                }
                if self.wants(kernel) {
                    let k = self.value(kernel).shape()[2];
                    let dk = tensor::conv2d_backward_weight(dy, self.value(input), k, stride, pad)?;
                    self.accumulate(kernel, dk)?;
                }
            }
            Op::ChannelBias { input, bias } => {
                if self.wants(bias) {
                    let c = self.value(bias).numel();
                    let (_, _, h, w) = dy.nchw()?;
                    let mut db = vec![T::zero(); c];
                    for (i, plane) in dy.data().chunks_exact(h * w).enumerate() {
                        db[i % c] += plane.iter().copied().sum::<T>();
                    }
                    self.accumulate(bias, Tensor::new([c], db)?)?;
                }
                self.accumulate(input, dy.clone())?;
            }
            Op::GlobalAvgPool(input) => {
                let shape = self.value(input).shape().to_vec();
                let area = shape[2] * shape[3];
                let scale = T::one() / T::from_f64(area as f64);
                let mut dx = Vec::with_capacity(area * dy.numel());
                for &g in dy.data() {
                    dx.extend(std::iter::repeat_n(g * scale, area));
                }
                self.accumulate(input, Tensor::new(shape, dx)?)?;
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let (n, d) = (self.value(input).shape()[0], self.value(input).shape()[1]);
                let m = dy.shape()[1];
                if self.wants(input) {
                    let mut dx = vec![T::zero(); n * d];
                    T::gemm(n, m, d, dy.data(), false, self.value(weight).data(), true, &mut dx, false);
                    self.accumulate(input, Tensor::new([n, d], dx)?)?;
                }
                if self.wants(weight) {
                    let mut dw = vec![T::zero(); d * m];
                    T::gemm(d, n, m, self.value(input).data(), true, dy.data(), false, &mut dw, false);
                    self.accumulate(weight, Tensor::new([d, m], dw)?)?;
                }
                if self.wants(bias) {
                    let mut db = vec![T::zero(); m];
                    for row in dy.data().chunks_exact(m) {
                        for (b, &g) in db.iter_mut().zip(row) {
                            *b += g;
                        }
                    }
                    self.accumulate(bias, Tensor::new([m], db)?)?;
                }
            }
            Op::Relu(input) => {
                let dx = self.nodes[idx]
                    .value
                    .zip_map(dy, |y, g| if y > T::zero() { g } else { T::zero() })?;
                self.accumulate(input, dx)?;
            }
            Op::Sigmoid(input) => {
                let dx = self.nodes[idx]
                    .value
                    .zip_map(dy, |y, g| g * y * (T::one() - y))?;
                self.accumulate(input, dx)?;
            }
            Op::Reshape(input) => {
                let shape = self.value(input).shape().to_vec();
                self.accumulate(input, dy.reshape(shape)?)?;
            }
            Op::Sum(input) => {
                let g = dy.data()[0];
                let shape = self.value(input).shape().to_vec();
                self.accumulate(input, Tensor::full(shape, g))?;
            }
            Op::MsePixel {
                original,
                reconstruction,
            } => {
                let (n, _, h, w) = self.value(original).nchw()?;
                let scale = dy.data()[0] * T::from_f64(2.0) / T::from_f64((n * h * w) as f64);
                let diff = self
                    .value(original)
                    .zip_map(self.value(reconstruction), |a, b| (a - b) * scale)?;
                if self.wants(reconstruction) {
                    self.accumulate(reconstruction, diff.map(|v| -v))?;
                }
                self.accumulate(original, diff)?;
            }
            Op::Bce { prediction, labels } => {
                let eps = T::from_f64(layers::BCE_EPSILON);
                let one = T::one();
                let scale = dy.data()[0] / T::from_f64(labels.len() as f64);
                let p = self.value(prediction);
                let data = p
                    .data()
                    .iter()
                    .zip(&labels)
                    .map(|(&p, &y)| {
                        if p < eps || p > one - eps {
                            T::zero()
                        } else {
                            scale * (-y / p + (one - y) / (one - p))
                        }
                    })
                    .collect();
                let dx = Tensor::new(p.shape().to_vec(), data)?;
                self.accumulate(prediction, dx)?;
            }
            Op::SoftmaxCrossEntropy { logits, labels } => {
                let mut probs = layers::softmax_rows(self.value(logits))?;
                let k = probs.shape()[1];
                let scale = dy.data()[0] / T::from_f64(labels.len() as f64);
                for (row, &y) in probs.data_mut().chunks_exact_mut(k).zip(&labels) {
                    row[y] = row[y] - T::one();
                    row.iter_mut().for_each(|v| *v = *v * scale);
                }
                self.accumulate(logits, probs)?;
            }
        }
        Ok(())
    }
}

/// Transposed-convolution forward pass on plain tensors.
pub fn transposed_conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (_, _, h, w) = match *input.shape() {
        [n, c, h, w] => (n, c, h, w),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "transposed_conv2d expects NCHW, got {:?}",
                input.shape()
            )))
        }
    };
    if kernel.rank() != 4 || kernel.shape()[0] != input.shape()[1] {
        return Err(Error::shape("transposed_conv2d", input.shape(), kernel.shape()));
    }
    let k = kernel.shape()[2];
    let (ho, wo) = match (
        tensor::transposed_conv_output_dim(h, k, stride, pad),
        tensor::transposed_conv_output_dim(w, k, stride, pad),
    ) {
        (Some(ho), Some(wo)) if stride > 0 => (ho, wo),
        _ => return Err(Error::shape("transposed_conv2d", input.shape(), kernel.shape())),
    };
    tensor::conv2d_backward_data(input, kernel, stride, pad, ho, wo)
}
