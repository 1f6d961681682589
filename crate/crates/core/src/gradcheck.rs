//! Finite-difference gradient checking.
//!
//! The error for a parameter is the norm-wise relative error
//! `‖g_analytic − g_numeric‖₂ / max(‖g_analytic‖₂, ‖g_numeric‖₂)`, which
//! stays meaningful when individual entries are near zero.

use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::param::ParamStore;
use crate::tensor::{Real, Tensor};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }
}

/// Builds a loss graph from the current parameter values.
pub trait LossFn<T: Real>: Fn(&ParamStore<T>) -> Result<(Graph<T>, NodeId)> {}
impl<T: Real, F: Fn(&ParamStore<T>) -> Result<(Graph<T>, NodeId)>> LossFn<T> for F {}

pub fn analytic_gradients<T: Real>(store: &mut ParamStore<T>, loss: &impl LossFn<T>) -> Result<Vec<Tensor<T>>> {
    store.zero_grad();
    let (mut g, l) = loss(store)?;
    g.backward(l, store)?;
    Ok(store.iter().map(|(_, p)| p.grad.clone()).collect())
}

fn eval<T: Real>(store: &ParamStore<T>, loss: &impl LossFn<T>) -> Result<f64> {
    let (g, l) = loss(store)?;
    Ok(g.value(l).data()[0].to_f64())
}

/// Central differences for every trainable scalar; frozen parameters get
/// zero.
pub fn numerical_gradients<T: Real>(
    store: &mut ParamStore<T>,
    loss: &impl LossFn<T>,
    step: f64,
) -> Result<Vec<Tensor<T>>> {
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let shape = store.get(id).value.shape().to_vec();
        let mut grad = Tensor::zeros(shape);
        if store.get(id).trainable {
            for i in 0..grad.numel() {
                let orig = store.get(id).value.data()[i];
                store.get_mut(id).value.data_mut()[i] = orig + T::from_f64(step);
                let plus = eval(store, loss)?;
                store.get_mut(id).value.data_mut()[i] = orig - T::from_f64(step);
                let minus = eval(store, loss)?;
                store.get_mut(id).value.data_mut()[i] = orig;
                grad.data_mut()[i] = T::from_f64((plus - minus) / (2.0 * step));
            }
        }
        out.push(grad);
    }
    Ok(out)
}

pub fn relative_error<T: Real, U: Real>(analytic: &Tensor<T>, numeric: &Tensor<U>) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (&a, &n) in analytic.data().iter().zip(numeric.data()) {
        let (a, n) = (a.to_f64(), n.to_f64());
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    let denom = na.sqrt().max(nn.sqrt());
    if denom == 0.0 {
        0.0
    } else {
        diff.sqrt() / denom
    }
}

pub fn compare_gradients<T: Real, U: Real>(
    store: &ParamStore<T>,
    analytic: &[Tensor<T>],
    numeric: &[Tensor<U>],
    tolerance: f64,
) -> GradCheckReport {
    let params: Vec<ParamCheck> = store
        .iter()
        .zip(analytic.iter().zip(numeric))
        .filter(|((_, p), _)| p.trainable)
        .map(|((_, p), (a, n))| {
            let rel_error = relative_error(a, n);
            ParamCheck {
                name: p.name.clone(),
                rel_error,
                passed: rel_error < tolerance,
            }
        })
        .collect();
    let max_rel_error = params.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    GradCheckReport {
        params,
        max_rel_error,
        tolerance,
    }
}

/// Compares analytic gradients against central differences with step
/// [`FD_STEP`]. Intended for `f64` stores.
pub fn gradient_check<T: Real>(
    store: &mut ParamStore<T>,
    loss: &impl LossFn<T>,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradients(store, loss)?;
    let numeric = numerical_gradients(store, loss, FD_STEP)?;
    Ok(compare_gradients(store, &analytic, &numeric, tolerance))
}

/// Checks `f32` analytic gradients against `f64` central differences of the
/// same graph built from the up-cast parameters.
pub fn gradient_check_f32(
    store: &mut ParamStore<f32>,
    loss32: &impl LossFn<f32>,
    loss64: &impl LossFn<f64>,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradients(store, loss32)?;
    let mut wide = store.cast::<f64>();
    let numeric = numerical_gradients(&mut wide, loss64, FD_STEP)?;
    Ok(compare_gradients(store, &analytic, &numeric, tolerance))
}
