//! Shared conv/linear layer plumbing: parameter registration and graph
//! application. Internal to the crate.

use crate::graph::{Graph, Var};
use crate::optim::{ParamStore, ParamVars};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{ConvSpec, Tensor};

pub(crate) const LRELU_SLOPE: f64 = 0.2;
/// Variance-restoring gain applied after leaky-relu activations.
pub(crate) const LRELU_GAIN: f64 = std::f64::consts::SQRT_2;

pub(crate) fn init_conv<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    out_c: usize,
    in_c: usize,
    k: usize,
    rng: &mut Rng,
) {
    let std = (2.0 / (in_c * k * k) as f64).sqrt();
    store.insert(format!("{name}.w"), Tensor::randn(&[out_c, in_c, k, k], std, rng));
    store.insert(format!("{name}.b"), Tensor::zeros(&[out_c]));
}

pub(crate) fn init_conv_zero<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    out_c: usize,
    in_c: usize,
    k: usize,
) {
    store.insert(format!("{name}.w"), Tensor::zeros(&[out_c, in_c, k, k]));
    store.insert(format!("{name}.b"), Tensor::zeros(&[out_c]));
}

pub(crate) fn init_linear<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut Rng,
) {
    let std = (2.0 / fan_in as f64).sqrt();
    store.insert(format!("{name}.w"), Tensor::randn(&[fan_in, fan_out], std, rng));
    store.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
}

pub(crate) fn init_linear_zero<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    fan_in: usize,
    fan_out: usize,
) {
    store.insert(format!("{name}.w"), Tensor::zeros(&[fan_in, fan_out]));
    store.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
}

/// Style affine: linear whose bias starts at one so modulation begins as
/// identity.
pub(crate) fn init_affine<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut Rng,
) {
    let std = (1.0 / fan_in as f64).sqrt();
    store.insert(format!("{name}.w"), Tensor::randn(&[fan_in, fan_out], std, rng));
    store.insert(format!("{name}.b"), Tensor::full(&[fan_out], T::ONE));
}

/// conv + bias.
pub(crate) fn conv<T: Scalar>(
    g: &Graph<T>,
    pv: &ParamVars,
    name: &str,
    x: Var,
    spec: ConvSpec,
) -> Var {
    let y = g.conv2d(x, pv.var(&format!("{name}.w")), spec);
    g.add_bias_nchw(y, pv.var(&format!("{name}.b")))
}

/// matmul + bias.
pub(crate) fn linear<T: Scalar>(g: &Graph<T>, pv: &ParamVars, name: &str, x: Var) -> Var {
    g.linear(x, pv.var(&format!("{name}.w")), pv.var(&format!("{name}.b")))
}

/// leaky-relu followed by the sqrt(2) gain.
pub(crate) fn lrelu<T: Scalar>(g: &Graph<T>, x: Var) -> Var {
    g.leaky_relu_gain(x, LRELU_SLOPE, LRELU_GAIN)
}

pub(crate) const S1: ConvSpec = ConvSpec { stride: 1, pad: 1 };
pub(crate) const S2: ConvSpec = ConvSpec { stride: 2, pad: 1 };
