//! The six training-loss terms and their weighted combination.
//!
//! Reconstruction terms (pixel L2, perceptual feature distance, identity
//! cosine) pull the final image toward the source; regularization terms
//! (delta-reg, W-reg moment matching, average-code reg) keep the layered
//! codes editable and near the mapped-latent distribution.

use crate::generator::StyleCode;
use crate::graph::{Graph, Var};
use crate::identity::IdentityNet;
use crate::imagecore::Image;
use crate::layers::{self, S2};
use crate::optim::{ParamStore, ParamVars};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Weight coefficients of the total loss. All must be finite and >= 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LossWeights {
    pub d_reg: f64,
    pub w_reg: f64,
    pub l2: f64,
    pub lpips: f64,
    pub id: f64,
    pub avg_reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { d_reg: 0.0005, w_reg: 0.005, l2: 1.0, lpips: 0.8, id: 0.1, avg_reg: 0.003 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::validation(format!(
                    "loss weight {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> {
        [
            ("d_reg", self.d_reg),
            ("w_reg", self.w_reg),
            ("l2", self.l2),
            ("lpips", self.lpips),
            ("id", self.id),
            ("avg_reg", self.avg_reg),
        ]
        .into_iter()
    }
}

/// Raw (unweighted) values of the six terms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LossTerms {
    pub d_reg: f64,
    pub w_reg: f64,
    pub l2: f64,
    pub lpips: f64,
    pub id: f64,
    pub avg_reg: f64,
}

impl LossTerms {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> {
        [
            ("d_reg", self.d_reg),
            ("w_reg", self.w_reg),
            ("l2", self.l2),
            ("lpips", self.lpips),
            ("id", self.id),
            ("avg_reg", self.avg_reg),
        ]
        .into_iter()
    }
}

/// Per-term raw values plus the weighted total.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LossReport {
    #[serde(flatten)]
    pub terms: LossTerms,
    pub total: f64,
}

/// total = sum of weight * term, computed in f64. Non-finite terms are
/// reported by name.
pub fn total_loss(terms: LossTerms, weights: &LossWeights) -> Result<LossReport> {
    weights.validate()?;
    let mut total = 0.0;
    for ((name, t), (_, w)) in terms.iter().zip(weights.iter()) {
        if !t.is_finite() {
            return Err(Error::Numeric { term: name.into(), message: format!("term value {t}") });
        }
        total += w * t;
    }
    Ok(LossReport { terms, total })
}

// ---------------------------------------------------------------------------
// Perceptual extractor
// ---------------------------------------------------------------------------

/// Fixed seed shared by every run so perceptual distances are comparable
/// across models.
const PERCEPTUAL_SEED: u64 = 0x10_715;

const STAGE_CHANNELS: [usize; 4] = [3, 16, 32, 64];

/// Three-stage frozen conv stack with fixed random weights; stage features
/// are channel-unit-normalized before comparison.
#[derive(Debug, Clone)]
pub struct PerceptualExtractor<T> {
    resolution: usize,
    store: ParamStore<T>,
}

impl<T: Scalar> PerceptualExtractor<T> {
    pub fn new(resolution: usize) -> Result<Self> {
        crate::imagecore::validate_resolution(resolution)?;
        let mut rng = Rng::derive(PERCEPTUAL_SEED, resolution as u64);
        let mut store = ParamStore::new();
        for i in 0..STAGE_CHANNELS.len() - 1 {
            layers::init_conv(&mut store, &format!("lpips.c{i}"), STAGE_CHANNELS[i + 1], STAGE_CHANNELS[i], 3, &mut rng);
        }
        Ok(PerceptualExtractor { resolution, store })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bind(&self, g: &Graph<T>) -> ParamVars {
        ParamVars::bind(g, &self.store, &[])
    }

    /// Stage features of one input, already unit-normalized per location.
    fn stages_with(&self, g: &Graph<T>, pv: &ParamVars, x: Var) -> Vec<Var> {
        let mut h = x;
        let mut out = Vec::with_capacity(STAGE_CHANNELS.len() - 1);
        for i in 0..STAGE_CHANNELS.len() - 1 {
            h = layers::lrelu(g, layers::conv(g, pv, &format!("lpips.c{i}"), h, S2));
            let norm = g.rsqrt_eps(g.sum_keep_ch(g.square(h)), 1e-10);
            out.push(g.mul(h, g.bcast_ch(norm, STAGE_CHANNELS[i + 1])));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Graph-level loss terms
// ---------------------------------------------------------------------------

/// Mean squared pixel error.
pub fn l2_on<T: Scalar>(g: &Graph<T>, x: Var, y: Var) -> Var {
    g.mean_all(g.square(g.sub(x, y)))
}

/// Mean over stages of mean squared distance between unit-normalized
/// feature maps.
pub fn lpips_on<T: Scalar>(
    g: &Graph<T>,
    ext: &PerceptualExtractor<T>,
    ext_pv: &ParamVars,
    x: Var,
    y: Var,
) -> Var {
    let fx = ext.stages_with(g, ext_pv, x);
    let fy = ext.stages_with(g, ext_pv, y);
    let mut acc = g.constant(Tensor::scalar(T::ZERO));
    let n = fx.len();
    for (a, b) in fx.into_iter().zip(fy) {
        acc = g.add(acc, g.mean_all(g.square(g.sub(a, b))));
    }
    g.scale(acc, 1.0 / n as f64)
}

/// 1 - cosine similarity of embeddings, averaged over the batch.
pub fn id_on<T: Scalar>(
    g: &Graph<T>,
    net: &IdentityNet<T>,
    id_pv: &ParamVars,
    x: Var,
    y: Var,
) -> Var {
    let ex = net.embed_with(g, id_pv, x);
    let ey = net.embed_with(g, id_pv, y);
    let dot = g.rows_dot(ex, ey);
    let inv_nx = g.recip(g.sqrt(g.rows_dot(ex, ex)));
    let inv_ny = g.recip(g.sqrt(g.rows_dot(ey, ey)));
    let cos = g.mul(dot, g.mul(inv_nx, inv_ny));
    g.mean_all(g.add_scalar(g.neg(cos), 1.0))
}

/// Mean squared offset from the average code.
pub fn avg_reg_on<T: Scalar>(g: &Graph<T>, w: Var, w_bar: Var) -> Var {
    g.mean_all(g.square(g.sub(w, w_bar)))
}

/// Sum over rows >= 1 of ||w_i - w_0||^2, scaled by 1/((L-1) D) and
/// averaged over the batch; zero for broadcast codes.
pub fn d_reg_on<T: Scalar>(g: &Graph<T>, w: Var) -> Var {
    let sh = g.shape(w);
    let (b, l, d) = (sh[0], sh[1], sh[2]);
    let row0 = g.row_select(w, 0);
    let tiled = g.stack_rows(&vec![row0; l]);
    let diff = g.sub(w, tiled);
    g.scale(g.sum_all(g.square(diff)), 1.0 / (b * (l - 1) * d) as f64)
}

/// First-two-moment matching between encoder codes and mapped-prior samples:
/// squared distance between per-coordinate means plus squared distance
/// between per-coordinate stds, summed over coordinates.
pub fn w_reg_on<T: Scalar>(g: &Graph<T>, w_batch: Var, w_samples: Var) -> Var {
    let moments = |v: Var| {
        let sh = g.shape(v);
        let (b, l, d) = (sh[0], sh[1], sh[2]);
        assert!(b >= 2, "w_reg needs batch >= 2");
        let flat = g.reshape(v, &[b, l * d]);
        let mean = g.scale(g.sum_axis0(flat), 1.0 / b as f64);
        let diff = g.sub(flat, g.broadcast_axis0(mean, b));
        let var = g.scale(g.sum_axis0(g.square(diff)), 1.0 / (b - 1) as f64);
        let std = g.sqrt(g.add_scalar(var, 1e-12));
        (mean, std)
    };
    let (mb, sb) = moments(w_batch);
    let (ms, ss) = moments(w_samples);
    g.add(g.sum_all(g.square(g.sub(mb, ms))), g.sum_all(g.square(g.sub(sb, ss))))
}

// ---------------------------------------------------------------------------
// Value-level operations
// ---------------------------------------------------------------------------

fn check_same_resolution<T: Scalar>(x: &Image<T>, y: &Image<T>) -> Result<()> {
    if x.resolution() != y.resolution() {
        return Err(Error::validation(format!(
            "image shapes differ: {} vs {}",
            x.resolution(),
            y.resolution()
        )));
    }
    Ok(())
}

pub fn l2_loss<T: Scalar>(x: &Image<T>, y: &Image<T>) -> Result<f64> {
    check_same_resolution(x, y)?;
    let diff = x.tensor().zip(y.tensor(), |a, b| a - b);
    Ok(diff.sq_norm_f64() / diff.numel() as f64)
}

pub fn lpips_loss<T: Scalar>(x: &Image<T>, y: &Image<T>, ext: &PerceptualExtractor<T>) -> Result<f64> {
    check_same_resolution(x, y)?;
    if x.resolution() != ext.resolution {
        return Err(Error::validation(format!(
            "extractor expects resolution {}, got {}",
            ext.resolution,
            x.resolution()
        )));
    }
    let g = Graph::new();
    let pv = ext.bind(&g);
    let r = x.resolution();
    let xv = g.constant(x.tensor().reshaped(&[1, 3, r, r]));
    let yv = g.constant(y.tensor().reshaped(&[1, 3, r, r]));
    Ok(g.value(lpips_on(&g, ext, &pv, xv, yv)).data()[0].to_f64())
}

pub fn id_loss<T: Scalar>(x: &Image<T>, y: &Image<T>, net: &IdentityNet<T>) -> Result<f64> {
    check_same_resolution(x, y)?;
    let ex = net.embed(x)?;
    let ey = net.embed(y)?;
    Ok(1.0 - crate::identity::cosine_similarity(&ex, &ey)?)
}

pub fn avg_reg<T: Scalar>(w_b: &StyleCode<T>, w_bar: &StyleCode<T>) -> Result<f64> {
    if w_b.tensor().shape() != w_bar.tensor().shape() {
        return Err(Error::validation("avg_reg shapes differ"));
    }
    let diff = w_b.tensor().zip(w_bar.tensor(), |a, b| a - b);
    Ok(diff.sq_norm_f64() / diff.numel() as f64)
}

pub fn d_reg<T: Scalar>(w: &StyleCode<T>) -> Result<f64> {
    let (l, d) = (w.rows(), w.dim());
    let data = w.tensor().data();
    let mut acc = 0.0;
    for row in 1..l {
        for k in 0..d {
            let diff = data[row * d + k].to_f64() - data[k].to_f64();
            acc += diff * diff;
        }
    }
    Ok(acc / ((l - 1) * d) as f64)
}

pub fn w_reg<T: Scalar>(w_batch: &[StyleCode<T>], w_samples: &[StyleCode<T>]) -> Result<f64> {
    if w_batch.len() < 2 || w_samples.len() < 2 {
        return Err(Error::validation("w_reg needs batches of at least 2 codes"));
    }
    let shape = w_batch[0].tensor().shape().to_vec();
    for c in w_batch.iter().chain(w_samples) {
        if c.tensor().shape() != shape {
            return Err(Error::validation("w_reg codes must share one shape"));
        }
    }
    let pack = |codes: &[StyleCode<T>]| {
        let mut data = Vec::new();
        for c in codes {
            data.extend_from_slice(c.tensor().data());
        }
        Tensor::new(&[codes.len(), shape[0], shape[1]], data)
    };
    let g = Graph::new();
    let wb = g.constant(pack(w_batch));
    let ws = g.constant(pack(w_samples));
    Ok(g.value(w_reg_on(&g, wb, ws)).data()[0].to_f64())
}
