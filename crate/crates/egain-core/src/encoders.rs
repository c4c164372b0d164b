//! The two encoders of the inversion pipeline: the basic encoder mapping an
//! image to layered style-code offsets through a three-level feature
//! pyramid, and the delta encoder mapping a residual image to feature maps.
//!
//! The delta encoder's final conv is zero-initialized, so its output is
//! exactly zero for any input until training moves it; combined with the
//! zero-initialized detail convs in `fusion`, the whole delta branch starts
//! as a no-op.

use crate::fusion::DeltaImage;
use crate::generator::{GenConfig, StyleCode};
use crate::graph::{Graph, Var};
use crate::imagecore::Image;
use crate::layers::{self, S1, S2};
use crate::optim::{ParamStore, ParamVars};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Channel count of the delta feature maps M_d.
pub const DELTA_CHANNELS: usize = 64;

const HEAD_CHANNELS: usize = 64;

/// Delta feature maps, `[DELTA_CHANNELS, R/4, R/4]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps<T> {
    data: Tensor<T>,
}

impl<T: Scalar> FeatureMaps<T> {
    pub fn new(data: Tensor<T>) -> Result<Self> {
        let sh = data.shape();
        if sh.len() != 3 || sh[0] != DELTA_CHANNELS || sh[1] != sh[2] {
            return Err(Error::validation(format!(
                "feature maps must be [{DELTA_CHANNELS},r,r], got {sh:?}"
            )));
        }
        if !data.all_finite() {
            return Err(Error::validation("feature maps contain non-finite values"));
        }
        Ok(FeatureMaps { data })
    }

    pub fn resolution(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.data
    }
}

// ---------------------------------------------------------------------------
// Basic encoder
// ---------------------------------------------------------------------------

/// Pyramid level feeding style row `l`: coarse rows from the deepest level.
fn head_level(l: usize, num_styles: usize) -> usize {
    if 3 * l < num_styles {
        2 // deep, R/8
    } else if 3 * l < 2 * num_styles {
        1 // mid, R/4
    } else {
        0 // shallow, R/2
    }
}

const LEVEL_CHANNELS: [usize; 3] = [64, 128, 128]; // shallow, mid, deep

pub fn init_basic_encoder<T: Scalar>(store: &mut ParamStore<T>, cfg: &GenConfig, rng: &mut Rng) {
    layers::init_conv(store, "enc_b.stem", 32, 3, 3, rng);
    layers::init_conv(store, "enc_b.down0", LEVEL_CHANNELS[0], 32, 3, rng);
    layers::init_conv(store, "enc_b.down1", LEVEL_CHANNELS[1], LEVEL_CHANNELS[0], 3, rng);
    layers::init_conv(store, "enc_b.down2", LEVEL_CHANNELS[2], LEVEL_CHANNELS[1], 3, rng);
    for l in 0..cfg.num_styles() {
        let level = head_level(l, cfg.num_styles());
        let name = format!("enc_b.head{l}");
        layers::init_conv(store, &format!("{name}.conv"), HEAD_CHANNELS, LEVEL_CHANNELS[level], 3, rng);
        layers::init_linear(store, &format!("{name}.lin"), HEAD_CHANNELS, cfg.style_dim, rng);
    }
}

/// [B,3,R,R] -> [B,L,D] style-code offsets.
pub fn encode_basic_on<T: Scalar>(g: &Graph<T>, pv: &ParamVars, cfg: &GenConfig, x: Var) -> Var {
    let stem = layers::lrelu(g, layers::conv(g, pv, "enc_b.stem", x, S1));
    let shallow = layers::lrelu(g, layers::conv(g, pv, "enc_b.down0", stem, S2));
    let mid = layers::lrelu(g, layers::conv(g, pv, "enc_b.down1", shallow, S2));
    let deep = layers::lrelu(g, layers::conv(g, pv, "enc_b.down2", mid, S2));
    let levels = [shallow, mid, deep];
    let rows: Vec<Var> = (0..cfg.num_styles())
        .map(|l| {
            let name = format!("enc_b.head{l}");
            let src = levels[head_level(l, cfg.num_styles())];
            let h = layers::lrelu(g, layers::conv(g, pv, &format!("{name}.conv"), src, S2));
            let pooled = g.global_avg_pool(h);
            layers::linear(g, pv, &format!("{name}.lin"), pooled)
        })
        .collect();
    g.stack_rows(&rows)
}

/// Encode one image to style-code offsets (pre-normalization).
pub fn encode_basic<T: Scalar>(
    store: &ParamStore<T>,
    cfg: &GenConfig,
    x: &Image<T>,
) -> Result<StyleCode<T>> {
    if x.resolution() != cfg.resolution {
        return Err(Error::validation(format!(
            "basic encoder expects resolution {}, got {}",
            cfg.resolution,
            x.resolution()
        )));
    }
    let g = Graph::new();
    let pv = ParamVars::bind(&g, store, &[]);
    let r = cfg.resolution;
    let xv = g.constant(x.tensor().reshaped(&[1, 3, r, r]));
    let codes = encode_basic_on(&g, &pv, cfg, xv);
    StyleCode::new(g.value(codes).reshaped(&[cfg.num_styles(), cfg.style_dim]))
}

/// w_b = offsets + w_bar, elementwise.
pub fn normalize_codes<T: Scalar>(
    w_offsets: &StyleCode<T>,
    w_bar: &StyleCode<T>,
) -> Result<StyleCode<T>> {
    if w_offsets.tensor().shape() != w_bar.tensor().shape() {
        return Err(Error::validation(format!(
            "normalize_codes shapes differ: {:?} vs {:?}",
            w_offsets.tensor().shape(),
            w_bar.tensor().shape()
        )));
    }
    StyleCode::new(w_offsets.tensor().zip(w_bar.tensor(), |a, b| a + b))
}

// ---------------------------------------------------------------------------
// Delta encoder
// ---------------------------------------------------------------------------

pub fn init_delta_encoder<T: Scalar>(store: &mut ParamStore<T>, cfg: &GenConfig, rng: &mut Rng) {
    layers::init_conv(store, "enc_d.c1", 32, 3, 3, rng);
    layers::init_conv(store, "enc_d.c2", DELTA_CHANNELS, 32, 3, rng);
    layers::init_conv_zero(store, "enc_d.out", DELTA_CHANNELS, DELTA_CHANNELS, 3);
    // external-fusion head: pooled maps -> one latent code
    layers::init_linear_zero(store, "enc_d.ext", DELTA_CHANNELS, cfg.num_styles() * cfg.style_dim);
}

/// [B,3,R,R] -> [B,DELTA_CHANNELS,R/4,R/4].
pub fn encode_delta_on<T: Scalar>(g: &Graph<T>, pv: &ParamVars, delta: Var) -> Var {
    let h = layers::lrelu(g, layers::conv(g, pv, "enc_d.c1", delta, S2));
    let h = layers::lrelu(g, layers::conv(g, pv, "enc_d.c2", h, S2));
    layers::conv(g, pv, "enc_d.out", h, S1)
}

/// External-fusion head: [B,C,r,r] feature maps -> [B,L,D] latent code w_d.
pub fn external_code_on<T: Scalar>(g: &Graph<T>, pv: &ParamVars, cfg: &GenConfig, md: Var) -> Var {
    let pooled = g.global_avg_pool(md);
    let flat = layers::linear(g, pv, "enc_d.ext", pooled);
    g.reshape(flat, &[g.shape(md)[0], cfg.num_styles(), cfg.style_dim])
}

/// Encode one residual image to feature maps.
pub fn encode_delta<T: Scalar>(
    store: &ParamStore<T>,
    cfg: &GenConfig,
    delta: &DeltaImage<T>,
) -> Result<FeatureMaps<T>> {
    if delta.resolution() != cfg.resolution {
        return Err(Error::validation(format!(
            "delta encoder expects resolution {}, got {}",
            cfg.resolution,
            delta.resolution()
        )));
    }
    let g = Graph::new();
    let pv = ParamVars::bind(&g, store, &[]);
    let r = cfg.resolution;
    let dv = g.constant(delta.tensor().reshaped(&[1, 3, r, r]));
    let md = encode_delta_on(&g, &pv, dv);
    FeatureMaps::new(g.value(md).reshaped(&[DELTA_CHANNELS, r / 4, r / 4]))
}
