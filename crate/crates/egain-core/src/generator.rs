//! The decoder: a miniature style-based generator that synthesizes images by
//! accumulating Haar subband predictions, plus a wavelet-domain
//! discriminator for adversarial pretraining.
//!
//! Synthesis layout for resolution R (power of two, >= 16):
//!
//! * `log2(R) - 1` blocks at resolutions 4, 8, ..., R;
//! * each block applies two demodulated style-modulated 3x3 convs driven by
//!   two rows of the layered code (so `L = 2 * blocks` style rows);
//! * each block's head conv predicts packed subband increments at half its
//!   resolution; the previous block's image is carried in as the low band
//!   (scaled by 2, the orthonormal-Haar constant gain) and `iwt2` composes
//!   the upsampled image.
//!
//! With detail injection disabled the whole pipeline is a deterministic
//! function of the style code.

use crate::fusion::FusionVars;
use crate::graph::{Graph, Var};
use crate::imagecore::Image;
use crate::layers::{self, S1, S2};
use crate::optim::{ParamStore, ParamVars};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const LATENT_DIM: usize = 64;
pub const STYLE_DIM: usize = 64;
pub const MAPPING_LAYERS: usize = 4;

const AVG_LATENT_STREAM: u64 = 0xa060;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct GenConfig {
    pub resolution: usize,
    pub latent_dim: usize,
    pub style_dim: usize,
    pub base_channels: usize,
    pub min_channels: usize,
}

impl GenConfig {
    pub fn for_resolution(resolution: usize) -> Result<Self> {
        crate::imagecore::validate_resolution(resolution)?;
        Ok(GenConfig {
            resolution,
            latent_dim: LATENT_DIM,
            style_dim: STYLE_DIM,
            base_channels: 128,
            min_channels: 32,
        })
    }

    pub fn num_blocks(&self) -> usize {
        (self.resolution.trailing_zeros() as usize) - 1
    }

    /// Two style rows per block.
    pub fn num_styles(&self) -> usize {
        2 * self.num_blocks()
    }

    pub fn block_resolution(&self, i: usize) -> usize {
        4 << i
    }

    pub fn block_channels(&self, i: usize) -> usize {
        (self.base_channels >> i).max(self.min_channels)
    }

    pub fn block_in_channels(&self, i: usize) -> usize {
        if i == 0 {
            self.base_channels
        } else {
            self.block_channels(i - 1)
        }
    }

    /// Indices of the blocks that receive detail injection: the blocks at
    /// resolutions R/4 and R/2.
    pub fn fused_blocks(&self) -> Vec<usize> {
        let b = self.num_blocks();
        vec![b - 3, b - 2]
    }

    /// (block index, feature resolution, feature channels) for fused blocks.
    pub fn fused_block_specs(&self) -> Vec<(usize, usize, usize)> {
        self.fused_blocks()
            .into_iter()
            .map(|i| (i, self.block_resolution(i), self.block_channels(i)))
            .collect()
    }
}

/// Layered per-block style code, `[L, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleCode<T> {
    data: Tensor<T>,
}

impl<T: Scalar> StyleCode<T> {
    pub fn new(data: Tensor<T>) -> Result<Self> {
        if data.shape().len() != 2 {
            return Err(Error::validation(format!(
                "style code must be [L,D], got {:?}",
                data.shape()
            )));
        }
        if !data.all_finite() {
            return Err(Error::validation("style code contains non-finite values"));
        }
        Ok(StyleCode { data })
    }

    pub fn rows(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Off,
    Seeded(u64),
}

// ---------------------------------------------------------------------------
// Parameter initialization
// ---------------------------------------------------------------------------

pub fn init_generator<T: Scalar>(store: &mut ParamStore<T>, cfg: &GenConfig, rng: &mut Rng) {
    store.insert("gen.const", Tensor::randn(&[1, cfg.base_channels, 4, 4], 1.0, rng));
    for i in 0..MAPPING_LAYERS {
        layers::init_linear(store, &format!("gen.map{i}"), cfg.latent_dim, cfg.style_dim, rng);
    }
    for i in 0..cfg.num_blocks() {
        let ic = cfg.block_in_channels(i);
        let oc = cfg.block_channels(i);
        layers::init_affine(store, &format!("gen.b{i}.aff1"), cfg.style_dim, ic, rng);
        layers::init_conv(store, &format!("gen.b{i}.conv1"), oc, ic, 3, rng);
        store.insert(format!("gen.b{i}.n1"), Tensor::zeros(&[1]));
        layers::init_affine(store, &format!("gen.b{i}.aff2"), cfg.style_dim, oc, rng);
        layers::init_conv(store, &format!("gen.b{i}.conv2"), oc, oc, 3, rng);
        store.insert(format!("gen.b{i}.n2"), Tensor::zeros(&[1]));
        layers::init_conv(store, &format!("gen.b{i}.head"), 12, oc, 3, rng);
    }
}

pub fn init_discriminator<T: Scalar>(store: &mut ParamStore<T>, cfg: &GenConfig, rng: &mut Rng) {
    layers::init_conv(store, "disc.stem", 64, 12, 3, rng);
    let mut ch = 64usize;
    let mut r = cfg.resolution / 2;
    let mut k = 0usize;
    while r > 4 {
        let next = (ch * 2).min(256);
        layers::init_conv(store, &format!("disc.down{k}"), next, ch, 3, rng);
        ch = next;
        r /= 2;
        k += 1;
    }
    layers::init_linear(store, "disc.out", ch * 16, 1, rng);
}

// ---------------------------------------------------------------------------
// Graph-level forward passes
// ---------------------------------------------------------------------------

/// Mapping network: [B, Dz] -> [B, D].
pub fn map_latent_on<T: Scalar>(g: &Graph<T>, pv: &ParamVars, z: Var) -> Var {
    let mut h = z;
    for i in 0..MAPPING_LAYERS {
        h = layers::lrelu(g, layers::linear(g, pv, &format!("gen.map{i}"), h));
    }
    h
}

/// Style-modulated, demodulated 3x3 conv.
///
/// Modulating input channels before an unmodulated conv equals modulating
/// the weights (linearity), so no per-sample weights are materialized; the
/// demodulation factor is computed per (sample, out-channel) as
/// 1/sqrt(sum_c s^2 * sum_uv w^2 + 1e-8).
fn modulated_conv<T: Scalar>(
    g: &Graph<T>,
    pv: &ParamVars,
    conv_name: &str,
    aff_name: &str,
    x: Var,
    style_row: Var,
) -> Var {
    let w = pv.var(&format!("{conv_name}.w"));
    let wsh = g.shape(w);
    let (oc, ic) = (wsh[0], wsh[1]);
    let s = layers::linear(g, pv, aff_name, style_row); // [B, IC]
    let xm = g.mul_channels(x, s);
    let y = g.conv2d(xm, w, S1);
    let wr = g.reshape(w, &[oc * ic, 9]);
    let q = g.reshape(g.rows_dot(wr, wr), &[oc, ic]); // per-(o,c) weight energy
    let t = g.matmul(g.square(s), g.transpose(q)); // [B, OC]
    let d = g.rsqrt_eps(t, 1e-8);
    let y = g.mul_channels(y, d);
    g.add_bias_nchw(y, pv.var(&format!("{conv_name}.b")))
}

fn add_noise<T: Scalar>(
    g: &Graph<T>,
    pv: &ParamVars,
    scale_name: &str,
    h: Var,
    noise: NoiseMode,
    salt: u64,
) -> Var {
    match noise {
        NoiseMode::Off => h,
        NoiseMode::Seeded(seed) => {
            let sh = g.shape(h);
            let mut rng = Rng::derive(seed, salt);
            let n = g.constant(Tensor::randn(&[sh[0], 1, sh[2], sh[3]], 1.0, &mut rng));
            let sc = g.broadcast_to(pv.var(scale_name), &[sh[0], 1, sh[2], sh[3]]);
            g.add(h, g.bcast_ch(g.mul(n, sc), sh[1]))
        }
    }
}

/// Full synthesis: `w` is `[B, L, D]`; returns the raw (unclamped) image
/// `[B, 3, R, R]`.
pub fn synthesize_on<T: Scalar>(
    g: &Graph<T>,
    pv: &ParamVars,
    cfg: &GenConfig,
    w: Var,
    fusion: Option<&FusionVars>,
    noise: NoiseMode,
) -> Var {
    let b = g.shape(w)[0];
    let c0 = cfg.base_channels;
    let konst = g.reshape(pv.var("gen.const"), &[c0 * 16]);
    let mut feat = g.reshape(g.broadcast_axis0(konst, b), &[b, c0, 4, 4]);
    let mut img: Option<Var> = None;
    for i in 0..cfg.num_blocks() {
        if i > 0 {
            feat = g.upsample2x(feat);
        }
        let row1 = g.row_select(w, 2 * i);
        feat = modulated_conv(g, pv, &format!("gen.b{i}.conv1"), &format!("gen.b{i}.aff1"), feat, row1);
        feat = add_noise(g, pv, &format!("gen.b{i}.n1"), feat, noise, (2 * i) as u64);
        feat = layers::lrelu(g, feat);
        let row2 = g.row_select(w, 2 * i + 1);
        feat = modulated_conv(g, pv, &format!("gen.b{i}.conv2"), &format!("gen.b{i}.aff2"), feat, row2);
        feat = add_noise(g, pv, &format!("gen.b{i}.n2"), feat, noise, (2 * i + 1) as u64);
        feat = layers::lrelu(g, feat);
        if let Some(f) = fusion {
            if let Some((gate, detail)) = f.get(i) {
                // F' = F + sigmoid(g) .* h
                feat = g.add(feat, g.mul(g.sigmoid(gate), detail));
            }
        }
        let mut sub = layers::conv(g, pv, &format!("gen.b{i}.head"), feat, S2);
        if let Some(prev) = img {
            // previous image becomes the low band; factor 2 is the
            // orthonormal-Haar gain of a constant block
            let carry = g.scale(prev, 2.0);
            sub = g.add(sub, g.pad_ch(carry, 0, 12));
        }
        img = Some(g.iwt2(sub));
    }
    img.expect("at least one generator block")
}

/// Discriminator over Haar subbands: [B,3,R,R] -> [B,1] logits.
pub fn discriminate_on<T: Scalar>(g: &Graph<T>, pv: &ParamVars, cfg: &GenConfig, x: Var) -> Var {
    let s = g.dwt2(x);
    let mut h = layers::lrelu(g, layers::conv(g, pv, "disc.stem", s, S1));
    let mut r = cfg.resolution / 2;
    let mut k = 0usize;
    while r > 4 {
        h = layers::lrelu(g, layers::conv(g, pv, &format!("disc.down{k}"), h, S2));
        r /= 2;
        k += 1;
    }
    let sh = g.shape(h);
    let flat = g.reshape(h, &[sh[0], sh[1] * 16]);
    layers::linear(g, pv, "disc.out", flat)
}

// ---------------------------------------------------------------------------
// Value-level operations
// ---------------------------------------------------------------------------

/// Run the mapping network on one latent.
pub fn map_latent<T: Scalar>(store: &ParamStore<T>, cfg: &GenConfig, z: &Tensor<T>) -> Result<Tensor<T>> {
    if z.shape() != [cfg.latent_dim] {
        return Err(Error::validation(format!(
            "latent must be [{}], got {:?}",
            cfg.latent_dim,
            z.shape()
        )));
    }
    if !z.all_finite() {
        return Err(Error::validation("latent contains non-finite values"));
    }
    let g = Graph::new();
    let pv = ParamVars::bind(&g, store, &[]);
    let zv = g.constant(z.reshaped(&[1, cfg.latent_dim]));
    let w = map_latent_on(&g, &pv, zv);
    Ok(g.value(w).reshaped(&[cfg.style_dim]))
}

/// Tile a single style vector into all L rows (W -> W+).
pub fn broadcast<T: Scalar>(cfg: &GenConfig, w_single: &Tensor<T>) -> Result<StyleCode<T>> {
    if w_single.shape() != [cfg.style_dim] {
        return Err(Error::validation(format!(
            "style vector must be [{}], got {:?}",
            cfg.style_dim,
            w_single.shape()
        )));
    }
    let l = cfg.num_styles();
    let mut data = Vec::with_capacity(l * cfg.style_dim);
    for _ in 0..l {
        data.extend_from_slice(w_single.data());
    }
    StyleCode::new(Tensor::new(&[l, cfg.style_dim], data))
}

/// Mean mapped latent over `n` standard-normal draws, broadcast to W+.
pub fn average_latent<T: Scalar>(
    store: &ParamStore<T>,
    cfg: &GenConfig,
    n: usize,
    seed: u64,
) -> Result<StyleCode<T>> {
    if n < 1 {
        return Err(Error::validation("average_latent needs n >= 1"));
    }
    let mut rng = Rng::derive(seed, AVG_LATENT_STREAM);
    let z = Tensor::<T>::randn(&[n, cfg.latent_dim], 1.0, &mut rng);
    let g = Graph::new();
    let pv = ParamVars::bind(&g, store, &[]);
    let zv = g.constant(z);
    let w = map_latent_on(&g, &pv, zv);
    let mean = g.scale(g.sum_axis0(w), 1.0 / n as f64);
    broadcast(cfg, &g.value(mean))
}

/// Validate a style code against the generator layout.
pub fn check_code<T: Scalar>(cfg: &GenConfig, w: &StyleCode<T>) -> Result<()> {
    if w.rows() != cfg.num_styles() || w.dim() != cfg.style_dim {
        return Err(Error::validation(format!(
            "style code is {}x{}, generator expects {}x{}",
            w.rows(),
            w.dim(),
            cfg.num_styles(),
            cfg.style_dim
        )));
    }
    Ok(())
}

/// Synthesize one image from a style code (optionally with fusion maps).
pub fn synthesize<T: Scalar>(
    store: &ParamStore<T>,
    cfg: &GenConfig,
    w: &StyleCode<T>,
    fusion: Option<&crate::fusion::FusionMaps<T>>,
    noise: NoiseMode,
) -> Result<Image<T>> {
    check_code(cfg, w)?;
    let g = Graph::new();
    let pv = ParamVars::bind(&g, store, &[]);
    let wv = g.constant(w.tensor().reshaped(&[1, w.rows(), w.dim()]));
    let fusion_vars = match fusion {
        Some(maps) => Some(maps.bind_constants(&g, cfg)?),
        None => None,
    };
    let img = synthesize_on(&g, &pv, cfg, wv, fusion_vars.as_ref(), noise);
    let r = cfg.resolution;
    Image::new(g.value(img).reshaped(&[3, r, r]))
}

/// Discriminator logit for one image.
pub fn discriminate<T: Scalar>(store: &ParamStore<T>, cfg: &GenConfig, x: &Image<T>) -> Result<f64> {
    if x.resolution() != cfg.resolution {
        return Err(Error::validation(format!(
            "discriminator expects resolution {}, got {}",
            cfg.resolution,
            x.resolution()
        )));
    }
    let g = Graph::new();
    let pv = ParamVars::bind(&g, store, &[]);
    let r = cfg.resolution;
    let xv = g.constant(x.tensor().reshaped(&[1, 3, r, r]));
    let logit = discriminate_on(&g, &pv, cfg, xv);
    Ok(g.value(logit).data()[0].to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_setup(res: usize) -> (ParamStore<f64>, GenConfig) {
        let cfg = GenConfig::for_resolution(res).unwrap();
        let mut store = ParamStore::new();
        let mut rng = Rng::new(99);
        init_generator(&mut store, &cfg, &mut rng);
        init_discriminator(&mut store, &cfg, &mut rng);
        (store, cfg)
    }

    #[test]
    fn config_layout() {
        let cfg = GenConfig::for_resolution(32).unwrap();
        assert_eq!(cfg.num_blocks(), 4);
        assert_eq!(cfg.num_styles(), 8);
        assert_eq!(
            (0..4).map(|i| cfg.block_channels(i)).collect::<Vec<_>>(),
            vec![128, 64, 32, 32]
        );
        assert_eq!(cfg.fused_blocks(), vec![1, 2]);
        assert_eq!(cfg.block_resolution(3), 32);
    }

    #[test]
    fn map_latent_contracts() {
        let (store, cfg) = toy_setup(16);
        let mut rng = Rng::new(1);
        let z = Tensor::randn(&[LATENT_DIM], 1.0, &mut rng);
        let w1 = map_latent(&store, &cfg, &z).unwrap();
        let w2 = map_latent(&store, &cfg, &z).unwrap();
        assert_eq!(w1.data(), w2.data(), "deterministic");
        assert_eq!(w1.shape(), &[STYLE_DIM]);

        let mut z2 = z.clone();
        z2.data_mut()[7] += 0.5;
        let w3 = map_latent(&store, &cfg, &z2).unwrap();
        assert!(w1.max_abs_diff(&w3) > 0.0, "outputs must differ");

        let mut z_bad = z.clone();
        z_bad.data_mut()[0] = f64::NAN;
        assert!(map_latent(&store, &cfg, &z_bad).is_err());
    }

    #[test]
    fn broadcast_tiles_rows() {
        let cfg = GenConfig::for_resolution(16).unwrap();
        let mut rng = Rng::new(2);
        let v = Tensor::<f64>::randn(&[STYLE_DIM], 1.0, &mut rng);
        let code = broadcast(&cfg, &v).unwrap();
        assert_eq!(code.rows(), cfg.num_styles());
        for l in 0..code.rows() {
            for d in 0..STYLE_DIM {
                assert_eq!(code.tensor().data()[l * STYLE_DIM + d], v.data()[d]);
            }
        }
        let zeros = broadcast(&cfg, &Tensor::<f64>::zeros(&[STYLE_DIM])).unwrap();
        assert!(zeros.tensor().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn average_latent_contracts() {
        let (store, cfg) = toy_setup(16);
        assert!(average_latent(&store, &cfg, 0, 1).is_err());

        let a = average_latent(&store, &cfg, 50, 7).unwrap();
        let b = average_latent(&store, &cfg, 50, 7).unwrap();
        assert_eq!(a.tensor().data(), b.tensor().data(), "deterministic");

        // law of large numbers: consecutive estimates converge
        let gap = |n: usize| {
            let x = average_latent(&store, &cfg, n, 7).unwrap();
            let y = average_latent(&store, &cfg, 2 * n, 7).unwrap();
            x.tensor().max_abs_diff(y.tensor())
        };
        assert!(gap(10_000) < gap(100), "estimate gap must shrink with n");
    }

    #[test]
    fn average_of_one_is_broadcast_of_single_map() {
        let (store, cfg) = toy_setup(16);
        let avg = average_latent(&store, &cfg, 1, 3).unwrap();
        let mut rng = Rng::derive(3, AVG_LATENT_STREAM);
        let z = Tensor::<f64>::randn(&[cfg.latent_dim], 1.0, &mut rng);
        let w = map_latent(&store, &cfg, &z).unwrap();
        let expected = broadcast(&cfg, &w).unwrap();
        assert!(avg.tensor().max_abs_diff(expected.tensor()) < 1e-9);
    }

    #[test]
    fn synthesize_deterministic_and_shaped() {
        let (store, cfg) = toy_setup(16);
        let w = average_latent(&store, &cfg, 4, 5).unwrap();
        let a = synthesize(&store, &cfg, &w, None, NoiseMode::Off).unwrap();
        let b = synthesize(&store, &cfg, &w, None, NoiseMode::Off).unwrap();
        assert_eq!(a.tensor().data(), b.tensor().data());
        assert_eq!(a.tensor().shape(), &[3, 16, 16]);

        // seeded noise is deterministic too and differs from off only via
        // the (zero-initialized) scales, so at init they coincide
        let c = synthesize(&store, &cfg, &w, None, NoiseMode::Seeded(11)).unwrap();
        assert!(a.tensor().max_abs_diff(c.tensor()) < 1e-12);
    }

    #[test]
    fn wrong_code_shape_rejected() {
        let (store, cfg) = toy_setup(16);
        let bad = StyleCode::new(Tensor::zeros(&[3, STYLE_DIM])).unwrap();
        assert!(synthesize(&store, &cfg, &bad, None, NoiseMode::Off).is_err());
    }

    #[test]
    fn demodulation_bounds_output_std() {
        // unit-variance inputs and unit-ish styles -> per-channel output std
        // must stay within [0.1, 10]
        let (store, cfg) = toy_setup(16);
        let g = Graph::new();
        let pv = ParamVars::bind(&g, &store, &[]);
        let mut rng = Rng::new(31);
        let x = g.constant(Tensor::randn(&[8, cfg.base_channels, 4, 4], 1.0, &mut rng));
        let style = g.constant(Tensor::randn(&[8, STYLE_DIM], 1.0, &mut rng));
        let y = modulated_conv(&g, &pv, "gen.b0.conv1", "gen.b0.aff1", x, style);
        let yv = g.value(y);
        let (b, c, hw) = (8, cfg.block_channels(0), 16);
        for cc in 0..c {
            let mut sum = 0.0;
            let mut sq = 0.0;
            let mut count = 0.0;
            for bi in 0..b {
                for k in 0..hw {
                    let v = yv.data()[(bi * c + cc) * hw + k];
                    sum += v;
                    sq += v * v;
                    count += 1.0;
                }
            }
            let mean = sum / count;
            let std = (sq / count - mean * mean).sqrt();
            assert!((0.1..=10.0).contains(&std), "channel {cc} std {std}");
        }
    }

    #[test]
    fn discriminate_deterministic_scalar_and_differentiable() {
        let (store, cfg) = toy_setup(16);
        let w = average_latent(&store, &cfg, 4, 5).unwrap();
        let img = synthesize(&store, &cfg, &w, None, NoiseMode::Off).unwrap();
        let l1 = discriminate(&store, &cfg, &img).unwrap();
        let l2 = discriminate(&store, &cfg, &img).unwrap();
        assert_eq!(l1, l2);
        assert!(l1.is_finite());

        // finite-difference check on one weight
        let g = Graph::new();
        let pv = ParamVars::bind(&g, &store, &["disc."]);
        let xv = g.constant(img.tensor().reshaped(&[1, 3, 16, 16]));
        let logit = discriminate_on(&g, &pv, &cfg, xv);
        let loss = g.sum_all(logit);
        let wvar = pv.var("disc.stem.w");
        let grad = g.backward(loss, &[wvar])[0].clone().unwrap();

        let coord = 5;
        let h = 1e-5;
        let eval = |delta: f64| {
            let mut s2 = store.clone();
            s2.get_mut("disc.stem.w").data_mut()[coord] += delta;
            discriminate(&s2, &cfg, &img).unwrap()
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let a = grad.data()[coord];
        assert!(
            (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8) < 1e-3,
            "analytic {a} vs fd {fd}"
        );
    }
}
