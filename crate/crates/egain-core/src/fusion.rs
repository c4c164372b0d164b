//! The delta branch: compute the information lost by the first inversion
//! pass, embed it into per-block gate/detail maps, and fuse it back —
//! either inside the generator (gated additive residual on block features)
//! or externally in latent space.
//!
//! The internal fusion rule is `F' = F + sigmoid(g) .* h` with the detail
//! convs zero-initialized, so an untrained delta branch leaves the baseline
//! reconstruction exactly unchanged.

use crate::encoders::{FeatureMaps, DELTA_CHANNELS};
use crate::generator::{GenConfig, StyleCode};
use crate::graph::{Graph, Var};
use crate::imagecore::Image;
use crate::layers::{self, S1};
use crate::optim::{ParamStore, ParamVars};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Elementwise difference of two images; values in [-2, 2].
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaImage<T> {
    data: Tensor<T>,
}

impl<T: Scalar> DeltaImage<T> {
    pub fn new(data: Tensor<T>) -> Result<Self> {
        let sh = data.shape();
        if sh.len() != 3 || sh[0] != 3 || sh[1] != sh[2] {
            return Err(Error::validation(format!("delta must be [3,R,R], got {sh:?}")));
        }
        if !data.all_finite() {
            return Err(Error::validation("delta contains non-finite values"));
        }
        let two = T::from_f64(2.0);
        if data.data().iter().any(|v| v.abs() > two) {
            return Err(Error::validation("delta values must lie in [-2, 2]"));
        }
        Ok(DeltaImage { data })
    }

    pub fn resolution(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.data
    }
}

/// Per-fused-block gate logits and detail maps, shaped like the block's
/// features.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionMaps<T> {
    pub blocks: Vec<FusionBlock<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionBlock<T> {
    pub block_index: usize,
    /// Pre-activation gate logits, `[C, r, r]`.
    pub gate: Tensor<T>,
    /// Detail map, `[C, r, r]`.
    pub detail: Tensor<T>,
}

impl<T: Scalar> FusionMaps<T> {
    /// Insert as frozen graph constants (batch 1), checking shapes against
    /// the generator layout.
    pub fn bind_constants(&self, g: &Graph<T>, cfg: &GenConfig) -> Result<FusionVars> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let r = cfg.block_resolution(b.block_index);
            let c = cfg.block_channels(b.block_index);
            if b.gate.shape() != [c, r, r] || b.detail.shape() != [c, r, r] {
                return Err(Error::validation(format!(
                    "fusion maps for block {} must be [{c},{r},{r}], got {:?}/{:?}",
                    b.block_index,
                    b.gate.shape(),
                    b.detail.shape()
                )));
            }
            blocks.push((
                b.block_index,
                g.constant(b.gate.reshaped(&[1, c, r, r])),
                g.constant(b.detail.reshaped(&[1, c, r, r])),
            ));
        }
        Ok(FusionVars { blocks })
    }
}

/// Graph-level fusion inputs: (block index, gate var, detail var).
pub struct FusionVars {
    pub blocks: Vec<(usize, Var, Var)>,
}

impl FusionVars {
    pub fn get(&self, block_index: usize) -> Option<(Var, Var)> {
        self.blocks
            .iter()
            .find(|(i, _, _)| *i == block_index)
            .map(|&(_, g, d)| (g, d))
    }
}

/// The delta calculator: exact elementwise x - y0.
pub fn compute_delta<T: Scalar>(x: &Image<T>, y0: &Image<T>) -> Result<DeltaImage<T>> {
    if x.resolution() != y0.resolution() {
        return Err(Error::validation(format!(
            "delta operands differ: {} vs {}",
            x.resolution(),
            y0.resolution()
        )));
    }
    DeltaImage::new(x.tensor().zip(y0.tensor(), |a, b| a - b))
}

/// Register the per-block gate/detail convs. Detail convs start at zero so
/// fusion is the identity at initialization.
pub fn init_fusion_embed<T: Scalar>(store: &mut ParamStore<T>, cfg: &GenConfig, rng: &mut Rng) {
    for (i, _r, c) in cfg.fused_block_specs() {
        layers::init_conv(store, &format!("fuse.b{i}.gate"), c, DELTA_CHANNELS, 3, rng);
        layers::init_conv_zero(store, &format!("fuse.b{i}.detail"), c, DELTA_CHANNELS, 3);
    }
}

/// Graph-level embedding: nearest-neighbor resize of the delta feature maps
/// to each fused block's resolution, then one gate conv and one detail conv.
pub fn embed_fusion_on<T: Scalar>(
    g: &Graph<T>,
    pv: &ParamVars,
    cfg: &GenConfig,
    md: Var,
) -> FusionVars {
    let base = g.shape(md)[2];
    let mut blocks = Vec::new();
    for (i, r, _c) in cfg.fused_block_specs() {
        let mut x = md;
        let mut cur = base;
        while cur < r {
            x = g.upsample2x(x);
            cur *= 2;
        }
        assert_eq!(cur, r, "feature maps cannot be downsized to block resolution");
        let gate = layers::conv(g, pv, &format!("fuse.b{i}.gate"), x, S1);
        let detail = layers::conv(g, pv, &format!("fuse.b{i}.detail"), x, S1);
        blocks.push((i, gate, detail));
    }
    FusionVars { blocks }
}

/// Value-level embedding with spec validation.
///
/// `block_specs` is the expected (resolution, channels) list for the fused
/// blocks, normally [`GenConfig::fused_block_specs`] minus the index.
pub fn embed_fusion_maps<T: Scalar>(
    store: &ParamStore<T>,
    cfg: &GenConfig,
    md: &FeatureMaps<T>,
    block_specs: &[(usize, usize)],
) -> Result<FusionMaps<T>> {
    let expected: Vec<(usize, usize)> =
        cfg.fused_block_specs().iter().map(|&(_, r, c)| (r, c)).collect();
    if block_specs != expected {
        return Err(Error::validation(format!(
            "fusion block specs {block_specs:?} do not match generator layout {expected:?}"
        )));
    }
    if md.resolution() * 4 != cfg.resolution {
        return Err(Error::validation(format!(
            "feature maps at {} do not match generator resolution {}",
            md.resolution(),
            cfg.resolution
        )));
    }
    let g = Graph::new();
    let pv = ParamVars::bind(&g, store, &[]);
    let b = md.resolution();
    let mdv = g.constant(md.tensor().reshaped(&[1, DELTA_CHANNELS, b, b]));
    let vars = embed_fusion_on(&g, &pv, cfg, mdv);
    let blocks = vars
        .blocks
        .iter()
        .map(|&(i, gate, detail)| {
            let r = cfg.block_resolution(i);
            let c = cfg.block_channels(i);
            FusionBlock {
                block_index: i,
                gate: g.value(gate).reshaped(&[c, r, r]),
                detail: g.value(detail).reshaped(&[c, r, r]),
            }
        })
        .collect();
    Ok(FusionMaps { blocks })
}

fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// F' = F + sigmoid(gate) .* detail, elementwise.
pub fn fuse_internal<T: Scalar>(
    features: &Tensor<T>,
    gate: &Tensor<T>,
    detail: &Tensor<T>,
) -> Result<Tensor<T>> {
    if features.shape() != gate.shape() || features.shape() != detail.shape() {
        return Err(Error::validation(format!(
            "fuse_internal shapes differ: F {:?}, g {:?}, h {:?}",
            features.shape(),
            gate.shape(),
            detail.shape()
        )));
    }
    let fused = features
        .data()
        .iter()
        .zip(gate.data())
        .zip(detail.data())
        .map(|((&f, &gv), &h)| f + T::from_f64(sigmoid_f64(gv.to_f64())) * h)
        .collect();
    Ok(Tensor::new(features.shape(), fused))
}

/// External fusion: w = w_b + w_d.
pub fn fuse_external<T: Scalar>(w_b: &StyleCode<T>, w_d: &StyleCode<T>) -> Result<StyleCode<T>> {
    if w_b.tensor().shape() != w_d.tensor().shape() {
        return Err(Error::validation(format!(
            "fuse_external shapes differ: {:?} vs {:?}",
            w_b.tensor().shape(),
            w_d.tensor().shape()
        )));
    }
    StyleCode::new(w_b.tensor().zip(w_d.tensor(), |a, b| a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders;
    use crate::generator::{self, NoiseMode};
    use crate::imagecore::toy_face;

    #[test]
    fn delta_contracts() {
        let x: Image<f64> = toy_face(16, 0, 1).unwrap();
        let y: Image<f64> = toy_face(16, 1, 1).unwrap();

        let zero = compute_delta(&x, &x).unwrap();
        assert!(zero.tensor().data().iter().all(|&v| v == 0.0));

        let ones = Image::constant(16, 1.0).unwrap();
        let negs = Image::constant(16, -1.0).unwrap();
        let span = compute_delta(&ones, &negs).unwrap();
        assert!(span.tensor().data().iter().all(|&v| v == 2.0));

        let ab = compute_delta(&x, &y).unwrap();
        let ba = compute_delta(&y, &x).unwrap();
        let sum = ab.tensor().zip(ba.tensor(), |a, b| a + b);
        assert!(sum.data().iter().all(|&v| v == 0.0), "antisymmetry");
    }

    #[test]
    fn fuse_internal_identities() {
        let mut rng = Rng::new(5);
        let f = Tensor::<f64>::randn(&[4, 2, 2], 1.0, &mut rng);
        let gate = Tensor::<f64>::randn(&[4, 2, 2], 1.0, &mut rng);

        // h = 0 -> exact identity
        let same = fuse_internal(&f, &gate, &Tensor::zeros(&[4, 2, 2])).unwrap();
        assert_eq!(same.data(), f.data());

        // saturated gate -> F + h
        let h = Tensor::<f64>::randn(&[4, 2, 2], 1.0, &mut rng);
        let sat = fuse_internal(&f, &Tensor::full(&[4, 2, 2], 40.0), &h).unwrap();
        let expect = f.zip(&h, |a, b| a + b);
        assert!(sat.max_abs_diff(&expect) < 1e-6);

        // zero gate -> F + h/2
        let mid = fuse_internal(&f, &Tensor::zeros(&[4, 2, 2]), &h).unwrap();
        let expect = f.zip(&h, |a, b| a + 0.5 * b);
        assert!(mid.max_abs_diff(&expect) < 1e-12);

        let bad = fuse_internal(&f, &gate, &Tensor::zeros(&[4, 2, 1]));
        assert!(bad.is_err());
    }

    #[test]
    fn fuse_external_is_addition() {
        let cfg = GenConfig::for_resolution(16).unwrap();
        let mut rng = Rng::new(6);
        let a = StyleCode::<f64>::new(Tensor::randn(&[cfg.num_styles(), cfg.style_dim], 1.0, &mut rng)).unwrap();
        let b = StyleCode::new(Tensor::randn(&[cfg.num_styles(), cfg.style_dim], 1.0, &mut rng)).unwrap();
        let zero = StyleCode::new(Tensor::zeros(&[cfg.num_styles(), cfg.style_dim])).unwrap();

        let same = fuse_external(&a, &zero).unwrap();
        assert_eq!(same.tensor().data(), a.tensor().data());

        let ab = fuse_external(&a, &b).unwrap();
        let ba = fuse_external(&b, &a).unwrap();
        assert_eq!(ab.tensor().data(), ba.tensor().data(), "commutative");

        // same operation as normalize_codes
        let norm = encoders::normalize_codes(&a, &b).unwrap();
        assert_eq!(ab.tensor().data(), norm.tensor().data());
    }

    /// With zero-initialized detail convs, synthesis with fusion equals
    /// synthesis without it.
    #[test]
    fn baseline_identity_at_init() {
        let cfg = GenConfig::for_resolution(16).unwrap();
        let mut store = ParamStore::<f64>::new();
        let mut rng = Rng::new(7);
        generator::init_generator(&mut store, &cfg, &mut rng);
        encoders::init_delta_encoder(&mut store, &cfg, &mut rng);
        init_fusion_embed(&mut store, &cfg, &mut rng);

        let w = generator::average_latent(&store, &cfg, 8, 3).unwrap();
        let x: Image<f64> = toy_face(16, 0, 2).unwrap();
        let y0 = generator::synthesize(&store, &cfg, &w, None, NoiseMode::Off).unwrap();

        // a *random* (not zero) residual still produces zero detail maps at
        // init because the delta encoder's last layer and the detail convs
        // are both zero
        let delta_t = x.tensor().zip(y0.tensor(), |a, b| (a - b).clamp(-2.0, 2.0));
        let delta = DeltaImage::new(delta_t).unwrap();
        let md = encoders::encode_delta(&store, &cfg, &delta).unwrap();
        let specs: Vec<(usize, usize)> =
            cfg.fused_block_specs().iter().map(|&(_, r, c)| (r, c)).collect();
        let maps = embed_fusion_maps(&store, &cfg, &md, &specs).unwrap();
        for b in &maps.blocks {
            assert!(b.detail.data().iter().all(|&v| v == 0.0), "detail must start at zero");
        }

        let fused = generator::synthesize(&store, &cfg, &w, Some(&maps), NoiseMode::Off).unwrap();
        assert!(fused.tensor().max_abs_diff(y0.tensor()) <= 1e-6);
    }

    #[test]
    fn embed_rejects_mismatched_specs() {
        let cfg = GenConfig::for_resolution(16).unwrap();
        let mut store = ParamStore::<f64>::new();
        let mut rng = Rng::new(8);
        generator::init_generator(&mut store, &cfg, &mut rng);
        init_fusion_embed(&mut store, &cfg, &mut rng);
        let md = FeatureMaps::new(Tensor::zeros(&[DELTA_CHANNELS, 4, 4])).unwrap();
        let bad_specs = vec![(8usize, 99usize), (16, 32)];
        assert!(embed_fusion_maps(&store, &cfg, &md, &bad_specs).is_err());
    }

    /// Gradients flow through the embedding convs.
    #[test]
    fn embed_gradient_matches_finite_differences() {
        let cfg = GenConfig::for_resolution(16).unwrap();
        let mut store = ParamStore::<f64>::new();
        let mut rng = Rng::new(9);
        init_fusion_embed(&mut store, &cfg, &mut rng);

        let mut md0 = Tensor::<f64>::randn(&[1, DELTA_CHANNELS, 4, 4], 1.0, &mut rng);

        let loss_of = |store: &ParamStore<f64>, md: &Tensor<f64>| {
            let g = Graph::new();
            let pv = ParamVars::bind(&g, store, &[]);
            let mdv = g.constant(md.clone());
            let vars = embed_fusion_on(&g, &pv, &cfg, mdv);
            let mut total = g.constant(Tensor::scalar(0.0));
            for &(_, gate, detail) in &vars.blocks {
                total = g.add(total, g.add(g.mean_all(g.square(gate)), g.mean_all(g.square(g.sigmoid(detail)))));
            }
            g.value(total).data()[0]
        };

        // analytic grads w.r.t. one gate weight and the input maps
        let g = Graph::new();
        let pv = ParamVars::bind(&g, &store, &["fuse."]);
        let mdv = g.leaf(md0.clone(), true);
        let vars = embed_fusion_on(&g, &pv, &cfg, mdv);
        let mut total = g.constant(Tensor::scalar(0.0));
        for &(_, gate, detail) in &vars.blocks {
            total = g.add(total, g.add(g.mean_all(g.square(gate)), g.mean_all(g.square(g.sigmoid(detail)))));
        }
        let i = cfg.fused_blocks()[0];
        let wname = format!("fuse.b{i}.gate.w");
        let wv = pv.var(&wname);
        let grads = g.backward(total, &[wv, mdv]);
        let gw = grads[0].clone().unwrap();
        let gm = grads[1].clone().unwrap();

        let h = 1e-5;
        for coord in [0usize, 17, 101] {
            let mut plus = store.clone();
            plus.get_mut(&wname).data_mut()[coord] += h;
            let mut minus = store.clone();
            minus.get_mut(&wname).data_mut()[coord] -= h;
            let fd = (loss_of(&plus, &md0) - loss_of(&minus, &md0)) / (2.0 * h);
            let a = gw.data()[coord];
            assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8) < 1e-3, "{a} vs {fd}");
        }
        for coord in [3usize, 200] {
            let orig = md0.data()[coord];
            md0.data_mut()[coord] = orig + h;
            let up = loss_of(&store, &md0);
            md0.data_mut()[coord] = orig - h;
            let down = loss_of(&store, &md0);
            md0.data_mut()[coord] = orig;
            let fd = (up - down) / (2.0 * h);
            let a = gm.data()[coord];
            assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8) < 1e-3, "{a} vs {fd}");
        }
    }
}
