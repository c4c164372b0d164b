//! Training and inference: adversarial pretraining of the toy generator,
//! single-pass inversion training of the encoders against the frozen
//! generator, and single-pass inversion.
//!
//! One inversion step runs the published sequence: encode the batch, add
//! the average latent, generate the initial reconstruction, take the
//! residual, encode it, and generate again with the fused detail. The loss
//! is applied to the final image only; the generator stays bit-frozen.

use crate::checkpoint::CheckpointBundle;
use crate::encoders::{self, FeatureMaps, DELTA_CHANNELS};
use crate::fusion;
use crate::generator::{self, GenConfig, NoiseMode, StyleCode};
use crate::graph::{Graph, Var};
use crate::identity::IdentityNet;
use crate::imagecore::Image;
use crate::losses::{self, LossReport, LossTerms, LossWeights, PerceptualExtractor};
use crate::metrics::Reconstructor;
use crate::optim::{Adam, ParamStore, ParamVars};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

// rng stream labels
const STREAM_INIT_GEN: u64 = 1;
const STREAM_INIT_DISC: u64 = 2;
const STREAM_INIT_ENC: u64 = 3;
const STREAM_BATCH: u64 = 4;
const STREAM_LATENT: u64 = 5;
const STREAM_WREG: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Internal,
    External,
    Off,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "internal" => Ok(FusionMode::Internal),
            "external" => Ok(FusionMode::External),
            "off" => Ok(FusionMode::Off),
            other => Err(Error::validation(format!(
                "fusion mode must be internal, external or off, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionMode::Internal => "internal",
            FusionMode::External => "external",
            FusionMode::Off => "off",
        })
    }
}

fn default_resolution() -> usize {
    32
}
fn default_batch_size() -> usize {
    8
}
fn default_steps() -> usize {
    500
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_seed() -> u64 {
    7
}
fn default_fusion_mode() -> FusionMode {
    FusionMode::Internal
}
fn default_avg_latent_samples() -> usize {
    10_000
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_checkpoint_interval() -> usize {
    250
}
fn default_r1_interval() -> usize {
    16
}
fn default_r1_gamma() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_fusion_mode")]
    pub fusion_mode: FusionMode,
    #[serde(default)]
    pub loss_weights: LossWeights,
    #[serde(default = "default_avg_latent_samples")]
    pub avg_latent_samples: usize,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_epsilon")]
    pub adam_epsilon: f64,
    #[serde(default = "default_checkpoint_interval")]
    pub checkpoint_interval: usize,
    #[serde(default = "default_r1_interval")]
    pub r1_interval: usize,
    #[serde(default = "default_r1_gamma")]
    pub r1_gamma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults populate")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        crate::imagecore::validate_resolution(self.resolution)?;
        if self.steps < 1 {
            return Err(Error::validation("steps must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::validation("batch_size must be >= 2 (w_reg needs batch statistics)"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if self.avg_latent_samples < 1 {
            return Err(Error::validation("avg_latent_samples must be >= 1"));
        }
        if self.r1_interval < 1 {
            return Err(Error::validation("r1_interval must be >= 1"));
        }
        self.loss_weights.validate()
    }

    pub fn gen_config(&self) -> Result<GenConfig> {
        GenConfig::for_resolution(self.resolution)
    }
}

// ---------------------------------------------------------------------------
// Logs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainStepLog {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    pub real_logit: f64,
    pub fake_logit: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InversionStepLog {
    pub step: u64,
    #[serde(flatten)]
    pub report: LossReport,
    pub wall_ms: u64,
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn check_dataset<T: Scalar>(images: &[Image<T>], cfg: &TrainConfig) -> Result<()> {
    if images.is_empty() {
        return Err(Error::validation("training dataset is empty"));
    }
    for (i, img) in images.iter().enumerate() {
        if img.resolution() != cfg.resolution {
            return Err(Error::validation(format!(
                "dataset image {i} has resolution {}, config wants {}",
                img.resolution(),
                cfg.resolution
            )));
        }
    }
    Ok(())
}

fn batch_tensor<T: Scalar>(images: &[Image<T>], idxs: &[usize]) -> Tensor<T> {
    let r = images[idxs[0]].resolution();
    let mut data = Vec::with_capacity(idxs.len() * 3 * r * r);
    for &i in idxs {
        data.extend_from_slice(images[i].tensor().data());
    }
    Tensor::new(&[idxs.len(), 3, r, r], data)
}

fn sample_indices(rng: &mut Rng, count: usize, upper: usize) -> Vec<usize> {
    (0..count).map(|_| rng.below(upper)).collect()
}

fn grads_by_name<T: Scalar>(
    g: &Graph<T>,
    loss: Var,
    pv: &ParamVars,
) -> Result<BTreeMap<String, Tensor<T>>> {
    let trainable = pv.trainable(g);
    let vars: Vec<Var> = trainable.iter().map(|(_, v)| *v).collect();
    let grads = g.backward(loss, &vars);
    let mut map = BTreeMap::new();
    for ((name, _), grad) in trainable.into_iter().zip(grads) {
        if let Some(grad) = grad {
            if !grad.all_finite() {
                return Err(Error::Numeric {
                    term: name,
                    message: "non-finite gradient".into(),
                });
            }
            map.insert(name, grad);
        }
    }
    Ok(map)
}

/// [L,D] average code tiled to a batched [B,L,D] graph node.
fn wbar_batched<T: Scalar>(g: &Graph<T>, pv: &ParamVars, b: usize) -> Var {
    g.broadcast_axis0(pv.var("wbar"), b)
}

/// Mapped-prior style codes for the W-regularizer: z -> map -> broadcast.
fn sampled_codes<T: Scalar>(
    g: &Graph<T>,
    pv: &ParamVars,
    gcfg: &GenConfig,
    rng: &mut Rng,
    b: usize,
) -> Var {
    let z = g.constant(Tensor::randn(&[b, gcfg.latent_dim], 1.0, rng));
    let w = generator::map_latent_on(g, pv, z);
    g.stack_rows(&vec![w; gcfg.num_styles()])
}

// ---------------------------------------------------------------------------
// GAN pretraining
// ---------------------------------------------------------------------------

/// Alternating generator/discriminator steps with the non-saturating
/// logistic loss; R1 penalty on real images every `r1_interval` steps.
pub fn pretrain_gan<T: Scalar>(
    images: &[Image<T>],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    mut progress: impl FnMut(&PretrainStepLog),
) -> Result<(CheckpointBundle<T>, Vec<PretrainStepLog>)> {
    cfg.validate()?;
    check_dataset(images, cfg)?;
    let gcfg = cfg.gen_config()?;

    let mut store = ParamStore::new();
    generator::init_generator(&mut store, &gcfg, &mut Rng::derive(cfg.seed, STREAM_INIT_GEN));
    generator::init_discriminator(&mut store, &gcfg, &mut Rng::derive(cfg.seed, STREAM_INIT_DISC));

    let mut adam_g = Adam::new(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
    let mut adam_d = Adam::new(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
    let mut batch_rng = Rng::derive(cfg.seed, STREAM_BATCH);
    let mut z_rng = Rng::derive(cfg.seed, STREAM_LATENT);

    let make_fake = |g: &Graph<T>, pv: &ParamVars, z: Tensor<T>| -> Var {
        let zv = g.constant(z);
        let w = generator::map_latent_on(g, pv, zv);
        let codes = g.stack_rows(&vec![w; gcfg.num_styles()]);
        generator::synthesize_on(g, pv, &gcfg, codes, None, NoiseMode::Off)
    };

    let mut logs = Vec::with_capacity(cfg.steps);
    let started = Instant::now();
    for step in 1..=cfg.steps as u64 {
        let idxs = sample_indices(&mut batch_rng, cfg.batch_size, images.len());
        let real = batch_tensor(images, &idxs);
        let apply_r1 = cfg.r1_gamma > 0.0 && (step - 1) % cfg.r1_interval as u64 == 0;

        // discriminator step
        let (d_loss_v, r1_v, real_mean, fake_mean) = {
            let g: Graph<T> = Graph::new();
            let pv = ParamVars::bind(&g, &store, &["disc."]);
            let x = g.leaf(real.clone(), apply_r1);
            let z = Tensor::randn(&[cfg.batch_size, gcfg.latent_dim], 1.0, &mut z_rng);
            let fake = make_fake(&g, &pv, z);
            let real_logit = generator::discriminate_on(&g, &pv, &gcfg, x);
            let fake_logit = generator::discriminate_on(&g, &pv, &gcfg, fake);
            let mut d_loss = g.add(
                g.mean_all(g.softplus(g.neg(real_logit))),
                g.mean_all(g.softplus(fake_logit)),
            );
            let mut r1_value = None;
            if apply_r1 {
                let grad_x = g
                    .backward_vars(g.sum_all(real_logit), &[x])[0]
                    .expect("real logit depends on its input");
                let penalty = g.scale(
                    g.sum_all(g.square(grad_x)),
                    cfg.r1_gamma / (2.0 * cfg.batch_size as f64),
                );
                r1_value = Some(g.value(penalty).data()[0].to_f64());
                d_loss = g.add(d_loss, penalty);
            }
            let d_loss_v = g.value(d_loss).data()[0].to_f64();
            if !d_loss_v.is_finite() {
                return Err(Error::Numeric { term: "d_loss".into(), message: format!("step {step}") });
            }
            let grads = grads_by_name(&g, d_loss, &pv)?;
            adam_d.step(&mut store, &grads);
            (
                d_loss_v,
                r1_value,
                g.value(real_logit).data().iter().map(|v| v.to_f64()).sum::<f64>()
                    / cfg.batch_size as f64,
                g.value(fake_logit).data().iter().map(|v| v.to_f64()).sum::<f64>()
                    / cfg.batch_size as f64,
            )
        };

        // generator step
        let g_loss_v = {
            let g: Graph<T> = Graph::new();
            let pv = ParamVars::bind(&g, &store, &["gen."]);
            let z = Tensor::randn(&[cfg.batch_size, gcfg.latent_dim], 1.0, &mut z_rng);
            let fake = make_fake(&g, &pv, z);
            let fake_logit = generator::discriminate_on(&g, &pv, &gcfg, fake);
            let g_loss = g.mean_all(g.softplus(g.neg(fake_logit)));
            let v = g.value(g_loss).data()[0].to_f64();
            if !v.is_finite() {
                return Err(Error::Numeric { term: "g_loss".into(), message: format!("step {step}") });
            }
            let grads = grads_by_name(&g, g_loss, &pv)?;
            adam_g.step(&mut store, &grads);
            v
        };

        let record = PretrainStepLog {
            step,
            d_loss: d_loss_v,
            g_loss: g_loss_v,
            r1: r1_v,
            real_logit: real_mean,
            fake_logit: fake_mean,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        progress(&record);
        logs.push(record);

        if let Some(dir) = checkpoint_dir {
            if step as usize % cfg.checkpoint_interval == 0 && (step as usize) < cfg.steps {
                let bundle = CheckpointBundle::new(cfg.clone(), step, store.clone());
                crate::checkpoint::save_checkpoint(&bundle, dir.join(format!("gan_step{step}.ckpt")))?;
            }
        }
    }

    Ok((CheckpointBundle::new(cfg.clone(), cfg.steps as u64, store), logs))
}

// ---------------------------------------------------------------------------
// Inversion training
// ---------------------------------------------------------------------------

/// Fresh inversion model around a pretrained generator: copies the frozen
/// generator weights, initializes both encoders and the fusion embeddings,
/// and fixes the average latent.
pub fn init_inversion_model<T: Scalar>(
    cfg: &TrainConfig,
    gan: &CheckpointBundle<T>,
) -> Result<CheckpointBundle<T>> {
    cfg.validate()?;
    if gan.config.resolution != cfg.resolution {
        return Err(Error::CheckpointIncompatible(format!(
            "generator checkpoint is for resolution {}, config wants {}",
            gan.config.resolution, cfg.resolution
        )));
    }
    if !gan.store.contains("gen.const") {
        return Err(Error::CheckpointIncompatible(
            "checkpoint carries no generator parameters".into(),
        ));
    }
    let gcfg = cfg.gen_config()?;
    let mut store = ParamStore::new();
    for (name, t) in gan.store.iter() {
        if name.starts_with("gen.") {
            store.insert(name, t.clone());
        }
    }
    let mut enc_rng = Rng::derive(cfg.seed, STREAM_INIT_ENC);
    encoders::init_basic_encoder(&mut store, &gcfg, &mut enc_rng);
    encoders::init_delta_encoder(&mut store, &gcfg, &mut enc_rng);
    fusion::init_fusion_embed(&mut store, &gcfg, &mut enc_rng);
    let wbar = generator::average_latent(&store, &gcfg, cfg.avg_latent_samples, cfg.seed)?;
    store.insert("wbar", wbar.into_tensor());
    Ok(CheckpointBundle::new(cfg.clone(), 0, store))
}

fn trainable_prefixes(mode: FusionMode) -> &'static [&'static str] {
    match mode {
        FusionMode::Internal => &["enc_b.", "enc_d.", "fuse."],
        FusionMode::External => &["enc_b.", "enc_d."],
        FusionMode::Off => &["enc_b."],
    }
}

/// One forward pass of the inversion pipeline on a batch, returning the
/// style codes, initial image, delta feature maps and final image.
fn inversion_forward<T: Scalar>(
    g: &Graph<T>,
    pv: &ParamVars,
    gcfg: &GenConfig,
    mode: FusionMode,
    x: Var,
) -> (Var, Var, Var, Var) {
    let b = g.shape(x)[0];
    let offsets = encoders::encode_basic_on(g, pv, gcfg, x);
    let wb = g.add(offsets, wbar_batched(g, pv, b));
    let y0 = generator::synthesize_on(g, pv, gcfg, wb, None, NoiseMode::Off);
    let delta = g.sub(x, y0);
    let md = encoders::encode_delta_on(g, pv, delta);
    let y = match mode {
        FusionMode::Internal => {
            let maps = fusion::embed_fusion_on(g, pv, gcfg, md);
            generator::synthesize_on(g, pv, gcfg, wb, Some(&maps), NoiseMode::Off)
        }
        FusionMode::External => {
            let wd = encoders::external_code_on(g, pv, gcfg, md);
            generator::synthesize_on(g, pv, gcfg, g.add(wb, wd), None, NoiseMode::Off)
        }
        FusionMode::Off => y0,
    };
    (wb, y0, md, y)
}

/// Train the encoders and fusion embeddings against the frozen generator by
/// gradient descent on the weighted loss; the per-step reports are returned
/// and must satisfy total = sum of weight * term exactly.
pub fn train_inversion<T: Scalar>(
    images: &[Image<T>],
    cfg: &TrainConfig,
    gan: &CheckpointBundle<T>,
    checkpoint_dir: Option<&Path>,
    mut progress: impl FnMut(&InversionStepLog),
) -> Result<(CheckpointBundle<T>, Vec<InversionStepLog>)> {
    cfg.validate()?;
    check_dataset(images, cfg)?;
    let gcfg = cfg.gen_config()?;
    let mut model = init_inversion_model(cfg, gan)?;

    let id_net = IdentityNet::<T>::new(cfg.resolution)?;
    let extractor = PerceptualExtractor::<T>::new(cfg.resolution)?;
    let mut adam = Adam::new(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
    let mut batch_rng = Rng::derive(cfg.seed, STREAM_BATCH);
    let mut wreg_rng = Rng::derive(cfg.seed, STREAM_WREG);
    let prefixes = trainable_prefixes(cfg.fusion_mode);

    let mut logs = Vec::with_capacity(cfg.steps);
    let started = Instant::now();
    for step in 1..=cfg.steps as u64 {
        let idxs = sample_indices(&mut batch_rng, cfg.batch_size, images.len());
        let x_batch = batch_tensor(images, &idxs);

        let g: Graph<T> = Graph::new();
        let pv = ParamVars::bind(&g, &model.store, prefixes);
        let id_pv = id_net.bind(&g);
        let ext_pv = extractor.bind(&g);
        let x = g.constant(x_batch);
        let (wb, _y0, _md, y) = inversion_forward(&g, &pv, &gcfg, cfg.fusion_mode, x);

        let b = cfg.batch_size;
        let l2 = losses::l2_on(&g, x, y);
        let lpips = losses::lpips_on(&g, &extractor, &ext_pv, x, y);
        let id = losses::id_on(&g, &id_net, &id_pv, x, y);
        let avg = losses::avg_reg_on(&g, wb, wbar_batched(&g, &pv, b));
        let dreg = losses::d_reg_on(&g, wb);
        let samples = sampled_codes(&g, &pv, &gcfg, &mut wreg_rng, b);
        let wreg = losses::w_reg_on(&g, wb, samples);

        let terms = LossTerms {
            d_reg: g.value(dreg).data()[0].to_f64(),
            w_reg: g.value(wreg).data()[0].to_f64(),
            l2: g.value(l2).data()[0].to_f64(),
            lpips: g.value(lpips).data()[0].to_f64(),
            id: g.value(id).data()[0].to_f64(),
            avg_reg: g.value(avg).data()[0].to_f64(),
        };
        let report = losses::total_loss(terms, &cfg.loss_weights)
            .map_err(|e| match e {
                Error::Numeric { term, message } => Error::Numeric {
                    term,
                    message: format!("{message} (step {step})"),
                },
                other => other,
            })?;

        let w = &cfg.loss_weights;
        let mut total = g.scale(dreg, w.d_reg);
        total = g.add(total, g.scale(wreg, w.w_reg));
        total = g.add(total, g.scale(l2, w.l2));
        total = g.add(total, g.scale(lpips, w.lpips));
        total = g.add(total, g.scale(id, w.id));
        total = g.add(total, g.scale(avg, w.avg_reg));

        let grads = grads_by_name(&g, total, &pv)?;
        adam.step(&mut model.store, &grads);
        model.step = step;

        let record =
            InversionStepLog { step, report, wall_ms: started.elapsed().as_millis() as u64 };
        progress(&record);
        logs.push(record);

        if let Some(dir) = checkpoint_dir {
            if step as usize % cfg.checkpoint_interval == 0 && (step as usize) < cfg.steps {
                crate::checkpoint::save_checkpoint(&model, dir.join(format!("inv_step{step}.ckpt")))?;
            }
        }
    }

    Ok((model, logs))
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Inversion<T> {
    pub w_b: StyleCode<T>,
    pub m_d: FeatureMaps<T>,
    pub y0: Image<T>,
    pub y: Image<T>,
}

/// Single-pass inversion of one image, without gradients.
pub fn invert<T: Scalar>(x: &Image<T>, model: &CheckpointBundle<T>) -> Result<Inversion<T>> {
    if x.resolution() != model.config.resolution {
        return Err(Error::validation(format!(
            "model expects resolution {}, got {}",
            model.config.resolution,
            x.resolution()
        )));
    }
    if model.wbar().is_none() || !model.store.contains("enc_b.stem.w") {
        return Err(Error::CheckpointIncompatible(
            "checkpoint lacks inversion components (encoders / wbar)".into(),
        ));
    }
    let gcfg = model.config.gen_config()?;
    let r = gcfg.resolution;
    let g: Graph<T> = Graph::new();
    let pv = ParamVars::bind(&g, &model.store, &[]);
    let xv = g.constant(x.tensor().reshaped(&[1, 3, r, r]));
    let (wb, y0, md, y) = inversion_forward(&g, &pv, &gcfg, model.config.fusion_mode, xv);
    Ok(Inversion {
        w_b: StyleCode::new(g.value(wb).reshaped(&[gcfg.num_styles(), gcfg.style_dim]))?,
        m_d: FeatureMaps::new(g.value(md).reshaped(&[DELTA_CHANNELS, r / 4, r / 4]))?,
        y0: Image::new(g.value(y0).reshaped(&[3, r, r]))?,
        y: Image::new(g.value(y).reshaped(&[3, r, r]))?,
    })
}

impl<T: Scalar> Reconstructor<T> for CheckpointBundle<T> {
    fn reconstruct(&self, x: &Image<T>) -> Result<(Image<T>, Image<T>)> {
        let inv = invert(x, self)?;
        Ok((inv.y0, inv.y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoint::{load_checkpoint, save_checkpoint};
    use crate::imagecore::toy_face;

    fn tiny_cfg(fusion_mode: FusionMode, steps: usize) -> TrainConfig {
        TrainConfig {
            resolution: 16,
            batch_size: 2,
            steps,
            avg_latent_samples: 32,
            fusion_mode,
            ..TrainConfig::default()
        }
    }

    fn tiny_faces(n: usize) -> Vec<Image<f32>> {
        (0..n).map(|i| toy_face(16, i, 900).unwrap()).collect()
    }

    #[test]
    fn pretrain_is_deterministic() {
        let images = tiny_faces(4);
        let cfg = tiny_cfg(FusionMode::Off, 3);
        let (a, la) = pretrain_gan(&images, &cfg, None, |_| {}).unwrap();
        let (b, lb) = pretrain_gan(&images, &cfg, None, |_| {}).unwrap();
        for (name, t) in a.store.iter() {
            assert_eq!(t.data(), b.store.get(name).data(), "{name} must match");
        }
        assert_eq!(la.len(), 3);
        for (x, y) in la.iter().zip(&lb) {
            assert_eq!(x.d_loss, y.d_loss);
            assert_eq!(x.g_loss, y.g_loss);
        }
        // first step applies R1
        assert!(la[0].r1.is_some());
        assert!(la[1].r1.is_none());
    }

    #[test]
    fn inversion_training_freezes_generator_and_reports_consistent_totals() {
        let images = tiny_faces(4);
        let cfg = tiny_cfg(FusionMode::Internal, 3);
        let (gan, _) = pretrain_gan(&images, &cfg, None, |_| {}).unwrap();
        let gen_before: Vec<(String, Vec<f32>)> = gan
            .store
            .iter()
            .filter(|(n, _)| n.starts_with("gen."))
            .map(|(n, t)| (n.to_string(), t.data().to_vec()))
            .collect();

        let (model, logs) = train_inversion(&images, &cfg, &gan, None, |_| {}).unwrap();
        assert_eq!(logs.len(), 3);
        for record in &logs {
            let recomputed: f64 = record
                .report
                .terms
                .iter()
                .zip(cfg.loss_weights.iter())
                .map(|((_, t), (_, w))| w * t)
                .sum();
            let denom = record.report.total.abs().max(1e-12);
            assert!(
                ((record.report.total - recomputed) / denom).abs() < 1e-9,
                "total must be the weighted sum"
            );
        }
        for (name, before) in &gen_before {
            assert_eq!(
                model.store.get(name).data(),
                &before[..],
                "{name} must stay bit-identical"
            );
        }
        // encoders must have moved
        let enc_moved = model
            .store
            .iter()
            .filter(|(n, _)| n.starts_with("enc_b."))
            .any(|(n, t)| {
                t.data() != {
                    let mut fresh = ParamStore::<f32>::new();
                    encoders::init_basic_encoder(
                        &mut fresh,
                        &cfg.gen_config().unwrap(),
                        &mut Rng::derive(cfg.seed, STREAM_INIT_ENC),
                    );
                    encoders::init_delta_encoder(
                        &mut fresh,
                        &cfg.gen_config().unwrap(),
                        &mut Rng::derive(cfg.seed, STREAM_INIT_ENC),
                    );
                    fresh
                }
                .get(n)
                .data()
            });
        assert!(enc_moved, "training must move the encoder");
    }

    #[test]
    fn fresh_model_fusion_is_identity_and_off_mode_echoes_y0() {
        let images = tiny_faces(4);
        for mode in [FusionMode::Internal, FusionMode::External, FusionMode::Off] {
            let cfg = tiny_cfg(mode, 2);
            let (gan, _) = pretrain_gan(&images, &cfg, None, |_| {}).unwrap();
            let model = init_inversion_model(&cfg, &gan).unwrap();
            let inv = invert(&images[0], &model).unwrap();
            // zero-initialized delta branch: final equals initial in every mode
            assert!(
                inv.y.tensor().max_abs_diff(inv.y0.tensor()) <= 1e-6,
                "fresh {mode} model must reproduce the baseline"
            );
            assert!(inv.m_d.tensor().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn invert_is_deterministic_and_off_mode_stays_identical_after_training() {
        let images = tiny_faces(4);
        let cfg = tiny_cfg(FusionMode::Off, 3);
        let (gan, _) = pretrain_gan(&images, &cfg, None, |_| {}).unwrap();
        let (model, _) = train_inversion(&images, &cfg, &gan, None, |_| {}).unwrap();
        let a = invert(&images[1], &model).unwrap();
        let b = invert(&images[1], &model).unwrap();
        assert_eq!(a.y.tensor().data(), b.y.tensor().data());
        assert_eq!(a.w_b.tensor().data(), b.w_b.tensor().data());
        assert_eq!(
            a.y.tensor().data(),
            a.y0.tensor().data(),
            "fusion off must keep final == initial"
        );
    }

    #[test]
    fn checkpoint_round_trip_preserves_inference() {
        let images = tiny_faces(4);
        let cfg = tiny_cfg(FusionMode::Internal, 2);
        let (gan, _) = pretrain_gan(&images, &cfg, None, |_| {}).unwrap();
        let (model, _) = train_inversion(&images, &cfg, &gan, None, |_| {}).unwrap();
        let probe = &images[2];
        let before = invert(probe, &model).unwrap();

        let path = std::env::temp_dir().join(format!("egain-trainer-{}.ckpt", std::process::id()));
        save_checkpoint(&model, &path).unwrap();
        let loaded: CheckpointBundle<f32> = load_checkpoint(&path).unwrap();
        let after = invert(probe, &loaded).unwrap();
        assert!(before.y.tensor().max_abs_diff(after.y.tensor()) <= 1e-7);
        assert_eq!(loaded.step, 2);
    }

    #[test]
    fn incompatible_checkpoint_rejected() {
        let images = tiny_faces(4);
        let cfg16 = tiny_cfg(FusionMode::Internal, 2);
        let (gan, _) = pretrain_gan(&images, &cfg16, None, |_| {}).unwrap();
        let cfg32 = TrainConfig { resolution: 32, ..cfg16 };
        assert!(matches!(
            init_inversion_model(&cfg32, &gan),
            Err(Error::CheckpointIncompatible(_))
        ));

        let empty = CheckpointBundle::<f32>::new(cfg16.clone(), 0, ParamStore::new());
        assert!(matches!(
            init_inversion_model(&cfg16, &empty),
            Err(Error::CheckpointIncompatible(_))
        ));
    }

    #[test]
    fn bad_configs_rejected() {
        let base = TrainConfig::default();
        assert!(TrainConfig { batch_size: 1, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { steps: 0, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { resolution: 33, ..base.clone() }.validate().is_err());
        let mut bad_weights = base.clone();
        bad_weights.loss_weights.l2 = -1.0;
        assert!(bad_weights.validate().is_err());
        assert!(base.validate().is_ok());
    }
}
