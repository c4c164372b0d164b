//! Compact frozen face-embedding network: supplies the identity loss during
//! training, the face-similarity metric column, and the embedding-magnitude
//! quality score.
//!
//! The weights are random but fixed (seeded at construction, independent of
//! any training run), playing the role a pretrained recognizer plays at full
//! scale: a stable feature space in which to compare faces.

use crate::graph::{Graph, Var};
use crate::imagecore::Image;
use crate::layers::{self, S2};
use crate::optim::{ParamStore, ParamVars};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const EMBED_DIM: usize = 128;

/// Fixed seed: the embedder is the same network for every run, so metric
/// columns are comparable across models.
const WEIGHT_SEED: u64 = 0x1d_face;

/// Unnormalized embedding vector, length [`EMBED_DIM`].
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    vector: Tensor<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(vector: Tensor<T>) -> Result<Self> {
        if vector.shape() != [EMBED_DIM] {
            return Err(Error::validation(format!(
                "embedding must have {EMBED_DIM} entries, got {:?}",
                vector.shape()
            )));
        }
        if !vector.all_finite() {
            return Err(Error::validation("embedding contains non-finite values"));
        }
        Ok(Embedding { vector })
    }

    pub fn vector(&self) -> &Tensor<T> {
        &self.vector
    }

    pub fn magnitude(&self) -> f64 {
        self.vector.sq_norm_f64().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct IdentityNet<T> {
    resolution: usize,
    channels: Vec<usize>,
    store: ParamStore<T>,
}

impl<T: Scalar> IdentityNet<T> {
    pub fn new(resolution: usize) -> Result<Self> {
        crate::imagecore::validate_resolution(resolution)?;
        let mut rng = Rng::derive(WEIGHT_SEED, resolution as u64);
        let mut store = ParamStore::new();
        let channels = vec![3, 32, 64, 128];
        for i in 0..channels.len() - 1 {
            layers::init_conv(&mut store, &format!("id.c{i}"), channels[i + 1], channels[i], 3, &mut rng);
        }
        layers::init_linear(&mut store, "id.out", 128, EMBED_DIM, &mut rng);
        Ok(IdentityNet { resolution, channels, store })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Graph forward: [B,3,R,R] -> [B,EMBED_DIM].
    pub fn embed_on(&self, g: &Graph<T>, x: Var) -> Var {
        let pv = ParamVars::bind(g, &self.store, &[]);
        self.embed_with(g, &pv, x)
    }

    /// Forward with already-bound parameters (for reuse inside a step graph).
    pub fn bind(&self, g: &Graph<T>) -> ParamVars {
        ParamVars::bind(g, &self.store, &[])
    }

    pub fn embed_with(&self, g: &Graph<T>, pv: &ParamVars, x: Var) -> Var {
        let mut h = x;
        for i in 0..self.channels.len() - 1 {
            h = layers::lrelu(g, layers::conv(g, pv, &format!("id.c{i}"), h, S2));
        }
        let pooled = g.global_avg_pool(h);
        layers::linear(g, pv, "id.out", pooled)
    }

    /// Embed a single image.
    pub fn embed(&self, x: &Image<T>) -> Result<Embedding<T>> {
        if x.resolution() != self.resolution {
            return Err(Error::validation(format!(
                "embedder expects resolution {}, got {}",
                self.resolution,
                x.resolution()
            )));
        }
        let g = Graph::new();
        let r = self.resolution;
        let xv = g.constant(x.tensor().reshaped(&[1, 3, r, r]));
        let e = self.embed_on(&g, xv);
        Embedding::new(g.value(e).reshaped(&[EMBED_DIM]))
    }
}

/// a.b / (|a||b|), clamped to [-1,1] against rounding.
pub fn cosine_similarity<T: Scalar>(a: &Embedding<T>, b: &Embedding<T>) -> Result<f64> {
    let na = a.magnitude();
    let nb = b.magnitude();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    let mut dot = 0.0;
    for (x, y) in a.vector.data().iter().zip(b.vector.data()) {
        dot += x.to_f64() * y.to_f64();
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Euclidean norm of the unnormalized embedding, the biometric-quality proxy.
pub fn quality_magnitude<T: Scalar>(e: &Embedding<T>) -> f64 {
    e.magnitude()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::toy_face;

    fn emb(v: Vec<f64>) -> Embedding<f64> {
        let mut full = vec![0.0; EMBED_DIM];
        full[..v.len()].copy_from_slice(&v);
        Embedding::new(Tensor::new(&[EMBED_DIM], full)).unwrap()
    }

    #[test]
    fn embed_is_deterministic_with_expected_shape() {
        let net = IdentityNet::<f64>::new(32).unwrap();
        let x = toy_face(32, 0, 3).unwrap();
        let a = net.embed(&x).unwrap();
        let b = net.embed(&x).unwrap();
        assert_eq!(a.vector().data(), b.vector().data());
        assert_eq!(a.vector().shape(), &[EMBED_DIM]);
    }

    #[test]
    fn different_faces_are_not_identical() {
        let net = IdentityNet::<f64>::new(32).unwrap();
        let a = net.embed(&toy_face(32, 0, 3).unwrap()).unwrap();
        let b = net.embed(&toy_face(32, 1, 3).unwrap()).unwrap();
        let cos = cosine_similarity(&a, &b).unwrap();
        assert!(cos < 1.0, "structurally different faces must not embed identically");
    }

    #[test]
    fn cosine_contracts() {
        let e = emb(vec![1.0, 2.0, -3.0]);
        assert_eq!(cosine_similarity(&e, &e).unwrap(), 1.0);
        let neg = emb(vec![-1.0, -2.0, 3.0]);
        assert_eq!(cosine_similarity(&e, &neg).unwrap(), -1.0);
        let doubled = emb(vec![2.0, 4.0, -6.0]);
        assert_eq!(cosine_similarity(&e, &doubled).unwrap(), 1.0);
        let ortho_a = emb(vec![1.0, 0.0]);
        let ortho_b = emb(vec![0.0, 1.0]);
        assert_eq!(cosine_similarity(&ortho_a, &ortho_b).unwrap(), 0.0);
        assert_eq!(
            cosine_similarity(&ortho_a, &ortho_b).unwrap(),
            cosine_similarity(&ortho_b, &ortho_a).unwrap()
        );
    }

    #[test]
    fn zero_embedding_rejected() {
        let z = emb(vec![]);
        let e = emb(vec![1.0]);
        assert!(matches!(cosine_similarity(&z, &e), Err(Error::DegenerateEmbedding)));
    }

    #[test]
    fn magnitude_homogeneous() {
        let z = emb(vec![]);
        assert_eq!(quality_magnitude(&z), 0.0);
        let unit = emb(vec![1.0]);
        assert_eq!(quality_magnitude(&unit), 1.0);
        let e = emb(vec![3.0, -4.0]);
        let scaled = emb(vec![-7.5, 10.0]); // -2.5 * e
        assert!((quality_magnitude(&scaled) - 2.5 * quality_magnitude(&e)).abs() < 1e-12);
    }

    /// Finite-difference check of the embedding network gradient.
    #[test]
    fn embed_gradient_matches_finite_differences() {
        let net = IdentityNet::<f64>::new(16).unwrap();
        let x0 = toy_face::<f64>(16, 0, 9).unwrap().into_tensor().reshaped(&[1, 3, 16, 16]);

        let g = Graph::new();
        let xv = g.leaf(x0.clone(), true);
        let e = net.embed_on(&g, xv);
        let loss = g.mean_all(g.square(e));
        let grad = g.backward(loss, &[xv])[0].clone().unwrap();

        let eval = |t: &Tensor<f64>| {
            let g = Graph::new();
            let xv = g.constant(t.clone());
            let e = net.embed_on(&g, xv);
            g.value(g.mean_all(g.square(e))).data()[0]
        };
        let h = 1e-5;
        let mut rng = Rng::new(17);
        for _ in 0..10 {
            let ci = rng.below(x0.numel());
            let mut plus = x0.clone();
            plus.data_mut()[ci] += h;
            let mut minus = x0.clone();
            minus.data_mut()[ci] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = grad.data()[ci];
            let denom = a.abs().max(fd.abs()).max(1e-8);
            assert!((a - fd).abs() / denom < 1e-3, "{a} vs {fd}");
        }
    }
}
