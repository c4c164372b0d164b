//! Orthonormal single-level 2D Haar transform.
//!
//! Analysis works on non-overlapping 2x2 blocks (a b / c d):
//!
//! ```text
//! ll = (a+b+c+d)/2    lh = (a+b-c-d)/2
//! hl = (a-b+c-d)/2    hh = (a-b-c+d)/2
//! ```
//!
//! With the 1/2 scaling on both sides the transform is orthonormal: it
//! preserves the squared norm exactly and its adjoint equals its inverse,
//! which is also why backpropagation through it is the opposite transform.

use crate::scalar::Scalar;
use crate::tensor::{self, Tensor};
use crate::{Error, Result};

/// The four subbands of one analysis level. Each has shape
/// `[C, H/2, W/2]` for a `[C, H, W]` source.
#[derive(Debug, Clone, PartialEq)]
pub struct Subbands<T> {
    pub ll: Tensor<T>,
    pub lh: Tensor<T>,
    pub hl: Tensor<T>,
    pub hh: Tensor<T>,
}

impl<T: Scalar> Subbands<T> {
    fn check(&self) -> Result<()> {
        let s = self.ll.shape();
        for (name, t) in [("lh", &self.lh), ("hl", &self.hl), ("hh", &self.hh)] {
            if t.shape() != s {
                return Err(Error::validation(format!(
                    "subband {name} shape {:?} does not match ll shape {s:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Pack into the `[1, 4C, h, w]` channel layout the graph ops use.
    pub fn to_packed(&self) -> Result<Tensor<T>> {
        self.check()?;
        let s = self.ll.shape().to_vec();
        let (c, h, w) = (s[0], s[1], s[2]);
        let mut data = Vec::with_capacity(4 * c * h * w);
        for band in [&self.ll, &self.lh, &self.hl, &self.hh] {
            data.extend_from_slice(band.data());
        }
        Ok(Tensor::new(&[1, 4 * c, h, w], data))
    }

    pub fn from_packed(packed: &Tensor<T>) -> Subbands<T> {
        let sh = packed.shape();
        let (c4, h, w) = (sh[1], sh[2], sh[3]);
        let c = c4 / 4;
        let plane = c * h * w;
        let band = |i: usize| Tensor::new(&[c, h, w], packed.data()[i * plane..(i + 1) * plane].to_vec());
        Subbands { ll: band(0), lh: band(1), hl: band(2), hh: band(3) }
    }
}

/// Single-level analysis of a `[C, H, W]` tensor with even H and W.
pub fn dwt2<T: Scalar>(x: &Tensor<T>) -> Result<Subbands<T>> {
    let sh = x.shape();
    if sh.len() != 3 {
        return Err(Error::validation(format!("dwt2 expects [C,H,W], got {sh:?}")));
    }
    let (c, h, w) = (sh[0], sh[1], sh[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::validation(format!("dwt2 requires even dimensions, got {h}x{w}")));
    }
    let batched = x.reshaped(&[1, c, h, w]);
    let packed = tensor::dwt2(&batched);
    Ok(Subbands::from_packed(&packed))
}

/// Exact inverse of [`dwt2`].
pub fn iwt2<T: Scalar>(s: &Subbands<T>) -> Result<Tensor<T>> {
    let packed = s.to_packed()?;
    let img = tensor::iwt2(&packed);
    let sh = img.shape().to_vec();
    Ok(img.reshaped(&[sh[1], sh[2], sh[3]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn randt(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = Rng::new(seed);
        Tensor::randn(shape, 1.0, &mut rng)
    }

    #[test]
    fn constant_image_concentrates_in_ll() {
        let v = 0.7;
        let x = Tensor::full(&[3, 8, 8], v);
        let s = dwt2(&x).unwrap();
        for p in s.ll.data() {
            assert!((p - 2.0 * v).abs() < 1e-12, "ll should be 2v");
        }
        for band in [&s.lh, &s.hl, &s.hh] {
            for p in band.data() {
                assert!(p.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vertical_step_lands_in_hl_only() {
        // Width 6, left half -1, right half +1. Column blocks are
        // (0,1),(2,3),(4,5); the middle block straddles the step.
        let mut x = Tensor::<f64>::zeros(&[1, 6, 6]);
        for i in 0..6 {
            for j in 0..6 {
                x.data_mut()[i * 6 + j] = if j < 3 { -1.0 } else { 1.0 };
            }
        }
        let s = dwt2(&x).unwrap();
        // Middle block of every row is (a,b)=(-1,1),(c,d)=(-1,1):
        // hl = (a-b+c-d)/2 = -2, lh = (a+b-c-d)/2 = 0.
        for i in 0..3 {
            let hl = s.hl.data()[i * 3 + 1];
            assert!((hl - (-2.0)).abs() < 1e-12, "boundary hl {hl}");
        }
        for p in s.lh.data() {
            assert!(p.abs() < 1e-12, "lh must vanish for a vertical step");
        }
        // Off-boundary hl columns are zero.
        for i in 0..3 {
            assert!(s.hl.data()[i * 3].abs() < 1e-12);
            assert!(s.hl.data()[i * 3 + 2].abs() < 1e-12);
        }
    }

    #[test]
    fn ll_only_reconstructs_constant() {
        let s = Subbands {
            ll: Tensor::full(&[3, 4, 4], 2.0),
            lh: Tensor::zeros(&[3, 4, 4]),
            hl: Tensor::zeros(&[3, 4, 4]),
            hh: Tensor::zeros(&[3, 4, 4]),
        };
        let img = iwt2(&s).unwrap();
        assert_eq!(img.shape(), &[3, 8, 8]);
        for p in img.data() {
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_dimension_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 5, 6]);
        assert!(matches!(dwt2(&x), Err(Error::Validation(_))));
    }

    #[test]
    fn mismatched_subbands_rejected() {
        let s = Subbands {
            ll: Tensor::<f64>::zeros(&[1, 4, 4]),
            lh: Tensor::zeros(&[1, 4, 4]),
            hl: Tensor::zeros(&[1, 2, 4]),
            hh: Tensor::zeros(&[1, 4, 4]),
        };
        assert!(matches!(iwt2(&s), Err(Error::Validation(_))));
    }

    #[test]
    fn energy_preserved_on_random_tensors() {
        for seed in 0..100 {
            let x = randt(&[3, 8, 8], seed);
            let s = dwt2(&x).unwrap();
            let ex = x.sq_norm_f64();
            let es = s.ll.sq_norm_f64() + s.lh.sq_norm_f64() + s.hl.sq_norm_f64() + s.hh.sq_norm_f64();
            assert!((ex - es).abs() / ex < 1e-6);
        }
    }

    #[test]
    fn linearity() {
        let x = randt(&[2, 8, 8], 1);
        let y = randt(&[2, 8, 8], 2);
        let (alpha, beta) = (0.37, -1.21);
        let combo = x.zip(&y, |a, b| alpha * a + beta * b);
        let s_combo = dwt2(&combo).unwrap();
        let sx = dwt2(&x).unwrap();
        let sy = dwt2(&y).unwrap();
        for (c, (a, b)) in [
            (&s_combo.ll, (&sx.ll, &sy.ll)),
            (&s_combo.lh, (&sx.lh, &sy.lh)),
            (&s_combo.hl, (&sx.hl, &sy.hl)),
            (&s_combo.hh, (&sx.hh, &sy.hh)),
        ] {
            let lin = a.zip(b, |p, q| alpha * p + beta * q);
            assert!(c.max_abs_diff(&lin) < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_both_directions(seed in 0u64..10_000) {
            let x = randt(&[3, 8, 8], seed);
            let back = iwt2(&dwt2(&x).unwrap()).unwrap();
            prop_assert!(back.max_abs_diff(&x) <= 1e-6);

            let s = dwt2(&randt(&[3, 8, 8], seed ^ 0xdead)).unwrap();
            let s2 = dwt2(&iwt2(&s).unwrap()).unwrap();
            prop_assert!(s2.ll.max_abs_diff(&s.ll) <= 1e-6);
            prop_assert!(s2.lh.max_abs_diff(&s.lh) <= 1e-6);
            prop_assert!(s2.hl.max_abs_diff(&s.hl) <= 1e-6);
            prop_assert!(s2.hh.max_abs_diff(&s.hh) <= 1e-6);
        }
    }
}
