//! Dense row-major tensors and the numeric kernels behind the autodiff
//! graph: matmul, direct/adjoint convolutions, the packed Haar transform
//! pair and pooling.
//!
//! Every kernel accumulates in a fixed sequential order per output element;
//! rayon only parallelizes across independent outputs, so results are
//! bit-identical regardless of thread count.

use crate::rng::Rng;
use crate::scalar::Scalar;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::ZERO; shape.iter().product()] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    /// Gaussian init, std `std`, drawn in f64 then cast.
    pub fn randn(shape: &[usize], std: f64, rng: &mut Rng) -> Self {
        let n = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(T::from_f64(rng.normal() * std));
        }
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshaped(&self, shape: &[usize]) -> Tensor<T> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Tensor<T> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
        assert_eq!(self.shape, other.shape, "elementwise shape mismatch");
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn sum(&self) -> T {
        let mut acc = T::ZERO;
        for &v in &self.data {
            acc += v;
        }
        acc
    }

    /// Squared Frobenius norm accumulated in f64.
    pub fn sq_norm_f64(&self) -> f64 {
        let mut acc = 0.0;
        for &v in &self.data {
            let x = v.to_f64();
            acc += x * x;
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        assert_eq!(self.shape, other.shape);
        let mut m = 0.0f64;
        for (&a, &b) in self.data.iter().zip(other.data.iter()) {
            m = m.max((a.to_f64() - b.to_f64()).abs());
        }
        m
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

#[inline]
fn gemm_row<T: Scalar>(out_row: &mut [T], a_row: &[T], b: &[T], n: usize) {
    // two k values per pass halve the loads/stores on the output row
    let mut chunks = a_row.chunks_exact(2);
    let mut kk = 0;
    for pair in &mut chunks {
        let (a0, a1) = (pair[0], pair[1]);
        let b0 = &b[kk * n..(kk + 1) * n];
        let b1 = &b[(kk + 1) * n..(kk + 2) * n];
        for ((o, &x0), &x1) in out_row.iter_mut().zip(b0).zip(b1) {
            *o = x1.mul_add(a1, x0.mul_add(a0, *o));
        }
        kk += 2;
    }
    if let [a0] = chunks.remainder() {
        let b0 = &b[kk * n..(kk + 1) * n];
        for (o, &x0) in out_row.iter_mut().zip(b0) {
            *o = x0.mul_add(*a0, *o);
        }
    }
}

/// out[m,n] += a[m,k] * b[k,n], sequential.
pub fn matmul_acc_seq<T: Scalar>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for (i, out_row) in out.chunks_mut(n).enumerate() {
        gemm_row(out_row, &a[i * k..(i + 1) * k], b, n);
    }
}

/// out[m,n] += a[m,k] * b[k,n], parallel over output rows for large
/// problems. Deterministic: each row is accumulated sequentially.
pub fn matmul_acc<T: Scalar>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if m >= 4 && m * k * n > 262_144 {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| gemm_row(row, &a[i * k..(i + 1) * k], b, n));
    } else {
        matmul_acc_seq(out, a, b, m, k, n);
    }
}

pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; m * n];
    matmul_acc(&mut out, a, b, m, k, n);
    out
}

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Convolution (NCHW, weight [O, C, kh, kw], zero padding)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn out_hw(&self, h: usize, w: usize, kh: usize, kw: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - kh) / self.stride + 1,
            (w + 2 * self.pad - kw) / self.stride + 1,
        )
    }
}

/// cols[c*kh*kw + u*kw + v, i*ow + j] = x[c, s*i+u-p, s*j+v-p] (0 outside).
fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    spec: ConvSpec,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let mut cols = vec![T::ZERO; c * kh * kw * oh * ow];
    let (s, p) = (spec.stride as isize, spec.pad as isize);
    for cc in 0..c {
        for u in 0..kh {
            for v in 0..kw {
                let row = ((cc * kh + u) * kw + v) * oh * ow;
                for i in 0..oh {
                    let sy = s * i as isize + u as isize - p;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x_base = (cc * h + sy as usize) * w;
                    let col_base = row + i * ow;
                    for j in 0..ow {
                        let sx = s * j as isize + v as isize - p;
                        if sx >= 0 && sx < w as isize {
                            cols[col_base + j] = x[x_base + sx as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of im2col: scatter-add columns back into an image.
fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    spec: ConvSpec,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let mut x = vec![T::ZERO; c * h * w];
    let (s, p) = (spec.stride as isize, spec.pad as isize);
    for cc in 0..c {
        for u in 0..kh {
            for v in 0..kw {
                let row = ((cc * kh + u) * kw + v) * oh * ow;
                for i in 0..oh {
                    let sy = s * i as isize + u as isize - p;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x_base = (cc * h + sy as usize) * w;
                    let col_base = row + i * ow;
                    for j in 0..ow {
                        let sx = s * j as isize + v as isize - p;
                        if sx >= 0 && sx < w as isize {
                            x[x_base + sx as usize] += cols[col_base + j];
                        }
                    }
                }
            }
        }
    }
    x
}

fn conv_dims<T: Scalar>(x: &Tensor<T>, wt: &Tensor<T>) -> (usize, usize, usize, usize, usize, usize, usize) {
    let (b, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (o, wc, kh, kw) = (wt.shape[0], wt.shape[1], wt.shape[2], wt.shape[3]);
    assert_eq!(c, wc, "conv channel mismatch: input {c}, weight {wc}");
    (b, c, h, w, o, kh, kw)
}

/// y[b,o,i,j] = sum_{c,u,v} w[o,c,u,v] * x[b,c,s*i+u-p,s*j+v-p]
///
/// Parallelism lives at the batch level (row-level for batch 1), so the
/// inner GEMMs never nest parallel regions.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, wt: &Tensor<T>, spec: ConvSpec) -> Tensor<T> {
    let (b, c, h, w, o, kh, kw) = conv_dims(x, wt);
    let (oh, ow) = spec.out_hw(h, w, kh, kw);
    let ck = c * kh * kw;
    let mut y = vec![T::ZERO; b * o * oh * ow];
    let x_plane = c * h * w;
    let y_plane = o * oh * ow;
    let body = |bi: usize, yb: &mut [T]| {
        let xb = &x.data[bi * x_plane..(bi + 1) * x_plane];
        let cols = im2col(xb, c, h, w, kh, kw, spec, oh, ow);
        matmul_acc_seq(yb, &wt.data, &cols, o, ck, oh * ow);
    };
    if b > 1 {
        y.par_chunks_mut(y_plane).enumerate().for_each(|(bi, yb)| body(bi, yb));
    } else {
        body(0, &mut y);
    }
    Tensor::new(&[b, o, oh, ow], y)
}

/// Gradient of `conv2d` w.r.t. its input: gx = W^T applied to gy.
pub fn conv2d_input_grad<T: Scalar>(
    gy: &Tensor<T>,
    wt: &Tensor<T>,
    spec: ConvSpec,
    in_h: usize,
    in_w: usize,
) -> Tensor<T> {
    let (b, o, oh, ow) = (gy.shape[0], gy.shape[1], gy.shape[2], gy.shape[3]);
    let (wo, c, kh, kw) = (wt.shape[0], wt.shape[1], wt.shape[2], wt.shape[3]);
    assert_eq!(o, wo, "conv grad channel mismatch");
    let ck = c * kh * kw;
    let g_plane = o * oh * ow;
    let x_plane = c * in_h * in_w;
    let w_t = transpose(&wt.data, o, ck); // [ck, o]
    let mut gx = vec![T::ZERO; b * x_plane];
    let body = |bi: usize, gxb: &mut [T]| {
        let gyb = &gy.data[bi * g_plane..(bi + 1) * g_plane];
        let mut cols = vec![T::ZERO; ck * oh * ow];
        matmul_acc_seq(&mut cols, &w_t, gyb, ck, o, oh * ow);
        let img = col2im(&cols, c, in_h, in_w, kh, kw, spec, oh, ow);
        gxb.copy_from_slice(&img);
    };
    if b > 1 {
        gx.par_chunks_mut(x_plane).enumerate().for_each(|(bi, gxb)| body(bi, gxb));
    } else {
        body(0, &mut gx);
    }
    Tensor::new(&[b, c, in_h, in_w], gx)
}

/// Gradient of `conv2d` w.r.t. its weight: gw[o,c,u,v] = sum_b gy[b] * im2col(x[b])^T.
pub fn conv2d_weight_grad<T: Scalar>(
    x: &Tensor<T>,
    gy: &Tensor<T>,
    spec: ConvSpec,
    kh: usize,
    kw: usize,
) -> Tensor<T> {
    let (b, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (gb, o, oh, ow) = (gy.shape[0], gy.shape[1], gy.shape[2], gy.shape[3]);
    assert_eq!(b, gb, "conv weight grad batch mismatch");
    let ck = c * kh * kw;
    let x_plane = c * h * w;
    let g_plane = o * oh * ow;
    let per_batch: Vec<Vec<T>> = (0..b)
        .into_par_iter()
        .map(|bi| {
            let xb = &x.data[bi * x_plane..(bi + 1) * x_plane];
            let gyb = &gy.data[bi * g_plane..(bi + 1) * g_plane];
            let mut gwb = vec![T::ZERO; o * ck];
            let cols = im2col(xb, c, h, w, kh, kw, spec, oh, ow);
            let cols_t = transpose(&cols, ck, oh * ow); // [oh*ow, ck]
            matmul_acc_seq(&mut gwb, gyb, &cols_t, o, oh * ow, ck);
            gwb
        })
        .collect();
    let mut gw = vec![T::ZERO; o * ck];
    for gb in per_batch {
        for (acc, v) in gw.iter_mut().zip(gb) {
            *acc += v;
        }
    }
    Tensor::new(&[o, c, kh, kw], gw)
}

// ---------------------------------------------------------------------------
// Orthonormal 2x2 Haar analysis/synthesis on packed channels
// ---------------------------------------------------------------------------

/// [B,C,H,W] -> [B,4C,H/2,W/2] with channel blocks [ll|lh|hl|hh].
/// For the block (a b / c d):
///   ll=(a+b+c+d)/2, lh=(a+b-c-d)/2, hl=(a-b+c-d)/2, hh=(a-b-c+d)/2.
pub fn dwt2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (b, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    assert!(h % 2 == 0 && w % 2 == 0, "dwt2 requires even H and W, got {h}x{w}");
    let (hh2, ww2) = (h / 2, w / 2);
    let half = T::from_f64(0.5);
    let mut y = vec![T::ZERO; b * 4 * c * hh2 * ww2];
    let sub = hh2 * ww2;
    for bi in 0..b {
        for cc in 0..c {
            let xin = &x.data[(bi * c + cc) * h * w..(bi * c + cc + 1) * h * w];
            let base = bi * 4 * c * sub;
            for i in 0..hh2 {
                for j in 0..ww2 {
                    let a = xin[(2 * i) * w + 2 * j];
                    let bb = xin[(2 * i) * w + 2 * j + 1];
                    let cv = xin[(2 * i + 1) * w + 2 * j];
                    let d = xin[(2 * i + 1) * w + 2 * j + 1];
                    let idx = i * ww2 + j;
                    y[base + cc * sub + idx] = (a + bb + cv + d) * half;
                    y[base + (c + cc) * sub + idx] = (a + bb - cv - d) * half;
                    y[base + (2 * c + cc) * sub + idx] = (a - bb + cv - d) * half;
                    y[base + (3 * c + cc) * sub + idx] = (a - bb - cv + d) * half;
                }
            }
        }
    }
    Tensor::new(&[b, 4 * c, hh2, ww2], y)
}

/// Exact inverse of `dwt2`: [B,4C,h,w] -> [B,C,2h,2w].
pub fn iwt2<T: Scalar>(s: &Tensor<T>) -> Tensor<T> {
    let (b, c4, hh2, ww2) = (s.shape[0], s.shape[1], s.shape[2], s.shape[3]);
    assert!(c4 % 4 == 0, "iwt2 input channels must be a multiple of 4, got {c4}");
    let c = c4 / 4;
    let (h, w) = (hh2 * 2, ww2 * 2);
    let half = T::from_f64(0.5);
    let sub = hh2 * ww2;
    let mut y = vec![T::ZERO; b * c * h * w];
    for bi in 0..b {
        for cc in 0..c {
            let base = bi * 4 * c * sub;
            let yout = &mut y[(bi * c + cc) * h * w..(bi * c + cc + 1) * h * w];
            for i in 0..hh2 {
                for j in 0..ww2 {
                    let idx = i * ww2 + j;
                    let ll = s.data[base + cc * sub + idx];
                    let lh = s.data[base + (c + cc) * sub + idx];
                    let hl = s.data[base + (2 * c + cc) * sub + idx];
                    let hh = s.data[base + (3 * c + cc) * sub + idx];
                    yout[(2 * i) * w + 2 * j] = (ll + lh + hl + hh) * half;
                    yout[(2 * i) * w + 2 * j + 1] = (ll + lh - hl - hh) * half;
                    yout[(2 * i + 1) * w + 2 * j] = (ll - lh + hl - hh) * half;
                    yout[(2 * i + 1) * w + 2 * j + 1] = (ll - lh - hl + hh) * half;
                }
            }
        }
    }
    Tensor::new(&[b, c, h, w], y)
}

// ---------------------------------------------------------------------------
// Nearest 2x upsample and its adjoint
// ---------------------------------------------------------------------------

pub fn upsample_nn2x<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (b, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let mut y = vec![T::ZERO; b * c * 4 * h * w];
    let (oh, ow) = (2 * h, 2 * w);
    for p in 0..b * c {
        let xin = &x.data[p * h * w..(p + 1) * h * w];
        let yout = &mut y[p * oh * ow..(p + 1) * oh * ow];
        for i in 0..h {
            for j in 0..w {
                let v = xin[i * w + j];
                yout[(2 * i) * ow + 2 * j] = v;
                yout[(2 * i) * ow + 2 * j + 1] = v;
                yout[(2 * i + 1) * ow + 2 * j] = v;
                yout[(2 * i + 1) * ow + 2 * j + 1] = v;
            }
        }
    }
    Tensor::new(&[b, c, oh, ow], y)
}

/// Sums each 2x2 block; the adjoint of `upsample_nn2x`.
pub fn pool_sum2x<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (b, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    assert!(h % 2 == 0 && w % 2 == 0, "pool_sum2x requires even H and W");
    let (oh, ow) = (h / 2, w / 2);
    let mut y = vec![T::ZERO; b * c * oh * ow];
    for p in 0..b * c {
        let xin = &x.data[p * h * w..(p + 1) * h * w];
        let yout = &mut y[p * oh * ow..(p + 1) * oh * ow];
        for i in 0..oh {
            for j in 0..ow {
                yout[i * ow + j] = xin[(2 * i) * w + 2 * j]
                    + xin[(2 * i) * w + 2 * j + 1]
                    + xin[(2 * i + 1) * w + 2 * j]
                    + xin[(2 * i + 1) * w + 2 * j + 1];
            }
        }
    }
    Tensor::new(&[b, c, oh, ow], y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn randt(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = Rng::new(seed);
        Tensor::randn(shape, 1.0, &mut rng)
    }

    #[test]
    fn matmul_small_known() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = randt(&[1, 2, 6, 6], 3);
        // 1x1 identity weights: out = in
        let mut w = Tensor::<f64>::zeros(&[2, 2, 1, 1]);
        w.data_mut()[0] = 1.0; // o0 <- c0
        w.data_mut()[3] = 1.0; // o1 <- c1
        let y = conv2d(&x, &w, ConvSpec { stride: 1, pad: 0 });
        assert!(y.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn conv_matches_naive_loops() {
        let x = randt(&[2, 3, 7, 7], 11);
        let w = randt(&[4, 3, 3, 3], 12);
        for &(s, p) in &[(1usize, 1usize), (2, 1), (1, 0)] {
            let spec = ConvSpec { stride: s, pad: p };
            let y = conv2d(&x, &w, spec);
            let (oh, ow) = spec.out_hw(7, 7, 3, 3);
            for b in 0..2 {
                for o in 0..4 {
                    for i in 0..oh {
                        for j in 0..ow {
                            let mut acc = 0.0;
                            for c in 0..3 {
                                for u in 0..3 {
                                    for v in 0..3 {
                                        let yy = (s * i + u) as isize - p as isize;
                                        let xx = (s * j + v) as isize - p as isize;
                                        if yy >= 0 && yy < 7 && xx >= 0 && xx < 7 {
                                            acc += w.data()[((o * 3 + c) * 3 + u) * 3 + v]
                                                * x.data()
                                                    [((b * 3 + c) * 7 + yy as usize) * 7 + xx as usize];
                                        }
                                    }
                                }
                            }
                            let got = y.data()[((b * 4 + o) * oh + i) * ow + j];
                            assert!((got - acc).abs() < 1e-10, "mismatch at {b},{o},{i},{j}");
                        }
                    }
                }
            }
        }
    }

    /// The adjoint identities <conv(x,w), gy> = <x, input_grad(gy,w)> = <w, weight_grad(x,gy)>.
    #[test]
    fn conv_grads_are_adjoint() {
        for &(s, p) in &[(1usize, 1usize), (2, 1)] {
            let spec = ConvSpec { stride: s, pad: p };
            let x = randt(&[2, 3, 8, 8], 21);
            let w = randt(&[5, 3, 3, 3], 22);
            let y = conv2d(&x, &w, spec);
            let gy = randt(y.shape(), 23);
            let lhs: f64 = y.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum();
            let gx = conv2d_input_grad(&gy, &w, spec, 8, 8);
            let rhs_x: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
            let gw = conv2d_weight_grad(&x, &gy, spec, 3, 3);
            let rhs_w: f64 = w.data().iter().zip(gw.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs_x).abs() < 1e-9, "input adjoint: {lhs} vs {rhs_x}");
            assert!((lhs - rhs_w).abs() < 1e-9, "weight adjoint: {lhs} vs {rhs_w}");
        }
    }

    #[test]
    fn haar_round_trip_and_energy() {
        let x = randt(&[2, 3, 8, 8], 5);
        let s = dwt2(&x);
        let back = iwt2(&s);
        assert!(back.max_abs_diff(&x) < 1e-12);
        let ex = x.sq_norm_f64();
        let es = s.sq_norm_f64();
        assert!((ex - es).abs() / ex < 1e-12);
    }

    #[test]
    fn upsample_pool_adjoint() {
        let x = randt(&[1, 2, 4, 4], 8);
        let y = upsample_nn2x(&x);
        let gy = randt(y.shape(), 9);
        let lhs: f64 = y.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum();
        let gx = pool_sum2x(&gy);
        let rhs: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
