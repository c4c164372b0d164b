//! Reverse-mode autodiff over [`Tensor`].
//!
//! A [`Graph`] is a grow-only arena of nodes; each op computes its value
//! eagerly and records how to backpropagate. The twist that makes R1
//! regularization possible: every vector-Jacobian product is itself built
//! out of graph ops, so gradients are ordinary differentiable nodes and
//! `backward` can be applied to expressions containing them (gradient of
//! gradient).
//!
//! Shape errors at this level are programmer errors and panic; the public
//! modules validate user input before building graphs.

use crate::scalar::Scalar;
use crate::tensor::{
    conv2d, conv2d_input_grad, conv2d_weight_grad, dwt2, iwt2, matmul, pool_sum2x, transpose,
    upsample_nn2x, ConvSpec, Tensor,
};
use std::cell::RefCell;
use std::rc::Rc;

pub type Var = usize;

#[derive(Debug, Clone)]
enum Op {
    Add,
    Sub,
    Neg,
    Mul,
    Scale(f64),
    AddScalar,
    Recip,
    Sqrt,
    Sigmoid,
    Softplus,
    LeakyRelu { alpha: f64, gain: f64 },
    SumAll,
    BroadcastTo,
    SumAxis0,
    BroadcastAxis0,
    Reshape,
    RowSelect(usize),
    RowScatter { row: usize },
    StackRows,
    ConcatCh,
    SliceCh { from: usize },
    PadCh { from: usize },
    MatMul,
    Transpose,
    Conv2d(ConvSpec),
    ConvInputGrad { spec: ConvSpec },
    ConvWeightGrad { spec: ConvSpec },
    BiasBcast,
    SumBhw,
    AddBiasNchw,
    MulChannels,
    DotHw,
    RowsDot,
    MulRows,
    SumKeepCh,
    BcastCh,
    Dwt2,
    Iwt2,
    Upsample2x,
    PoolSum2x,
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    parents: Vec<Var>,
    op: Option<Op>,
    requires_grad: bool,
}

pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, v: Var) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[v].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v].requires_grad
    }

    pub fn constant(&self, t: Tensor<T>) -> Var {
        self.push(t, vec![], None, false)
    }

    pub fn leaf(&self, t: Tensor<T>, requires_grad: bool) -> Var {
        self.push(t, vec![], None, requires_grad)
    }

    fn push(&self, value: Tensor<T>, parents: Vec<Var>, op: Option<Op>, rg: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), parents, op, requires_grad: rg });
        nodes.len() - 1
    }

    fn unary(&self, a: Var, value: Tensor<T>, op: Op) -> Var {
        let rg = self.requires_grad(a);
        self.push(value, vec![a], Some(op), rg)
    }

    fn binary(&self, a: Var, b: Var, value: Tensor<T>, op: Op) -> Var {
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(value, vec![a, b], Some(op), rg)
    }

    // -- elementwise ------------------------------------------------------

    pub fn add(&self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(&self.value(b), |x, y| x + y);
        self.binary(a, b, v, Op::Add)
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(&self.value(b), |x, y| x - y);
        self.binary(a, b, v, Op::Sub)
    }

    pub fn neg(&self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.unary(a, v, Op::Neg)
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(&self.value(b), |x, y| x * y);
        self.binary(a, b, v, Op::Mul)
    }

    pub fn square(&self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let cc = T::from_f64(c);
        let v = self.value(a).map(|x| x * cc);
        self.unary(a, v, Op::Scale(c))
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Var {
        let cc = T::from_f64(c);
        let v = self.value(a).map(|x| x + cc);
        self.unary(a, v, Op::AddScalar)
    }

    pub fn recip(&self, a: Var) -> Var {
        let v = self.value(a).map(|x| T::ONE / x);
        self.unary(a, v, Op::Recip)
    }

    pub fn sqrt(&self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.sqrt());
        self.unary(a, v, Op::Sqrt)
    }

    pub fn rsqrt_eps(&self, a: Var, eps: f64) -> Var {
        self.recip(self.sqrt(self.add_scalar(a, eps)))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let v = self.value(a).map(|x| {
            // 1/(1+e^-x), computed on the side that cannot overflow
            if x >= T::ZERO {
                T::ONE / (T::ONE + (-x).exp())
            } else {
                let e = x.exp();
                e / (T::ONE + e)
            }
        });
        self.unary(a, v, Op::Sigmoid)
    }

    pub fn softplus(&self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.maximum(T::ZERO) + (-x.abs()).exp().ln_1p());
        self.unary(a, v, Op::Softplus)
    }

    pub fn leaky_relu(&self, a: Var, alpha: f64) -> Var {
        self.leaky_relu_gain(a, alpha, 1.0)
    }

    /// leaky-relu with a fused output gain (one pass instead of two).
    pub fn leaky_relu_gain(&self, a: Var, alpha: f64, gain: f64) -> Var {
        let al = T::from_f64(alpha * gain);
        let gn = T::from_f64(gain);
        let v = self.value(a).map(|x| if x > T::ZERO { x * gn } else { x * al });
        self.unary(a, v, Op::LeakyRelu { alpha, gain })
    }

    // -- reductions & shape -----------------------------------------------

    pub fn sum_all(&self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.unary(a, v, Op::SumAll)
    }

    pub fn mean_all(&self, a: Var) -> Var {
        let n = self.value(a).numel();
        self.scale(self.sum_all(a), 1.0 / n as f64)
    }

    pub fn broadcast_to(&self, a: Var, shape: &[usize]) -> Var {
        let av = self.value(a);
        assert_eq!(av.numel(), 1, "broadcast_to expects a scalar source");
        let v = Tensor::full(shape, av.data()[0]);
        self.unary(a, v, Op::BroadcastTo)
    }

    pub fn sum_axis0(&self, a: Var) -> Var {
        let av = self.value(a);
        let b = av.shape()[0];
        let rest: Vec<usize> = av.shape()[1..].to_vec();
        let stride: usize = rest.iter().product();
        let mut out = vec![T::ZERO; stride];
        for bi in 0..b {
            let chunk = &av.data()[bi * stride..(bi + 1) * stride];
            for (o, &x) in out.iter_mut().zip(chunk) {
                *o += x;
            }
        }
        self.unary(a, Tensor::new(&rest, out), Op::SumAxis0)
    }

    pub fn broadcast_axis0(&self, a: Var, b: usize) -> Var {
        let av = self.value(a);
        let mut shape = vec![b];
        shape.extend_from_slice(av.shape());
        let mut out = Vec::with_capacity(av.numel() * b);
        for _ in 0..b {
            out.extend_from_slice(av.data());
        }
        self.unary(a, Tensor::new(&shape, out), Op::BroadcastAxis0)
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Var {
        let v = self.value(a).reshaped(shape);
        self.unary(a, v, Op::Reshape)
    }

    /// [B,L,D] -> [B,D], picking row `row` of axis 1.
    pub fn row_select(&self, a: Var, row: usize) -> Var {
        let av = self.value(a);
        let (b, l, d) = (av.shape()[0], av.shape()[1], av.shape()[2]);
        assert!(row < l);
        let mut out = Vec::with_capacity(b * d);
        for bi in 0..b {
            let base = (bi * l + row) * d;
            out.extend_from_slice(&av.data()[base..base + d]);
        }
        self.unary(a, Tensor::new(&[b, d], out), Op::RowSelect(row))
    }

    /// [B,D] -> [B,rows,D] with the input at `row`, zeros elsewhere.
    pub fn row_scatter(&self, a: Var, row: usize, rows: usize) -> Var {
        let av = self.value(a);
        let (b, d) = (av.shape()[0], av.shape()[1]);
        let mut out = vec![T::ZERO; b * rows * d];
        for bi in 0..b {
            let dst = (bi * rows + row) * d;
            out[dst..dst + d].copy_from_slice(&av.data()[bi * d..(bi + 1) * d]);
        }
        self.unary(a, Tensor::new(&[b, rows, d], out), Op::RowScatter { row })
    }

    /// N tensors [B,D] -> [B,N,D].
    pub fn stack_rows(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let first = self.value(parts[0]);
        let (b, d) = (first.shape()[0], first.shape()[1]);
        let n = parts.len();
        let mut out = vec![T::ZERO; b * n * d];
        for (li, &p) in parts.iter().enumerate() {
            let pv = self.value(p);
            assert_eq!(pv.shape(), &[b, d], "stack_rows parts must share [B,D]");
            for bi in 0..b {
                let dst = (bi * n + li) * d;
                out[dst..dst + d].copy_from_slice(&pv.data()[bi * d..(bi + 1) * d]);
            }
        }
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        self.push(Tensor::new(&[b, n, d], out), parts.to_vec(), Some(Op::StackRows), rg)
    }

    pub fn concat_ch(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, c1, h, w) = (av.shape()[0], av.shape()[1], av.shape()[2], av.shape()[3]);
        let c2 = bv.shape()[1];
        assert_eq!(&bv.shape()[2..], &[h, w]);
        assert_eq!(bv.shape()[0], n);
        let plane = h * w;
        let mut out = vec![T::ZERO; n * (c1 + c2) * plane];
        for bi in 0..n {
            let dst = bi * (c1 + c2) * plane;
            out[dst..dst + c1 * plane]
                .copy_from_slice(&av.data()[bi * c1 * plane..(bi + 1) * c1 * plane]);
            out[dst + c1 * plane..dst + (c1 + c2) * plane]
                .copy_from_slice(&bv.data()[bi * c2 * plane..(bi + 1) * c2 * plane]);
        }
        self.binary(a, b, Tensor::new(&[n, c1 + c2, h, w], out), Op::ConcatCh)
    }

    pub fn slice_ch(&self, a: Var, from: usize, to: usize) -> Var {
        let av = self.value(a);
        let (n, c, h, w) = (av.shape()[0], av.shape()[1], av.shape()[2], av.shape()[3]);
        assert!(from < to && to <= c);
        let plane = h * w;
        let mut out = Vec::with_capacity(n * (to - from) * plane);
        for bi in 0..n {
            let base = (bi * c + from) * plane;
            out.extend_from_slice(&av.data()[base..base + (to - from) * plane]);
        }
        self.unary(a, Tensor::new(&[n, to - from, h, w], out), Op::SliceCh { from })
    }

    pub fn pad_ch(&self, a: Var, from: usize, total: usize) -> Var {
        let av = self.value(a);
        let (n, c, h, w) = (av.shape()[0], av.shape()[1], av.shape()[2], av.shape()[3]);
        assert!(from + c <= total);
        let plane = h * w;
        let mut out = vec![T::ZERO; n * total * plane];
        for bi in 0..n {
            let dst = (bi * total + from) * plane;
            out[dst..dst + c * plane].copy_from_slice(&av.data()[bi * c * plane..(bi + 1) * c * plane]);
        }
        self.unary(a, Tensor::new(&[n, total, h, w], out), Op::PadCh { from })
    }

    // -- linear algebra -----------------------------------------------------

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let (k2, n) = (bv.shape()[0], bv.shape()[1]);
        assert_eq!(k, k2, "matmul inner dims: {k} vs {k2}");
        let out = matmul(av.data(), bv.data(), m, k, n);
        self.binary(a, b, Tensor::new(&[m, n], out), Op::MatMul)
    }

    pub fn transpose(&self, a: Var) -> Var {
        let av = self.value(a);
        let (m, n) = (av.shape()[0], av.shape()[1]);
        let out = transpose(av.data(), m, n);
        self.unary(a, Tensor::new(&[n, m], out), Op::Transpose)
    }

    /// x[B,K] * w[K,N] + bias[N]
    pub fn linear(&self, x: Var, w: Var, bias: Var) -> Var {
        let b = self.shape(x)[0];
        self.add(self.matmul(x, w), self.broadcast_axis0(bias, b))
    }

    // -- nn ops -------------------------------------------------------------

    pub fn conv2d(&self, x: Var, w: Var, spec: ConvSpec) -> Var {
        let v = conv2d(&self.value(x), &self.value(w), spec);
        self.binary(x, w, v, Op::Conv2d(spec))
    }

    pub fn conv_input_grad(&self, gy: Var, w: Var, spec: ConvSpec, in_h: usize, in_w: usize) -> Var {
        let v = conv2d_input_grad(&self.value(gy), &self.value(w), spec, in_h, in_w);
        self.binary(gy, w, v, Op::ConvInputGrad { spec })
    }

    pub fn conv_weight_grad(&self, x: Var, gy: Var, spec: ConvSpec, kh: usize, kw: usize) -> Var {
        let v = conv2d_weight_grad(&self.value(x), &self.value(gy), spec, kh, kw);
        self.binary(x, gy, v, Op::ConvWeightGrad { spec })
    }

    /// bias[C] -> [B,C,H,W]
    pub fn bias_bcast(&self, bias: Var, b: usize, h: usize, w: usize) -> Var {
        let bv = self.value(bias);
        let c = bv.shape()[0];
        let plane = h * w;
        let mut out = vec![T::ZERO; b * c * plane];
        for bi in 0..b {
            for cc in 0..c {
                let x = bv.data()[cc];
                let base = (bi * c + cc) * plane;
                for o in &mut out[base..base + plane] {
                    *o = x;
                }
            }
        }
        self.unary(bias, Tensor::new(&[b, c, h, w], out), Op::BiasBcast)
    }

    /// x[B,C,H,W] + bias[C] in one pass.
    pub fn add_bias_nchw(&self, x: Var, bias: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(bias));
        let (b, c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        assert_eq!(bv.shape(), &[c], "bias shape");
        let plane = h * w;
        let mut out = Vec::with_capacity(xv.numel());
        for bi in 0..b {
            for cc in 0..c {
                let k = bv.data()[cc];
                let base = (bi * c + cc) * plane;
                out.extend(xv.data()[base..base + plane].iter().map(|&v| v + k));
            }
        }
        self.binary(x, bias, Tensor::new(&[b, c, h, w], out), Op::AddBiasNchw)
    }

    /// [B,C,H,W] -> [C]
    pub fn sum_bhw(&self, a: Var) -> Var {
        let av = self.value(a);
        let (b, c, h, w) = (av.shape()[0], av.shape()[1], av.shape()[2], av.shape()[3]);
        let plane = h * w;
        let mut out = vec![T::ZERO; c];
        for bi in 0..b {
            for (cc, o) in out.iter_mut().enumerate() {
                let base = (bi * c + cc) * plane;
                for &x in &av.data()[base..base + plane] {
                    *o += x;
                }
            }
        }
        self.unary(a, Tensor::new(&[c], out), Op::SumBhw)
    }

    /// x[B,C,H,W] * s[B,C] (per-sample per-channel scaling)
    pub fn mul_channels(&self, x: Var, s: Var) -> Var {
        let (xv, sv) = (self.value(x), self.value(s));
        let (b, c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        assert_eq!(sv.shape(), &[b, c], "mul_channels scale shape");
        let plane = h * w;
        let mut out = Vec::with_capacity(xv.numel());
        for bi in 0..b {
            for cc in 0..c {
                let k = sv.data()[bi * c + cc];
                let base = (bi * c + cc) * plane;
                out.extend(xv.data()[base..base + plane].iter().map(|&v| v * k));
            }
        }
        self.binary(x, s, Tensor::new(&[b, c, h, w], out), Op::MulChannels)
    }

    /// sum_{h,w} a*b -> [B,C]
    pub fn dot_hw(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "dot_hw shape");
        let (n, c, h, w) = (av.shape()[0], av.shape()[1], av.shape()[2], av.shape()[3]);
        let plane = h * w;
        let mut out = vec![T::ZERO; n * c];
        for (i, o) in out.iter_mut().enumerate() {
            let base = i * plane;
            let mut acc = T::ZERO;
            for (x, y) in av.data()[base..base + plane].iter().zip(&bv.data()[base..base + plane]) {
                acc += *x * *y;
            }
            *o = acc;
        }
        self.binary(a, b, Tensor::new(&[n, c], out), Op::DotHw)
    }

    /// Mean over H and W -> [B,C].
    pub fn global_avg_pool(&self, x: Var) -> Var {
        let sh = self.shape(x);
        let ones = self.constant(Tensor::full(&sh, T::ONE));
        self.scale(self.dot_hw(x, ones), 1.0 / (sh[2] * sh[3]) as f64)
    }

    /// Row-wise dot product of [M,N] tensors -> [M,1].
    pub fn rows_dot(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "rows_dot shape");
        let (m, n) = (av.shape()[0], av.shape()[1]);
        let mut out = vec![T::ZERO; m];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = T::ZERO;
            for (x, y) in av.data()[i * n..(i + 1) * n].iter().zip(&bv.data()[i * n..(i + 1) * n]) {
                acc += *x * *y;
            }
            *o = acc;
        }
        self.binary(a, b, Tensor::new(&[m, 1], out), Op::RowsDot)
    }

    /// a[M,N] scaled per row by s[M,1].
    pub fn mul_rows(&self, a: Var, s: Var) -> Var {
        let (av, sv) = (self.value(a), self.value(s));
        let (m, n) = (av.shape()[0], av.shape()[1]);
        assert_eq!(sv.shape(), &[m, 1], "mul_rows scale shape");
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let k = sv.data()[i];
            out.extend(av.data()[i * n..(i + 1) * n].iter().map(|&v| v * k));
        }
        self.binary(a, s, Tensor::new(&[m, n], out), Op::MulRows)
    }

    /// [B,C,H,W] -> [B,1,H,W], summing channels.
    pub fn sum_keep_ch(&self, a: Var) -> Var {
        let av = self.value(a);
        let (b, c, h, w) = (av.shape()[0], av.shape()[1], av.shape()[2], av.shape()[3]);
        let plane = h * w;
        let mut out = vec![T::ZERO; b * plane];
        for bi in 0..b {
            for cc in 0..c {
                let base = (bi * c + cc) * plane;
                let dst = bi * plane;
                for k in 0..plane {
                    out[dst + k] += av.data()[base + k];
                }
            }
        }
        self.unary(a, Tensor::new(&[b, 1, h, w], out), Op::SumKeepCh)
    }

    /// [B,1,H,W] -> [B,C,H,W], repeating the single channel.
    pub fn bcast_ch(&self, a: Var, c: usize) -> Var {
        let av = self.value(a);
        let (b, c1, h, w) = (av.shape()[0], av.shape()[1], av.shape()[2], av.shape()[3]);
        assert_eq!(c1, 1, "bcast_ch expects a single channel");
        let plane = h * w;
        let mut out = Vec::with_capacity(b * c * plane);
        for bi in 0..b {
            for _ in 0..c {
                out.extend_from_slice(&av.data()[bi * plane..(bi + 1) * plane]);
            }
        }
        self.unary(a, Tensor::new(&[b, c, h, w], out), Op::BcastCh)
    }

    pub fn dwt2(&self, a: Var) -> Var {
        let v = dwt2(&self.value(a));
        self.unary(a, v, Op::Dwt2)
    }

    pub fn iwt2(&self, a: Var) -> Var {
        let v = iwt2(&self.value(a));
        self.unary(a, v, Op::Iwt2)
    }

    pub fn upsample2x(&self, a: Var) -> Var {
        let v = upsample_nn2x(&self.value(a));
        self.unary(a, v, Op::Upsample2x)
    }

    pub fn pool_sum2x(&self, a: Var) -> Var {
        let v = pool_sum2x(&self.value(a));
        self.unary(a, v, Op::PoolSum2x)
    }

    // -- backward -----------------------------------------------------------

    /// Reverse sweep from `loss` (a scalar node). Returns gradient *nodes*
    /// for each of `wrt`; these stay differentiable, enabling penalties on
    /// gradients.
    pub fn backward_vars(&self, loss: Var, wrt: &[Var]) -> Vec<Option<Var>> {
        assert_eq!(self.value(loss).numel(), 1, "backward target must be scalar");
        let upper = loss + 1;
        let mut grads: Vec<Option<Var>> = vec![None; upper];
        grads[loss] = Some(self.constant(Tensor::full(self.value(loss).shape(), T::ONE)));
        for i in (0..upper).rev() {
            let Some(g) = grads[i] else { continue };
            let (op, parents, rg) = {
                let nodes = self.nodes.borrow();
                let n = &nodes[i];
                (n.op.clone(), n.parents.clone(), n.requires_grad)
            };
            if !rg {
                continue;
            }
            let Some(op) = op else { continue };
            // only materialize gradients for parents that track them; the
            // expensive kernels (weight grads of a frozen generator, input
            // grads toward constants) are skipped entirely
            let needs: Vec<bool> = parents.iter().map(|&p| self.requires_grad(p)).collect();
            let contribs = self.vjp(&op, &parents, i, g, &needs);
            for (p, c) in parents.iter().zip(contribs) {
                let Some(c) = c else { continue };
                if !self.requires_grad(*p) {
                    continue;
                }
                grads[*p] = Some(match grads[*p] {
                    Some(existing) => self.add(existing, c),
                    None => c,
                });
            }
        }
        wrt.iter().map(|&w| grads.get(w).copied().flatten()).collect()
    }

    /// Like [`Graph::backward_vars`] but extracts plain tensors.
    pub fn backward(&self, loss: Var, wrt: &[Var]) -> Vec<Option<Tensor<T>>> {
        self.backward_vars(loss, wrt)
            .into_iter()
            .map(|v| v.map(|v| (*self.value(v)).clone()))
            .collect()
    }

    fn vjp(&self, op: &Op, parents: &[Var], out: Var, g: Var, needs: &[bool]) -> Vec<Option<Var>> {
        // build a contribution only when the corresponding parent needs it
        let when = |cond: bool, f: &dyn Fn() -> Var| if cond { Some(f()) } else { None };
        match *op {
            Op::Add => vec![Some(g), Some(g)],
            Op::Sub => vec![Some(g), when(needs[1], &|| self.neg(g))],
            Op::Neg => vec![Some(self.neg(g))],
            Op::Mul => vec![
                when(needs[0], &|| self.mul(g, parents[1])),
                when(needs[1], &|| self.mul(g, parents[0])),
            ],
            Op::Scale(c) => vec![Some(self.scale(g, c))],
            Op::AddScalar => vec![Some(g)],
            Op::Recip => {
                // d(1/x) = -g * y^2
                let gy = self.mul(g, out);
                vec![Some(self.neg(self.mul(gy, out)))]
            }
            Op::Sqrt => {
                // d(sqrt x) = g / (2 y)
                vec![Some(self.scale(self.mul(g, self.recip(out)), 0.5))]
            }
            Op::Sigmoid => {
                // g * y * (1 - y)
                let one_minus = self.add_scalar(self.neg(out), 1.0);
                vec![Some(self.mul(self.mul(g, out), one_minus))]
            }
            Op::Softplus => vec![Some(self.mul(g, self.sigmoid(parents[0])))],
            Op::LeakyRelu { alpha, gain } => {
                let hi = T::from_f64(gain);
                let lo = T::from_f64(alpha * gain);
                let mask = self
                    .constant(self.value(parents[0]).map(|x| if x > T::ZERO { hi } else { lo }));
                vec![Some(self.mul(g, mask))]
            }
            Op::SumAll => {
                let sh = self.shape(parents[0]);
                vec![Some(self.broadcast_to(g, &sh))]
            }
            Op::BroadcastTo => vec![Some(self.sum_all(g))],
            Op::SumAxis0 => {
                let b = self.shape(parents[0])[0];
                vec![Some(self.broadcast_axis0(g, b))]
            }
            Op::BroadcastAxis0 => vec![Some(self.sum_axis0(g))],
            Op::Reshape => {
                let sh = self.shape(parents[0]);
                vec![Some(self.reshape(g, &sh))]
            }
            Op::RowSelect(row) => {
                let rows = self.shape(parents[0])[1];
                vec![Some(self.row_scatter(g, row, rows))]
            }
            Op::RowScatter { row } => vec![Some(self.row_select(g, row))],
            Op::StackRows => (0..parents.len()).map(|i| Some(self.row_select(g, i))).collect(),
            Op::ConcatCh => {
                let c1 = self.shape(parents[0])[1];
                let c2 = self.shape(parents[1])[1];
                vec![
                    when(needs[0], &|| self.slice_ch(g, 0, c1)),
                    when(needs[1], &|| self.slice_ch(g, c1, c1 + c2)),
                ]
            }
            Op::SliceCh { from } => {
                let total = self.shape(parents[0])[1];
                vec![Some(self.pad_ch(g, from, total))]
            }
            Op::PadCh { from } => {
                let c = self.shape(parents[0])[1];
                vec![Some(self.slice_ch(g, from, from + c))]
            }
            Op::MatMul => {
                vec![
                    when(needs[0], &|| self.matmul(g, self.transpose(parents[1]))),
                    when(needs[1], &|| self.matmul(self.transpose(parents[0]), g)),
                ]
            }
            Op::Transpose => vec![Some(self.transpose(g))],
            Op::Conv2d(spec) => {
                vec![
                    when(needs[0], &|| {
                        let xs = self.shape(parents[0]);
                        self.conv_input_grad(g, parents[1], spec, xs[2], xs[3])
                    }),
                    when(needs[1], &|| {
                        let ws = self.shape(parents[1]);
                        self.conv_weight_grad(parents[0], g, spec, ws[2], ws[3])
                    }),
                ]
            }
            Op::ConvInputGrad { spec } => {
                // out = Gx(gy, w); <u,Gx> = <gy, conv(u,w)> = <w, Gw(u, gy)>
                vec![
                    when(needs[0], &|| self.conv2d(g, parents[1], spec)),
                    when(needs[1], &|| {
                        let ws = self.shape(parents[1]);
                        self.conv_weight_grad(g, parents[0], spec, ws[2], ws[3])
                    }),
                ]
            }
            Op::ConvWeightGrad { spec } => {
                // out = Gw(x, gy); <u,Gw> = <gy, conv(x,u)> = <x, Gx(gy, u)>
                vec![
                    when(needs[0], &|| {
                        let xs = self.shape(parents[0]);
                        self.conv_input_grad(parents[1], g, spec, xs[2], xs[3])
                    }),
                    when(needs[1], &|| self.conv2d(parents[0], g, spec)),
                ]
            }
            Op::BiasBcast => vec![Some(self.sum_bhw(g))],
            Op::AddBiasNchw => vec![Some(g), when(needs[1], &|| self.sum_bhw(g))],
            Op::SumBhw => {
                let sh = self.shape(parents[0]);
                vec![Some(self.bias_bcast(g, sh[0], sh[2], sh[3]))]
            }
            Op::MulChannels => {
                vec![
                    when(needs[0], &|| self.mul_channels(g, parents[1])),
                    when(needs[1], &|| self.dot_hw(g, parents[0])),
                ]
            }
            Op::DotHw => {
                vec![
                    when(needs[0], &|| self.mul_channels(parents[1], g)),
                    when(needs[1], &|| self.mul_channels(parents[0], g)),
                ]
            }
            Op::RowsDot => {
                vec![
                    when(needs[0], &|| self.mul_rows(parents[1], g)),
                    when(needs[1], &|| self.mul_rows(parents[0], g)),
                ]
            }
            Op::MulRows => {
                vec![
                    when(needs[0], &|| self.mul_rows(g, parents[1])),
                    when(needs[1], &|| self.rows_dot(g, parents[0])),
                ]
            }
            Op::SumKeepCh => {
                let c = self.shape(parents[0])[1];
                vec![Some(self.bcast_ch(g, c))]
            }
            Op::BcastCh => vec![Some(self.sum_keep_ch(g))],
            // Orthonormal pairs: the adjoint equals the inverse.
            Op::Dwt2 => vec![Some(self.iwt2(g))],
            Op::Iwt2 => vec![Some(self.dwt2(g))],
            Op::Upsample2x => vec![Some(self.pool_sum2x(g))],
            Op::PoolSum2x => vec![Some(self.upsample2x(g))],
        }
    }
}
