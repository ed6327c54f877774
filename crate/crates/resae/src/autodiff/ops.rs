//! Forward/backward kernels for every tape operation.
//!
//! Conventions shared by all ops:
//! - shape violations panic with the op name and the offending shapes;
//! - backward closures capture `Rc` clones of whatever forward values they
//!   need, so tensors are never copied just to be remembered;
//! - index arguments (gather/scatter/segment ids) are compile-time constants
//!   of the graph, not tape values.

use std::rc::Rc;

use rand::Rng;

use super::tape::{Tape, Var};
use super::tensor::{axis_blocks, for_each_lane, Tensor};

/// Pooling mode shared by segment pooling and the readout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Mean,
    Sum,
    Max,
}

/// Elementwise nonlinearity selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Relu,
    Gelu,
    Elu,
}

impl Activation {
    fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Gelu => gelu(x),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => gelu_derivative(x),
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C1: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C2: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C1 * (x + GELU_C2 * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_C1 * (x + GELU_C2 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C1 * (1.0 + 3.0 * GELU_C2 * x * x)
}

impl Tape {
    fn requires_any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.requires(*v))
    }

    // ---- elementwise binary ----------------------------------------------

    pub fn add(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(
            av.shape(),
            bv.shape(),
            "add: shape mismatch {:?} vs {:?}",
            av.shape(),
            bv.shape()
        );
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data);
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            self.requires_any(&[a, b]),
            Some(Box::new(move |g| {
                vec![(ai, g.clone()), (bi, g.clone())]
            })),
        )
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(
            av.shape(),
            bv.shape(),
            "sub: shape mismatch {:?} vs {:?}",
            av.shape(),
            bv.shape()
        );
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x - y)
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data);
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            self.requires_any(&[a, b]),
            Some(Box::new(move |g| {
                let neg = Tensor::new(g.shape().to_vec(), g.data().iter().map(|x| -x).collect());
                vec![(ai, g.clone()), (bi, neg)]
            })),
        )
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(
            av.shape(),
            bv.shape(),
            "mul: shape mismatch {:?} vs {:?}",
            av.shape(),
            bv.shape()
        );
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data);
        let (ai, bi) = (a.0, b.0);
        let (ac, bc) = (Rc::clone(&av), Rc::clone(&bv));
        self.push(
            out,
            self.requires_any(&[a, b]),
            Some(Box::new(move |g| {
                let da = Tensor::new(
                    g.shape().to_vec(),
                    g.data().iter().zip(bc.data()).map(|(x, y)| x * y).collect(),
                );
                let db = Tensor::new(
                    g.shape().to_vec(),
                    g.data().iter().zip(ac.data()).map(|(x, y)| x * y).collect(),
                );
                vec![(ai, da), (bi, db)]
            })),
        )
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn max2(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(
            av.shape(),
            bv.shape(),
            "max2: shape mismatch {:?} vs {:?}",
            av.shape(),
            bv.shape()
        );
        let mut a_wins = vec![false; av.numel()];
        let data: Vec<f64> = av
            .data()
            .iter()
            .zip(bv.data())
            .enumerate()
            .map(|(i, (x, y))| {
                if x >= y {
                    a_wins[i] = true;
                    *x
                } else {
                    *y
                }
            })
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data);
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            self.requires_any(&[a, b]),
            Some(Box::new(move |g| {
                let mut da = vec![0.0; g.numel()];
                let mut db = vec![0.0; g.numel()];
                for (i, gv) in g.data().iter().enumerate() {
                    if a_wins[i] {
                        da[i] = *gv;
                    } else {
                        db[i] = *gv;
                    }
                }
                vec![
                    (ai, Tensor::new(g.shape().to_vec(), da)),
                    (bi, Tensor::new(g.shape().to_vec(), db)),
                ]
            })),
        )
    }

    // ---- constants and scalars -------------------------------------------

    pub fn mul_scalar(&self, a: Var, k: f64) -> Var {
        let av = self.value(a);
        let out = Tensor::new(av.shape().to_vec(), av.data().iter().map(|x| x * k).collect());
        let ai = a.0;
        self.push(
            out,
            self.requires(a),
            Some(Box::new(move |g| {
                vec![(
                    ai,
                    Tensor::new(g.shape().to_vec(), g.data().iter().map(|x| x * k).collect()),
                )]
            })),
        )
    }

    /// Add a constant tensor (e.g. an additive attention mask).
    pub fn add_const(&self, a: Var, c: &Tensor) -> Var {
        let av = self.value(a);
        assert_eq!(
            av.shape(),
            c.shape(),
            "add_const: shape mismatch {:?} vs {:?}",
            av.shape(),
            c.shape()
        );
        let data = av
            .data()
            .iter()
            .zip(c.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data);
        let ai = a.0;
        self.push(
            out,
            self.requires(a),
            Some(Box::new(move |g| vec![(ai, g.clone())])),
        )
    }

    /// Multiply a tensor by a trainable scalar (one-element) variable.
    pub fn scale(&self, x: Var, s: Var) -> Var {
        let (xv, sv) = (self.value(x), self.value(s));
        assert!(
            sv.is_scalar(),
            "scale: scalar operand has shape {:?}",
            sv.shape()
        );
        let k = sv.item();
        let out = Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|v| v * k).collect());
        let (xi, si) = (x.0, s.0);
        let xc = Rc::clone(&xv);
        let s_shape = sv.shape().to_vec();
        self.push(
            out,
            self.requires_any(&[x, s]),
            Some(Box::new(move |g| {
                let dx = Tensor::new(g.shape().to_vec(), g.data().iter().map(|v| v * k).collect());
                let ds: f64 = g.data().iter().zip(xc.data()).map(|(a, b)| a * b).sum();
                vec![(xi, dx), (si, Tensor::new(s_shape.clone(), vec![ds]))]
            })),
        )
    }

    /// Broadcast-add a `[d]` bias over the last axis of `x`.
    pub fn add_bias(&self, x: Var, bias: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(bias));
        assert_eq!(bv.ndim(), 1, "add_bias: bias must be 1-d, got {:?}", bv.shape());
        let d = bv.shape()[0];
        assert_eq!(
            xv.shape().last().copied(),
            Some(d),
            "add_bias: last axis of {:?} does not match bias [{}]",
            xv.shape(),
            d
        );
        let mut data = xv.data().to_vec();
        for chunk in data.chunks_mut(d) {
            for (v, b) in chunk.iter_mut().zip(bv.data()) {
                *v += b;
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), data);
        let (xi, bi) = (x.0, bias.0);
        self.push(
            out,
            self.requires_any(&[x, bias]),
            Some(Box::new(move |g| {
                let mut db = vec![0.0; d];
                for chunk in g.data().chunks(d) {
                    for (acc, v) in db.iter_mut().zip(chunk) {
                        *acc += v;
                    }
                }
                vec![(xi, g.clone()), (bi, Tensor::new(vec![d], db))]
            })),
        )
    }

    // ---- matmul ------------------------------------------------------------

    /// Matrix product. `a` is `[..., m, k]`; `b` is either `[k, n]` (broadcast
    /// over a's batch dims) or `[..., k, n]` with identical batch dims.
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (ash, bsh) = (av.shape().to_vec(), bv.shape().to_vec());
        assert!(
            ash.len() >= 2 && bsh.len() >= 2,
            "matmul: operands must be at least 2-d, got {:?} x {:?}",
            ash,
            bsh
        );
        let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (kb, n) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
        let broadcast_b = bsh.len() == 2 && ash.len() > 2;
        assert!(
            k == kb && (broadcast_b || ash[..ash.len() - 2] == bsh[..bsh.len() - 2]),
            "matmul: incompatible shapes {:?} x {:?}",
            ash,
            bsh
        );
        let batch: usize = ash[..ash.len() - 2].iter().product();
        let mut out = vec![0.0; batch * m * n];
        let (ad, bd) = (av.data(), bv.data());
        for t in 0..batch {
            let a_off = t * m * k;
            let b_off = if broadcast_b { 0 } else { t * k * n };
            let o_off = t * m * n;
            for i in 0..m {
                let a_row = &ad[a_off + i * k..a_off + (i + 1) * k];
                let o_row = &mut out[o_off + i * n..o_off + (i + 1) * n];
                for (kk, &aik) in a_row.iter().enumerate() {
                    if aik == 0.0 {
                        continue;
                    }
                    let b_row = &bd[b_off + kk * n..b_off + (kk + 1) * n];
                    for (o, &b) in o_row.iter_mut().zip(b_row) {
                        *o += aik * b;
                    }
                }
            }
        }
        let mut out_shape = ash[..ash.len() - 2].to_vec();
        out_shape.push(m);
        out_shape.push(n);
        let out = Tensor::new(out_shape, out);
        let (ai, bi) = (a.0, b.0);
        let (ac, bc) = (Rc::clone(&av), Rc::clone(&bv));
        self.push(
            out,
            self.requires_any(&[a, b]),
            Some(Box::new(move |g| {
                let gd = g.data();
                let (ad, bd) = (ac.data(), bc.data());
                // dA = g . B^T per batch
                let mut da = vec![0.0; ad.len()];
                for t in 0..batch {
                    let b_off = if broadcast_b { 0 } else { t * k * n };
                    for i in 0..m {
                        let g_row = &gd[t * m * n + i * n..t * m * n + (i + 1) * n];
                        let da_row = &mut da[t * m * k + i * k..t * m * k + (i + 1) * k];
                        for (kk, slot) in da_row.iter_mut().enumerate() {
                            let b_row = &bd[b_off + kk * n..b_off + (kk + 1) * n];
                            *slot = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
                        }
                    }
                }
                // dB = sum over batches of A^T . g
                let mut db = vec![0.0; bd.len()];
                for t in 0..batch {
                    let b_off = if broadcast_b { 0 } else { t * k * n };
                    for i in 0..m {
                        let a_row = &ad[t * m * k + i * k..t * m * k + (i + 1) * k];
                        let g_row = &gd[t * m * n + i * n..t * m * n + (i + 1) * n];
                        for (kk, &aik) in a_row.iter().enumerate() {
                            if aik == 0.0 {
                                continue;
                            }
                            let db_row = &mut db[b_off + kk * n..b_off + (kk + 1) * n];
                            for (o, &gv) in db_row.iter_mut().zip(g_row) {
                                *o += aik * gv;
                            }
                        }
                    }
                }
                vec![
                    (ai, Tensor::new(ac.shape().to_vec(), da)),
                    (bi, Tensor::new(bc.shape().to_vec(), db)),
                ]
            })),
        )
    }

    // ---- shape ops ---------------------------------------------------------

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Var {
        let xv = self.value(x);
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            xv.numel(),
            "reshape: cannot view {:?} as {:?}",
            xv.shape(),
            shape
        );
        let out = Tensor::new(shape.to_vec(), xv.data().to_vec());
        let xi = x.0;
        let old_shape = xv.shape().to_vec();
        self.push(
            out,
            self.requires(x),
            Some(Box::new(move |g| {
                vec![(
                    xi,
                    Tensor::new(old_shape.clone(), g.data().to_vec()),
                )]
            })),
        )
    }

    /// Swap two axes, materializing the transposed layout.
    pub fn swap_axes(&self, x: Var, i: usize, j: usize) -> Var {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        assert!(
            i < shape.len() && j < shape.len(),
            "swap_axes: axes ({}, {}) out of range for {:?}",
            i,
            j,
            shape
        );
        let out = transpose_copy(&xv, i, j);
        let xi = x.0;
        self.push(
            out,
            self.requires(x),
            Some(Box::new(move |g| vec![(xi, transpose_copy(g, i, j))])),
        )
    }

    pub fn concat(&self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat: no operands");
        let values: Vec<Rc<Tensor>> = parts.iter().map(|v| self.value(*v)).collect();
        let base = values[0].shape().to_vec();
        for v in &values {
            assert_eq!(v.ndim(), base.len(), "concat: rank mismatch {:?} vs {:?}", v.shape(), base);
            for (ax, (s, t)) in v.shape().iter().zip(&base).enumerate() {
                assert!(
                    ax == axis || s == t,
                    "concat: shape mismatch off axis {}: {:?} vs {:?}",
                    axis,
                    v.shape(),
                    base
                );
            }
        }
        let sizes: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = axis_blocks(&out_shape, axis);
        let mut out = vec![0.0; out_shape.iter().product()];
        for o in 0..outer {
            let mut dst = o * total * inner;
            for (v, sz) in values.iter().zip(&sizes) {
                let src = o * sz * inner;
                out[dst..dst + sz * inner].copy_from_slice(&v.data()[src..src + sz * inner]);
                dst += sz * inner;
            }
        }
        let requires = self.requires_any(parts);
        let ids: Vec<usize> = parts.iter().map(|v| v.0).collect();
        let part_shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        self.push(
            Tensor::new(out_shape, out),
            requires,
            Some(Box::new(move |g| {
                let mut grads = Vec::with_capacity(ids.len());
                for (idx, shape) in ids.iter().zip(&part_shapes) {
                    grads.push((*idx, Tensor::zeros(shape)));
                }
                for o in 0..outer {
                    let mut src = o * total * inner;
                    for ((_, gt), sz) in grads.iter_mut().zip(&sizes) {
                        let dst = o * sz * inner;
                        gt.data_mut()[dst..dst + sz * inner]
                            .copy_from_slice(&g.data()[src..src + sz * inner]);
                        src += sz * inner;
                    }
                }
                grads
            })),
        )
    }

    pub fn split(&self, x: Var, axis: usize, sizes: &[usize]) -> Vec<Var> {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        let total: usize = sizes.iter().sum();
        assert_eq!(
            shape[axis], total,
            "split: sizes {:?} do not cover axis {} of {:?}",
            sizes, axis, shape
        );
        let (outer, _, inner) = axis_blocks(&shape, axis);
        let mut offset = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &sz in sizes {
            let mut part_shape = shape.clone();
            part_shape[axis] = sz;
            let mut data = vec![0.0; part_shape.iter().product()];
            for o in 0..outer {
                let src = (o * total + offset) * inner;
                let dst = o * sz * inner;
                data[dst..dst + sz * inner].copy_from_slice(&xv.data()[src..src + sz * inner]);
            }
            let xi = x.0;
            let off = offset;
            let full_shape = shape.clone();
            out.push(self.push(
                Tensor::new(part_shape, data),
                self.requires(x),
                Some(Box::new(move |g| {
                    let mut dx = Tensor::zeros(&full_shape);
                    for o in 0..outer {
                        let dst = (o * total + off) * inner;
                        let src = o * sz * inner;
                        dx.data_mut()[dst..dst + sz * inner]
                            .copy_from_slice(&g.data()[src..src + sz * inner]);
                    }
                    vec![(xi, dx)]
                })),
            ));
            offset += sz;
        }
        out
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        assert!(
            start + len <= shape[axis],
            "narrow: range {}..{} exceeds axis {} of {:?}",
            start,
            start + len,
            axis,
            shape
        );
        let (outer, full, inner) = axis_blocks(&shape, axis);
        let mut part_shape = shape.clone();
        part_shape[axis] = len;
        let mut data = vec![0.0; part_shape.iter().product()];
        for o in 0..outer {
            let src = (o * full + start) * inner;
            let dst = o * len * inner;
            data[dst..dst + len * inner].copy_from_slice(&xv.data()[src..src + len * inner]);
        }
        let xi = x.0;
        self.push(
            Tensor::new(part_shape, data),
            self.requires(x),
            Some(Box::new(move |g| {
                let mut dx = Tensor::zeros(&shape);
                for o in 0..outer {
                    let dst = (o * full + start) * inner;
                    let src = o * len * inner;
                    dx.data_mut()[dst..dst + len * inner]
                        .copy_from_slice(&g.data()[src..src + len * inner]);
                }
                vec![(xi, dx)]
            })),
        )
    }

    // ---- reductions --------------------------------------------------------

    pub fn sum_axis(&self, x: Var, axis: usize) -> Var {
        self.reduce_axis(x, axis, false)
    }

    pub fn mean_axis(&self, x: Var, axis: usize) -> Var {
        self.reduce_axis(x, axis, true)
    }

    fn reduce_axis(&self, x: Var, axis: usize, mean: bool) -> Var {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        let (outer, len, inner) = axis_blocks(&shape, axis);
        assert!(len > 0, "reduce: empty axis {} of {:?}", axis, shape);
        let scale = if mean { 1.0 / len as f64 } else { 1.0 };
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut acc = 0.0;
                for l in 0..len {
                    acc += xv.data()[(o * len + l) * inner + i];
                }
                data[o * inner + i] = acc * scale;
            }
        }
        let xi = x.0;
        self.push(
            Tensor::new(out_shape, data),
            self.requires(x),
            Some(Box::new(move |g| {
                let mut dx = Tensor::zeros(&shape);
                for o in 0..outer {
                    for i in 0..inner {
                        let gv = g.data()[o * inner + i] * scale;
                        for l in 0..len {
                            dx.data_mut()[(o * len + l) * inner + i] = gv;
                        }
                    }
                }
                vec![(xi, dx)]
            })),
        )
    }

    pub fn sum_all(&self, x: Var) -> Var {
        let xv = self.value(x);
        let total: f64 = xv.data().iter().sum();
        let shape = xv.shape().to_vec();
        let xi = x.0;
        self.push(
            Tensor::scalar(total),
            self.requires(x),
            Some(Box::new(move |g| {
                vec![(xi, Tensor::filled(&shape, g.item()))]
            })),
        )
    }

    pub fn mean_all(&self, x: Var) -> Var {
        let n = self.value(x).numel();
        assert!(n > 0, "mean_all: empty tensor");
        let s = self.sum_all(x);
        self.mul_scalar(s, 1.0 / n as f64)
    }

    // ---- softmax -----------------------------------------------------------

    pub fn softmax(&self, x: Var, axis: usize) -> Var {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        let len = shape[axis];
        assert!(len >= 1, "softmax: empty axis {} of {:?}", axis, shape);
        let mut data = xv.data().to_vec();
        for_each_lane(&shape, axis, |base, stride| {
            let mut max = f64::NEG_INFINITY;
            for l in 0..len {
                max = max.max(data[base + l * stride]);
            }
            let mut sum = 0.0;
            for l in 0..len {
                let e = (data[base + l * stride] - max).exp();
                data[base + l * stride] = e;
                sum += e;
            }
            for l in 0..len {
                data[base + l * stride] /= sum;
            }
        });
        let out = Tensor::new(shape.clone(), data);
        let yc = Rc::new(out.clone());
        let xi = x.0;
        self.push(
            out,
            self.requires(x),
            Some(Box::new(move |g| {
                let mut dx = g.data().to_vec();
                for_each_lane(yc.shape(), axis, |base, stride| {
                    let mut dot = 0.0;
                    for l in 0..len {
                        dot += g.data()[base + l * stride] * yc.data()[base + l * stride];
                    }
                    for l in 0..len {
                        let idx = base + l * stride;
                        dx[idx] = yc.data()[idx] * (g.data()[idx] - dot);
                    }
                });
                vec![(xi, Tensor::new(yc.shape().to_vec(), dx))]
            })),
        )
    }

    // ---- activations and dropout -------------------------------------------

    pub fn activation(&self, x: Var, kind: Activation) -> Var {
        if kind == Activation::Identity {
            return x;
        }
        let xv = self.value(x);
        let out = Tensor::new(
            xv.shape().to_vec(),
            xv.data().iter().map(|v| kind.eval(*v)).collect(),
        );
        let xi = x.0;
        let xc = Rc::clone(&xv);
        self.push(
            out,
            self.requires(x),
            Some(Box::new(move |g| {
                let dx = g
                    .data()
                    .iter()
                    .zip(xc.data())
                    .map(|(gv, xv)| gv * kind.derivative(*xv))
                    .collect();
                vec![(xi, Tensor::new(g.shape().to_vec(), dx))]
            })),
        )
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn relu(&self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn gelu(&self, x: Var) -> Var {
        self.activation(x, Activation::Gelu)
    }

    pub fn elu(&self, x: Var) -> Var {
        self.activation(x, Activation::Elu)
    }

    /// Inverted dropout: identity on eval tapes, mask-and-rescale on train
    /// tapes. Masks come from the tape's seeded RNG.
    pub fn dropout(&self, x: Var, p: f64) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout: p={} outside [0,1)", p);
        if !self.is_train() || p == 0.0 {
            return x;
        }
        let xv = self.value(x);
        let keep = 1.0 - p;
        let mask: Vec<f64> = {
            let mut rng = self.rng.borrow_mut();
            (0..xv.numel())
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect()
        };
        let data = xv
            .data()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let out = Tensor::new(xv.shape().to_vec(), data);
        let xi = x.0;
        self.push(
            out,
            self.requires(x),
            Some(Box::new(move |g| {
                let dx = g
                    .data()
                    .iter()
                    .zip(&mask)
                    .map(|(gv, m)| gv * m)
                    .collect();
                vec![(xi, Tensor::new(g.shape().to_vec(), dx))]
            })),
        )
    }

    // ---- normalization -----------------------------------------------------

    /// Layer normalization over the last axis with learnable gain and bias.
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let d = *xv.shape().last().unwrap_or(&0);
        assert!(d > 0, "layer_norm: empty last axis of {:?}", xv.shape());
        assert_eq!(
            gv.shape(),
            &[d],
            "layer_norm: gain shape {:?} does not match feature dim {}",
            gv.shape(),
            d
        );
        assert_eq!(
            bv.shape(),
            &[d],
            "layer_norm: bias shape {:?} does not match feature dim {}",
            bv.shape(),
            d
        );
        let lanes = xv.numel() / d;
        let mut out = vec![0.0; xv.numel()];
        let mut xhat = vec![0.0; xv.numel()];
        let mut inv_std = vec![0.0; lanes];
        for lane in 0..lanes {
            let row = &xv.data()[lane * d..(lane + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[lane] = inv;
            for c in 0..d {
                let h = (row[c] - mean) * inv;
                xhat[lane * d + c] = h;
                out[lane * d + c] = h * gv.data()[c] + bv.data()[c];
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), out);
        let (xi, gi, bi) = (x.0, gain.0, bias.0);
        let gc = Rc::clone(&gv);
        let x_shape = xv.shape().to_vec();
        self.push(
            out,
            self.requires_any(&[x, gain, bias]),
            Some(Box::new(move |g| {
                let mut dx = vec![0.0; lanes * d];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for lane in 0..lanes {
                    let go = &g.data()[lane * d..(lane + 1) * d];
                    let xh = &xhat[lane * d..(lane + 1) * d];
                    let mut sum_dh = 0.0;
                    let mut sum_dh_xh = 0.0;
                    for c in 0..d {
                        let dh = go[c] * gc.data()[c];
                        sum_dh += dh;
                        sum_dh_xh += dh * xh[c];
                        dgain[c] += go[c] * xh[c];
                        dbias[c] += go[c];
                    }
                    let inv = inv_std[lane];
                    let n = d as f64;
                    for c in 0..d {
                        let dh = go[c] * gc.data()[c];
                        dx[lane * d + c] = inv * (dh - sum_dh / n - xh[c] * sum_dh_xh / n);
                    }
                }
                vec![
                    (xi, Tensor::new(x_shape.clone(), dx)),
                    (gi, Tensor::new(vec![d], dgain)),
                    (bi, Tensor::new(vec![d], dbias)),
                ]
            })),
        )
    }

    /// Normalize each lane of the last axis to unit L2 norm.
    pub fn normalize_last(&self, x: Var) -> Var {
        let xv = self.value(x);
        let d = *xv.shape().last().unwrap_or(&0);
        assert!(d > 0, "normalize_last: empty last axis of {:?}", xv.shape());
        let lanes = xv.numel() / d;
        let eps = 1e-12;
        let mut out = vec![0.0; xv.numel()];
        let mut norms = vec![0.0; lanes];
        for lane in 0..lanes {
            let row = &xv.data()[lane * d..(lane + 1) * d];
            let norm = (row.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
            norms[lane] = norm;
            for c in 0..d {
                out[lane * d + c] = row[c] / norm;
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), out);
        let yc = Rc::new(out.clone());
        let xi = x.0;
        let x_shape = xv.shape().to_vec();
        self.push(
            out,
            self.requires(x),
            Some(Box::new(move |g| {
                let mut dx = vec![0.0; lanes * d];
                for lane in 0..lanes {
                    let go = &g.data()[lane * d..(lane + 1) * d];
                    let y = &yc.data()[lane * d..(lane + 1) * d];
                    let dot: f64 = go.iter().zip(y).map(|(a, b)| a * b).sum();
                    for c in 0..d {
                        dx[lane * d + c] = (go[c] - y[c] * dot) / norms[lane];
                    }
                }
                vec![(xi, Tensor::new(x_shape.clone(), dx))]
            })),
        )
    }

    // ---- gather / scatter ---------------------------------------------------

    /// Gather rows of `table` (first axis) at `idx`; the embedding lookup.
    pub fn gather_rows(&self, table: Var, idx: &[usize]) -> Var {
        let tv = self.value(table);
        assert!(tv.ndim() >= 1, "gather_rows: scalar table");
        let n = tv.shape()[0];
        let row: usize = tv.shape()[1..].iter().product();
        for &i in idx {
            assert!(i < n, "gather_rows: index {} out of range 0..{}", i, n);
        }
        let mut data = vec![0.0; idx.len() * row];
        for (m, &i) in idx.iter().enumerate() {
            data[m * row..(m + 1) * row].copy_from_slice(&tv.data()[i * row..(i + 1) * row]);
        }
        let mut out_shape = vec![idx.len()];
        out_shape.extend_from_slice(&tv.shape()[1..]);
        let ti = table.0;
        let idx = idx.to_vec();
        let table_shape = tv.shape().to_vec();
        self.push(
            Tensor::new(out_shape, data),
            self.requires(table),
            Some(Box::new(move |g| {
                let mut dt = Tensor::zeros(&table_shape);
                for (m, &i) in idx.iter().enumerate() {
                    let src = &g.data()[m * row..(m + 1) * row];
                    let dst = &mut dt.data_mut()[i * row..(i + 1) * row];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
                vec![(ti, dt)]
            })),
        )
    }

    /// Scatter-add rows of `data` into a fresh `[n_rows, ...]` tensor at `idx`.
    pub fn scatter_add_rows(&self, data: Var, idx: &[usize], n_rows: usize) -> Var {
        let dv = self.value(data);
        assert!(dv.ndim() >= 1, "scatter_add_rows: scalar input");
        assert_eq!(
            dv.shape()[0],
            idx.len(),
            "scatter_add_rows: {} rows but {} indices",
            dv.shape()[0],
            idx.len()
        );
        let row: usize = dv.shape()[1..].iter().product();
        for &i in idx {
            assert!(i < n_rows, "scatter_add_rows: index {} out of range 0..{}", i, n_rows);
        }
        let mut out_shape = vec![n_rows];
        out_shape.extend_from_slice(&dv.shape()[1..]);
        let mut out = Tensor::zeros(&out_shape);
        for (m, &i) in idx.iter().enumerate() {
            let src = &dv.data()[m * row..(m + 1) * row];
            let dst = &mut out.data_mut()[i * row..(i + 1) * row];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        let di = data.0;
        let idx = idx.to_vec();
        let in_shape = dv.shape().to_vec();
        self.push(
            out,
            self.requires(data),
            Some(Box::new(move |g| {
                let mut dd = Tensor::zeros(&in_shape);
                for (m, &i) in idx.iter().enumerate() {
                    let src = &g.data()[i * row..(i + 1) * row];
                    dd.data_mut()[m * row..(m + 1) * row].copy_from_slice(src);
                }
                vec![(di, dd)]
            })),
        )
    }

    /// Gather single entries `m[rows[k], cols[k]]` of a 2-d tensor.
    pub fn gather_elems2(&self, matrix: Var, rows: &[usize], cols: &[usize]) -> Var {
        let mv = self.value(matrix);
        assert_eq!(mv.ndim(), 2, "gather_elems2: need 2-d, got {:?}", mv.shape());
        assert_eq!(
            rows.len(),
            cols.len(),
            "gather_elems2: {} rows vs {} cols",
            rows.len(),
            cols.len()
        );
        let (r, c) = (mv.shape()[0], mv.shape()[1]);
        let data: Vec<f64> = rows
            .iter()
            .zip(cols)
            .map(|(&i, &j)| {
                assert!(i < r && j < c, "gather_elems2: ({}, {}) out of {}x{}", i, j, r, c);
                mv.at2(i, j)
            })
            .collect();
        let mi = matrix.0;
        let rows = rows.to_vec();
        let cols = cols.to_vec();
        let out = Tensor::new(vec![data.len()], data);
        self.push(
            out,
            self.requires(matrix),
            Some(Box::new(move |g| {
                let mut dm = Tensor::zeros(&[r, c]);
                for (k, (&i, &j)) in rows.iter().zip(&cols).enumerate() {
                    dm.data_mut()[i * c + j] += g.data()[k];
                }
                vec![(mi, dm)]
            })),
        )
    }

    /// Pool rows of `data` by segment id. Empty segments yield zero rows.
    pub fn segment_pool(&self, data: Var, seg: &[usize], n_seg: usize, kind: PoolKind) -> Var {
        let dv = self.value(data);
        assert_eq!(dv.ndim(), 2, "segment_pool: need 2-d, got {:?}", dv.shape());
        assert_eq!(
            dv.shape()[0],
            seg.len(),
            "segment_pool: {} rows but {} segment ids",
            dv.shape()[0],
            seg.len()
        );
        let d = dv.shape()[1];
        for &s in seg {
            assert!(s < n_seg, "segment_pool: segment {} out of range 0..{}", s, n_seg);
        }
        let mut counts = vec![0usize; n_seg];
        for &s in seg {
            counts[s] += 1;
        }
        let mut out = vec![0.0; n_seg * d];
        let mut argmax: Vec<usize> = Vec::new();
        match kind {
            PoolKind::Sum | PoolKind::Mean => {
                for (m, &s) in seg.iter().enumerate() {
                    for c in 0..d {
                        out[s * d + c] += dv.data()[m * d + c];
                    }
                }
                if kind == PoolKind::Mean {
                    for s in 0..n_seg {
                        if counts[s] > 0 {
                            let inv = 1.0 / counts[s] as f64;
                            for c in 0..d {
                                out[s * d + c] *= inv;
                            }
                        }
                    }
                }
            }
            PoolKind::Max => {
                argmax = vec![usize::MAX; n_seg * d];
                let mut best = vec![f64::NEG_INFINITY; n_seg * d];
                for (m, &s) in seg.iter().enumerate() {
                    for c in 0..d {
                        let v = dv.data()[m * d + c];
                        if v > best[s * d + c] {
                            best[s * d + c] = v;
                            argmax[s * d + c] = m;
                        }
                    }
                }
                for s in 0..n_seg {
                    for c in 0..d {
                        out[s * d + c] = if counts[s] == 0 { 0.0 } else { best[s * d + c] };
                    }
                }
            }
        }
        let di = data.0;
        let seg = seg.to_vec();
        let in_shape = dv.shape().to_vec();
        self.push(
            Tensor::new(vec![n_seg, d], out),
            self.requires(data),
            Some(Box::new(move |g| {
                let mut dd = Tensor::zeros(&in_shape);
                match kind {
                    PoolKind::Sum => {
                        for (m, &s) in seg.iter().enumerate() {
                            for c in 0..d {
                                dd.data_mut()[m * d + c] = g.data()[s * d + c];
                            }
                        }
                    }
                    PoolKind::Mean => {
                        for (m, &s) in seg.iter().enumerate() {
                            let inv = 1.0 / counts[s] as f64;
                            for c in 0..d {
                                dd.data_mut()[m * d + c] = g.data()[s * d + c] * inv;
                            }
                        }
                    }
                    PoolKind::Max => {
                        for sidx in 0..counts.len() {
                            for c in 0..d {
                                let m = argmax[sidx * d + c];
                                if m != usize::MAX {
                                    dd.data_mut()[m * d + c] += g.data()[sidx * d + c];
                                }
                            }
                        }
                    }
                }
                vec![(di, dd)]
            })),
        )
    }

    /// Scale each row of `data` by the matching entry of the 1-d `weights` var.
    pub fn scale_rows(&self, data: Var, weights: Var) -> Var {
        let (dv, wv) = (self.value(data), self.value(weights));
        assert_eq!(dv.ndim(), 2, "scale_rows: need 2-d data, got {:?}", dv.shape());
        assert_eq!(
            wv.shape(),
            &[dv.shape()[0]],
            "scale_rows: weights {:?} do not match {} rows",
            wv.shape(),
            dv.shape()[0]
        );
        let d = dv.shape()[1];
        let mut out = vec![0.0; dv.numel()];
        for m in 0..dv.shape()[0] {
            let w = wv.data()[m];
            for c in 0..d {
                out[m * d + c] = dv.data()[m * d + c] * w;
            }
        }
        let (di, wi) = (data.0, weights.0);
        let (dc, wc) = (Rc::clone(&dv), Rc::clone(&wv));
        self.push(
            Tensor::new(dv.shape().to_vec(), out),
            self.requires_any(&[data, weights]),
            Some(Box::new(move |g| {
                let rows = dc.shape()[0];
                let mut dd = vec![0.0; dc.numel()];
                let mut dw = vec![0.0; rows];
                for m in 0..rows {
                    let w = wc.data()[m];
                    for c in 0..d {
                        let gv = g.data()[m * d + c];
                        dd[m * d + c] = gv * w;
                        dw[m] += gv * dc.data()[m * d + c];
                    }
                }
                vec![
                    (di, Tensor::new(dc.shape().to_vec(), dd)),
                    (wi, Tensor::new(vec![rows], dw)),
                ]
            })),
        )
    }

    /// Scale each row of `data` by a constant weight.
    pub fn scale_rows_const(&self, data: Var, weights: &[f64]) -> Var {
        let dv = self.value(data);
        assert!(dv.ndim() >= 1, "scale_rows_const: scalar input");
        assert_eq!(
            dv.shape()[0],
            weights.len(),
            "scale_rows_const: {} rows but {} weights",
            dv.shape()[0],
            weights.len()
        );
        let row: usize = dv.shape()[1..].iter().product();
        let mut out = vec![0.0; dv.numel()];
        for (m, &w) in weights.iter().enumerate() {
            for c in 0..row {
                out[m * row + c] = dv.data()[m * row + c] * w;
            }
        }
        let di = data.0;
        let weights = weights.to_vec();
        self.push(
            Tensor::new(dv.shape().to_vec(), out),
            self.requires(data),
            Some(Box::new(move |g| {
                let mut dd = vec![0.0; g.numel()];
                for (m, &w) in weights.iter().enumerate() {
                    for c in 0..row {
                        dd[m * row + c] = g.data()[m * row + c] * w;
                    }
                }
                vec![(di, Tensor::new(g.shape().to_vec(), dd))]
            })),
        )
    }

    /// Add `-1e9` to attention logits `[B, H, Lq, Lk]` wherever the key
    /// position is masked out (`key_mask[b * Lk + k] == false`).
    pub fn add_key_mask(&self, logits: Var, key_mask: &[bool]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.ndim(), 4, "add_key_mask: need 4-d, got {:?}", lv.shape());
        let (b, h, lq, lk) = (lv.shape()[0], lv.shape()[1], lv.shape()[2], lv.shape()[3]);
        assert_eq!(
            key_mask.len(),
            b * lk,
            "add_key_mask: mask of {} entries for {}x{} keys",
            key_mask.len(),
            b,
            lk
        );
        let mut data = lv.data().to_vec();
        for bi in 0..b {
            for hi in 0..h {
                for qi in 0..lq {
                    let base = ((bi * h + hi) * lq + qi) * lk;
                    for ki in 0..lk {
                        if !key_mask[bi * lk + ki] {
                            data[base + ki] += -1e9;
                        }
                    }
                }
            }
        }
        let li = logits.0;
        self.push(
            Tensor::new(lv.shape().to_vec(), data),
            self.requires(logits),
            Some(Box::new(move |g| vec![(li, g.clone())])),
        )
    }

    // ---- losses -------------------------------------------------------------

    /// Mean binary cross-entropy with logits against constant targets.
    /// Numerically stable: bce(s, t) = max(s, 0) - s*t + ln(1 + exp(-|s|)).
    pub fn bce_with_logits_mean(&self, scores: Var, targets: &Tensor) -> Var {
        let sv = self.value(scores);
        assert_eq!(
            sv.shape(),
            targets.shape(),
            "bce_with_logits_mean: scores {:?} vs targets {:?}",
            sv.shape(),
            targets.shape()
        );
        let n = sv.numel() as f64;
        let mut total = 0.0;
        for (&s, &t) in sv.data().iter().zip(targets.data()) {
            total += s.max(0.0) - s * t + (1.0 + (-s.abs()).exp()).ln();
        }
        let si = scores.0;
        let sc = Rc::clone(&sv);
        let tc = targets.clone();
        self.push(
            Tensor::scalar(total / n),
            self.requires(scores),
            Some(Box::new(move |g| {
                let go = g.item() / n;
                let ds: Vec<f64> = sc
                    .data()
                    .iter()
                    .zip(tc.data())
                    .map(|(&s, &t)| go * (sigmoid(s) - t))
                    .collect();
                vec![(si, Tensor::new(sc.shape().to_vec(), ds))]
            })),
        )
    }
}

/// Scaled dot-product attention over `[B, H, L, dh]` heads with a per-key
/// boolean mask; composed from tape primitives. `dropout_p` is applied to the
/// attention probabilities on train tapes.
pub fn scaled_dot_attention(
    tape: &Tape,
    q: Var,
    k: Var,
    v: Var,
    key_mask: &[bool],
    dropout_p: f64,
) -> Var {
    let dh = *tape.shape(q).last().expect("attention: scalar q");
    let kt = tape.swap_axes(k, 2, 3);
    let logits = tape.mul_scalar(tape.matmul(q, kt), 1.0 / (dh as f64).sqrt());
    let masked = tape.add_key_mask(logits, key_mask);
    let probs = tape.dropout(tape.softmax(masked, 3), dropout_p);
    tape.matmul(probs, v)
}

fn transpose_copy(t: &Tensor, i: usize, j: usize) -> Tensor {
    let shape = t.shape();
    let mut out_shape = shape.to_vec();
    out_shape.swap(i, j);
    if i == j {
        return t.clone();
    }
    let ndim = shape.len();
    let mut in_strides = vec![1usize; ndim];
    for a in (0..ndim - 1).rev() {
        in_strides[a] = in_strides[a + 1] * shape[a + 1];
    }
    let mut out_strides = vec![1usize; ndim];
    for a in (0..ndim - 1).rev() {
        out_strides[a] = out_strides[a + 1] * out_shape[a + 1];
    }
    let mut data = vec![0.0; t.numel()];
    let mut idx = vec![0usize; ndim];
    for (flat, v) in t.data().iter().enumerate() {
        let mut rem = flat;
        for a in 0..ndim {
            idx[a] = rem / in_strides[a];
            rem %= in_strides[a];
        }
        idx.swap(i, j);
        let mut out_flat = 0;
        for a in 0..ndim {
            out_flat += idx[a] * out_strides[a];
        }
        data[out_flat] = *v;
    }
    Tensor::new(out_shape, data)
}
