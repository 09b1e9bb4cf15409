//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation of one forward pass. Node ids grow
//! monotonically and every operation only references earlier ids, so the
//! reverse id order is a topological order and [`Tape::backward`] visits
//! each node once.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{dim_err, Error, Result};
use crate::numkit::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::numkit::tensor::{numel, Tensor};
use crate::Scalar;

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Square(usize),
    /// `[m, k] x [k, n]`
    MatMul { a: usize, b: usize, m: usize, k: usize, n: usize },
    /// `[m, k] x [n, k]^T`
    Linear { x: usize, w: usize, m: usize, k: usize, n: usize },
    /// Batched `[B, m, k] x [B, k, n]` or, with `trans_b`, `[B, m, k] x [B, n, k]^T`.
    Bmm { a: usize, b: usize, batch: usize, m: usize, k: usize, n: usize, trans_b: bool },
    Permute { a: usize, axes: Vec<usize> },
    Reshape(usize),
    SumAxis { a: usize, axis: usize },
    BroadcastTo(usize),
    SoftmaxLast(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { a: usize, axis: usize, start: usize },
    SumAll(usize),
    /// Block-structured linear map over the second-to-last axis.
    Structured { x: usize, w1: usize, w2: usize, rows: usize, blocks: usize, j_in: usize, j_out: usize },
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording of one forward pass.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a node on a [`Tape`].
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T> Copy for Var<'_, T> {}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn rg(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Propagates d`loss`/d(node) for every node that requires a gradient.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(dim_err(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![T::one()]);
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            for input in op_inputs(&node.op) {
                if input >= id {
                    return Err(Error::Numeric(format!(
                        "graph cycle: node {id} depends on {input}"
                    )));
                }
            }
            propagate(&nodes, id, &g, &mut grads);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn op_inputs<T>(op: &Op<T>) -> Vec<usize> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Tanh(a)
        | Op::Exp(a)
        | Op::Ln(a)
        | Op::Sqrt(a)
        | Op::Square(a)
        | Op::Reshape(a)
        | Op::BroadcastTo(a)
        | Op::SoftmaxLast(a)
        | Op::SumAll(a) => vec![*a],
        Op::MatMul { a, b, .. } | Op::Bmm { a, b, .. } => vec![*a, *b],
        Op::Linear { x, w, .. } => vec![*x, *w],
        Op::Permute { a, .. } | Op::SumAxis { a, .. } | Op::Slice { a, .. } => vec![*a],
        Op::Concat { inputs, .. } => inputs.clone(),
        Op::Structured { x, w1, w2, .. } => vec![*x, *w1, *w2],
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], id: usize, len: usize, f: impl FnOnce(&mut [T])) {
    let slot = grads[id].get_or_insert_with(|| vec![T::zero(); len]);
    f(slot);
}

fn add_into<T: Scalar>(grads: &mut [Option<Vec<T>>], id: usize, g: &[T]) {
    accumulate(grads, id, g.len(), |s| {
        for (x, &y) in s.iter_mut().zip(g) {
            *x += y;
        }
    });
}

fn propagate<T: Scalar>(nodes: &[Node<T>], id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let out = &nodes[id].value;
    let rg = |i: usize| nodes[i].requires_grad;
    let val = |i: usize| &nodes[i].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if rg(*a) {
                add_into(grads, *a, g);
            }
            if rg(*b) {
                add_into(grads, *b, g);
            }
        }
        Op::Sub(a, b) => {
            if rg(*a) {
                add_into(grads, *a, g);
            }
            if rg(*b) {
                accumulate(grads, *b, g.len(), |s| {
                    for (x, &y) in s.iter_mut().zip(g) {
                        *x -= y;
                    }
                });
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a).data(), val(*b).data());
            if rg(*a) {
                accumulate(grads, *a, g.len(), |s| {
                    for i in 0..g.len() {
                        s[i] += g[i] * vb[i];
                    }
                });
            }
            if rg(*b) {
                accumulate(grads, *b, g.len(), |s| {
                    for i in 0..g.len() {
                        s[i] += g[i] * va[i];
                    }
                });
            }
        }
        Op::Div(a, b) => {
            let vb = val(*b).data();
            let o = out.data();
            if rg(*a) {
                accumulate(grads, *a, g.len(), |s| {
                    for i in 0..g.len() {
                        s[i] += g[i] / vb[i];
                    }
                });
            }
            if rg(*b) {
                accumulate(grads, *b, g.len(), |s| {
                    for i in 0..g.len() {
                        s[i] -= g[i] * o[i] / vb[i];
                    }
                });
            }
        }
        Op::Scale(a, c) => accumulate(grads, *a, g.len(), |s| {
            for (x, &y) in s.iter_mut().zip(g) {
                *x += *c * y;
            }
        }),
        Op::AddScalar(a) => add_into(grads, *a, g),
        Op::Tanh(a) => {
            let o = out.data();
            accumulate(grads, *a, g.len(), |s| {
                for i in 0..g.len() {
                    s[i] += g[i] * (T::one() - o[i] * o[i]);
                }
            })
        }
        Op::Exp(a) => {
            let o = out.data();
            accumulate(grads, *a, g.len(), |s| {
                for i in 0..g.len() {
                    s[i] += g[i] * o[i];
                }
            })
        }
        Op::Ln(a) => {
            let x = val(*a).data();
            accumulate(grads, *a, g.len(), |s| {
                for i in 0..g.len() {
                    s[i] += g[i] / x[i];
                }
            })
        }
        Op::Sqrt(a) => {
            let o = out.data();
            let half = T::of(0.5);
            accumulate(grads, *a, g.len(), |s| {
                for i in 0..g.len() {
                    s[i] += g[i] * half / o[i];
                }
            })
        }
        Op::Square(a) => {
            let x = val(*a).data();
            let two = T::of(2.0);
            accumulate(grads, *a, g.len(), |s| {
                for i in 0..g.len() {
                    s[i] += g[i] * two * x[i];
                }
            })
        }
        Op::MatMul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            if rg(*a) {
                let vb = val(*b).data();
                accumulate(grads, *a, m * k, |s| gemm_nt(m, n, k, g, vb, s));
            }
            if rg(*b) {
                let va = val(*a).data();
                accumulate(grads, *b, k * n, |s| gemm_tn(k, m, n, va, g, s));
            }
        }
        Op::Linear { x, w, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            if rg(*x) {
                let vw = val(*w).data();
                accumulate(grads, *x, m * k, |s| gemm_nn(m, n, k, g, vw, s));
            }
            if rg(*w) {
                let vx = val(*x).data();
                accumulate(grads, *w, n * k, |s| gemm_tn(n, m, k, g, vx, s));
            }
        }
        Op::Bmm { a, b, batch, m, k, n, trans_b } => {
            let (m, k, n) = (*m, *k, *n);
            let (va, vb) = (val(*a).data(), val(*b).data());
            if rg(*a) {
                accumulate(grads, *a, batch * m * k, |s| {
                    for bi in 0..*batch {
                        let gs = &g[bi * m * n..(bi + 1) * m * n];
                        let bs = &vb[bi * k * n..(bi + 1) * k * n];
                        let ss = &mut s[bi * m * k..(bi + 1) * m * k];
                        if *trans_b {
                            gemm_nn(m, n, k, gs, bs, ss);
                        } else {
                            gemm_nt(m, n, k, gs, bs, ss);
                        }
                    }
                });
            }
            if rg(*b) {
                accumulate(grads, *b, batch * k * n, |s| {
                    for bi in 0..*batch {
                        let gs = &g[bi * m * n..(bi + 1) * m * n];
                        let as_ = &va[bi * m * k..(bi + 1) * m * k];
                        let ss = &mut s[bi * k * n..(bi + 1) * k * n];
                        if *trans_b {
                            // dB[n,k] = dC^T A
                            gemm_tn(n, m, k, gs, as_, ss);
                        } else {
                            gemm_tn(k, m, n, as_, gs, ss);
                        }
                    }
                });
            }
        }
        Op::Permute { a, axes } => {
            let in_shape = val(*a).shape();
            let inv = inverse_axes(axes);
            let gt = permute_data(g, out.shape(), &inv);
            debug_assert_eq!(gt.len(), numel(in_shape));
            add_into(grads, *a, &gt);
        }
        Op::Reshape(a) => add_into(grads, *a, g),
        Op::SumAxis { a, axis } => {
            let in_shape = val(*a).shape();
            let (outer, ext, inner) = split_axis(in_shape, *axis);
            accumulate(grads, *a, outer * ext * inner, |s| {
                for o in 0..outer {
                    for e in 0..ext {
                        let dst = &mut s[(o * ext + e) * inner..(o * ext + e + 1) * inner];
                        let src = &g[o * inner..(o + 1) * inner];
                        for (x, &y) in dst.iter_mut().zip(src) {
                            *x += y;
                        }
                    }
                }
            });
        }
        Op::BroadcastTo(a) => {
            let in_shape = val(*a).shape().to_vec();
            let red = reduce_broadcast(g, out.shape(), &in_shape);
            add_into(grads, *a, &red);
        }
        Op::SoftmaxLast(a) => {
            let o = out.data();
            let last = *out.shape().last().unwrap_or(&1);
            accumulate(grads, *a, g.len(), |s| {
                for (row, (gr, orow)) in g.chunks(last).zip(o.chunks(last)).enumerate() {
                    let dot: T = gr.iter().zip(orow).map(|(&x, &y)| x * y).sum();
                    let srow = &mut s[row * last..(row + 1) * last];
                    for j in 0..last {
                        srow[j] += orow[j] * (gr[j] - dot);
                    }
                }
            });
        }
        Op::Concat { inputs, axis } => {
            let out_shape = out.shape();
            let (outer, ext_out, inner) = split_axis(out_shape, *axis);
            let mut offset = 0;
            for &inp in inputs {
                let ext = val(inp).shape()[*axis];
                if rg(inp) {
                    accumulate(grads, inp, outer * ext * inner, |s| {
                        for o in 0..outer {
                            let src = &g[(o * ext_out + offset) * inner..(o * ext_out + offset + ext) * inner];
                            let dst = &mut s[o * ext * inner..(o + 1) * ext * inner];
                            for (x, &y) in dst.iter_mut().zip(src) {
                                *x += y;
                            }
                        }
                    });
                }
                offset += ext;
            }
        }
        Op::Slice { a, axis, start } => {
            let in_shape = val(*a).shape();
            let (outer, ext_in, inner) = split_axis(in_shape, *axis);
            let ext = out.shape()[*axis];
            accumulate(grads, *a, outer * ext_in * inner, |s| {
                for o in 0..outer {
                    let dst = &mut s[(o * ext_in + start) * inner..(o * ext_in + start + ext) * inner];
                    let src = &g[o * ext * inner..(o + 1) * ext * inner];
                    for (x, &y) in dst.iter_mut().zip(src) {
                        *x += y;
                    }
                }
            });
        }
        Op::SumAll(a) => {
            let n = val(*a).len();
            let g0 = g[0];
            accumulate(grads, *a, n, |s| {
                for x in s.iter_mut() {
                    *x += g0;
                }
            });
        }
        Op::Structured { x, w1, w2, rows, blocks, j_in, j_out } => {
            let (rows, blocks, j_in, j_out) = (*rows, *blocks, *j_in, *j_out);
            let vx = val(*x).data();
            let (v1, v2) = (val(*w1).data(), val(*w2).data());
            // Per-row sums over blocks of the output gradient and of the input.
            let mut gsum = vec![T::zero(); rows * j_out];
            for r in 0..rows {
                for b in 0..blocks {
                    let src = &g[(r * blocks + b) * j_out..(r * blocks + b + 1) * j_out];
                    for (x, &y) in gsum[r * j_out..(r + 1) * j_out].iter_mut().zip(src) {
                        *x += y;
                    }
                }
            }
            if rg(*x) {
                let diff: Vec<T> = v1.iter().zip(v2).map(|(&a, &b)| a - b).collect();
                accumulate(grads, *x, rows * blocks * j_in, |s| {
                    gemm_nn(rows * blocks, j_out, j_in, g, &diff, s);
                    let mut extra = vec![T::zero(); rows * j_in];
                    gemm_nn(rows, j_out, j_in, &gsum, v2, &mut extra);
                    for r in 0..rows {
                        let e = &extra[r * j_in..(r + 1) * j_in];
                        for b in 0..blocks {
                            let dst = &mut s[(r * blocks + b) * j_in..(r * blocks + b + 1) * j_in];
                            for (x, &y) in dst.iter_mut().zip(e) {
                                *x += y;
                            }
                        }
                    }
                });
            }
            if rg(*w1) || rg(*w2) {
                // dW1 = G^T X ;  dW2 = Gsum^T Xsum - G^T X
                let mut gx = vec![T::zero(); j_out * j_in];
                gemm_tn(j_out, rows * blocks, j_in, g, vx, &mut gx);
                if rg(*w1) {
                    add_into(grads, *w1, &gx);
                }
                if rg(*w2) {
                    let xsum = block_sums(vx, rows, blocks, j_in);
                    let mut d2 = vec![T::zero(); j_out * j_in];
                    gemm_tn(j_out, rows, j_in, &gsum, &xsum, &mut d2);
                    for (d, &v) in d2.iter_mut().zip(&gx) {
                        *d -= v;
                    }
                    add_into(grads, *w2, &d2);
                }
            }
        }
    }
}

fn block_sums<T: Scalar>(x: &[T], rows: usize, blocks: usize, width: usize) -> Vec<T> {
    let mut s = vec![T::zero(); rows * width];
    for r in 0..rows {
        for b in 0..blocks {
            let src = &x[(r * blocks + b) * width..(r * blocks + b + 1) * width];
            for (d, &v) in s[r * width..(r + 1) * width].iter_mut().zip(src) {
                *d += v;
            }
        }
    }
    s
}

/// `(outer, extent, inner)` split of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn inverse_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Reorders data laid out with `shape` so that output axis `i` is input axis `axes[i]`.
fn permute_data<T: Scalar>(data: &[T], shape: &[usize], axes: &[usize]) -> Vec<T> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    gather(data, &out_shape, &src_strides)
}

/// Walks `out_shape` in row-major order, reading `data` through `src_strides`.
fn gather<T: Scalar>(data: &[T], out_shape: &[usize], src_strides: &[usize]) -> Vec<T> {
    let total = numel(out_shape);
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    let rank = out_shape.len();
    if rank == 0 {
        out.push(data[0]);
        return out;
    }
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    let last = rank - 1;
    let (last_ext, last_stride) = (out_shape[last], src_strides[last]);
    loop {
        for e in 0..last_ext {
            out.push(data[src + e * last_stride]);
        }
        // advance all but the last axis
        let mut ax = last;
        loop {
            if ax == 0 {
                return out;
            }
            ax -= 1;
            idx[ax] += 1;
            src += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
}

fn reduce_broadcast<T: Scalar>(g: &[T], out_shape: &[usize], in_shape: &[usize]) -> Vec<T> {
    let mut red = vec![T::zero(); numel(in_shape)];
    let in_str = strides(in_shape);
    let rank = out_shape.len();
    let eff: Vec<usize> = (0..rank)
        .map(|i| if in_shape[i] == 1 { 0 } else { in_str[i] })
        .collect();
    let mut idx = vec![0usize; rank];
    let mut dst = 0usize;
    for &gv in g {
        red[dst] += gv;
        let mut ax = rank;
        while ax > 0 {
            ax -= 1;
            idx[ax] += 1;
            dst += eff[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            dst -= eff[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    red
}

fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(dim_err(format!("cannot broadcast {a:?} with {b:?}")));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => Err(dim_err(format!("cannot broadcast {a:?} with {b:?}"))),
        })
        .collect()
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to `var`; zero when `var` does not influence the loss.
    pub fn wrt(&self, var: Var<'_, T>) -> Tensor<T> {
        let shape = &self.shapes[var.id];
        match &self.grads[var.id] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

macro_rules! unary {
    ($name:ident, $op:ident, $f:expr) => {
        pub fn $name(self) -> Var<'t, T> {
            let v = self.value();
            let f = $f;
            self.tape.push(v.map(f), Op::$op(self.id), self.requires_grad())
        }
    };
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.rg(self.id)
    }

    fn binary(self, other: Var<'t, T>, mk: fn(usize, usize) -> Op<T>, f: impl Fn(T, T) -> T) -> Result<Var<'t, T>> {
        let (sa, sb) = (self.shape(), other.shape());
        let (a, b) = if sa == sb {
            (self, other)
        } else {
            let target = broadcast_shapes(&sa, &sb)?;
            (self.broadcast_to(&target)?, other.broadcast_to(&target)?)
        };
        let (va, vb) = (a.value(), b.value());
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(va.shape(), data)?;
        let rg = a.requires_grad() || b.requires_grad();
        Ok(self.tape.push(t, mk(a.id, b.id), rg))
    }

    /// Element-wise sum with broadcasting over size-1 axes.
    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Op::Add, |x, y| x + y)
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Op::Sub, |x, y| x - y)
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Op::Mul, |x, y| x * y)
    }

    pub fn div(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Op::Div, |x, y| x / y)
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        let v = self.value().map(|x| x * c);
        self.tape.push(v, Op::Scale(self.id, c), self.requires_grad())
    }

    pub fn neg(self) -> Var<'t, T> {
        self.scale(-T::one())
    }

    pub fn add_scalar(self, c: T) -> Var<'t, T> {
        let v = self.value().map(|x| x + c);
        self.tape.push(v, Op::AddScalar(self.id), self.requires_grad())
    }

    unary!(tanh, Tanh, |x: T| x.tanh());
    unary!(exp, Exp, |x: T| x.exp());
    unary!(ln, Ln, |x: T| x.ln());
    unary!(sqrt, Sqrt, |x: T| x.sqrt());
    unary!(square, Square, |x: T| x * x);

    /// Matrix product; `self` is viewed as `[rows, k]` over its leading axes
    /// and `other` must be `[k, n]`.
    pub fn matmul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let (sa, sb) = (self.shape(), other.shape());
        let k = *sa.last().unwrap_or(&0);
        if sa.is_empty() || sb.len() != 2 || sb[0] != k {
            return Err(dim_err(format!("matmul of {sa:?} and {sb:?}")));
        }
        let (m, n) = (numel(&sa) / k.max(1), sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm_nn(m, k, n, self.value().data(), other.value().data(), &mut out);
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = n;
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(
            Tensor::new(&shape, out)?,
            Op::MatMul { a: self.id, b: other.id, m, k, n },
            rg,
        ))
    }

    /// `self · wᵀ` with `w` shaped `[out, in]`, applied over the last axis.
    pub fn linear(self, w: Var<'t, T>) -> Result<Var<'t, T>> {
        let (sx, sw) = (self.shape(), w.shape());
        let k = *sx.last().unwrap_or(&0);
        if sx.is_empty() || sw.len() != 2 || sw[1] != k {
            return Err(dim_err(format!("linear of {sx:?} with weight {sw:?}")));
        }
        let (m, n) = (numel(&sx) / k.max(1), sw[0]);
        let mut out = vec![T::zero(); m * n];
        gemm_nt(m, k, n, self.value().data(), w.value().data(), &mut out);
        let mut shape = sx.clone();
        *shape.last_mut().unwrap() = n;
        let rg = self.requires_grad() || w.requires_grad();
        Ok(self.tape.push(
            Tensor::new(&shape, out)?,
            Op::Linear { x: self.id, w: w.id, m, k, n },
            rg,
        ))
    }

    fn bmm_impl(self, other: Var<'t, T>, trans_b: bool) -> Result<Var<'t, T>> {
        let (sa, sb) = (self.shape(), other.shape());
        let ok = sa.len() == 3
            && sb.len() == 3
            && sa[0] == sb[0]
            && if trans_b { sa[2] == sb[2] } else { sa[2] == sb[1] };
        if !ok {
            return Err(dim_err(format!("batched matmul of {sa:?} and {sb:?} (trans_b={trans_b})")));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let n = if trans_b { sb[1] } else { sb[2] };
        let (va, vb) = (self.value(), other.value());
        let mut out = vec![T::zero(); batch * m * n];
        for bi in 0..batch {
            let a = &va.data()[bi * m * k..(bi + 1) * m * k];
            let b = &vb.data()[bi * k * n..(bi + 1) * k * n];
            let c = &mut out[bi * m * n..(bi + 1) * m * n];
            if trans_b {
                gemm_nt(m, k, n, a, b, c);
            } else {
                gemm_nn(m, k, n, a, b, c);
            }
        }
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(
            Tensor::new(&[batch, m, n], out)?,
            Op::Bmm { a: self.id, b: other.id, batch, m, k, n, trans_b },
            rg,
        ))
    }

    /// `[B, m, k] x [B, k, n] -> [B, m, n]`
    pub fn bmm(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.bmm_impl(other, false)
    }

    /// `[B, m, k] x [B, n, k]^T -> [B, m, n]`
    pub fn bmm_nt(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.bmm_impl(other, true)
    }

    pub fn permute(self, axes: &[usize]) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(dim_err(format!("invalid permutation {axes:?} for shape {shape:?}")));
        }
        let v = self.value();
        let data = permute_data(v.data(), &shape, axes);
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        Ok(self.tape.push(
            Tensor::new(&out_shape, data)?,
            Op::Permute { a: self.id, axes: axes.to_vec() },
            self.requires_grad(),
        ))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, T>> {
        let v = (*self.value()).clone().reshape(shape)?;
        Ok(self.tape.push(v, Op::Reshape(self.id), self.requires_grad()))
    }

    /// Sum over `axis`, keeping it with extent 1.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t, T>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(dim_err(format!("sum over axis {axis} of {shape:?}")));
        }
        let (outer, ext, inner) = split_axis(&shape, axis);
        let v = self.value();
        let src = v.data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for e in 0..ext {
                let s = &src[(o * ext + e) * inner..(o * ext + e + 1) * inner];
                for (d, &x) in out[o * inner..(o + 1) * inner].iter_mut().zip(s) {
                    *d += x;
                }
            }
        }
        let mut oshape = shape.clone();
        oshape[axis] = 1;
        Ok(self.tape.push(
            Tensor::new(&oshape, out)?,
            Op::SumAxis { a: self.id, axis },
            self.requires_grad(),
        ))
    }

    /// Repeats size-1 axes up to `shape`.
    pub fn broadcast_to(self, shape: &[usize]) -> Result<Var<'t, T>> {
        let s = self.shape();
        if s == shape {
            return Ok(self);
        }
        if s.len() != shape.len() || s.iter().zip(shape).any(|(&a, &b)| a != b && a != 1) {
            return Err(dim_err(format!("cannot broadcast {s:?} to {shape:?}")));
        }
        let st = strides(&s);
        let eff: Vec<usize> = (0..s.len()).map(|i| if s[i] == 1 { 0 } else { st[i] }).collect();
        let data = gather(self.value().data(), shape, &eff);
        Ok(self.tape.push(
            Tensor::new(shape, data)?,
            Op::BroadcastTo(self.id),
            self.requires_grad(),
        ))
    }

    /// Softmax along the last axis.
    pub fn softmax_last(self) -> Result<Var<'t, T>> {
        let v = self.value();
        let axis = v.rank().checked_sub(1).ok_or_else(|| dim_err("softmax of a scalar"))?;
        let out = v.softmax(axis)?;
        Ok(self.tape.push(out, Op::SoftmaxLast(self.id), self.requires_grad()))
    }

    pub fn concat(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        let first = parts.first().ok_or_else(|| dim_err("concat of nothing"))?;
        let tape = first.tape;
        let base = first.shape();
        if axis >= base.len() {
            return Err(dim_err(format!("concat axis {axis} for {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = p.shape();
            if s.len() != base.len() || (0..s.len()).any(|i| i != axis && s[i] != base[i]) {
                return Err(dim_err(format!("concat of {base:?} and {s:?} along {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        for o in 0..outer {
            for v in &vals {
                let ext = v.shape()[axis];
                out.extend_from_slice(&v.data()[o * ext * inner..(o + 1) * ext * inner]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let rg = parts.iter().any(|p| p.requires_grad());
        Ok(tape.push(
            Tensor::new(&shape, out)?,
            Op::Concat { inputs: parts.iter().map(|p| p.id).collect(), axis },
            rg,
        ))
    }

    /// Sub-range `[start, end)` along `axis`.
    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'t, T>> {
        let shape = self.shape();
        if axis >= shape.len() || start >= end || end > shape[axis] {
            return Err(dim_err(format!("slice {start}..{end} on axis {axis} of {shape:?}")));
        }
        let (outer, ext_in, inner) = split_axis(&shape, axis);
        let ext = end - start;
        let v = self.value();
        let mut out = Vec::with_capacity(outer * ext * inner);
        for o in 0..outer {
            out.extend_from_slice(&v.data()[(o * ext_in + start) * inner..(o * ext_in + end) * inner]);
        }
        let mut oshape = shape.clone();
        oshape[axis] = ext;
        Ok(self.tape.push(
            Tensor::new(&oshape, out)?,
            Op::Slice { a: self.id, axis, start },
            self.requires_grad(),
        ))
    }

    pub fn sum_all(self) -> Var<'t, T> {
        let s: T = self.value().data().iter().copied().sum();
        self.tape.push(Tensor::scalar(s), Op::SumAll(self.id), self.requires_grad())
    }

    pub fn mean_all(self) -> Var<'t, T> {
        let n = T::of(self.value().len() as f64);
        self.sum_all().scale(T::one() / n)
    }

    /// Block-structured linear map: `self` is `[..., blocks, j_in]`, `w1` and
    /// `w2` are `[j_out, j_in]`. Output block `n` is
    /// `w1·x_n + w2·Σ_{i≠n} x_i`, i.e. the product with the block matrix whose
    /// diagonal blocks are `w1` and off-diagonal blocks are `w2`.
    pub fn structured(self, w1: Var<'t, T>, w2: Var<'t, T>) -> Result<Var<'t, T>> {
        let (sx, s1, s2) = (self.shape(), w1.shape(), w2.shape());
        if sx.len() < 2 || s1.len() != 2 || s1 != s2 || s1[1] != sx[sx.len() - 1] {
            return Err(dim_err(format!(
                "structured map of {sx:?} with blocks {s1:?} / {s2:?}"
            )));
        }
        let (j_out, j_in) = (s1[0], s1[1]);
        let blocks = sx[sx.len() - 2];
        let rows = numel(&sx[..sx.len() - 2]);
        let vx = self.value();
        let (v1, v2) = (w1.value(), w2.value());
        let diff: Vec<T> = v1.data().iter().zip(v2.data()).map(|(&a, &b)| a - b).collect();
        let mut out = vec![T::zero(); rows * blocks * j_out];
        gemm_nt(rows * blocks, j_in, j_out, vx.data(), &diff, &mut out);
        let xsum = block_sums(vx.data(), rows, blocks, j_in);
        let mut shared = vec![T::zero(); rows * j_out];
        gemm_nt(rows, j_in, j_out, &xsum, v2.data(), &mut shared);
        for r in 0..rows {
            let s = &shared[r * j_out..(r + 1) * j_out];
            for b in 0..blocks {
                for (d, &v) in out[(r * blocks + b) * j_out..(r * blocks + b + 1) * j_out].iter_mut().zip(s) {
                    *d += v;
                }
            }
        }
        let mut shape = sx.clone();
        *shape.last_mut().unwrap() = j_out;
        let rg = self.requires_grad() || w1.requires_grad() || w2.requires_grad();
        Ok(self.tape.push(
            Tensor::new(&shape, out)?,
            Op::Structured { x: self.id, w1: w1.id, w2: w2.id, rows, blocks, j_in, j_out },
            rg,
        ))
    }
}
