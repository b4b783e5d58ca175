//! Operation recording and reverse-mode replay.
//!
//! Every primitive pushes a node holding its output value and enough
//! information to run its backward rule. Nodes only ever reference earlier
//! nodes, so replaying in reverse index order visits each node after all of
//! its consumers.

use super::{Element, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Single-argument elementwise primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Neg,
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
    Cos,
    Abs,
}

/// Two-argument elementwise primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
    /// Elementwise maximum; ties send the gradient to the left operand.
    Max,
}

/// How an operand maps onto the output of a binary op.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    Scalar,
    /// `[n]` or `[1, n]` spread over the rows of `[m, n]`.
    Row,
    /// `[m, 1]` spread over the columns of `[m, n]`.
    Col,
}

impl Bcast {
    /// Operand index for output element `i` at row `r`, column `c`.
    #[inline(always)]
    fn at(self, i: usize, r: usize, c: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Scalar => 0,
            Bcast::Row => c,
            Bcast::Col => r,
        }
    }
}

/// `acc[i] += g[i] · d(x[i], y[i])` for an elementwise op `y = f(x)`.
#[inline(always)]
fn accumulate_unary<T: Element>(acc: &mut [T], g: &[T], x: &[T], y: &[T], d: impl Fn(T, T) -> T) {
    for (((acc, &gi), &xi), &yi) in acc.iter_mut().zip(g).zip(x).zip(y) {
        *acc = *acc + gi * d(xi, yi);
    }
}

/// Calls `f(i, ia, ib)` for every output element in row-major order.
#[inline(always)]
fn for_each_pair(ab: Bcast, bb: Bcast, n: usize, cols: usize, mut f: impl FnMut(usize, usize, usize)) {
    if ab == Bcast::Same && bb == Bcast::Same {
        (0..n).for_each(|i| f(i, i, i));
        return;
    }
    let rows = n / cols;
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            f(i, ab.at(i, r, c), bb.at(i, r, c));
        }
    }
}

/// `acc[ia] += g[i] · d(a[ia], b[ib])`: the gradient of the first operand
/// of a broadcast binary op, given its partial derivative `d`.
#[inline(always)]
fn accumulate_partial<T: Element>(
    acc: &mut [T],
    g: &[T],
    (av, ab): (&[T], Bcast),
    (bv, bb): (&[T], Bcast),
    cols: usize,
    d: impl Fn(T, T) -> T,
) {
    if ab == Bcast::Same && bb == Bcast::Same {
        for (((acc, &gi), &x), &y) in acc.iter_mut().zip(g).zip(av).zip(bv) {
            *acc = *acc + gi * d(x, y);
        }
        return;
    }
    for_each_pair(ab, bb, g.len(), cols, |i, ia, ib| {
        acc[ia] = acc[ia] + g[i] * d(av[ia], bv[ib]);
    });
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul {
        a: Var,
        b: Var,
        b_t: bool,
    },
    Binary {
        kind: Binary,
        a: Var,
        b: Var,
        ab: Bcast,
        bb: Bcast,
    },
    Unary {
        kind: Unary,
        x: Var,
    },
    Affine {
        x: Var,
        scale: T,
    },
    Sum {
        x: Var,
        axis: Option<usize>,
        mean: bool,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

/// Records primitive operations for reverse-mode differentiation.
///
/// One tape is meant to live for one forward/backward pass.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<Option<Var>>,
    grad_enabled: bool,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
thread_local! {
    /// Negative control for gradient checks: flips the tanh backward rule.
    pub(crate) static CORRUPT_TANH_BACKWARD: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

fn corrupt_tanh() -> bool {
    #[cfg(test)]
    {
        CORRUPT_TANH_BACKWARD.with(|c| c.get())
    }
    #[cfg(not(test))]
    {
        false
    }
}

#[inline]
fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn softplus<T: Element>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// `(outer, dim, inner)` split of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn resolve(a: &[usize], b: &[usize]) -> Option<(Vec<usize>, Bcast, Bcast)> {
    if a == b {
        return Some((a.to_vec(), Bcast::Same, Bcast::Same));
    }
    if numel(b) == 1 {
        return Some((a.to_vec(), Bcast::Same, Bcast::Scalar));
    }
    if numel(a) == 1 {
        return Some((b.to_vec(), Bcast::Scalar, Bcast::Same));
    }
    let spread = |full: &[usize], part: &[usize]| -> Option<Bcast> {
        let [m, n] = *full else { return None };
        match *part {
            [k] if k == n => Some(Bcast::Row),
            [1, k] if k == n => Some(Bcast::Row),
            [k, 1] if k == m => Some(Bcast::Col),
            _ => None,
        }
    };
    if let Some(bb) = spread(a, b) {
        return Some((a.to_vec(), Bcast::Same, bb));
    }
    if let Some(ab) = spread(b, a) {
        return Some((b.to_vec(), ab, Bcast::Same));
    }
    None
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A tape that records values only; nothing on it is differentiable.
    pub fn no_grad() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            tracked: tracked && self.grad_enabled,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// A value that never receives gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf input; differentiable iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let tracked = t.requires_grad();
        let mut value = t;
        value.set_requires_grad(false);
        self.push(value, Op::Leaf, tracked)
    }

    /// Places a parameter on the tape, reusing the node if already present.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(Some(v)) = self.params.get(id.0) {
            return *v;
        }
        let mut value = store.get(id).clone();
        value.set_requires_grad(false);
        let v = self.push(value, Op::Param(id), true);
        if self.params.len() <= id.0 {
            self.params.resize(id.0 + 1, None);
        }
        self.params[id.0] = Some(v);
        v
    }

    /// `a · b` for `a: [m x k]`, `b: [k x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` for `a: [m x k]`, `b: [n x k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, b_t: bool) -> Result<Var> {
        let op_name = if b_t { "matmul_t" } else { "matmul" };
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let (m, k) = match sa.as_slice() {
            [m, k] => (*m, *k),
            _ => return Err(Error::shape(op_name, &sa, &sb)),
        };
        let (kb, n) = match (sb.as_slice(), b_t) {
            ([r, c], false) => (*r, *c),
            ([r, c], true) => (*c, *r),
            _ => return Err(Error::shape(op_name, &sa, &sb)),
        };
        if k != kb {
            return Err(Error::shape(op_name, &sa, &sb));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            b_t,
            &mut out,
            false,
        );
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul { a, b, b_t }, tracked))
    }

    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (shape, ab, bb) = resolve(self.shape(a), self.shape(b))
            .ok_or_else(|| Error::shape("elementwise", self.shape(a), self.shape(b)))?;
        let cols = shape.last().copied().unwrap_or(1).max(1);
        let n = numel(&shape);
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let f = |x: T, y: T| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
            Binary::Div => x / y,
            Binary::Max => {
                if x >= y {
                    x
                } else {
                    y
                }
            }
        };
        let out: Vec<T> = if ab == Bcast::Same && bb == Bcast::Same {
            av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let mut out = Vec::with_capacity(n);
            for_each_pair(ab, bb, n, cols, |_, ia, ib| out.push(f(av[ia], bv[ib])));
            out
        };
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Binary { kind, a, b, ab, bb }, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Max, a, b)
    }

    pub fn unary(&mut self, kind: Unary, x: Var) -> Var {
        let f = |v: T| match kind {
            Unary::Neg => -v,
            Unary::Relu => v.max(T::zero()),
            Unary::Tanh => v.tanh(),
            Unary::Sigmoid => sigmoid(v),
            Unary::Softplus => softplus(v),
            Unary::Cos => v.cos(),
            Unary::Abs => v.abs(),
        };
        let input = self.value(x);
        let out = input.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(input.shape().to_vec(), out).expect("same shape");
        let tracked = self.tracked(x);
        self.push(value, Op::Unary { kind, x }, tracked)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(Unary::Neg, x)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(Unary::Relu, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(Unary::Softplus, x)
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(Unary::Cos, x)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(Unary::Abs, x)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let input = self.value(x);
        let out = input.data().iter().map(|&v| scale * v + shift).collect();
        let value = Tensor::new(input.shape().to_vec(), out).expect("same shape");
        let tracked = self.tracked(x);
        self.push(value, Op::Affine { x, scale }, tracked)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        self.affine(x, factor, T::zero())
    }

    pub fn add_scalar(&mut self, x: Var, shift: T) -> Var {
        self.affine(x, T::one(), shift)
    }

    /// Sum over `axis`, or over everything into a rank-0 scalar.
    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(x, axis, false)
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(x, axis, true)
    }

    fn reduce(&mut self, x: Var, axis: Option<usize>, mean: bool) -> Result<Var> {
        let input = self.value(x);
        let shape = input.shape().to_vec();
        let value = match axis {
            None => {
                let total = input.data().iter().fold(T::zero(), |acc, &v| acc + v);
                let n = T::of(input.numel().max(1) as f64);
                Tensor::scalar(if mean { total / n } else { total })
            }
            Some(ax) => {
                if ax >= shape.len() {
                    return Err(Error::Axis {
                        axis: ax,
                        rank: shape.len(),
                    });
                }
                let (outer, dim, inner) = split_axis(&shape, ax);
                let mut out = vec![T::zero(); outer * inner];
                let data = input.data();
                for o in 0..outer {
                    for d in 0..dim {
                        let src = &data[(o * dim + d) * inner..][..inner];
                        for (acc, &v) in out[o * inner..][..inner].iter_mut().zip(src) {
                            *acc = *acc + v;
                        }
                    }
                }
                if mean && dim > 0 {
                    let n = T::of(dim as f64);
                    out.iter_mut().for_each(|v| *v = *v / n);
                }
                let mut out_shape = shape.clone();
                out_shape.remove(ax);
                Tensor::new(out_shape, out)?
            }
        };
        let tracked = self.tracked(x);
        Ok(self.push(value, Op::Sum { x, axis, mean }, tracked))
    }

    /// Joins tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::Axis { axis, rank: base.len() });
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for &p in parts {
                let block = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.value(p).data()[o * block..][..block]);
            }
        }
        let tracked = parts.iter().any(|&p| self.tracked(p));
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            tracked,
        ))
    }

    /// `len` entries of `x` along `axis`, starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Axis {
                axis,
                rank: shape.len(),
            });
        }
        if start + len > shape[axis] {
            return Err(Error::shape("slice", &shape, &[start, len]));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&data[(o * dim + start) * inner..][..len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let tracked = self.tracked(x);
        Ok(self.push(Tensor::new(out_shape, out)?, Op::Slice { x, axis, start }, tracked))
    }

    /// Back-propagates from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b, b_t } => {
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                let (m, k) = av.dims2().expect("rank 2");
                let n = node.value.shape()[1];
                if let Some(ga) = slot(nodes, grads, *a) {
                    // ga = g · op(b)ᵀ
                    T::gemm(m, n, k, g, false, bv.data(), !b_t, ga, true);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    if *b_t {
                        // gb = gᵀ · a  [n x k]
                        T::gemm(n, m, k, g, true, av.data(), false, gb, true);
                    } else {
                        // gb = aᵀ · g  [k x n]
                        T::gemm(k, m, n, av.data(), true, g, false, gb, true);
                    }
                }
            }
            Op::Binary { kind, a, b, ab, bb } => {
                let cols = node.value.shape().last().copied().unwrap_or(1).max(1);
                let lhs = (nodes[a.0].value.data(), *ab);
                let rhs = (nodes[b.0].value.data(), *bb);
                let (one, zero) = (T::one(), T::zero());
                if let Some(ga) = slot(nodes, grads, *a) {
                    match kind {
                        Binary::Add | Binary::Sub => accumulate_partial(ga, g, lhs, rhs, cols, |_, _| one),
                        Binary::Mul => accumulate_partial(ga, g, lhs, rhs, cols, |_, y| y),
                        Binary::Div => accumulate_partial(ga, g, lhs, rhs, cols, |_, y| one / y),
                        Binary::Max => {
                            accumulate_partial(ga, g, lhs, rhs, cols, |x, y| if x >= y { one } else { zero })
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    // Operands swapped: closures receive (b, a).
                    match kind {
                        Binary::Add => accumulate_partial(gb, g, rhs, lhs, cols, |_, _| one),
                        Binary::Sub => accumulate_partial(gb, g, rhs, lhs, cols, |_, _| -one),
                        Binary::Mul => accumulate_partial(gb, g, rhs, lhs, cols, |_, x| x),
                        Binary::Div => accumulate_partial(gb, g, rhs, lhs, cols, |y, x| -x / (y * y)),
                        Binary::Max => {
                            accumulate_partial(gb, g, rhs, lhs, cols, |y, x| if x >= y { zero } else { one })
                        }
                    }
                }
            }
            Op::Unary { kind, x } => {
                let xv = nodes[x.0].value.data();
                let yv = node.value.data();
                let Some(gx) = slot(nodes, grads, *x) else { return };
                let (one, zero) = (T::one(), T::zero());
                match kind {
                    Unary::Neg => accumulate_unary(gx, g, xv, yv, |_, _| -one),
                    Unary::Relu => accumulate_unary(gx, g, xv, yv, |x, _| if x > zero { one } else { zero }),
                    Unary::Tanh if corrupt_tanh() => accumulate_unary(gx, g, xv, yv, |_, y| y * y - one),
                    Unary::Tanh => accumulate_unary(gx, g, xv, yv, |_, y| one - y * y),
                    Unary::Sigmoid => accumulate_unary(gx, g, xv, yv, |_, y| y * (one - y)),
                    Unary::Softplus => accumulate_unary(gx, g, xv, yv, |x, _| sigmoid(x)),
                    Unary::Cos => accumulate_unary(gx, g, xv, yv, |x, _| -x.sin()),
                    Unary::Abs => accumulate_unary(gx, g, xv, yv, |x, _| {
                        if x > zero {
                            one
                        } else if x < zero {
                            -one
                        } else {
                            zero
                        }
                    }),
                }
            }
            Op::Affine { x, scale } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (acc, &gi) in gx.iter_mut().zip(g) {
                        *acc = *acc + *scale * gi;
                    }
                }
            }
            Op::Sum { x, axis, mean } => {
                let shape = nodes[x.0].value.shape().to_vec();
                let Some(gx) = slot(nodes, grads, *x) else { return };
                match axis {
                    None => {
                        let n = gx.len().max(1);
                        let share = if *mean { g[0] / T::of(n as f64) } else { g[0] };
                        gx.iter_mut().for_each(|v| *v = *v + share);
                    }
                    Some(ax) => {
                        let (outer, dim, inner) = split_axis(&shape, *ax);
                        let norm = if *mean {
                            T::one() / T::of(dim.max(1) as f64)
                        } else {
                            T::one()
                        };
                        for o in 0..outer {
                            for d in 0..dim {
                                let dst = &mut gx[(o * dim + d) * inner..][..inner];
                                for (acc, &gi) in dst.iter_mut().zip(&g[o * inner..][..inner]) {
                                    *acc = *acc + gi * norm;
                                }
                            }
                        }
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let (outer, _, inner) = split_axis(node.value.shape(), *axis);
                let widths: Vec<usize> = parts.iter().map(|p| nodes[p.0].value.shape()[*axis] * inner).collect();
                let row: usize = widths.iter().sum();
                let mut offset = 0;
                for (p, &w) in parts.iter().zip(&widths) {
                    if let Some(gp) = slot(nodes, grads, *p) {
                        for o in 0..outer {
                            let src = &g[o * row + offset..][..w];
                            for (acc, &gi) in gp[o * w..][..w].iter_mut().zip(src) {
                                *acc = *acc + gi;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Slice { x, axis, start } => {
                let shape = nodes[x.0].value.shape().to_vec();
                let len = node.value.shape()[*axis];
                let Some(gx) = slot(nodes, grads, *x) else { return };
                let (outer, dim, inner) = split_axis(&shape, *axis);
                let w = len * inner;
                for o in 0..outer {
                    let dst = &mut gx[(o * dim + start) * inner..][..w];
                    for (acc, &gi) in dst.iter_mut().zip(&g[o * w..][..w]) {
                        *acc = *acc + gi;
                    }
                }
            }
        }
    }
}

/// Gradient buffer of `v`, allocated on first use; `None` when untracked.
fn slot<'g, T: Element>(nodes: &[Node<T>], grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
    if !nodes[v.0].tracked {
        return None;
    }
    let n = nodes[v.0].value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
}

/// Result of a backward pass: one optional gradient buffer per tape node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of the loss w.r.t. `v`; `None` if `v` is not connected.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds parameter gradients into the store's accumulators.
    pub fn accumulate_into(&self, tape: &Tape<T>, store: &mut ParamStore<T>) -> Result<()> {
        for (node, g) in tape.nodes.iter().zip(&self.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                store.get_mut(*id).accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}
