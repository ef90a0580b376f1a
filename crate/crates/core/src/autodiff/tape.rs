//! Tape-based reverse-mode differentiation over whole-array complex ops.
//!
//! Every primitive records one node. Adjoints follow the conjugate
//! Wirtinger convention `G = ∂L/∂Re z + j ∂L/∂Im z` for a real loss `L`,
//! so for a holomorphic `w = f(z)` the input adjoint is `conj(f'(z)) · G_w`,
//! and for a real leaf the adjoint is the ordinary derivative. Adjoints
//! flowing into nodes whose values are real are projected onto the reals.

use std::cell::{Cell, Ref, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::array::{broadcast_shape, dense, Array, C64};
use crate::error::{Error, Result};
use crate::grid::{dft_columns, dft_columns_adjoint, FrequencyGrid};

pub const DEFAULT_COND_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryFn {
    Exp,
    Ln,
    Sin,
    Cos,
    Tan,
    Tanh,
    Sqrt,
    Sigmoid,
    Softplus,
    Pow(f64),
}

impl UnaryFn {
    fn eval(self, z: C64) -> C64 {
        match self {
            UnaryFn::Exp => z.exp(),
            UnaryFn::Ln => z.ln(),
            UnaryFn::Sin => z.sin(),
            UnaryFn::Cos => z.cos(),
            UnaryFn::Tan => z.tan(),
            UnaryFn::Tanh => z.tanh(),
            UnaryFn::Sqrt => z.sqrt(),
            UnaryFn::Sigmoid => sigmoid(z),
            UnaryFn::Softplus => {
                if z.re > 30.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
            UnaryFn::Pow(p) => {
                if z == C64::new(0.0, 0.0) {
                    if p > 0.0 {
                        C64::new(0.0, 0.0)
                    } else {
                        C64::new(f64::INFINITY, 0.0)
                    }
                } else {
                    z.powf(p)
                }
            }
        }
    }

    /// `f'(z)` given `z` and `w = f(z)`.
    fn derivative(self, z: C64, w: C64) -> C64 {
        let one = C64::new(1.0, 0.0);
        match self {
            UnaryFn::Exp => w,
            UnaryFn::Ln => one / z,
            UnaryFn::Sin => z.cos(),
            UnaryFn::Cos => -z.sin(),
            UnaryFn::Tan => one + w * w,
            UnaryFn::Tanh => one - w * w,
            UnaryFn::Sqrt => 0.5 / w,
            UnaryFn::Sigmoid => w * (one - w),
            UnaryFn::Softplus => sigmoid(z),
            UnaryFn::Pow(p) => {
                if z == C64::new(0.0, 0.0) {
                    C64::new(0.0, 0.0)
                } else {
                    p * z.powf(p - 1.0)
                }
            }
        }
    }
}

trait LnOnePlus {
    fn ln_1p(self) -> Self;
}

impl LnOnePlus for C64 {
    fn ln_1p(self) -> Self {
        if self.im == 0.0 && self.re > -1.0 {
            C64::new(self.re.ln_1p(), 0.0)
        } else {
            (C64::new(1.0, 0.0) + self).ln()
        }
    }
}

fn sigmoid(z: C64) -> C64 {
    let one = C64::new(1.0, 0.0);
    if z.re >= 0.0 {
        one / (one + (-z).exp())
    } else {
        let e = z.exp();
        e / (one + e)
    }
}

/// Elementwise user function with a caller-supplied derivative.
#[derive(Clone)]
pub struct CustomFn {
    pub name: &'static str,
    pub f: Arc<dyn Fn(C64) -> C64 + Send + Sync>,
    pub df: Arc<dyn Fn(C64) -> C64 + Send + Sync>,
}

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomFn({})", self.name)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, C64),
    Unary(usize, UnaryFn),
    Custom(usize, CustomFn),
    Abs(usize),
    Abs2(usize),
    Re(usize),
    Conj(usize),
    Sum(usize),
    Mean(usize),
    SumAxis(usize, usize),
    Broadcast(usize),
    Reshape(usize),
    Slice { src: usize, axis: usize, start: usize },
    Concat { srcs: Vec<usize>, axis: usize },
    Transpose(usize),
    DiagEmbed(usize),
    MatMul(usize, usize),
    Inverse(usize),
    Solve(usize, usize),
    Dft(usize, FrequencyGrid),
}

#[derive(Debug)]
struct Node {
    value: Array,
    real: bool,
    needs_grad: bool,
    op: Op,
}

/// Single-writer operation record. Independent tapes are independent.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    cond_limit: Cell<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.len())
    }
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{}, {:?})", self.id, self.shape())
    }
}

/// Gradients of a scalar loss with respect to the leaves that influence it.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    map: HashMap<usize, Array>,
}

impl Gradients {
    pub fn get(&self, v: &Var<'_>) -> Option<&Array> {
        self.map.get(&v.id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn scaled(&self, alpha: f64) -> Gradients {
        Gradients {
            map: self.map.iter().map(|(k, v)| (*k, v.map(|z| z * alpha))).collect(),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            cond_limit: Cell::new(DEFAULT_COND_LIMIT),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn set_cond_limit(&self, limit: f64) {
        self.cond_limit.set(limit);
    }

    pub fn cond_limit(&self) -> f64 {
        self.cond_limit.get()
    }

    /// Real differentiable leaf. Imaginary parts are discarded.
    pub fn leaf(&self, value: Array) -> Var<'_> {
        let value = value.map(|z| C64::new(z.re, 0.0));
        self.push(value, true, true, Op::Leaf)
    }

    pub fn constant(&self, value: Array) -> Var<'_> {
        let real = value.data().iter().all(|z| z.im == 0.0);
        self.push(value, real, false, Op::Const)
    }

    pub fn constant_real(&self, shape: &[usize], data: &[f64]) -> Result<Var<'_>> {
        Ok(self.constant(Array::from_real(shape.to_vec(), data)?))
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Array::scalar(C64::new(value, 0.0)))
    }

    fn push(&self, value: Array, real: bool, needs_grad: bool, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            real,
            needs_grad,
            op,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Ref<'_, Array> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn info(&self, id: usize) -> (bool, bool) {
        let n = &self.nodes.borrow()[id];
        (n.real, n.needs_grad)
    }

    /// Backpropagates from a real scalar. Returns gradients for every leaf
    /// reachable from `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::Autodiff("loss recorded on a different tape".into()));
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 || !root.real {
            return Err(Error::Domain(format!(
                "loss must be a real scalar, got shape {:?} (real: {})",
                root.value.shape(),
                root.real
            )));
        }
        let mut grads: Vec<Option<Array>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Array::full(root.value.shape(), C64::new(1.0, 0.0)));
        let mut out = Gradients::default();

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let mut acc = |target: usize, contrib: Array| {
                let t = &nodes[target];
                if !t.needs_grad {
                    return;
                }
                let contrib = if t.real {
                    contrib.map(|z| C64::new(z.re, 0.0))
                } else {
                    contrib
                };
                match &mut grads[target] {
                    Some(existing) => existing.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            };
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => {
                    out.map.insert(id, g);
                }
                Op::Const => {}
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.map(|z| -z));
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip_map(val(*b), |g, y| g * y.conj()));
                    acc(*b, g.zip_map(val(*a), |g, x| g * x.conj()));
                }
                Op::Div(a, b) => {
                    let ga = g.zip_map(val(*b), |g, y| g / y.conj());
                    let gb = ga.zip_map(&node.value, |ga, w| -ga * w.conj());
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Neg(a) => acc(*a, g.map(|z| -z)),
                Op::Scale(a, c) => {
                    let cc = c.conj();
                    acc(*a, g.map(|z| z * cc));
                }
                Op::Unary(a, f) => {
                    let x = val(*a);
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .zip(node.value.data())
                        .map(|((g, z), w)| g * f.derivative(*z, *w).conj())
                        .collect();
                    acc(*a, Array::new(g.shape().to_vec(), data)?);
                }
                Op::Custom(a, f) => {
                    acc(*a, g.zip_map(val(*a), |g, z| g * (f.df)(z).conj()));
                }
                Op::Abs(a) => {
                    acc(
                        *a,
                        g.zip_map(val(*a), |g, z| {
                            let r = z.norm();
                            if r == 0.0 {
                                C64::new(0.0, 0.0)
                            } else {
                                g.re * z / r
                            }
                        }),
                    );
                }
                Op::Abs2(a) => acc(*a, g.zip_map(val(*a), |g, z| 2.0 * g.re * z)),
                Op::Re(a) => acc(*a, g.map(|z| C64::new(z.re, 0.0))),
                Op::Conj(a) => acc(*a, g.conj()),
                Op::Sum(a) => {
                    let s = g.data()[0];
                    acc(*a, Array::full(val(*a).shape(), s));
                }
                Op::Mean(a) => {
                    let x = val(*a);
                    let s = g.data()[0] / x.len() as f64;
                    acc(*a, Array::full(x.shape(), s));
                }
                Op::SumAxis(a, axis) => {
                    let shape = val(*a).shape().to_vec();
                    let mut kept = shape.clone();
                    kept[*axis] = 1;
                    acc(*a, g.reshape(&kept)?.broadcast_to(&shape)?);
                }
                Op::Broadcast(a) => acc(*a, g.sum_to(val(*a).shape())?),
                Op::Reshape(a) => acc(*a, g.reshape(val(*a).shape())?),
                Op::Slice { src, axis, start } => {
                    let shape = val(*src).shape().to_vec();
                    let mut full = Array::zeros(&shape);
                    let (outer, _, inner) = split_axis(&shape, *axis);
                    let len = g.shape()[*axis];
                    let n = shape[*axis];
                    for o in 0..outer {
                        for i in 0..len {
                            let dst = (o * n + start + i) * inner;
                            let srcp = (o * len + i) * inner;
                            full.data_mut()[dst..dst + inner].copy_from_slice(&g.data()[srcp..srcp + inner]);
                        }
                    }
                    acc(*src, full);
                }
                Op::Concat { srcs, axis } => {
                    let mut start = 0;
                    for &s in srcs {
                        let len = val(s).shape()[*axis];
                        acc(s, slice_array(&g, *axis, start, len));
                        start += len;
                    }
                }
                Op::Transpose(a) => acc(*a, g.transpose_last()?),
                Op::DiagEmbed(a) => {
                    let x = val(*a);
                    let n = *x.shape().last().unwrap_or(&1);
                    let batch = x.len() / n.max(1);
                    let mut d = Array::zeros(x.shape());
                    for b in 0..batch {
                        for i in 0..n {
                            d.data_mut()[b * n + i] = g.data()[b * n * n + i * n + i];
                        }
                    }
                    acc(*a, d);
                }
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul(&val(*b).adjoint()?)?);
                    acc(*b, val(*a).adjoint()?.matmul(&g)?);
                }
                Op::Inverse(a) => {
                    let yh = node.value.adjoint()?;
                    acc(*a, yh.matmul(&g)?.matmul(&yh)?.map(|z| -z));
                }
                Op::Solve(a, b) => {
                    // X = A⁻¹B: G_B solves Aᴴ G_B = G_X, G_A = −G_B Xᴴ.
                    let gb = batched_solve(&val(*a).adjoint()?, &g, f64::INFINITY)?;
                    let ga = gb.matmul(&node.value.adjoint()?)?.map(|z| -z);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Dft(a, grid) => {
                    let shape = val(*a).shape().to_vec();
                    let k = shape[0];
                    let cols = val(*a).len() / k.max(1);
                    let data = dft_columns_adjoint(g.data(), k, cols, grid);
                    acc(*a, Array::new(shape, data)?);
                }
            }
        }
        Ok(out)
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn slice_array(x: &Array, axis: usize, start: usize, len: usize) -> Array {
    let shape = x.shape();
    let (outer, n, inner) = split_axis(shape, axis);
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * n + start) * inner;
        data.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    Array::new(out_shape, data).expect("slice shape")
}

/// Per-matrix solve over leading batch axes, with a 1-norm condition check.
fn batched_solve(a: &Array, b: &Array, limit: f64) -> Result<Array> {
    let ra = a.shape().len();
    let n = a.shape()[ra - 1];
    let cols = *b.shape().last().unwrap();
    let batch = a.len() / (n * n).max(1);
    let mut out = Vec::with_capacity(b.len());
    let mut piv = vec![0; n];
    for i in 0..batch {
        let am = &a.data()[i * n * n..(i + 1) * n * n];
        let mut lu = am.to_vec();
        if !dense::lu_factor(&mut lu, n, &mut piv) {
            return Err(Error::IllConditioned {
                index: i,
                cond: f64::INFINITY,
                limit,
            });
        }
        if limit.is_finite() {
            let inv = dense::lu_solve(&lu, n, &piv, &dense::identity(n), n);
            let cond = dense::norm1(am, n) * dense::norm1(&inv, n);
            if !(cond <= limit) {
                return Err(Error::IllConditioned { index: i, cond, limit });
            }
        }
        let rhs = &b.data()[i * n * cols..(i + 1) * n * cols];
        out.extend(dense::lu_solve(&lu, n, &piv, rhs, cols));
    }
    Array::new(b.shape().to_vec(), out)
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Array {
        self.tape.value(self.id).clone()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&Array) -> R) -> R {
        f(&self.tape.value(self.id))
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value(self.id).shape().to_vec()
    }

    pub fn is_real(&self) -> bool {
        self.tape.info(self.id).0
    }

    /// Scalar value (real part) of a one-element variable.
    pub fn item(&self) -> f64 {
        self.tape.value(self.id).data()[0].re
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Autodiff("operands recorded on different tapes".into()))
        }
    }

    fn unary_node(&self, value: Array, real: bool, op: Op) -> Var<'t> {
        let needs = self.tape.info(self.id).1;
        self.tape.push(value, real, needs, op)
    }

    fn binary_prep(self, other: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        self.same_tape(&other)?;
        let (sa, sb) = (self.shape(), other.shape());
        if sa == sb {
            return Ok((self, other));
        }
        let shape = broadcast_shape(&sa, &sb)?;
        Ok((self.broadcast_to(&shape)?, other.broadcast_to(&shape)?))
    }

    fn binary(self, other: Var<'t>, f: impl Fn(C64, C64) -> C64, make: fn(usize, usize) -> Op) -> Result<Var<'t>> {
        let (a, b) = self.binary_prep(other)?;
        let value = a.tape.value(a.id).zip_map(&a.tape.value(b.id), f);
        let (ra, na) = a.tape.info(a.id);
        let (rb, nb) = a.tape.info(b.id);
        Ok(a.tape.push(value, ra && rb, na || nb, make(a.id, b.id)))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, |x, y| x + y, Op::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, |x, y| x - y, Op::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, |x, y| x * y, Op::Mul)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, |x, y| x / y, Op::Div)
    }

    pub fn neg(self) -> Var<'t> {
        let v = self.tape.value(self.id).map(|z| -z);
        self.unary_node(v, self.is_real(), Op::Neg(self.id))
    }

    pub fn scale(self, c: C64) -> Var<'t> {
        let v = self.tape.value(self.id).map(|z| z * c);
        self.unary_node(v, self.is_real() && c.im == 0.0, Op::Scale(self.id, c))
    }

    pub fn scale_real(self, c: f64) -> Var<'t> {
        self.scale(C64::new(c, 0.0))
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'t>> {
        self.add(self.tape.scalar(c))
    }

    pub fn apply(self, f: UnaryFn) -> Var<'t> {
        let v = self.tape.value(self.id).map(|z| f.eval(z));
        let real = self.is_real() && v.data().iter().all(|z| z.im == 0.0);
        self.unary_node(v, real, Op::Unary(self.id, f))
    }

    pub fn exp(self) -> Var<'t> {
        self.apply(UnaryFn::Exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.apply(UnaryFn::Ln)
    }

    pub fn sin(self) -> Var<'t> {
        self.apply(UnaryFn::Sin)
    }

    pub fn cos(self) -> Var<'t> {
        self.apply(UnaryFn::Cos)
    }

    pub fn tan(self) -> Var<'t> {
        self.apply(UnaryFn::Tan)
    }

    pub fn tanh(self) -> Var<'t> {
        self.apply(UnaryFn::Tanh)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.apply(UnaryFn::Sqrt)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.apply(UnaryFn::Sigmoid)
    }

    pub fn softplus(self) -> Var<'t> {
        self.apply(UnaryFn::Softplus)
    }

    pub fn powf(self, p: f64) -> Var<'t> {
        self.apply(UnaryFn::Pow(p))
    }

    pub fn custom(self, f: CustomFn) -> Var<'t> {
        let v = self.tape.value(self.id).map(|z| (f.f)(z));
        let real = self.is_real() && v.data().iter().all(|z| z.im == 0.0);
        self.unary_node(v, real, Op::Custom(self.id, f))
    }

    pub fn abs(self) -> Var<'t> {
        let v = self.tape.value(self.id).map(|z| C64::new(z.norm(), 0.0));
        self.unary_node(v, true, Op::Abs(self.id))
    }

    pub fn abs2(self) -> Var<'t> {
        let v = self.tape.value(self.id).map(|z| C64::new(z.norm_sqr(), 0.0));
        self.unary_node(v, true, Op::Abs2(self.id))
    }

    pub fn re(self) -> Var<'t> {
        let v = self.tape.value(self.id).map(|z| C64::new(z.re, 0.0));
        self.unary_node(v, true, Op::Re(self.id))
    }

    pub fn conj(self) -> Var<'t> {
        let v = self.tape.value(self.id).conj();
        self.unary_node(v, self.is_real(), Op::Conj(self.id))
    }

    pub fn sum(self) -> Var<'t> {
        let s: C64 = self.tape.value(self.id).data().iter().sum();
        self.unary_node(Array::scalar(s), self.is_real(), Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let v = self.tape.value(self.id);
        let s: C64 = v.data().iter().sum::<C64>() / v.len().max(1) as f64;
        drop(v);
        self.unary_node(Array::scalar(s), self.is_real(), Op::Mean(self.id))
    }

    /// Sums over `axis`, removing it.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(Error::shape("sum_axis", &[axis], &shape));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let v = self.tape.value(self.id);
        let mut data = vec![C64::new(0.0, 0.0); outer * inner];
        for o in 0..outer {
            for i in 0..n {
                for k in 0..inner {
                    data[o * inner + k] += v.data()[(o * n + i) * inner + k];
                }
            }
        }
        drop(v);
        let mut out_shape = shape;
        out_shape.remove(axis);
        Ok(self.unary_node(Array::new(out_shape, data)?, self.is_real(), Op::SumAxis(self.id, axis)))
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Result<Var<'t>> {
        if self.shape() == shape {
            return Ok(self);
        }
        let v = self.tape.value(self.id).broadcast_to(shape)?;
        Ok(self.unary_node(v, self.is_real(), Op::Broadcast(self.id)))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        if self.shape() == shape {
            return Ok(self);
        }
        let v = self.tape.value(self.id).clone().reshape(shape)?;
        Ok(self.unary_node(v, self.is_real(), Op::Reshape(self.id)))
    }

    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape("slice", &[start + len], &shape));
        }
        let v = slice_array(&self.tape.value(self.id), axis, start, len);
        Ok(self.unary_node(
            v,
            self.is_real(),
            Op::Slice {
                src: self.id,
                axis,
                start,
            },
        ))
    }

    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Autodiff("concat of zero operands".into()))?;
        let tape = first.tape;
        let base = first.shape();
        if axis >= base.len() {
            return Err(Error::shape("concat", &[axis], &base));
        }
        let mut total = 0;
        let (mut real, mut needs) = (true, false);
        for p in parts {
            first.same_tape(p)?;
            let s = p.shape();
            let mut a = s.clone();
            let mut b = base.clone();
            a[axis] = 0;
            b[axis] = 0;
            if a != b {
                return Err(Error::shape("concat", &base, &s));
            }
            total += s[axis];
            let (r, n) = tape.info(p.id);
            real &= r;
            needs |= n;
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        {
            let nodes = tape.nodes.borrow();
            for o in 0..outer {
                for p in parts {
                    let v = &nodes[p.id].value;
                    let len = v.shape()[axis] * inner;
                    data.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
                }
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Array::new(shape, data)?;
        Ok(tape.push(
            value,
            real,
            needs,
            Op::Concat {
                srcs: parts.iter().map(|p| p.id).collect(),
                axis,
            },
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose(self) -> Result<Var<'t>> {
        let v = self.tape.value(self.id).transpose_last()?;
        Ok(self.unary_node(v, self.is_real(), Op::Transpose(self.id)))
    }

    /// `[..., n] → [..., n, n]` with the input on the diagonal.
    pub fn diag_embed(self) -> Result<Var<'t>> {
        let shape = self.shape();
        let n = *shape.last().ok_or_else(|| Error::shape("diag_embed", &[1], &shape))?;
        let batch = shape.iter().product::<usize>() / n.max(1);
        let v = self.tape.value(self.id);
        let mut out_shape = shape.clone();
        out_shape.push(n);
        let mut d = Array::zeros(&out_shape);
        for b in 0..batch {
            for i in 0..n {
                d.data_mut()[b * n * n + i * n + i] = v.data()[b * n + i];
            }
        }
        drop(v);
        Ok(self.unary_node(d, self.is_real(), Op::DiagEmbed(self.id)))
    }

    /// Broadcasts leading (batch) axes of two matrix operands to a common shape.
    fn batch_prep(self, other: Var<'t>, op: &'static str) -> Result<(Var<'t>, Var<'t>)> {
        self.same_tape(&other)?;
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::shape(op, &sa, &sb));
        }
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        if ba == bb {
            return Ok((self, other));
        }
        let batch = broadcast_shape(ba, bb)?;
        let mut ta = batch.clone();
        ta.extend(&sa[sa.len() - 2..]);
        let mut tb = batch;
        tb.extend(&sb[sb.len() - 2..]);
        Ok((self.broadcast_to(&ta)?, other.broadcast_to(&tb)?))
    }

    /// Batched matrix product over the last two axes.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = self.batch_prep(other, "matmul")?;
        let v = a.tape.value(a.id).matmul(&a.tape.value(b.id))?;
        let (ra, na) = a.tape.info(a.id);
        let (rb, nb) = a.tape.info(b.id);
        Ok(a.tape.push(v, ra && rb, na || nb, Op::MatMul(a.id, b.id)))
    }

    /// Batched matrix inverse; fails on any matrix above the tape's condition limit.
    pub fn inverse(self) -> Result<Var<'t>> {
        let shape = self.shape();
        let r = shape.len();
        if r < 2 || shape[r - 1] != shape[r - 2] {
            return Err(Error::shape("inverse", &[shape.last().copied().unwrap_or(0); 2], &shape));
        }
        let n = shape[r - 1];
        let limit = self.tape.cond_limit();
        let v = self.tape.value(self.id);
        let batch = v.len() / (n * n).max(1);
        let mut data = Vec::with_capacity(v.len());
        for i in 0..batch {
            let m = &v.data()[i * n * n..(i + 1) * n * n];
            match dense::inverse_with_cond(m, n) {
                Some((inv, cond)) if cond <= limit => data.extend(inv),
                Some((_, cond)) => return Err(Error::IllConditioned { index: i, cond, limit }),
                None => {
                    return Err(Error::IllConditioned {
                        index: i,
                        cond: f64::INFINITY,
                        limit,
                    })
                }
            }
        }
        drop(v);
        let value = Array::new(shape, data)?;
        Ok(self.unary_node(value, self.is_real(), Op::Inverse(self.id)))
    }

    /// `self⁻¹ · rhs` per batch matrix, without forming the inverse.
    pub fn solve(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = self.batch_prep(rhs, "solve")?;
        let (sa, sb) = (a.shape(), b.shape());
        let n = sa[sa.len() - 1];
        if sa[sa.len() - 2] != n || sb[sb.len() - 2] != n {
            return Err(Error::shape("solve", &sa, &sb));
        }
        let v = batched_solve(&a.tape.value(a.id), &a.tape.value(b.id), a.tape.cond_limit())?;
        let (ra, na) = a.tape.info(a.id);
        let (rb, nb) = a.tape.info(b.id);
        Ok(a.tape.push(v, ra && rb, na || nb, Op::Solve(a.id, b.id)))
    }

    /// Polynomial evaluation on the grid along axis 0: `[K, ...] → [M, ...]`,
    /// `out[m] = Σ_k x[k] z_m^{-k}`.
    pub fn dft(self, grid: &FrequencyGrid) -> Result<Var<'t>> {
        let shape = self.shape();
        let k = *shape.first().ok_or_else(|| Error::shape("dft", &[1], &shape))?;
        if k == 0 {
            return Err(Error::Domain("dft of empty coefficient vector".into()));
        }
        let cols = shape.iter().product::<usize>() / k;
        let data = dft_columns(self.tape.value(self.id).data(), k, cols, grid);
        let mut out_shape = shape;
        out_shape[0] = grid.num_bins();
        let value = Array::new(out_shape, data)?;
        Ok(self.unary_node(value, false, Op::Dft(self.id, grid.clone())))
    }
}
