//! Reverse-mode gradient tape.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the tape in reverse and accumulates adjoints into the leaves that
//! require gradients. Layers with hand-derived backward passes plug in
//! through [`CustomOp`].

use std::cell::Cell;
use std::collections::HashMap;

use crate::error::{shape_err, Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::real::{gemm, Real};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fused operation with its own backward pass.
///
/// `backward` receives the forward inputs, the forward output and the
/// adjoint of the output, and returns one optional gradient per input
/// (same length as the matching input).
pub trait CustomOp<T: Real>: Send {
    fn name(&self) -> &'static str;

    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad_out: &[T])
        -> Vec<Option<Vec<T>>>;
}

thread_local! {
    static FLIP_SIGMOID_GRAD: Cell<bool> = const { Cell::new(false) };
}

/// Negative-control hook: when enabled, the sigmoid backward pass returns
/// the wrong sign on the current thread. Gradient checks must then fail.
pub fn set_fault_injection(enabled: bool) {
    FLIP_SIGMOID_GRAD.with(|f| f.set(enabled));
}

pub fn fault_injection_enabled() -> bool {
    FLIP_SIGMOID_GRAD.with(|f| f.get())
}

enum Op<T: Real> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Log10(Var),
    Sum(Var),
    Mean(Var),
    Variance(Var),
    MatMul { a: Var, b: Var, trans_b: bool },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    ReverseTime(Var),
    Reshape(Var),
    Transpose01(Var),
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp<T>> },
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Operation tape over tensors of element type `T`.
pub struct Graph<'p, T: Real> {
    nodes: Vec<Node<T>>,
    leaf_grads: HashMap<usize, Vec<T>>,
    params: Option<&'p ParamStore<T>>,
    bound: HashMap<ParamId, Var>,
    track: bool,
}

impl<T: Real> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Splits a shape around `axis` into (outer, dim, inner) extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: HashMap::new(),
            params: None,
            bound: HashMap::new(),
            track: true,
        }
    }

    /// Tape whose [`Graph::param`] lookups resolve against `params`.
    pub fn with_params(params: &'p ParamStore<T>) -> Self {
        Self {
            params: Some(params),
            ..Self::new()
        }
    }

    /// Like [`Graph::with_params`] but no leaf requires a gradient.
    pub fn inference(params: &'p ParamStore<T>) -> Self {
        Self {
            params: Some(params),
            track: false,
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

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &'static str) -> Result<Var> {
        value.ensure_finite(name)?;
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) => {
                self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad
            }
            Op::MatMul { a, b, .. } => self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad,
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Log10(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Variance(a)
            | Op::ReverseTime(a)
            | Op::Reshape(a)
            | Op::Transpose01(a) => self.nodes[a.0].needs_grad,
            Op::Slice { input, .. } => self.nodes[input.0].needs_grad,
            Op::Concat { inputs, .. } | Op::Custom { inputs, .. } => {
                inputs.iter().any(|v| self.nodes[v.0].needs_grad)
            }
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Adds a leaf. Gradients are collected for it when `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        value.ensure_finite("leaf")?;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad && self.track,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Leaf bound to a stored parameter; repeated lookups share one node.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(v) = self.bound.get(&id) {
            return Ok(*v);
        }
        let store = self
            .params
            .ok_or_else(|| Error::Invalid("graph has no parameter store".into()))?;
        let value = store.try_get(id)?.clone();
        let v = self.leaf(value, true)?;
        self.bound.insert(id, v);
        Ok(v)
    }

    /// Accumulated gradient of a leaf after one or more `backward` calls.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.leaf_grads.get(&v.0).map(|g| g.as_slice())
    }

    /// Gradients of every bound parameter that received one.
    pub fn param_grads(&self) -> Vec<(ParamId, &[T])> {
        let mut out: Vec<_> = self
            .bound
            .iter()
            .filter_map(|(id, v)| self.grad(*v).map(|g| (*id, g)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }

    /// Parameters bound on this tape so far.
    pub fn bound_params(&self) -> Vec<ParamId> {
        let mut ids: Vec<_> = self.bound.keys().copied().collect();
        ids.sort();
        ids
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(va.shape(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let va = &self.nodes[a.0].value;
        Tensor::new(va.shape(), va.data().iter().map(|x| f(*x)).collect()).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_map(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_map(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_map(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b), "mul")
    }

    /// `x[..., j] + bias[j]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap_or(&0);
        if self.shape(bias) != [n] {
            return Err(shape_err(
                "add_bias",
                format!("bias {:?} for input {:?}", self.shape(bias), self.shape(x)),
            ));
        }
        let b = self.nodes[bias.0].value.data().to_vec();
        let xv = &self.nodes[x.0].value;
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| *v + b[i % n])
            .collect();
        let out = Tensor::new(xv.shape(), data)?;
        self.push(out, Op::AddBias(x, bias), "add_bias")
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let v = self.map(a, |x| x * c);
        self.push(v, Op::Scale(a, c), "scale")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.map(a, sigmoid);
        self.push(v, Op::Sigmoid(a), "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.map(a, |x| x.tanh());
        self.push(v, Op::Tanh(a), "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.map(a, |x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a), "relu")
    }

    pub fn log10(&mut self, a: Var) -> Result<Var> {
        let v = self.map(a, |x| x.log10());
        self.push(v, Op::Log10(a), "log10")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.nodes[a.0].value.data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.nodes[a.0].value.data();
        if x.is_empty() {
            return Err(shape_err("mean", "empty input"));
        }
        let m = x.iter().copied().sum::<T>() / T::lit(x.len() as f64);
        self.push(Tensor::scalar(m), Op::Mean(a), "mean")
    }

    /// Biased variance over all elements.
    pub fn variance(&mut self, a: Var) -> Result<Var> {
        let x = self.nodes[a.0].value.data();
        if x.is_empty() {
            return Err(shape_err("variance", "empty input"));
        }
        let n = T::lit(x.len() as f64);
        let m = x.iter().copied().sum::<T>() / n;
        let v = x.iter().map(|v| (*v - m) * (*v - m)).sum::<T>() / n;
        self.push(Tensor::scalar(v), Op::Variance(a), "variance")
    }

    /// `a (m x k) @ b (k x n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a (m x k) @ b^T` where `b` is stored `n x k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 {
            return Err(shape_err("matmul", format!("{sa:?} @ {sb:?}: need 2-D operands")));
        }
        let (m, k) = (sa[0], sa[1]);
        let (kb, n) = if trans_b { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != kb {
            return Err(shape_err("matmul", format!("{sa:?} @ {sb:?} (trans_b={trans_b})")));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(
            false,
            trans_b,
            m,
            n,
            k,
            T::one(),
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            T::zero(),
            &mut out,
        );
        let out = Tensor::new(&[m, n], out)?;
        self.push(out, Op::MatMul { a, b, trans_b }, "matmul")
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {axis} for shape {base:?}")));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(shape_err("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let t = &self.nodes[v.0].value;
                let d = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * d..(o + 1) * d]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let out = Tensor::new(&shape, out)?;
        self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            "concat",
        )
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, input: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() || start > end || end > shape[axis] {
            return Err(shape_err(
                "slice",
                format!("{start}..{end} on axis {axis} of {shape:?}"),
            ));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let src = self.nodes[input.0].value.data();
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * dim * inner;
            out.extend_from_slice(&src[base + start * inner..base + end * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = end - start;
        let out = Tensor::new(&new_shape, out)?;
        self.push(out, Op::Slice { input, axis, start }, "slice")
    }

    /// Flips the leading (frame) axis.
    pub fn reverse_time(&mut self, input: Var) -> Result<Var> {
        let t = &self.nodes[input.0].value;
        if t.ndim() == 0 {
            return Err(shape_err("reverse_time", "scalar input"));
        }
        let k = t.shape()[0];
        let w = t.len() / k.max(1);
        let mut out = Vec::with_capacity(t.len());
        for i in (0..k).rev() {
            out.extend_from_slice(&t.data()[i * w..(i + 1) * w]);
        }
        let out = Tensor::new(t.shape(), out)?;
        self.push(out, Op::ReverseTime(input), "reverse_time")
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let out = self.nodes[input.0].value.clone().reshape(shape)?;
        self.push(out, Op::Reshape(input), "reshape")
    }

    /// Swaps the first two axes of a 3-D tensor.
    pub fn transpose01(&mut self, input: Var) -> Result<Var> {
        let t = &self.nodes[input.0].value;
        let s = t.shape();
        if s.len() != 3 {
            return Err(shape_err("transpose01", format!("need 3-D input, got {s:?}")));
        }
        let out = transpose01_data(t.data(), s[0], s[1], s[2]);
        let out = Tensor::new(&[s[1], s[0], s[2]], out)?;
        self.push(out, Op::Transpose01(input), "transpose01")
    }

    /// Records a fused op whose forward value was computed by the caller.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        output: Tensor<T>,
        op: Box<dyn CustomOp<T>>,
    ) -> Result<Var> {
        let name = op.name();
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            name,
        )
    }

    /// Back-propagates from a scalar node. Leaf gradients accumulate across calls.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let out_shape = self.shape(output);
        if self.nodes[output.0].value.len() != 1 {
            return Err(Error::NotScalar(out_shape.to_vec()));
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..=output.0).map(|_| None).collect();
        adj[output.0] = Some(vec![T::one()]);
        let flip = fault_injection_enabled();

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match self.leaf_grads.get_mut(&i) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                    None => {
                        self.leaf_grads.insert(i, g);
                    }
                }
                continue;
            }
            for (parent, pg) in self.local_grads(i, &g, flip) {
                if !self.nodes[parent.0].needs_grad {
                    continue;
                }
                match &mut adj[parent.0] {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += *b),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }

    fn val(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn local_grads(&self, i: usize, g: &[T], flip: bool) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|v| -*v).collect())],
            Op::Mul(a, b) => {
                let (xa, xb) = (self.val(*a), self.val(*b));
                vec![
                    (*a, g.iter().zip(xb).map(|(g, x)| *g * *x).collect()),
                    (*b, g.iter().zip(xa).map(|(g, x)| *g * *x).collect()),
                ]
            }
            Op::AddBias(x, b) => {
                let n = self.nodes[b.0].value.len();
                let mut gb = vec![T::zero(); n];
                for (j, v) in g.iter().enumerate() {
                    gb[j % n] += *v;
                }
                vec![(*x, g.to_vec()), (*b, gb)]
            }
            Op::Scale(a, c) => vec![(*a, g.iter().map(|v| *v * *c).collect())],
            Op::Sigmoid(a) => {
                let sign = if flip { -T::one() } else { T::one() };
                vec![(
                    *a,
                    g.iter()
                        .zip(y)
                        .map(|(g, s)| sign * *g * *s * (T::one() - *s))
                        .collect(),
                )]
            }
            Op::Tanh(a) => vec![(
                *a,
                g.iter().zip(y).map(|(g, t)| *g * (T::one() - *t * *t)).collect(),
            )],
            Op::Relu(a) => vec![(
                *a,
                g.iter()
                    .zip(self.val(*a))
                    .map(|(g, x)| if *x > T::zero() { *g } else { T::zero() })
                    .collect(),
            )],
            Op::Log10(a) => {
                let ln10 = T::lit(std::f64::consts::LN_10);
                vec![(
                    *a,
                    g.iter().zip(self.val(*a)).map(|(g, x)| *g / (*x * ln10)).collect(),
                )]
            }
            Op::Sum(a) => vec![(*a, vec![g[0]; self.nodes[a.0].value.len()])],
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len();
                vec![(*a, vec![g[0] / T::lit(n as f64); n])]
            }
            Op::Variance(a) => {
                let x = self.val(*a);
                let n = T::lit(x.len() as f64);
                let m = x.iter().copied().sum::<T>() / n;
                let two = T::lit(2.0);
                vec![(*a, x.iter().map(|v| g[0] * two * (*v - m) / n).collect())]
            }
            Op::MatMul { a, b, trans_b } => {
                let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (m, k) = (sa[0], sa[1]);
                let n = if *trans_b { sb[0] } else { sb[1] };
                let (va, vb) = (self.val(*a), self.val(*b));
                let mut out = Vec::with_capacity(2);
                if self.nodes[a.0].needs_grad {
                    // dA = G @ op(B)^T
                    let mut ga = vec![T::zero(); m * k];
                    gemm(false, !*trans_b, m, k, n, T::one(), g, vb, T::zero(), &mut ga);
                    out.push((*a, ga));
                }
                if self.nodes[b.0].needs_grad {
                    let mut gb = vec![T::zero(); k * n];
                    if *trans_b {
                        // B stored n x k: dB = G^T @ A
                        gemm(true, false, n, k, m, T::one(), g, va, T::zero(), &mut gb);
                    } else {
                        gemm(true, false, k, n, m, T::one(), va, g, T::zero(), &mut gb);
                    }
                    out.push((*b, gb));
                }
                out
            }
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let (outer, total, inner) = split_axis(shape, *axis);
                let mut grads: Vec<Vec<T>> = inputs
                    .iter()
                    .map(|v| Vec::with_capacity(self.nodes[v.0].value.len()))
                    .collect();
                for o in 0..outer {
                    let mut off = o * total * inner;
                    for (k, v) in inputs.iter().enumerate() {
                        let d = self.nodes[v.0].value.shape()[*axis] * inner;
                        grads[k].extend_from_slice(&g[off..off + d]);
                        off += d;
                    }
                }
                inputs.iter().copied().zip(grads).collect()
            }
            Op::Slice { input, axis, start } => {
                let src_shape = self.nodes[input.0].value.shape();
                let (outer, dim, inner) = split_axis(src_shape, *axis);
                let width = node.value.shape()[*axis] * inner;
                let mut gi = vec![T::zero(); self.nodes[input.0].value.len()];
                for o in 0..outer {
                    let base = o * dim * inner + start * inner;
                    gi[base..base + width].copy_from_slice(&g[o * width..(o + 1) * width]);
                }
                vec![(*input, gi)]
            }
            Op::ReverseTime(a) => {
                let k = node.value.shape()[0];
                let w = g.len() / k.max(1);
                let mut gi = Vec::with_capacity(g.len());
                for t in (0..k).rev() {
                    gi.extend_from_slice(&g[t * w..(t + 1) * w]);
                }
                vec![(*a, gi)]
            }
            Op::Reshape(a) => vec![(*a, g.to_vec())],
            Op::Transpose01(a) => {
                let s = node.value.shape();
                vec![(*a, transpose01_data(g, s[0], s[1], s[2]))]
            }
            Op::Custom { inputs, op } => {
                let ins: Vec<&Tensor<T>> =
                    inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                let grads = op.backward(&ins, &node.value, g);
                inputs
                    .iter()
                    .zip(grads)
                    .filter_map(|(v, gr)| gr.map(|gr| (*v, gr)))
                    .collect()
            }
        }
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `(a, b, c)` row-major to `(b, a, c)`.
pub fn transpose01_data<T: Real>(src: &[T], a: usize, b: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for i in 0..a {
        for j in 0..b {
            let s = (i * b + j) * c;
            let d = (j * a + i) * c;
            out[d..d + c].copy_from_slice(&src[s..s + c]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn relu_definition() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[3], &[-1.0, 0.0, 2.0])).unwrap();
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn reverse_time_flips_frames_only() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[3, 2], &[1., 2., 3., 4., 5., 6.])).unwrap();
        let y = g.reverse_time(x).unwrap();
        assert_eq!(g.value(y).data(), &[5., 6., 3., 4., 1., 2.]);
        let z = g.reverse_time(y).unwrap();
        assert_eq!(g.value(z), g.value(x));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = t(&[2, 3], &[0.5, -1.0, 2.0, 3.0, 0.25, -0.75]);
        let b = t(&[3, 2], &[1.5, -2.0, 0.0, 1.0, 4.0, -0.5]);
        let mut want = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..3 {
                    want[i * 2 + j] += a.data()[i * 3 + p] * b.data()[p * 2 + j];
                }
            }
        }
        let mut g = Graph::<f64>::new();
        let (va, vb) = (g.constant(a).unwrap(), g.constant(b).unwrap());
        let c = g.matmul(va, vb).unwrap();
        assert_eq!(g.shape(c), &[2, 2]);
        for (x, y) in g.value(c).data().iter().zip(want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[3], &[0.1, 0.2, 0.3]), true).unwrap();
        let y = g.sum(x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient_and_accumulation() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true).unwrap();
        let sq = g.mul(x, x).unwrap();
        let y = g.sum(sq).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[4.0, 8.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true).unwrap();
        assert!(matches!(g.backward(x), Err(Error::NotScalar(_))));
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[2], &[0.0, 1.0])).unwrap();
        assert!(matches!(g.log10(x), Err(Error::NonFinite { op: "log10" })));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(t(&[2], &[0.0, 1.0])).unwrap();
        let b = g.constant(t(&[3], &[0.0, 1.0, 2.0])).unwrap();
        assert!(matches!(g.add(a, b), Err(Error::Shape { .. })));
        let m = g.constant(t(&[2, 3], &[0.0; 6])).unwrap();
        assert!(g.matmul(m, m).is_err());
    }

    #[test]
    fn slice_then_concat_is_identity() {
        let mut g = Graph::<f64>::new();
        let data: Vec<f64> = (0..24).map(|v| v as f64).collect();
        let x = g.constant(t(&[2, 3, 4], &data)).unwrap();
        for axis in 0..3 {
            let d = g.shape(x)[axis];
            let a = g.slice(x, axis, 0, 1).unwrap();
            let b = g.slice(x, axis, 1, d).unwrap();
            let y = g.concat(&[a, b], axis).unwrap();
            assert_eq!(g.value(y), g.value(x));
        }
    }

    #[test]
    fn param_binding_is_shared() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", t(&[2], &[1.0, 2.0]));
        let mut g = Graph::with_params(&store);
        let a = g.param(id).unwrap();
        let b = g.param(id).unwrap();
        assert_eq!(a, b);
        let s = g.mul(a, b).unwrap();
        let y = g.sum(s).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.param_grads(), vec![(id, &[2.0, 4.0][..])]);
    }

    #[test]
    fn inference_graph_tracks_nothing() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", t(&[2], &[1.0, 2.0]));
        let mut g = Graph::inference(&store);
        let a = g.param(id).unwrap();
        let y = g.sum(a).unwrap();
        g.backward(y).unwrap();
        assert!(g.param_grads().is_empty());
    }
}
