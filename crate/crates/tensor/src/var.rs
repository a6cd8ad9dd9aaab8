//! Define-by-run reverse-mode differentiation.
//!
//! Every backward rule is itself written with [`Var`] operations, so gradients
//! computed with `create_graph = true` can be differentiated again (needed for
//! gradient penalties).

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::{fft, kernels, Float, Tensor};

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Restores the previous recording mode on drop.
struct ModeGuard(bool);

impl ModeGuard {
    fn set(enabled: bool) -> Self {
        ModeGuard(GRAD_ENABLED.with(|g| g.replace(enabled)))
    }
}

impl Drop for ModeGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.0));
    }
}

/// Runs `f` without recording any graph.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = ModeGuard::set(false);
    f()
}

fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

#[derive(Clone, Debug)]
enum Op<T> {
    Add,
    Sub,
    Mul,
    Neg,
    Scale(T),
    AddScalar,
    Recip,
    Sqrt,
    Exp,
    Log,
    Sigmoid,
    Softplus,
    LeakyRelu(T),
    SumTo,
    BroadcastTo,
    Reshape,
    MatMul,
    Transpose,
    Conv,
    ConvInputGrad,
    ConvWeightGrad,
    Upsample2,
    Downsample2,
    Concat { axis: usize, split: usize },
    Narrow { axis: usize, start: usize },
    Pad { axis: usize, start: usize },
    Dft { rank: usize },
    IdftReal { rank: usize },
}

struct Node<T> {
    id: usize,
    value: Tensor<T>,
    requires_grad: bool,
    op: Option<(Op<T>, Vec<Var<T>>)>,
}

/// A tensor that participates in differentiation.
#[derive(Clone)]
pub struct Var<T>(Rc<Node<T>>);

impl<T: Float> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({:?})", self.0.id, self.0.value)
    }
}

impl<T: Float> Var<T> {
    fn new(value: Tensor<T>, requires_grad: bool, op: Option<(Op<T>, Vec<Var<T>>)>) -> Self {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            requires_grad,
            op,
        }))
    }

    /// A leaf that gradients are taken with respect to.
    pub fn param(value: Tensor<T>) -> Self {
        Self::new(value, true, None)
    }

    /// A leaf that is never differentiated.
    pub fn constant(value: Tensor<T>) -> Self {
        Self::new(value, false, None)
    }

    fn from_op(value: Tensor<T>, op: Op<T>, inputs: Vec<Var<T>>) -> Self {
        let requires = grad_enabled() && inputs.iter().any(|v| v.0.requires_grad);
        if requires {
            Self::new(value, true, Some((op, inputs)))
        } else {
            Self::new(value, false, None)
        }
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::constant(self.0.value.clone())
    }

    fn unary(&self, value: Tensor<T>, op: Op<T>) -> Self {
        Self::from_op(value, op, vec![self.clone()])
    }

    fn binary(&self, other: &Self, value: Tensor<T>, op: Op<T>) -> Self {
        Self::from_op(value, op, vec![self.clone(), other.clone()])
    }

    pub fn add(&self, other: &Self) -> Self {
        self.binary(other, self.value().add(other.value()), Op::Add)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.binary(other, self.value().sub(other.value()), Op::Sub)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.binary(other, self.value().mul(other.value()), Op::Mul)
    }

    pub fn neg(&self) -> Self {
        self.unary(self.value().map(|v| -v), Op::Neg)
    }

    pub fn scale(&self, c: T) -> Self {
        self.unary(self.value().scale(c), Op::Scale(c))
    }

    pub fn add_scalar(&self, c: T) -> Self {
        self.unary(self.value().map(|v| v + c), Op::AddScalar)
    }

    pub fn square(&self) -> Self {
        self.mul(self)
    }

    pub fn recip(&self) -> Self {
        self.unary(self.value().map(|v| v.recip()), Op::Recip)
    }

    pub fn sqrt(&self) -> Self {
        self.unary(self.value().map(|v| v.sqrt()), Op::Sqrt)
    }

    pub fn rsqrt(&self) -> Self {
        self.sqrt().recip()
    }

    pub fn exp(&self) -> Self {
        self.unary(self.value().map(|v| v.exp()), Op::Exp)
    }

    pub fn ln(&self) -> Self {
        self.unary(self.value().map(|v| v.ln()), Op::Log)
    }

    pub fn sigmoid(&self) -> Self {
        self.unary(self.value().map(sigmoid), Op::Sigmoid)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&self) -> Self {
        self.unary(self.value().map(softplus), Op::Softplus)
    }

    pub fn leaky_relu(&self, slope: T) -> Self {
        self.unary(
            self.value().map(|v| if v > T::zero() { v } else { v * slope }),
            Op::LeakyRelu(slope),
        )
    }

    pub fn sum_to(&self, shape: &[usize]) -> Self {
        if self.shape() == shape {
            return self.clone();
        }
        self.unary(self.value().sum_to(shape), Op::SumTo)
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Self {
        if self.shape() == shape {
            return self.clone();
        }
        self.unary(self.value().broadcast_to(shape), Op::BroadcastTo)
    }

    /// Mean over the axes that `shape` reduces to 1.
    pub fn mean_to(&self, shape: &[usize]) -> Self {
        let n = self.value().numel() / shape.iter().product::<usize>().max(1);
        self.sum_to(shape).scale(T::of(1.0 / n as f64))
    }

    pub fn sum(&self) -> Self {
        self.sum_to(&[]).reshape(&[1])
    }

    pub fn mean(&self) -> Self {
        let n = self.value().numel();
        self.sum().scale(T::of(1.0 / n as f64))
    }

    pub fn reshape(&self, shape: &[usize]) -> Self {
        if self.shape() == shape {
            return self.clone();
        }
        self.unary(self.value().reshape(shape), Op::Reshape)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        self.binary(other, self.value().matmul(other.value()), Op::MatMul)
    }

    pub fn transpose(&self) -> Self {
        self.unary(self.value().transpose(), Op::Transpose)
    }

    /// Same-padded stride-1 cross-correlation with kernel `w: [cout, cin, K…]`.
    pub fn conv(&self, w: &Self) -> Self {
        self.binary(w, kernels::conv(self.value(), w.value()), Op::Conv)
    }

    pub fn conv_input_grad(&self, w: &Self) -> Self {
        self.binary(w, kernels::conv_input_grad(self.value(), w.value()), Op::ConvInputGrad)
    }

    /// `self` is the convolution input, `g` the output gradient.
    pub fn conv_weight_grad(&self, g: &Self, kernel_shape: &[usize]) -> Self {
        self.binary(
            g,
            kernels::conv_weight_grad(self.value(), g.value(), kernel_shape),
            Op::ConvWeightGrad,
        )
    }

    pub fn upsample2(&self) -> Self {
        self.unary(kernels::upsample2(self.value()), Op::Upsample2)
    }

    pub fn downsample2(&self) -> Self {
        self.unary(kernels::downsample2(self.value()), Op::Downsample2)
    }

    pub fn concat(&self, other: &Self, axis: usize) -> Self {
        let split = self.shape()[axis];
        self.binary(
            other,
            Tensor::concat(&[self.value(), other.value()], axis),
            Op::Concat { axis, split },
        )
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Self {
        self.unary(self.value().narrow(axis, start, len), Op::Narrow { axis, start })
    }

    pub fn pad_axis(&self, axis: usize, start: usize, total: usize) -> Self {
        self.unary(self.value().pad_axis(axis, start, total), Op::Pad { axis, start })
    }

    /// Unitary DFT over the trailing `rank` axes; output gains a (re, im) axis.
    pub fn dft(&self, rank: usize) -> Self {
        self.unary(fft::dft_real(self.value(), rank), Op::Dft { rank })
    }

    /// Real part of the unitary inverse DFT of an interleaved complex tensor.
    pub fn idft_real(&self, rank: usize) -> Self {
        self.unary(fft::idft_real_part(self.value(), rank), Op::IdftReal { rank })
    }

    /// `self + (other − self)·t`.
    pub fn lerp(&self, other: &Self, t: T) -> Self {
        if t == T::zero() {
            return self.clone();
        }
        if t == T::one() {
            return other.clone();
        }
        self.add(&other.sub(self).scale(t))
    }
}

pub(crate) fn sigmoid<T: Float>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus<T: Float>(v: T) -> T {
    v.max(T::zero()) + (-v.abs()).exp().ln_1p()
}

fn backward_rule<T: Float>(op: &Op<T>, inputs: &[Var<T>], out: &Var<T>, g: &Var<T>) -> Vec<Option<Var<T>>> {
    let x = &inputs[0];
    match op {
        Op::Add => vec![Some(g.sum_to(x.shape())), Some(g.sum_to(inputs[1].shape()))],
        Op::Sub => vec![Some(g.sum_to(x.shape())), Some(g.neg().sum_to(inputs[1].shape()))],
        Op::Mul => {
            let y = &inputs[1];
            vec![Some(g.mul(y).sum_to(x.shape())), Some(g.mul(x).sum_to(y.shape()))]
        }
        Op::Neg => vec![Some(g.neg())],
        Op::Scale(c) => vec![Some(g.scale(*c))],
        Op::AddScalar => vec![Some(g.clone())],
        Op::Recip => vec![Some(g.mul(&out.square()).neg())],
        Op::Sqrt => vec![Some(g.mul(&out.recip()).scale(T::of(0.5)))],
        Op::Exp => vec![Some(g.mul(out))],
        Op::Log => vec![Some(g.mul(&x.recip()))],
        Op::Sigmoid => vec![Some(g.mul(&out.mul(&out.neg().add_scalar(T::one()))))],
        Op::Softplus => vec![Some(g.mul(&x.sigmoid()))],
        Op::LeakyRelu(slope) => {
            let s = *slope;
            let mask = x.value().map(|v| if v > T::zero() { T::one() } else { s });
            vec![Some(g.mul(&Var::constant(mask)))]
        }
        Op::SumTo => vec![Some(g.broadcast_to(x.shape()))],
        Op::BroadcastTo => vec![Some(g.sum_to(x.shape()))],
        Op::Reshape => vec![Some(g.reshape(x.shape()))],
        Op::MatMul => {
            let y = &inputs[1];
            vec![Some(g.matmul(&y.transpose())), Some(x.transpose().matmul(g))]
        }
        Op::Transpose => vec![Some(g.transpose())],
        Op::Conv => {
            let w = &inputs[1];
            vec![Some(g.conv_input_grad(w)), Some(x.conv_weight_grad(g, w.shape()))]
        }
        Op::ConvInputGrad => {
            // out = convᵀ(x, w)
            let w = &inputs[1];
            vec![Some(g.conv(w)), Some(g.conv_weight_grad(x, w.shape()))]
        }
        Op::ConvWeightGrad => {
            // out = ∂⟨conv(x, ·), y⟩
            let y = &inputs[1];
            vec![Some(y.conv_input_grad(g)), Some(x.conv(g))]
        }
        Op::Upsample2 => {
            let f = (1usize << (x.shape().len() - 2)) as f64;
            vec![Some(g.downsample2().scale(T::of(f)))]
        }
        Op::Downsample2 => {
            let f = (1usize << (x.shape().len() - 2)) as f64;
            vec![Some(g.upsample2().scale(T::of(1.0 / f)))]
        }
        Op::Concat { axis, split } => {
            let rest = inputs[1].shape()[*axis];
            vec![Some(g.narrow(*axis, 0, *split)), Some(g.narrow(*axis, *split, rest))]
        }
        Op::Narrow { axis, start } => vec![Some(g.pad_axis(*axis, *start, x.shape()[*axis]))],
        Op::Pad { axis, start } => vec![Some(g.narrow(*axis, *start, x.shape()[*axis]))],
        Op::Dft { rank } => vec![Some(g.idft_real(*rank))],
        Op::IdftReal { rank } => vec![Some(g.dft(*rank))],
    }
}

/// Gradients of `output` with respect to each of `wrt`.
///
/// `grad_output` defaults to ones. With `create_graph`, the returned
/// gradients are themselves differentiable. Inputs that `output` does not
/// depend on get `None`.
pub fn grad<T: Float>(
    output: &Var<T>,
    wrt: &[&Var<T>],
    grad_output: Option<&Var<T>>,
    create_graph: bool,
) -> Vec<Option<Var<T>>> {
    let _guard = ModeGuard::set(create_graph);
    let wanted: HashSet<usize> = wrt.iter().map(|v| v.id()).collect();

    // Iterative post-order DFS over differentiable nodes.
    let mut order: Vec<Var<T>> = Vec::new();
    let mut seen = HashSet::new();
    let mut stack: Vec<(Var<T>, bool)> = vec![(output.clone(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
            continue;
        }
        if !v.requires_grad() || !seen.insert(v.id()) {
            continue;
        }
        stack.push((v.clone(), true));
        if let Some((_, inputs)) = &v.0.op {
            for inp in inputs {
                if inp.requires_grad() && !seen.contains(&inp.id()) {
                    stack.push((inp.clone(), false));
                }
            }
        }
    }

    let mut grads: HashMap<usize, Var<T>> = HashMap::new();
    let seed = match grad_output {
        Some(g) => {
            assert_eq!(g.shape(), output.shape(), "grad_output shape");
            g.clone()
        }
        None => Var::constant(Tensor::ones(output.shape().to_vec())),
    };
    grads.insert(output.id(), seed);
    let mut kept: HashMap<usize, Var<T>> = HashMap::new();

    for node in order.iter().rev() {
        let Some(g) = grads.remove(&node.id()) else { continue };
        if wanted.contains(&node.id()) {
            kept.insert(node.id(), g.clone());
        }
        let Some((op, inputs)) = &node.0.op else { continue };
        let parts = backward_rule(op, inputs, node, &g);
        for (inp, gi) in inputs.iter().zip(parts) {
            let Some(gi) = gi else { continue };
            if !inp.requires_grad() {
                continue;
            }
            debug_assert_eq!(gi.shape(), inp.shape(), "{op:?} produced a mis-shaped gradient");
            let acc = match grads.remove(&inp.id()) {
                Some(prev) => prev.add(&gi),
                None => gi,
            };
            grads.insert(inp.id(), acc);
        }
    }
    for (id, g) in grads {
        if wanted.contains(&id) {
            kept.insert(id, g);
        }
    }
    wrt.iter().map(|v| kept.remove(&v.id())).collect()
}

/// Gradient values (no graph) of `output` with respect to `wrt`, with zeros
/// for inputs the output does not depend on.
pub fn grad_values<T: Float>(output: &Var<T>, wrt: &[&Var<T>]) -> Vec<Tensor<T>> {
    grad(output, wrt, None, false)
        .into_iter()
        .zip(wrt)
        .map(|(g, v)| match g {
            Some(g) => g.value().clone(),
            None => Tensor::zeros(v.shape().to_vec()),
        })
        .collect()
}
