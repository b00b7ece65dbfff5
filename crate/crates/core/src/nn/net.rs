//! Sequential networks with nestable residual blocks.

use ndarray::{Array2, Array4};

use super::layers::{Conv2d, ConvTranspose2d, InstanceNorm};
use super::{Feat, Scalar};
use crate::error::{Error, Result};

/// One computation node. A network is an ordered list of nodes; an empty
/// list is the identity map.
#[derive(Debug, Clone, PartialEq)]
pub enum Node<S> {
    Conv(Conv2d<S>),
    ConvT(ConvTranspose2d<S>),
    InstanceNorm(InstanceNorm<S>),
    /// Per-side reflection padding that mirrors about (but excludes) the
    /// border pixel; requires every spatial extent to exceed the pad.
    ReflectPad(usize),
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    /// `y = x + f(x)` with `f` the inner sequence.
    Residual(Vec<Node<S>>),
}

/// Per-call saved state mirroring the node tree, consumed by `backward`.
#[derive(Debug)]
pub enum NodeCtx<S> {
    Conv { x: Feat<S> },
    ConvT { x: Feat<S> },
    InstanceNorm { xhat: Feat<S>, inv: Array2<S> },
    ReflectPad { in_hw: (usize, usize) },
    Relu { mask: Array4<bool> },
    LeakyRelu { mask: Array4<bool> },
    Tanh { y: Feat<S> },
    Sigmoid { y: Feat<S> },
    Residual(Vec<NodeCtx<S>>),
}

fn reflect_index(t: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if t < 0 { -t } else if t >= n { 2 * (n - 1) - t } else { t };
    r as usize
}

fn reflect_pad<S: Scalar>(x: &Feat<S>, p: usize) -> Result<Feat<S>> {
    let (n, c, h, w) = x.dim();
    if p >= h || p >= w {
        return Err(Error::Net(format!(
            "reflection pad {p} needs spatial dims above {p}, got {w}x{h}"
        )));
    }
    let mut y = Array4::zeros((n, c, h + 2 * p, w + 2 * p));
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h + 2 * p {
                let si = reflect_index(i as isize - p as isize, h);
                for j in 0..w + 2 * p {
                    let sj = reflect_index(j as isize - p as isize, w);
                    y[(b, ch, i, j)] = x[(b, ch, si, sj)];
                }
            }
        }
    }
    Ok(y)
}

fn reflect_pad_backward<S: Scalar>(gy: &Feat<S>, p: usize, in_hw: (usize, usize)) -> Feat<S> {
    let (n, c, ph, pw) = gy.dim();
    let (h, w) = in_hw;
    let mut gx = Array4::zeros((n, c, h, w));
    for b in 0..n {
        for ch in 0..c {
            for i in 0..ph {
                let si = reflect_index(i as isize - p as isize, h);
                for j in 0..pw {
                    let sj = reflect_index(j as isize - p as isize, w);
                    gx[(b, ch, si, sj)] += gy[(b, ch, i, j)];
                }
            }
        }
    }
    gx
}

impl<S: Scalar> Node<S> {
    fn forward(&self, x: Feat<S>) -> Result<(Feat<S>, NodeCtx<S>)> {
        match self {
            Node::Conv(conv) => {
                let y = conv.forward(&x)?;
                Ok((y, NodeCtx::Conv { x }))
            }
            Node::ConvT(conv) => {
                let y = conv.forward(&x)?;
                Ok((y, NodeCtx::ConvT { x }))
            }
            Node::InstanceNorm(norm) => {
                let (y, inv) = norm.forward(&x);
                Ok((y.clone(), NodeCtx::InstanceNorm { xhat: y, inv }))
            }
            Node::ReflectPad(p) => {
                let (_, _, h, w) = x.dim();
                let y = reflect_pad(&x, *p)?;
                Ok((y, NodeCtx::ReflectPad { in_hw: (h, w) }))
            }
            Node::Relu => {
                let mask = x.mapv(|v| v > S::zero());
                let y = x.mapv_into(|v| if v > S::zero() { v } else { S::zero() });
                Ok((y, NodeCtx::Relu { mask }))
            }
            Node::LeakyRelu(slope) => {
                let a = S::from_f64c(*slope);
                let mask = x.mapv(|v| v > S::zero());
                let y = x.mapv_into(|v| if v > S::zero() { v } else { a * v });
                Ok((y, NodeCtx::LeakyRelu { mask }))
            }
            Node::Tanh => {
                let y = x.mapv_into(|v| v.tanh());
                Ok((y.clone(), NodeCtx::Tanh { y }))
            }
            Node::Sigmoid => {
                let y = x.mapv_into(|v| S::one() / (S::one() + (-v).exp()));
                Ok((y.clone(), NodeCtx::Sigmoid { y }))
            }
            Node::Residual(nodes) => {
                let (fy, ctxs) = seq_forward(nodes, x.clone())?;
                if fy.dim() != x.dim() {
                    return Err(Error::Net(format!(
                        "residual branch changed shape {:?} -> {:?}",
                        x.dim(),
                        fy.dim()
                    )));
                }
                Ok((x + fy, NodeCtx::Residual(ctxs)))
            }
        }
    }

    fn infer(&self, x: Feat<S>) -> Result<Feat<S>> {
        match self {
            Node::Conv(conv) => conv.forward(&x),
            Node::ConvT(conv) => conv.forward(&x),
            Node::InstanceNorm(norm) => Ok(norm.forward(&x).0),
            Node::ReflectPad(p) => reflect_pad(&x, *p),
            Node::Relu => Ok(x.mapv_into(|v| if v > S::zero() { v } else { S::zero() })),
            Node::LeakyRelu(slope) => {
                let a = S::from_f64c(*slope);
                Ok(x.mapv_into(|v| if v > S::zero() { v } else { a * v }))
            }
            Node::Tanh => Ok(x.mapv_into(|v| v.tanh())),
            Node::Sigmoid => Ok(x.mapv_into(|v| S::one() / (S::one() + (-v).exp()))),
            Node::Residual(nodes) => {
                let fy = seq_infer(nodes, x.clone())?;
                if fy.dim() != x.dim() {
                    return Err(Error::Net(format!(
                        "residual branch changed shape {:?} -> {:?}",
                        x.dim(),
                        fy.dim()
                    )));
                }
                Ok(x + fy)
            }
        }
    }

    fn backward(&mut self, ctx: &NodeCtx<S>, gy: Feat<S>, accumulate: bool) -> Result<Feat<S>> {
        match (self, ctx) {
            (Node::Conv(conv), NodeCtx::Conv { x }) => conv.backward(x, &gy, accumulate),
            (Node::ConvT(conv), NodeCtx::ConvT { x }) => conv.backward(x, &gy, accumulate),
            (Node::InstanceNorm(norm), NodeCtx::InstanceNorm { xhat, inv }) => {
                Ok(norm.backward(xhat, inv, &gy))
            }
            (Node::ReflectPad(p), NodeCtx::ReflectPad { in_hw }) => {
                Ok(reflect_pad_backward(&gy, *p, *in_hw))
            }
            (Node::Relu, NodeCtx::Relu { mask }) => {
                let mut g = gy;
                ndarray::Zip::from(&mut g).and(mask).for_each(|gv, &m| {
                    if !m {
                        *gv = S::zero();
                    }
                });
                Ok(g)
            }
            (Node::LeakyRelu(slope), NodeCtx::LeakyRelu { mask }) => {
                let a = S::from_f64c(*slope);
                let mut g = gy;
                ndarray::Zip::from(&mut g).and(mask).for_each(|gv, &m| {
                    if !m {
                        *gv = a * *gv;
                    }
                });
                Ok(g)
            }
            (Node::Tanh, NodeCtx::Tanh { y }) => {
                let mut g = gy;
                ndarray::Zip::from(&mut g).and(y).for_each(|gv, &yv| {
                    *gv = *gv * (S::one() - yv * yv);
                });
                Ok(g)
            }
            (Node::Sigmoid, NodeCtx::Sigmoid { y }) => {
                let mut g = gy;
                ndarray::Zip::from(&mut g).and(y).for_each(|gv, &yv| {
                    *gv = *gv * yv * (S::one() - yv);
                });
                Ok(g)
            }
            (Node::Residual(nodes), NodeCtx::Residual(ctxs)) => {
                let ginner = seq_backward(nodes, ctxs, gy.clone(), accumulate)?;
                Ok(gy + ginner)
            }
            _ => Err(Error::Net("context does not match node".into())),
        }
    }
}

fn seq_forward<S: Scalar>(nodes: &[Node<S>], x: Feat<S>) -> Result<(Feat<S>, Vec<NodeCtx<S>>)> {
    let mut cur = x;
    let mut ctxs = Vec::with_capacity(nodes.len());
    for node in nodes {
        let (y, ctx) = node.forward(cur)?;
        ctxs.push(ctx);
        cur = y;
    }
    Ok((cur, ctxs))
}

fn seq_infer<S: Scalar>(nodes: &[Node<S>], x: Feat<S>) -> Result<Feat<S>> {
    let mut cur = x;
    for node in nodes {
        cur = node.infer(cur)?;
    }
    Ok(cur)
}

fn seq_backward<S: Scalar>(
    nodes: &mut [Node<S>],
    ctxs: &[NodeCtx<S>],
    gy: Feat<S>,
    accumulate: bool,
) -> Result<Feat<S>> {
    debug_assert_eq!(nodes.len(), ctxs.len());
    let mut g = gy;
    for (node, ctx) in nodes.iter_mut().rev().zip(ctxs.iter().rev()) {
        g = node.backward(ctx, g, accumulate)?;
    }
    Ok(g)
}

/// A sequential network. The empty network is the identity map.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Net<S> {
    pub nodes: Vec<Node<S>>,
}

/// Saved activations of one forward call.
#[derive(Debug)]
pub struct NetCtx<S> {
    nodes: Vec<NodeCtx<S>>,
}

impl<S: Scalar> Net<S> {
    pub fn new(nodes: Vec<Node<S>>) -> Self {
        Net { nodes }
    }

    pub fn identity() -> Self {
        Net { nodes: Vec::new() }
    }

    /// Forward pass that records the state `backward` needs. Each call
    /// returns an independent context, so one net can be applied several
    /// times within a step and backpropagated through each application.
    pub fn forward(&self, x: Feat<S>) -> Result<(Feat<S>, NetCtx<S>)> {
        let (y, nodes) = seq_forward(&self.nodes, x)?;
        Ok((y, NetCtx { nodes }))
    }

    /// Forward pass without gradient bookkeeping.
    pub fn infer(&self, x: Feat<S>) -> Result<Feat<S>> {
        seq_infer(&self.nodes, x)
    }

    /// Backpropagates `gy` through the pass recorded in `ctx`, returning
    /// the gradient with respect to the input. Parameter gradients are
    /// added to the layers' accumulators only when `accumulate` is set;
    /// either way the input gradient is produced, so a frozen network can
    /// sit inside another network's loss.
    pub fn backward(&mut self, ctx: &NetCtx<S>, gy: Feat<S>, accumulate: bool) -> Result<Feat<S>> {
        if ctx.nodes.len() != self.nodes.len() {
            return Err(Error::Net("context from a different network".into()));
        }
        seq_backward(&mut self.nodes, &ctx.nodes, gy, accumulate)
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, _, grad| grad.fill(S::zero()));
    }

    /// Visits every parameter tensor as `(path, values, grads)` in a fixed
    /// order. Paths look like `"3.weight"` or `"10.1.bias"` (node indices,
    /// nesting into residual branches).
    pub fn visit_params(&mut self, f: &mut impl FnMut(&str, &mut [S], &mut [S])) {
        visit_nodes(&mut self.nodes, "", f);
    }

    /// Read-only parameter walk in the same order as [`Self::visit_params`].
    pub fn for_each_param(&self, f: &mut impl FnMut(&str, &[S])) {
        walk_nodes(&self.nodes, "", f);
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_, v| n += v.len());
        n
    }
}

fn visit_nodes<S: Scalar>(
    nodes: &mut [Node<S>],
    prefix: &str,
    f: &mut impl FnMut(&str, &mut [S], &mut [S]),
) {
    for (idx, node) in nodes.iter_mut().enumerate() {
        let path = |leaf: &str| format!("{prefix}{idx}.{leaf}");
        match node {
            Node::Conv(c) => {
                f(
                    &path("weight"),
                    c.weight.as_slice_mut().expect("standard layout"),
                    c.grad_weight.as_slice_mut().expect("standard layout"),
                );
                f(
                    &path("bias"),
                    c.bias.as_slice_mut().expect("standard layout"),
                    c.grad_bias.as_slice_mut().expect("standard layout"),
                );
            }
            Node::ConvT(c) => {
                f(
                    &path("weight"),
                    c.weight.as_slice_mut().expect("standard layout"),
                    c.grad_weight.as_slice_mut().expect("standard layout"),
                );
                f(
                    &path("bias"),
                    c.bias.as_slice_mut().expect("standard layout"),
                    c.grad_bias.as_slice_mut().expect("standard layout"),
                );
            }
            Node::Residual(inner) => {
                visit_nodes(inner, &format!("{prefix}{idx}."), f);
            }
            _ => {}
        }
    }
}

fn walk_nodes<S: Scalar>(nodes: &[Node<S>], prefix: &str, f: &mut impl FnMut(&str, &[S])) {
    for (idx, node) in nodes.iter().enumerate() {
        let path = |leaf: &str| format!("{prefix}{idx}.{leaf}");
        match node {
            Node::Conv(c) => {
                f(&path("weight"), c.weight.as_slice().expect("standard layout"));
                f(&path("bias"), c.bias.as_slice().expect("standard layout"));
            }
            Node::ConvT(c) => {
                f(&path("weight"), c.weight.as_slice().expect("standard layout"));
                f(&path("bias"), c.bias.as_slice().expect("standard layout"));
            }
            Node::Residual(inner) => {
                walk_nodes(inner, &format!("{prefix}{idx}."), f);
            }
            _ => {}
        }
    }
}
