use std::collections::BTreeMap;

use super::kernels::{self, ConvGeom};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The fixed primitive set.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// Inputs `[x (c,h,w), weight (o,c,k,k), bias (o)]`; stride 1, zero "same" padding, odd `k`.
    Conv2d,
    /// Inputs `[x (any shape, n elements), weight (m,n), bias (m)]`; output `(m)`.
    Dense,
    Relu,
    /// 2x2 window, stride 2, over `(c,h,w)`.
    MaxPool2,
    Add,
    Scale(f64),
    /// Logits `(k)` to the scalar `logsumexp(z) - z[target]`.
    SoftmaxCrossEntropy { target: usize },
    /// Logits `(k)` to the scalar `z[index]`.
    SelectLogit { index: usize },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Conv2d => "conv2d",
            Primitive::Dense => "dense",
            Primitive::Relu => "relu",
            Primitive::MaxPool2 => "maxpool2",
            Primitive::Add => "add",
            Primitive::Scale(_) => "scale",
            Primitive::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Primitive::SelectLogit { .. } => "select_logit",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Primitive::Conv2d | Primitive::Dense => 3,
            Primitive::Add => 2,
            _ => 1,
        }
    }
}

#[derive(Debug)]
enum Cache {
    None,
    PoolArgmax(Vec<usize>),
    Probs(Vec<f64>),
}

#[derive(Debug)]
struct Node {
    prim: Option<Primitive>,
    parents: Vec<Var>,
    value: Tensor,
    cache: Cache,
    needs_grad: bool,
}

/// Gradients of a scalar node with respect to every marked leaf.
pub type Gradients = BTreeMap<Var, Tensor>;

/// A Wengert list. Nodes are appended in evaluation order, so parents always
/// precede children and the backward sweep is a plain reverse scan.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input. No gradient is reported for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// Records a differentiation target.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            prim: None,
            parents: Vec::new(),
            value,
            cache: Cache::None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Evaluates `prim` on recorded inputs and appends the result.
    pub fn forward(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != prim.arity() {
            return Err(Error::InvalidParameter(format!(
                "{} takes {} inputs, got {}",
                prim.name(),
                prim.arity(),
                inputs.len()
            )));
        }
        if let Some(bad) = inputs.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(Error::InvalidParameter(format!("unknown node {}", bad.0)));
        }
        let vals: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let (value, cache) = eval(&prim, &vals)?;
        if !value.is_finite() {
            return Err(Error::InvalidTensor(format!("{} produced a non-finite value", prim.name())));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            prim: Some(prim),
            parents: inputs.to_vec(),
            value,
            cache,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        self.forward(Primitive::Conv2d, &[x, weight, bias])
    }

    pub fn dense(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        self.forward(Primitive::Dense, &[x, weight, bias])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.forward(Primitive::Relu, &[x])
    }

    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        self.forward(Primitive::MaxPool2, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward(Primitive::Add, &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.forward(Primitive::Scale(factor), &[x])
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        self.forward(Primitive::SoftmaxCrossEntropy { target }, &[logits])
    }

    pub fn select_logit(&mut self, logits: Var, index: usize) -> Result<Var> {
        self.forward(Primitive::SelectLogit { index }, &[logits])
    }

    /// Reverse sweep from a scalar node.
    ///
    /// Returns `d output / d leaf` for every leaf recorded with [`Tape::leaf`]
    /// (zero-filled when the output does not depend on it).
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self
            .nodes
            .get(output.0)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown node {}", output.0)))?;
        if out.value.numel() != 1 {
            return Err(Error::NonScalarOutput {
                node: output.0,
                shape: out.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);
        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            let Some(prim) = &node.prim else { continue };
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[id].take() else { continue };
            let contributions = self.vjp(node, prim, &gout);
            for (parent, g) in node.parents.iter().zip(contributions) {
                let Some(g) = g else { continue };
                match &mut grads[parent.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
            // Leaves keep their gradient; intermediate buffers are released above via take().
        }
        let mut result = Gradients::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if node.prim.is_some() || !node.needs_grad {
                continue;
            }
            let shape = node.value.shape().to_vec();
            let g = grads
                .get_mut(id)
                .and_then(Option::take)
                .unwrap_or_else(|| vec![0.0; node.value.numel()]);
            result.insert(Var(id), Tensor::from_parts(shape, g));
        }
        Ok(result)
    }

    /// Per-parent vector-Jacobian products; `None` for parents that do not need a gradient.
    fn vjp(&self, node: &Node, prim: &Primitive, gout: &[f64]) -> Vec<Option<Vec<f64>>> {
        let wants = |i: usize| self.nodes[node.parents[i].0].needs_grad;
        let val = |i: usize| &self.nodes[node.parents[i].0].value;
        match prim {
            Primitive::Conv2d => {
                let geom = conv_geom(val(0), val(1));
                let gx = wants(0).then(|| kernels::conv2d_backward_input(geom, val(1).data(), gout));
                let (gw, gb) = if wants(1) || wants(2) {
                    let (gw, gb) = kernels::conv2d_backward_weight(geom, val(0).data(), gout);
                    (wants(1).then_some(gw), wants(2).then_some(gb))
                } else {
                    (None, None)
                };
                vec![gx, gw, gb]
            }
            Primitive::Dense => {
                let x = val(0).data();
                let gx = wants(0).then(|| kernels::dense_backward_input(val(1).data(), gout, x.len()));
                let gw = wants(1).then(|| kernels::dense_backward_weight(x, gout));
                let gb = wants(2).then(|| gout.to_vec());
                vec![gx, gw, gb]
            }
            Primitive::Relu => {
                // Subgradient at exactly zero is zero.
                let x = val(0).data();
                vec![Some(
                    x.iter()
                        .zip(gout)
                        .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
                        .collect(),
                )]
            }
            Primitive::MaxPool2 => {
                let Cache::PoolArgmax(arg) = &node.cache else {
                    unreachable!("maxpool node without argmax cache")
                };
                let mut gx = vec![0.0; val(0).numel()];
                for (&src, &g) in arg.iter().zip(gout) {
                    gx[src] += g;
                }
                vec![Some(gx)]
            }
            Primitive::Add => vec![
                wants(0).then(|| gout.to_vec()),
                wants(1).then(|| gout.to_vec()),
            ],
            Primitive::Scale(f) => vec![Some(gout.iter().map(|g| g * f).collect())],
            Primitive::SoftmaxCrossEntropy { target } => {
                let Cache::Probs(p) = &node.cache else {
                    unreachable!("cross-entropy node without probability cache")
                };
                let g = gout[0];
                let mut gx: Vec<f64> = p.iter().map(|pv| pv * g).collect();
                gx[*target] -= g;
                vec![Some(gx)]
            }
            Primitive::SelectLogit { index } => {
                let mut gx = vec![0.0; val(0).numel()];
                gx[*index] = gout[0];
                vec![Some(gx)]
            }
        }
    }
}

fn conv_geom(x: &Tensor, w: &Tensor) -> ConvGeom {
    ConvGeom {
        in_c: x.shape()[0],
        out_c: w.shape()[0],
        h: x.shape()[1],
        w: x.shape()[2],
        k: w.shape()[2],
    }
}

fn mismatch(prim: &Primitive, left: &Tensor, right: &[usize]) -> Error {
    Error::ShapeMismatch {
        primitive: prim.name(),
        left: left.shape().to_vec(),
        right: right.to_vec(),
    }
}

fn eval(prim: &Primitive, inputs: &[&Tensor]) -> Result<(Tensor, Cache)> {
    match prim {
        Primitive::Conv2d => {
            let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
            let ok = x.shape().len() == 3
                && w.shape().len() == 4
                && w.shape()[1] == x.shape()[0]
                && w.shape()[2] == w.shape()[3]
                && w.shape()[2] % 2 == 1
                && b.shape() == [w.shape()[0]];
            if !ok {
                return Err(mismatch(prim, x, w.shape()));
            }
            let geom = conv_geom(x, w);
            let out = kernels::conv2d_forward(geom, x.data(), w.data(), b.data());
            Ok((Tensor::from_parts(vec![geom.out_c, geom.h, geom.w], out), Cache::None))
        }
        Primitive::Dense => {
            let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
            let ok = w.shape().len() == 2 && w.shape()[1] == x.numel() && b.shape() == [w.shape()[0]];
            if !ok {
                return Err(mismatch(prim, x, w.shape()));
            }
            let out = kernels::dense_forward(x.data(), w.data(), b.data());
            Ok((Tensor::from_parts(vec![w.shape()[0]], out), Cache::None))
        }
        Primitive::Relu => Ok((inputs[0].map(|v| v.max(0.0)), Cache::None)),
        Primitive::MaxPool2 => {
            let x = inputs[0];
            let s = x.shape();
            if s.len() != 3 || s[1] < 2 || s[2] < 2 {
                return Err(mismatch(prim, x, &[2, 2]));
            }
            let (out, arg) = kernels::maxpool2_forward(s[0], s[1], s[2], x.data());
            Ok((
                Tensor::from_parts(vec![s[0], s[1] / 2, s[2] / 2], out),
                Cache::PoolArgmax(arg),
            ))
        }
        Primitive::Add => {
            let (a, b) = (inputs[0], inputs[1]);
            let out = a.zip_with(b, |x, y| x + y).map_err(|_| mismatch(prim, a, b.shape()))?;
            Ok((out, Cache::None))
        }
        Primitive::Scale(f) => Ok((inputs[0].map(|v| v * f), Cache::None)),
        Primitive::SoftmaxCrossEntropy { target } => {
            let z = inputs[0];
            if z.shape().len() != 1 || *target >= z.numel() {
                return Err(Error::ClassOutOfRange {
                    index: *target,
                    classes: z.numel(),
                });
            }
            let loss = kernels::log_sum_exp(z.data()) - z.data()[*target];
            Ok((Tensor::scalar(loss), Cache::Probs(kernels::softmax(z.data()))))
        }
        Primitive::SelectLogit { index } => {
            let z = inputs[0];
            if z.shape().len() != 1 || *index >= z.numel() {
                return Err(Error::ClassOutOfRange {
                    index: *index,
                    classes: z.numel(),
                });
            }
            Ok((Tensor::scalar(z.data()[*index]), Cache::None))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_forward() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn dense_identity_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[0.5, -2.0, 7.0]));
        let w = tape.constant(t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        let b = tape.constant(Tensor::zeros(&[3]));
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, -2.0, 7.0]);
    }

    #[test]
    fn conv_of_ones_center_is_nine() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1, 3, 3], 1.0));
        let w = tape.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = tape.conv2d(x, w, b).unwrap();
        assert_eq!(tape.value(y).data()[4], 9.0);
        // corners see a 2x2 patch, edges a 2x3 one
        assert_eq!(tape.value(y).data()[0], 4.0);
        assert_eq!(tape.value(y).data()[1], 6.0);
    }

    #[test]
    fn linear_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[0.3, -4.0, 9.0]));
        let w = tape.constant(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = tape.dense(x, w, b).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g[&x].data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn relu_sum_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[-1.0, 5.0]));
        let r = tape.relu(x).unwrap();
        let ones = tape.constant(t(&[1, 2], &[1.0, 1.0]));
        let b = tape.constant(Tensor::zeros(&[1]));
        let s = tape.dense(r, ones, b).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g[&x].data(), &[0.0, 1.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1], &[0.0]));
        let r = tape.relu(x).unwrap();
        let s = tape.select_logit(r, 0).unwrap();
        assert_eq!(tape.backward(s).unwrap()[&x].data(), &[0.0]);
    }

    #[test]
    fn maxpool_tie_routes_to_first() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[1, 2, 2], 3.0));
        let p = tape.max_pool2(x).unwrap();
        let one = tape.constant(t(&[1, 1], &[1.0]));
        let b = tape.constant(Tensor::zeros(&[1]));
        let s = tape.dense(p, one, b).unwrap();
        assert_eq!(tape.backward(s).unwrap()[&x].data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_backward_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::NonScalarOutput { .. })));
    }

    #[test]
    fn shape_mismatch_names_primitive() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2]));
        let b = tape.constant(Tensor::zeros(&[3]));
        let err = tape.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("add") && msg.contains("[2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        let unused = tape.leaf(t(&[1], &[4.0]));
        let s = tape.select_logit(x, 1).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g[&unused].data(), &[0.0]);
        assert_eq!(g[&x].data(), &[0.0, 1.0]);
    }

    #[test]
    fn shared_node_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1], &[2.0]));
        let y = tape.add(x, x).unwrap();
        let z = tape.scale(y, 3.0).unwrap();
        let s = tape.select_logit(z, 0).unwrap();
        assert_eq!(tape.backward(s).unwrap()[&x].data(), &[6.0]);
    }
}
