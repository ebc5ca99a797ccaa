//! Recording graph for reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value and its parents.
//! [`Graph::backward`] walks the nodes in reverse recording order once,
//! accumulating adjoints into tracked parents only. A graph is consumed by its
//! backward pass; record a new one (or [`Graph::reset`]) per step.

use std::sync::Arc;

use super::{ParamId, ParamStore, Tensor};
use crate::{Error, Result, Scalar};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul(Var, Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { src: Var, axis: usize, start: usize },
    Reshape(Var),
    Gather { src: Var, index: Arc<[usize]> },
    Sin(Var),
    Exp(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    Softmax { src: Var, axis: usize },
    Sum { src: Var, axis: usize },
    Mean { src: Var, axis: usize },
    Max { src: Var, arg: Vec<usize> },
    SumAll(Var),
    L1Distance(Var, Var),
    L2Norm(Var),
    Cosine(Var, Var),
    Cross(Var, Var),
    WeightedGather { weights: Var, src: Var, index: Arc<[usize]> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

/// Tape of recorded tensor operations.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of tracked leaves produced by one backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    /// Gradients aligned with `store`; parameters that did not influence the
    /// loss get zeros.
    pub fn for_params(&mut self, bound: &Bound, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        store
            .ids()
            .map(|id| {
                self.take(bound.var(id))
                    .unwrap_or_else(|| Tensor::zeros(store.get(id).shape().to_vec()))
            })
            .collect()
    }
}

/// Graph handles of every parameter in a store, indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn new(vars: Vec<Var>) -> Self {
        Bound(vars)
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.index()]
    }
}

fn split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape(format!("axis {axis} out of range for {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn last_axis(shape: &[usize]) -> Result<(usize, usize)> {
    match shape.split_last() {
        Some((&d, rest)) => Ok((rest.iter().product(), d)),
        None => Err(Error::shape("operation needs at least one axis")),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    /// Drops every node so the graph can record a new step.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf without a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, op, &[a, b]))
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        let value = Tensor {
            shape: self.shape(a).to_vec(),
            data,
        };
        self.push(value, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a vector of the last-axis length to every row.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (_, d) = last_axis(self.shape(a))?;
        if self.shape(bias) != [d] {
            return Err(Error::shape(format!(
                "bias {:?} does not match last axis of {:?}",
                self.shape(bias),
                self.shape(a)
            )));
        }
        let b = self.data(bias);
        let data = self
            .data(a)
            .chunks(d.max(1))
            .flat_map(|row| row.iter().zip(b).map(|(&x, &y)| x + y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::AddBias(a, bias), &[a, bias]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.map(a, |x| x + c, Op::AddScalar(a))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(format!("matmul {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.data(a),
            (k, 1),
            self.data(b),
            (n, 1),
            T::zero(),
            &mut out,
            (n, 1),
        );
        let value = Tensor {
            shape: vec![m, n],
            data: out,
        };
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat parts"))?;
        let base = self.shape(first).to_vec();
        let (outer, _, inner) = split(&base, axis)?;
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape(format!("concat {s:?} with {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let block = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.data(p)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor { shape, data };
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        ))
    }

    /// Elements `start..start + len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = split(&shape, axis)?;
        if start + len > n {
            return Err(Error::shape(format!(
                "slice {start}..{} of axis {axis} with length {n}",
                start + len
            )));
        }
        let src = self.data(a);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor {
            shape: out_shape,
            data,
        };
        Ok(self.push(value, Op::Slice { src: a, axis, start }, &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(a), &[a]))
    }

    /// Rows `index[r]` of `a` along axis 0.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (&n, rest) = shape.split_first().ok_or_else(|| Error::shape("gather on a scalar"))?;
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(Error::shape(format!("gather index {bad} beyond {n} rows")));
        }
        let row: usize = rest.iter().product();
        let src = self.data(a);
        let mut data = Vec::with_capacity(index.len() * row);
        for &i in index.iter() {
            data.extend_from_slice(&src[i * row..(i + 1) * row]);
        }
        let mut out_shape = vec![index.len()];
        out_shape.extend_from_slice(rest);
        let value = Tensor {
            shape: out_shape,
            data,
        };
        Ok(self.push(value, Op::Gather { src: a, index }, &[a]))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.map(a, T::sin, Op::Sin(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, T::exp, Op::Exp(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        self.map(
            a,
            |x| if x > T::zero() { x } else { x * slope },
            Op::LeakyRelu(a, slope),
        )
    }

    /// Normalized exponentials along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = split(&shape, axis)?;
        if n == 0 {
            return Err(Error::EmptyAxis);
        }
        let src = self.data(a);
        let mut data = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |t: usize| (o * n + t) * inner + i;
                let mx = (0..n).map(|t| src[at(t)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for t in 0..n {
                    let e = (src[at(t)] - mx).exp();
                    data[at(t)] = e;
                    total += e;
                }
                for t in 0..n {
                    data[at(t)] /= total;
                }
            }
        }
        let value = Tensor { shape, data };
        Ok(self.push(value, Op::Softmax { src: a, axis }, &[a]))
    }

    fn reduce(&mut self, a: Var, axis: usize) -> Result<(Vec<usize>, usize, usize, usize)> {
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = split(&shape, axis)?;
        let mut out_shape = shape;
        out_shape.remove(axis);
        Ok((out_shape, outer, n, inner))
    }

    pub fn sum(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (shape, outer, n, inner) = self.reduce(a, axis)?;
        let src = self.data(a);
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for t in 0..n {
                let row = &src[(o * n + t) * inner..(o * n + t + 1) * inner];
                for (d, &x) in data[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *d += x;
                }
            }
        }
        Ok(self.push(Tensor { shape, data }, Op::Sum { src: a, axis }, &[a]))
    }

    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (shape, outer, n, inner) = self.reduce(a, axis)?;
        if n == 0 {
            return Err(Error::EmptyAxis);
        }
        let src = self.data(a);
        let inv = T::one() / T::lit(n as f64);
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for t in 0..n {
                let row = &src[(o * n + t) * inner..(o * n + t + 1) * inner];
                for (d, &x) in data[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *d += x;
                }
            }
        }
        data.iter_mut().for_each(|d| *d *= inv);
        Ok(self.push(Tensor { shape, data }, Op::Mean { src: a, axis }, &[a]))
    }

    /// Maximum along `axis`; the first maximal element receives the gradient.
    pub fn max(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (shape, outer, n, inner) = self.reduce(a, axis)?;
        if n == 0 {
            return Err(Error::EmptyAxis);
        }
        let src = self.data(a);
        let mut data = vec![T::neg_infinity(); outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for t in 0..n {
                for i in 0..inner {
                    let x = src[(o * n + t) * inner + i];
                    let slot = o * inner + i;
                    if t == 0 || x > data[slot] {
                        data[slot] = x;
                        arg[slot] = (o * n + t) * inner + i;
                    }
                }
            }
        }
        Ok(self.push(Tensor { shape, data }, Op::Max { src: a, arg }, &[a]))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total = self.data(a).iter().copied().sum();
        self.push(Tensor::scalar(total), Op::SumAll(a), &[a])
    }

    /// `sum |a - b|` as a scalar.
    pub fn l1_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "l1_distance")?;
        let total = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| (x - y).abs())
            .sum();
        Ok(self.push(Tensor::scalar(total), Op::L1Distance(a, b), &[a, b]))
    }

    /// Euclidean norm over the last axis.
    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (rows, d) = last_axis(&shape)?;
        let data = (0..rows)
            .map(|r| {
                self.data(a)[r * d..(r + 1) * d]
                    .iter()
                    .map(|&x| x * x)
                    .sum::<T>()
                    .sqrt()
            })
            .collect();
        let value = Tensor {
            shape: shape[..shape.len() - 1].to_vec(),
            data,
        };
        Ok(self.push(value, Op::L2Norm(a), &[a]))
    }

    /// Cosine of the angle between matching rows (last axis).
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "cosine_similarity")?;
        let shape = self.shape(a).to_vec();
        let (rows, d) = last_axis(&shape)?;
        let (x, y) = (self.data(a), self.data(b));
        let data = (0..rows)
            .map(|r| {
                let (xr, yr) = (&x[r * d..(r + 1) * d], &y[r * d..(r + 1) * d]);
                let dot: T = xr.iter().zip(yr).map(|(&p, &q)| p * q).sum();
                let nx: T = xr.iter().map(|&p| p * p).sum::<T>().sqrt();
                let ny: T = yr.iter().map(|&q| q * q).sum::<T>().sqrt();
                dot / (nx * ny)
            })
            .collect();
        let value = Tensor {
            shape: shape[..shape.len() - 1].to_vec(),
            data,
        };
        Ok(self.push(value, Op::Cosine(a, b), &[a, b]))
    }

    /// Row-wise cross product of two `[rows, 3]` tensors.
    pub fn cross(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "cross")?;
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 || shape[1] != 3 {
            return Err(Error::shape(format!("cross needs [rows, 3], got {shape:?}")));
        }
        let data = self
            .data(a)
            .chunks(3)
            .zip(self.data(b).chunks(3))
            .flat_map(|(u, v)| cross3(u, v))
            .collect();
        Ok(self.push(Tensor { shape, data }, Op::Cross(a, b), &[a, b]))
    }

    /// `out[j] = sum_t weights[j, t] * src[index[j * k + t]]` for
    /// `weights: [m, k]`, `src: [n, d]`, giving `[m, d]`.
    pub fn weighted_gather(&mut self, weights: Var, src: Var, index: Arc<[usize]>) -> Result<Var> {
        let (sw, ss) = (self.shape(weights), self.shape(src));
        if sw.len() != 2 || ss.len() != 2 || index.len() != sw[0] * sw[1] {
            return Err(Error::shape(format!(
                "weighted_gather weights {sw:?}, source {ss:?}, {} indices",
                index.len()
            )));
        }
        let (m, k, n, d) = (sw[0], sw[1], ss[0], ss[1]);
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(Error::shape(format!("gather index {bad} beyond {n} rows")));
        }
        let (w, s) = (self.data(weights), self.data(src));
        let mut data = vec![T::zero(); m * d];
        for j in 0..m {
            let out = &mut data[j * d..(j + 1) * d];
            for t in 0..k {
                let wt = w[j * k + t];
                let row = &s[index[j * k + t] * d..(index[j * k + t] + 1) * d];
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += wt * x;
                }
            }
        }
        let value = Tensor {
            shape: vec![m, d],
            data,
        };
        Ok(self.push(
            value,
            Op::WeightedGather {
                weights,
                src,
                index,
            },
            &[weights, src],
        ))
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        let value = self.value(loss);
        if value.len() != 1 {
            return Err(Error::NonScalarLoss(value.shape().to_vec()));
        }
        let seed = Tensor::full(value.shape().to_vec(), T::one());
        self.backward_from(vec![(loss, seed)])
    }

    /// Reverse pass from explicit output adjoints.
    pub fn backward_from(&mut self, seeds: Vec<(Var, Tensor<T>)>) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        self.consumed = true;
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        let mut leaves: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        let mut top = 0;
        for (v, g) in seeds {
            if g.shape() != nodes[v.0].value.shape() {
                return Err(Error::shape(format!(
                    "seed {:?} for node of shape {:?}",
                    g.shape(),
                    nodes[v.0].value.shape()
                )));
            }
            top = top.max(v.0 + 1);
            if let Some(slot) = slot(&mut grads, nodes, v) {
                add_into(slot, g.data());
            }
        }

        for id in (0..top).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            let out = &node.value;
            match &node.op {
                Op::Leaf => {
                    leaves[id] = Some(Tensor {
                        shape: out.shape().to_vec(),
                        data: g,
                    });
                }
                Op::Add(a, b) => {
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        add_into(s, &g);
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        add_into(s, &g);
                    }
                }
                Op::Sub(a, b) => {
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        add_into(s, &g);
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        s.iter_mut().zip(&g).for_each(|(x, &y)| *x -= y);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for ((x, &gy), &y) in s.iter_mut().zip(&g).zip(vb) {
                            *x += gy * y;
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        for ((x, &gy), &y) in s.iter_mut().zip(&g).zip(va) {
                            *x += gy * y;
                        }
                    }
                }
                Op::AddBias(a, bias) => {
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        add_into(s, &g);
                    }
                    if let Some(s) = slot(&mut grads, nodes, *bias) {
                        let d = s.len();
                        for row in g.chunks(d.max(1)) {
                            add_into(s, row);
                        }
                    }
                }
                Op::Scale(a, c) => {
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        s.iter_mut().zip(&g).for_each(|(x, &y)| *x += y * *c);
                    }
                }
                Op::AddScalar(a) | Op::Reshape(a) => {
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        add_into(s, &g);
                    }
                }
                Op::MatMul(a, b) => {
                    let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        // dA = G * B^T
                        T::gemm(m, n, k, T::one(), &g, (n, 1), vb, (1, n), T::one(), s, (k, 1));
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        // dB = A^T * G
                        T::gemm(k, m, n, T::one(), va, (1, k), &g, (n, 1), T::one(), s, (n, 1));
                    }
                }
                Op::Concat { parts, axis } => {
                    let (outer, total, inner) = split(out.shape(), *axis)?;
                    let mut offset = 0;
                    for p in parts {
                        let len = nodes[p.0].value.shape()[*axis];
                        if let Some(s) = slot(&mut grads, nodes, *p) {
                            for o in 0..outer {
                                let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                                add_into(&mut s[o * len * inner..(o + 1) * len * inner], src);
                            }
                        }
                        offset += len;
                    }
                }
                Op::Slice { src, axis, start } => {
                    let (outer, n, inner) = split(nodes[src.0].value.shape(), *axis)?;
                    let len = out.shape()[*axis];
                    if let Some(s) = slot(&mut grads, nodes, *src) {
                        for o in 0..outer {
                            let base = (o * n + start) * inner;
                            add_into(
                                &mut s[base..base + len * inner],
                                &g[o * len * inner..(o + 1) * len * inner],
                            );
                        }
                    }
                }
                Op::Gather { src, index } => {
                    if let Some(s) = slot(&mut grads, nodes, *src) {
                        let row = if index.is_empty() { 0 } else { g.len() / index.len() };
                        for (r, &i) in index.iter().enumerate() {
                            add_into(&mut s[i * row..(i + 1) * row], &g[r * row..(r + 1) * row]);
                        }
                    }
                }
                Op::Sin(a) => {
                    let va = nodes[a.0].value.data();
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for ((x, &gy), &v) in s.iter_mut().zip(&g).zip(va) {
                            *x += gy * v.cos();
                        }
                    }
                }
                Op::Exp(a) => {
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for ((x, &gy), &y) in s.iter_mut().zip(&g).zip(out.data()) {
                            *x += gy * y;
                        }
                    }
                }
                Op::Relu(a) => {
                    let va = nodes[a.0].value.data();
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for ((x, &gy), &v) in s.iter_mut().zip(&g).zip(va) {
                            if v > T::zero() {
                                *x += gy;
                            }
                        }
                    }
                }
                Op::LeakyRelu(a, slope) => {
                    let va = nodes[a.0].value.data();
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for ((x, &gy), &v) in s.iter_mut().zip(&g).zip(va) {
                            *x += if v > T::zero() { gy } else { gy * *slope };
                        }
                    }
                }
                Op::Softmax { src, axis } => {
                    let (outer, n, inner) = split(out.shape(), *axis)?;
                    let y = out.data();
                    if let Some(s) = slot(&mut grads, nodes, *src) {
                        for o in 0..outer {
                            for i in 0..inner {
                                let at = |t: usize| (o * n + t) * inner + i;
                                let dot: T = (0..n).map(|t| g[at(t)] * y[at(t)]).sum();
                                for t in 0..n {
                                    s[at(t)] += y[at(t)] * (g[at(t)] - dot);
                                }
                            }
                        }
                    }
                }
                Op::Sum { src, axis } | Op::Mean { src, axis } => {
                    let (outer, n, inner) = split(nodes[src.0].value.shape(), *axis)?;
                    let factor = match node.op {
                        Op::Mean { .. } => T::one() / T::lit(n as f64),
                        _ => T::one(),
                    };
                    if let Some(s) = slot(&mut grads, nodes, *src) {
                        for o in 0..outer {
                            let gr = &g[o * inner..(o + 1) * inner];
                            for t in 0..n {
                                let row = &mut s[(o * n + t) * inner..(o * n + t + 1) * inner];
                                for (x, &gy) in row.iter_mut().zip(gr) {
                                    *x += gy * factor;
                                }
                            }
                        }
                    }
                }
                Op::Max { src, arg, .. } => {
                    if let Some(s) = slot(&mut grads, nodes, *src) {
                        for (&at, &gy) in arg.iter().zip(&g) {
                            s[at] += gy;
                        }
                    }
                }
                Op::SumAll(a) => {
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        s.iter_mut().for_each(|x| *x += g[0]);
                    }
                }
                Op::L1Distance(a, b) => {
                    let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    let sign = |x: T, y: T| {
                        if x > y {
                            T::one()
                        } else if x < y {
                            -T::one()
                        } else {
                            T::zero()
                        }
                    };
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for ((x, &p), &q) in s.iter_mut().zip(va).zip(vb) {
                            *x += g[0] * sign(p, q);
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        for ((x, &p), &q) in s.iter_mut().zip(va).zip(vb) {
                            *x -= g[0] * sign(p, q);
                        }
                    }
                }
                Op::L2Norm(a) => {
                    let va = nodes[a.0].value.data();
                    let d = *nodes[a.0].value.shape().last().unwrap_or(&1);
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for (r, (&norm, &gy)) in out.data().iter().zip(&g).enumerate() {
                            if norm > T::zero() {
                                let f = gy / norm;
                                for c in r * d..(r + 1) * d {
                                    s[c] += f * va[c];
                                }
                            }
                        }
                    }
                }
                Op::Cosine(a, b) => {
                    let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    let d = *nodes[a.0].value.shape().last().unwrap_or(&1);
                    for (first, this, other) in [(true, *a, vb), (false, *b, va)] {
                        let mine = if first { va } else { vb };
                        if let Some(s) = slot(&mut grads, nodes, this) {
                            for (r, (&cos, &gy)) in out.data().iter().zip(&g).enumerate() {
                                let x = &mine[r * d..(r + 1) * d];
                                let y = &other[r * d..(r + 1) * d];
                                let nx2: T = x.iter().map(|&v| v * v).sum();
                                let ny: T = y.iter().map(|&v| v * v).sum::<T>().sqrt();
                                let nx = nx2.sqrt();
                                for c in 0..d {
                                    s[r * d + c] += gy * (y[c] / (nx * ny) - cos * x[c] / nx2);
                                }
                            }
                        }
                    }
                }
                Op::Cross(a, b) => {
                    let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    // d(a x b) . g: grad_a = b x g, grad_b = g x a.
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for (r, gr) in g.chunks(3).enumerate() {
                            let c = cross3(&vb[3 * r..3 * r + 3], gr);
                            add_into(&mut s[3 * r..3 * r + 3], &c);
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        for (r, gr) in g.chunks(3).enumerate() {
                            let c = cross3(gr, &va[3 * r..3 * r + 3]);
                            add_into(&mut s[3 * r..3 * r + 3], &c);
                        }
                    }
                }
                Op::WeightedGather {
                    weights,
                    src,
                    index,
                } => {
                    let sw = nodes[weights.0].value.shape();
                    let (m, k) = (sw[0], sw[1]);
                    let d = nodes[src.0].value.shape()[1];
                    let (w, sv) = (nodes[weights.0].value.data(), nodes[src.0].value.data());
                    if let Some(s) = slot(&mut grads, nodes, *weights) {
                        for j in 0..m {
                            let gr = &g[j * d..(j + 1) * d];
                            for t in 0..k {
                                let i = index[j * k + t];
                                let row = &sv[i * d..(i + 1) * d];
                                s[j * k + t] += gr.iter().zip(row).map(|(&p, &q)| p * q).sum::<T>();
                            }
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *src) {
                        for j in 0..m {
                            let gr = &g[j * d..(j + 1) * d];
                            for t in 0..k {
                                let i = index[j * k + t];
                                let wt = w[j * k + t];
                                for (x, &gy) in s[i * d..(i + 1) * d].iter_mut().zip(gr) {
                                    *x += wt * gy;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads: leaves })
    }
}

fn cross3<T: Scalar>(u: &[T], v: &[T]) -> [T; 3] {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

#[inline]
fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn slot<'a, T: Scalar>(
    grads: &'a mut [Option<Vec<T>>],
    nodes: &[Node<T>],
    v: Var,
) -> Option<&'a mut [T]> {
    let node = &nodes[v.0];
    if !node.tracked {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.len()]))
}
