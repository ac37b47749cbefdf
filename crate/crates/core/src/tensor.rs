//! Dense tensors and a tape-based reverse-mode differentiation engine.
//!
//! A [`Tensor`] is a plain value: a shape plus row-major `f64` storage. Graph
//! computations happen on a [`Tape`]; every operation appends a node and
//! returns a [`Var`] handle. Nodes are only ever appended, so node index order
//! is a topological order and [`Tape::backward`] walks it in reverse exactly
//! once.
//!
//! Broadcasting is limited to tensor-scalar operations. Bias rows and similar
//! expansions are expressed as products with constant ones vectors.

use std::cell::RefCell;
use std::fmt;

use crate::error::{Error, Result};

/// Shape-carrying real array in row-major order.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("from_rows", "ragged rows"));
        }
        Tensor::new(&[rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.dims2().0
    }

    pub fn cols(&self) -> usize {
        self.dims2().1
    }

    /// `(rows, cols)` of a 2-D tensor. Panics on other ranks.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape[..] {
            [r, c] => (r, c),
            _ => panic!("expected 2-D tensor, got shape {:?}", self.shape),
        }
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        let (_, c) = self.dims2();
        self.data[i * c + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (_, c) = self.dims2();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "elementwise",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = dims2_of("matmul", self)?;
        let (k2, n) = dims2_of("matmul", other)?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape, other.shape),
            ));
        }
        let mut out = vec![0.0; m * n];
        matmul_nn(&self.data, &other.data, &mut out, m, k, n);
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = dims2_of("transpose", self)?;
        Ok(Tensor {
            shape: vec![c, r],
            data: transposed(&self.data, r, c),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> Result<f64> {
        let (r, c) = dims2_of("trace", self)?;
        if r != c {
            return Err(Error::shape("trace", format!("non-square {:?}", self.shape)));
        }
        Ok((0..r).map(|i| self.data[i * c + i]).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

fn dims2_of(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape[..] {
        [r, c] => Ok((r, c)),
        _ => Err(Error::shape(op, format!("expected 2-D operand, got {:?}", t.shape))),
    }
}

fn transposed(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

/// `out += a (m×k) · b (k×n)`
fn matmul_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out += a (m×k) · bᵀ` where `b` is stored `n×k`.
fn matmul_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out += aᵀ · b` where `a` is stored `k×m` and `b` is `k×n`.
fn matmul_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += api * bv;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddScalar(usize),
    MulScalar(usize, f64),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Abs(usize),
    Sqrt(usize),
    Transpose(usize),
    Reshape(usize),
    Matmul(usize, usize),
    SumRows(usize),
    Sum(usize),
    Mean(usize),
    FrobeniusNorm(usize),
    Trace(usize),
    Mse(usize, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Append-only computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Leaf that receives a gradient on backward.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Clears every stored gradient.
    pub fn zero_grad(&self) {
        for n in self.nodes.borrow_mut().iter_mut() {
            n.grad = None;
        }
    }

    /// Accumulates `∂root/∂v` into every node `v` that requires a gradient
    /// and is reachable from `root`. Repeated calls keep accumulating.
    pub fn backward(&self, root: Var<'_>) -> Result<()> {
        assert!(std::ptr::eq(root.tape, self), "root belongs to another tape");
        let mut nodes = self.nodes.borrow_mut();
        if nodes[root.id].value.len() != 1 {
            return Err(Error::NonScalarRoot(nodes[root.id].value.shape.clone()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.id + 1];
        adj[root.id] = Some(vec![1.0]);

        for id in (0..=root.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            propagate(&nodes, id, &g, &mut adj);
            let node = &mut nodes[id];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    pub fn value(&self, v: Var<'_>) -> Tensor {
        self.nodes.borrow()[v.id].value.clone()
    }

    pub fn grad(&self, v: Var<'_>) -> Option<Tensor> {
        let nodes = self.nodes.borrow();
        let node = &nodes[v.id];
        node.grad.as_ref().map(|g| Tensor {
            shape: node.value.shape.clone(),
            data: g.clone(),
        })
    }

    fn unary(&self, a: Var<'_>, op: Op, f: impl FnOnce(&Tensor) -> Result<Tensor>) -> Result<Var<'_>> {
        let value = f(&self.nodes.borrow()[a.id].value)?;
        Ok(self.push(value, op, self.requires_grad(a.id)))
    }

    fn binary(
        &self,
        a: Var<'_>,
        b: Var<'_>,
        op: Op,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
    ) -> Result<Var<'_>> {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a.id].value, &nodes[b.id].value)?
        };
        let rg = self.requires_grad(a.id) || self.requires_grad(b.id);
        Ok(self.push(value, op, rg))
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = adj[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]);
    f(slot);
}

fn propagate(nodes: &[Node], id: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
    let out = &nodes[id].value;
    match nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(adj, nodes, a, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            accumulate(adj, nodes, b, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
        }
        Op::Sub(a, b) => {
            accumulate(adj, nodes, a, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            accumulate(adj, nodes, b, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
        }
        Op::Mul(a, b) => {
            let (av, bv) = (&nodes[a].value.data, &nodes[b].value.data);
            accumulate(adj, nodes, a, |s| {
                for i in 0..s.len() {
                    s[i] += g[i] * bv[i];
                }
            });
            accumulate(adj, nodes, b, |s| {
                for i in 0..s.len() {
                    s[i] += g[i] * av[i];
                }
            });
        }
        Op::Div(a, b) => {
            let (av, bv) = (&nodes[a].value.data, &nodes[b].value.data);
            accumulate(adj, nodes, a, |s| {
                for i in 0..s.len() {
                    s[i] += g[i] / bv[i];
                }
            });
            accumulate(adj, nodes, b, |s| {
                for i in 0..s.len() {
                    s[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                }
            });
        }
        Op::AddScalar(a) | Op::Reshape(a) => {
            accumulate(adj, nodes, a, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
        }
        Op::MulScalar(a, c) => {
            accumulate(adj, nodes, a, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += c * y));
        }
        Op::Relu(a) => {
            let av = &nodes[a].value.data;
            accumulate(adj, nodes, a, |s| {
                for i in 0..s.len() {
                    if av[i] > 0.0 {
                        s[i] += g[i];
                    }
                }
            });
        }
        Op::Sigmoid(a) => {
            let y = &out.data;
            accumulate(adj, nodes, a, |s| {
                for i in 0..s.len() {
                    s[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            });
        }
        Op::Exp(a) => {
            let y = &out.data;
            accumulate(adj, nodes, a, |s| {
                for i in 0..s.len() {
                    s[i] += g[i] * y[i];
                }
            });
        }
        Op::Abs(a) => {
            let av = &nodes[a].value.data;
            accumulate(adj, nodes, a, |s| {
                for i in 0..s.len() {
                    if av[i] > 0.0 {
                        s[i] += g[i];
                    } else if av[i] < 0.0 {
                        s[i] -= g[i];
                    }
                }
            });
        }
        Op::Sqrt(a) => {
            let y = &out.data;
            accumulate(adj, nodes, a, |s| {
                for i in 0..s.len() {
                    s[i] += g[i] / (2.0 * y[i]);
                }
            });
        }
        Op::Transpose(a) => {
            let (r, c) = out.dims2();
            accumulate(adj, nodes, a, |s| {
                // out is r×c, operand is c×r
                for i in 0..r {
                    for j in 0..c {
                        s[j * r + i] += g[i * c + j];
                    }
                }
            });
        }
        Op::Matmul(a, b) => {
            let (m, k) = nodes[a].value.dims2();
            let n = nodes[b].value.dims2().1;
            let (av, bv) = (&nodes[a].value.data, &nodes[b].value.data);
            accumulate(adj, nodes, a, |s| matmul_nt(g, bv, s, m, n, k));
            accumulate(adj, nodes, b, |s| matmul_tn(av, g, s, k, m, n));
        }
        Op::SumRows(a) => {
            let (r, c) = nodes[a].value.dims2();
            accumulate(adj, nodes, a, |s| {
                for i in 0..r {
                    s[i * c..(i + 1) * c].iter_mut().for_each(|x| *x += g[i]);
                }
            });
        }
        Op::Sum(a) => {
            accumulate(adj, nodes, a, |s| s.iter_mut().for_each(|x| *x += g[0]));
        }
        Op::Mean(a) => {
            let n = nodes[a].value.len() as f64;
            accumulate(adj, nodes, a, |s| s.iter_mut().for_each(|x| *x += g[0] / n));
        }
        Op::FrobeniusNorm(a) => {
            let norm = out.data[0];
            let av = &nodes[a].value.data;
            accumulate(adj, nodes, a, |s| {
                if norm > 0.0 {
                    for i in 0..s.len() {
                        s[i] += g[0] * av[i] / norm;
                    }
                }
            });
        }
        Op::Trace(a) => {
            let (r, c) = nodes[a].value.dims2();
            accumulate(adj, nodes, a, |s| {
                for i in 0..r {
                    s[i * c + i] += g[0];
                }
            });
        }
        Op::Mse(a, b) => {
            let (av, bv) = (&nodes[a].value.data, &nodes[b].value.data);
            let scale = 2.0 * g[0] / av.len() as f64;
            accumulate(adj, nodes, a, |s| {
                for i in 0..s.len() {
                    s[i] += scale * (av[i] - bv[i]);
                }
            });
            accumulate(adj, nodes, b, |s| {
                for i in 0..s.len() {
                    s[i] -= scale * (av[i] - bv[i]);
                }
            });
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape, b.shape)));
    }
    Ok(())
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(*self)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape.clone()
    }

    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value.item()
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.tape.grad(*self)
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    fn elementwise(self, other: Var<'t>, op: Op, name: &'static str, f: fn(f64, f64) -> f64) -> Result<Var<'t>> {
        self.tape.binary(self, other, op, |a, b| {
            same_shape(name, a, b)?;
            a.zip_map(b, f)
        })
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, Op::Add(self.id, other.id), "add", |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, Op::Sub(self.id, other.id), "sub", |a, b| a - b)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, Op::Mul(self.id, other.id), "mul", |a, b| a * b)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, Op::Div(self.id, other.id), "div", |a, b| a / b)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.tape
            .unary(self, Op::AddScalar(self.id), |a| Ok(a.map(|x| x + c)))
            .expect("infallible")
    }

    pub fn mul_scalar(self, c: f64) -> Var<'t> {
        self.tape
            .unary(self, Op::MulScalar(self.id, c), |a| Ok(a.map(|x| x * c)))
            .expect("infallible")
    }

    pub fn neg(self) -> Var<'t> {
        self.mul_scalar(-1.0)
    }

    pub fn relu(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Relu(self.id), |a| Ok(a.map(|x| x.max(0.0))))
            .expect("infallible")
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Sigmoid(self.id), |a| Ok(a.map(sigmoid)))
            .expect("infallible")
    }

    pub fn exp(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Exp(self.id), |a| Ok(a.map(f64::exp)))
            .expect("infallible")
    }

    pub fn abs(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Abs(self.id), |a| Ok(a.map(f64::abs)))
            .expect("infallible")
    }

    pub fn sqrt(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Sqrt(self.id), |a| Ok(a.map(f64::sqrt)))
            .expect("infallible")
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        self.tape.unary(self, Op::Transpose(self.id), Tensor::transpose)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        self.tape.unary(self, Op::Reshape(self.id), |a| a.reshape(shape))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.tape
            .binary(self, other, Op::Matmul(self.id, other.id), Tensor::matmul)
    }

    /// `r×c → r×1` row sums.
    pub fn sum_rows(self) -> Result<Var<'t>> {
        self.tape.unary(self, Op::SumRows(self.id), |a| {
            let (r, c) = dims2_of("sum_rows", a)?;
            let data = (0..r).map(|i| a.data[i * c..(i + 1) * c].iter().sum()).collect();
            Ok(Tensor {
                shape: vec![r, 1],
                data,
            })
        })
    }

    pub fn sum(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Sum(self.id), |a| Ok(Tensor::scalar(a.sum())))
            .expect("infallible")
    }

    pub fn mean(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Mean(self.id), |a| Ok(Tensor::scalar(a.mean())))
            .expect("infallible")
    }

    pub fn frobenius_norm(self) -> Var<'t> {
        self.tape
            .unary(self, Op::FrobeniusNorm(self.id), |a| {
                Ok(Tensor::scalar(a.frobenius_norm()))
            })
            .expect("infallible")
    }

    pub fn trace(self) -> Result<Var<'t>> {
        self.tape
            .unary(self, Op::Trace(self.id), |a| a.trace().map(Tensor::scalar))
    }

    /// Mean of squared differences over all elements.
    pub fn mse(self, target: Var<'t>) -> Result<Var<'t>> {
        self.tape.binary(self, target, Op::Mse(self.id, target.id), |a, b| {
            same_shape("mse", a, b)?;
            let n = a.len() as f64;
            let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
            Ok(Tensor::scalar(s / n))
        })
    }

    /// Repeats a single-element tensor over `shape` (via a ones-vector product).
    pub fn broadcast_scalar(self, shape: &[usize]) -> Result<Var<'t>> {
        let n: usize = shape.iter().product();
        let one_elem = self.reshape(&[1, 1])?;
        let ones = self.tape.constant(Tensor::full(&[n, 1], 1.0));
        ones.matmul(one_elem)?.reshape(shape)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
