//! Tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass as a node in an
//! append-only list, so the list order is already a topological order and
//! the graph cannot contain cycles. [`Tape::backward`] walks it once in
//! reverse. Leaves created with [`Tape::param`] are bound to a
//! [`ParamStore`] entry and their gradients can be accumulated back into
//! the store's grad buffers.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{
    dims2, layer_norm_raw, matmul_at_raw, matmul_bt_raw, matmul_dims, matmul_raw,
    softmax_rows_raw, Tensor,
};

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    /// a · bᵀ
    MatMulBt(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Affine(usize, f64),
    Relu(usize),
    Sigmoid(usize),
    SoftmaxRows(usize),
    RowNormalize(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Log {
        a: usize,
        floor: f64,
    },
    Sum(usize),
    MeanRows(usize),
    Gather {
        a: usize,
        idx: Vec<usize>,
    },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
    needs_grad: bool,
}

/// Recording of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    bound: RefCell<HashMap<ParamId, usize>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

/// Gradients of one backward pass, indexed by leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient w.r.t. a leaf `var`, or `None` if it does not influence the loss.
    pub fn get(&self, var: Var<'_>) -> Option<&[f64]> {
        self.grads.get(var.id).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor shaped like `var`; zeros when unreachable.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        let shape = var.shape();
        match self.get(var) {
            Some(g) => Tensor::from_parts(shape, g.to_vec()),
            None => Tensor::zeros(&shape),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            param: None,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].needs_grad)
    }

    /// Constant input; no gradient is tracked.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// Input leaf whose gradient is tracked (for probing dLoss/dInput).
    pub fn input(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter. Binding the same id twice returns
    /// the same node.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        if let Some(&node) = self.bound.borrow().get(&id) {
            return Var {
                tape: self,
                id: node,
            };
        }
        let t = store.get(id);
        let v = self.push(Tensor::from_parts(t.shape().to_vec(), t.data().to_vec()), Op::Leaf, true);
        self.nodes.borrow_mut()[v.id].param = Some(id);
        self.bound.borrow_mut().insert(id, v.id);
        v
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop_node(&nodes, node, &g, &mut grads);
        }

        for (i, n) in nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) || !n.needs_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    /// Adds the gradients of all parameter-bound leaves into `store`.
    pub fn accumulate_into(&self, grads: &Gradients, store: &mut ParamStore) {
        for (pid, g) in self.param_grads(grads) {
            store.get_mut(pid).accumulate_grad(g);
        }
    }

    /// `(param id, gradient)` for every bound parameter that received one.
    pub fn param_grads<'g>(&self, grads: &'g Gradients) -> Vec<(ParamId, &'g [f64])> {
        let bound = self.bound.borrow();
        let mut out: Vec<(ParamId, &[f64])> = bound
            .iter()
            .filter_map(|(&pid, &node)| grads.grads[node].as_deref().map(|g| (pid, g)))
            .collect();
        out.sort_by_key(|(pid, _)| *pid);
        out
    }

    /// Backward pass followed by accumulation into `store`.
    pub fn backward_into(&self, loss: Var<'_>, store: &mut ParamStore) -> Result<()> {
        let grads = self.backward(loss)?;
        self.accumulate_into(&grads, store);
        Ok(())
    }
}

fn acc<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].needs_grad {
        return None;
    }
    let slot = &mut grads[id];
    if slot.is_none() {
        *slot = Some(vec![0.0; nodes[id].value.len()]);
    }
    slot.as_mut()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn backprop_node(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |i: usize| nodes[i].value.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = (nodes[*a].value.shape()[0], nodes[*a].value.shape()[1]);
            let n = nodes[*b].value.shape()[1];
            if let Some(ga) = acc(grads, nodes, *a) {
                add_into(ga, &matmul_bt_raw(g, val(*b), m, n, k));
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                add_into(gb, &matmul_at_raw(val(*a), g, m, k, n));
            }
        }
        Op::MatMulBt(a, b) => {
            let (m, k) = (nodes[*a].value.shape()[0], nodes[*a].value.shape()[1]);
            let n = nodes[*b].value.shape()[0];
            if let Some(ga) = acc(grads, nodes, *a) {
                add_into(ga, &matmul_raw(g, val(*b), m, n, k));
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                add_into(gb, &matmul_at_raw(g, val(*a), m, n, k));
            }
        }
        Op::Add(a, b) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                add_into(ga, g);
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                add_into(gb, g);
            }
        }
        Op::Sub(a, b) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                add_into(ga, g);
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                gb.iter_mut().zip(g).for_each(|(d, s)| *d -= s);
            }
        }
        Op::Mul(a, b) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((d, gi), bv) in ga.iter_mut().zip(g).zip(val(*b)) {
                    *d += gi * bv;
                }
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                for ((d, gi), av) in gb.iter_mut().zip(g).zip(val(*a)) {
                    *d += gi * av;
                }
            }
        }
        Op::AddRow(a, b) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                add_into(ga, g);
            }
            let n = nodes[*b].value.len();
            if let Some(gb) = acc(grads, nodes, *b) {
                for row in g.chunks(n) {
                    add_into(gb, row);
                }
            }
        }
        Op::Affine(a, scale) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                ga.iter_mut().zip(g).for_each(|(d, s)| *d += scale * s);
            }
        }
        Op::Relu(a) => {
            let x = val(*a);
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((d, gi), xv) in ga.iter_mut().zip(g).zip(x) {
                    if *xv > 0.0 {
                        *d += gi;
                    }
                }
            }
        }
        Op::Sigmoid(a) => {
            let y = node.value.data();
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((d, gi), yv) in ga.iter_mut().zip(g).zip(y) {
                    *d += gi * yv * (1.0 - yv);
                }
            }
        }
        Op::SoftmaxRows(a) => {
            let y = node.value.data();
            let c = node.value.cols();
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((drow, grow), yrow) in ga.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for ((d, gi), yi) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += yi * (gi - dot);
                    }
                }
            }
        }
        Op::RowNormalize(a) => {
            let y = node.value.data();
            let x = val(*a);
            let c = node.value.cols();
            if let Some(ga) = acc(grads, nodes, *a) {
                for (((drow, grow), yrow), xrow) in ga
                    .chunks_mut(c)
                    .zip(g.chunks(c))
                    .zip(y.chunks(c))
                    .zip(x.chunks(c))
                {
                    let s: f64 = xrow.iter().sum();
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for (d, gi) in drow.iter_mut().zip(grow) {
                        *d += (gi - dot) / s;
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let d = node.value.cols();
            let gv = val(*gain).to_vec();
            if let Some(gx) = acc(grads, nodes, *x) {
                for (r, (grow, hrow)) in g.chunks(d).zip(xhat.chunks(d)).enumerate() {
                    let dh: Vec<f64> = grow.iter().zip(&gv).map(|(a, b)| a * b).collect();
                    let sum_dh: f64 = dh.iter().sum();
                    let sum_dh_h: f64 = dh.iter().zip(hrow).map(|(a, b)| a * b).sum();
                    let k = inv_std[r] / d as f64;
                    for j in 0..d {
                        gx[r * d + j] += k * (d as f64 * dh[j] - sum_dh - hrow[j] * sum_dh_h);
                    }
                }
            }
            if let Some(gg) = acc(grads, nodes, *gain) {
                for (grow, hrow) in g.chunks(d).zip(xhat.chunks(d)) {
                    for j in 0..d {
                        gg[j] += grow[j] * hrow[j];
                    }
                }
            }
            if let Some(gb) = acc(grads, nodes, *bias) {
                for grow in g.chunks(d) {
                    add_into(gb, grow);
                }
            }
        }
        Op::Log { a, floor } => {
            let x = val(*a);
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((d, gi), xv) in ga.iter_mut().zip(g).zip(x) {
                    if *xv > *floor {
                        *d += gi / xv;
                    }
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                ga.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::MeanRows(a) => {
            let r = nodes[*a].value.rows() as f64;
            let c = node.value.cols();
            if let Some(ga) = acc(grads, nodes, *a) {
                for row in ga.chunks_mut(c) {
                    for (d, gi) in row.iter_mut().zip(g) {
                        *d += gi / r;
                    }
                }
            }
        }
        Op::Gather { a, idx } => {
            if let Some(ga) = acc(grads, nodes, *a) {
                for (gi, &i) in g.iter().zip(idx) {
                    ga[i] += gi;
                }
            }
        }
        Op::ConcatCols(parts) => {
            let r = node.value.rows();
            let total = node.value.cols();
            let mut offset = 0;
            for &p in parts {
                let c = nodes[p].value.cols();
                if let Some(gp) = acc(grads, nodes, p) {
                    for i in 0..r {
                        add_into(
                            &mut gp[i * c..(i + 1) * c],
                            &g[i * total + offset..i * total + offset + c],
                        );
                    }
                }
                offset += c;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let n = nodes[p].value.len();
                if let Some(gp) = acc(grads, nodes, p) {
                    add_into(gp, &g[offset..offset + n]);
                }
                offset += n;
            }
        }
        Op::Reshape(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                add_into(ga, g);
            }
        }
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    /// Detached copy of the value.
    pub fn tensor(&self) -> Tensor {
        let v = self.value();
        Tensor::from_parts(v.shape().to_vec(), v.data().to_vec())
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().data()[0]
    }

    fn unary(&self, f: impl FnOnce(&Tensor) -> Tensor, op: Op) -> Var<'t> {
        let out = f(&self.value());
        let ng = self.tape.needs(&[self.id]);
        self.tape.push(out, op, ng)
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (m, k, n) = matmul_dims(&self.shape(), &other.shape())?;
        let out = matmul_raw(self.value().data(), other.value().data(), m, k, n);
        let ng = self.tape.needs(&[self.id, other.id]);
        Ok(self
            .tape
            .push(Tensor::from_parts(vec![m, n], out), Op::MatMul(self.id, other.id), ng))
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (sa, sb) = (self.shape(), other.shape());
        let (m, k) = dims2(&sa, "matmul_t")?;
        let (n, k2) = dims2(&sb, "matmul_t")?;
        if k != k2 {
            return Err(shape_err("matmul_t", &sa, &sb));
        }
        let out = matmul_bt_raw(self.value().data(), other.value().data(), m, k, n);
        let ng = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(
            Tensor::from_parts(vec![m, n], out),
            Op::MatMulBt(self.id, other.id),
            ng,
        ))
    }

    fn zip_same(
        &self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb {
            return Err(shape_err(name, &sa, &sb));
        }
        let out: Vec<f64> = self
            .value()
            .data()
            .iter()
            .zip(other.value().data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        let ng = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(Tensor::from_parts(sa, out), op, ng))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_same(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_same(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_same(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    /// Adds a length-n vector to every row of an m×n matrix.
    pub fn add_row(&self, bias: Var<'t>) -> Result<Var<'t>> {
        let (sa, sb) = (self.shape(), bias.shape());
        let n = *sa.last().unwrap_or(&0);
        if bias.value().len() != n {
            return Err(shape_err("add_row", &sa, &sb));
        }
        let out: Vec<f64> = {
            let b = bias.value();
            self.value()
                .data()
                .chunks(n)
                .flat_map(|row| row.iter().zip(b.data()).map(|(x, y)| x + y).collect::<Vec<_>>())
                .collect()
        };
        let ng = self.tape.needs(&[self.id, bias.id]);
        Ok(self
            .tape
            .push(Tensor::from_parts(sa, out), Op::AddRow(self.id, bias.id), ng))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&self, scale: f64, shift: f64) -> Var<'t> {
        self.unary(
            |t| {
                Tensor::from_parts(
                    t.shape().to_vec(),
                    t.data().iter().map(|x| scale * x + shift).collect(),
                )
            },
            Op::Affine(self.id, scale),
        )
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        self.affine(s, 0.0)
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(
            |t| Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|x| x.max(0.0)).collect()),
            Op::Relu(self.id),
        )
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Tensor::sigmoid, Op::Sigmoid(self.id))
    }

    pub fn softmax_rows(&self) -> Var<'t> {
        self.unary(
            |t| Tensor::from_parts(t.shape().to_vec(), softmax_rows_raw(t.data(), t.cols())),
            Op::SoftmaxRows(self.id),
        )
    }

    /// Divides each row by its sum. Errors if a row sums to zero.
    pub fn row_normalize(&self) -> Result<Var<'t>> {
        let out = {
            let t = self.value();
            let c = t.cols();
            let mut out = t.data().to_vec();
            for (r, row) in out.chunks_mut(c).enumerate() {
                let s: f64 = row.iter().sum();
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::FullyMaskedRow { row: r });
                }
                row.iter_mut().for_each(|x| *x /= s);
            }
            Tensor::from_parts(t.shape().to_vec(), out)
        };
        let ng = self.tape.needs(&[self.id]);
        Ok(self.tape.push(out, Op::RowNormalize(self.id), ng))
    }

    pub fn layer_norm(&self, gain: Var<'t>, bias: Var<'t>, eps: f64) -> Result<Var<'t>> {
        let sa = self.shape();
        let d = *sa.last().unwrap_or(&0);
        if gain.value().len() != d || bias.value().len() != d {
            return Err(shape_err("layer_norm", &sa, &gain.shape()));
        }
        let (out, xhat, inv_std) = layer_norm_raw(
            self.value().data(),
            gain.value().data(),
            bias.value().data(),
            d,
            eps,
        );
        let ng = self.tape.needs(&[self.id, gain.id, bias.id]);
        Ok(self.tape.push(
            Tensor::from_parts(sa, out),
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                bias: bias.id,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// Natural log with inputs clamped below at `floor`; clamped entries
    /// receive zero gradient.
    pub fn log_floor(&self, floor: f64) -> Var<'t> {
        self.unary(
            |t| {
                Tensor::from_parts(
                    t.shape().to_vec(),
                    t.data().iter().map(|x| x.max(floor).ln()).collect(),
                )
            },
            Op::Log { a: self.id, floor },
        )
    }

    pub fn sum(&self) -> Var<'t> {
        self.unary(|t| Tensor::scalar(t.sum()), Op::Sum(self.id))
    }

    /// Column means of an r×c matrix, as 1×c.
    pub fn mean_rows(&self) -> Var<'t> {
        self.unary(
            |t| {
                let (r, c) = (t.rows(), t.cols());
                let mut out = vec![0.0; c];
                for row in t.data().chunks(c) {
                    add_into(&mut out, row);
                }
                out.iter_mut().for_each(|x| *x /= r as f64);
                Tensor::from_parts(vec![1, c], out)
            },
            Op::MeanRows(self.id),
        )
    }

    /// `out[i] = self.flat[idx[i]]`, reshaped to `shape`.
    pub fn gather(&self, idx: Vec<usize>, shape: Vec<usize>) -> Result<Var<'t>> {
        let n = self.value().len();
        if shape.iter().product::<usize>() != idx.len() {
            return Err(shape_err("gather", &[idx.len()], &shape));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(shape_err("gather", &[bad], &[n]));
        }
        let out: Vec<f64> = {
            let v = self.value();
            idx.iter().map(|&i| v.data()[i]).collect()
        };
        let ng = self.tape.needs(&[self.id]);
        Ok(self
            .tape
            .push(Tensor::from_parts(shape, out), Op::Gather { a: self.id, idx }, ng))
    }

    /// Rows `rows` of a 2-D table (embedding lookup).
    pub fn gather_rows(&self, rows: &[usize]) -> Result<Var<'t>> {
        let (r, c) = dims2(&self.shape(), "gather_rows")?;
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(shape_err("gather_rows", &[bad], &[r, c]));
        }
        let idx = rows.iter().flat_map(|&i| (i * c)..(i * c + c)).collect();
        self.gather(idx, vec![rows.len(), c])
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t>> {
        let t = self.tensor().reshape(shape)?;
        let ng = self.tape.needs(&[self.id]);
        Ok(self.tape.push(t, Op::Reshape(self.id), ng))
    }
}

/// Concatenates 2-D tensors with equal row counts along columns.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = parts
        .first()
        .ok_or_else(|| crate::error::invalid("concat of zero tensors"))?;
    let tape = first.tape;
    let r = first.shape()[0];
    let mut total = 0;
    for p in parts {
        let s = p.shape();
        let (pr, pc) = dims2(&s, "concat_cols")?;
        if pr != r {
            return Err(shape_err("concat_cols", &first.shape(), &s));
        }
        total += pc;
    }
    let mut out = vec![0.0; r * total];
    let mut offset = 0;
    for p in parts {
        let v = p.value();
        let c = v.cols();
        for i in 0..r {
            out[i * total + offset..i * total + offset + c].copy_from_slice(v.row(i));
        }
        offset += c;
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let ng = tape.needs(&ids);
    Ok(tape.push(Tensor::from_parts(vec![r, total], out), Op::ConcatCols(ids), ng))
}

/// Stacks 2-D tensors with equal column counts along rows.
pub fn concat_rows<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = parts
        .first()
        .ok_or_else(|| crate::error::invalid("concat of zero tensors"))?;
    let tape = first.tape;
    let c = first.shape()[1];
    let mut rows = 0;
    let mut out = Vec::new();
    for p in parts {
        let v = p.value();
        let (pr, pc) = dims2(v.shape(), "concat_rows")?;
        if pc != c {
            return Err(shape_err("concat_rows", &first.shape(), v.shape()));
        }
        rows += pr;
        out.extend_from_slice(v.data());
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let ng = tape.needs(&ids);
    Ok(tape.push(Tensor::from_parts(vec![rows, c], out), Op::ConcatRows(ids), ng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = tape.input(Tensor::new(vec![4], vec![1.0, -2.0, 3.0, 0.5]).unwrap());
        let loss = x.sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0; 4]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[2, 2]));
        assert!(matches!(
            tape.backward(x.relu()),
            Err(Error::NonScalarLoss(_))
        ));
    }

    #[test]
    fn two_backward_calls_double_param_grad() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let tape = Tape::new();
        let w = tape.param(&store, id);
        let loss = w.mul(w).unwrap().sum();
        tape.backward_into(loss, &mut store).unwrap();
        assert_eq!(store.get(id).grad().unwrap(), &[2.0, 4.0, 6.0]);
        tape.backward_into(loss, &mut store).unwrap();
        assert_eq!(store.get(id).grad().unwrap(), &[4.0, 8.0, 12.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(Tensor::full(&[2], 3.0));
        let x = tape.input(Tensor::full(&[2], 1.0));
        let loss = c.mul(x).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn row_normalize_rejects_zero_row() {
        let tape = Tape::new();
        let x = tape.input(Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap());
        assert!(matches!(
            x.row_normalize(),
            Err(Error::FullyMaskedRow { row: 0 })
        ));
    }
}
