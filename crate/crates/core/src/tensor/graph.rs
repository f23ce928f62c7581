use std::borrow::Cow;

use super::kernels;
use super::{Tensor, TensorError};
use crate::scalar::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SelectRow(Var, usize),
    MaxPoolRows {
        x: Var,
        argmax: Vec<usize>,
    },
    WeightedCrossEntropy {
        logits: Var,
        gold: Vec<usize>,
        weights: Vec<T>,
        probs: Vec<T>,
    },
}

struct Node<'a, T: Clone> {
    shape: Vec<usize>,
    value: Cow<'a, [T]>,
    op: Op<T>,
    requires_grad: bool,
    slot: Option<usize>,
}

/// A single forward pass recorded for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order. Parameters are borrowed, not copied.
pub struct Graph<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Scalar> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => (shape[..shape.len() - 1].iter().product(), shape[shape.len() - 1]),
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Cow<'a, [T]>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            slot: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Borrowed parameter leaf. Its gradient is reported under `slot`.
    pub fn param(&mut self, tensor: &'a Tensor<T>, slot: usize) -> Var {
        let v = self.push(tensor.shape.clone(), Cow::Borrowed(&tensor.data), Op::Leaf, true);
        self.nodes[v.0].slot = Some(slot);
        v
    }

    /// Owned leaf that receives a gradient.
    pub fn variable(&mut self, tensor: Tensor<T>) -> Var {
        self.push(tensor.shape, Cow::Owned(tensor.data), Op::Leaf, true)
    }

    /// Owned leaf excluded from differentiation.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.push(tensor.shape, Cow::Owned(tensor.data), Op::Leaf, false)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    /// Copies a node's value out as a tensor.
    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor {
            shape: n.shape.clone(),
            data: n.value.to_vec(),
            grad: None,
        }
    }

    /// `A[m×k] · B[k×n]`. A rank-1 `A` is treated as a single row and the
    /// result is rank-1.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ok = (sa.len() == 1 || sa.len() == 2) && sb.len() == 2 && sa[sa.len() - 1] == sb[0];
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let (m, k) = rows_cols(&sa);
        let n = sb[1];
        let out = kernels::matmul(self.value(a), self.value(b), m, k, n);
        let shape = if sa.len() == 1 { vec![n] } else { vec![m, n] };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, Cow::Owned(out), Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(TensorError::InvalidAxis { axis: 1, rank: s.len() });
        }
        let out = kernels::transpose(self.value(x), s[0], s[1]);
        let rg = self.rg(x);
        Ok(self.push(vec![s[1], s[0]], Cow::Owned(out), Op::Transpose(x), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let out: Vec<T> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), Cow::Owned(out), Op::Add(a, b), rg))
    }

    /// Adds a rank-1 `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (sx, sb) = (self.shape(x).to_vec(), self.shape(bias).to_vec());
        if sb.len() != 1 || sx.last() != Some(&sb[0]) {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                left: sx,
                right: sb,
            });
        }
        let n = sb[0];
        let b = self.value(bias);
        let out: Vec<T> = self.value(x).iter().enumerate().map(|(i, &v)| v + b[i % n]).collect();
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(sx, Cow::Owned(out), Op::AddRow(x, bias), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let out: Vec<T> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), Cow::Owned(out), Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out: Vec<T> = self.value(x).iter().map(|&v| v * factor).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), Cow::Owned(out), Op::Scale(x, factor), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).iter().copied().sum();
        let rg = self.rg(x);
        self.push(Vec::new(), Cow::Owned(vec![s]), Op::Sum(x), rg)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out: Vec<T> = self.value(x).iter().map(|&v| kernels::gelu(v)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), Cow::Owned(out), Op::Gelu(x), rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (_, cols) = rows_cols(self.shape(x));
        let mut out = self.value(x).to_vec();
        if cols > 0 {
            out.chunks_mut(cols).for_each(kernels::softmax_in_place);
        }
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), Cow::Owned(out), Op::SoftmaxRows(x), rg)
    }

    /// Per-row `(x − μ)/√(σ² + eps)·gamma + beta` with population variance.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var, TensorError> {
        let sx = self.shape(x).to_vec();
        let (rows, cols) = rows_cols(&sx);
        for p in [gamma, beta] {
            if self.shape(p) != [cols] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    left: sx,
                    right: self.shape(p).to_vec(),
                });
            }
        }
        let xv = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let n = T::from_usize(cols).unwrap();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xv.len()];
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g[c] + b[c];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            sx,
            Cow::Owned(out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Embedding lookup: rows of `table[V×h]` selected by `ids`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let st = self.shape(table).to_vec();
        if st.len() != 2 {
            return Err(TensorError::InvalidAxis {
                axis: 0,
                rank: st.len(),
            });
        }
        let (v, h) = (st[0], st[1]);
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * h);
        for &id in ids {
            if id >= v {
                return Err(TensorError::IndexOutOfRange { index: id, size: v });
            }
            out.extend_from_slice(&tv[id * h..(id + 1) * h]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            vec![ids.len(), h],
            Cow::Owned(out),
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || start + len > s[1] {
            return Err(TensorError::RangeOutOfBounds {
                first: start,
                last: start + len,
                rows: s.last().copied().unwrap_or(0),
            });
        }
        let (rows, cols) = (s[0], s[1]);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xv[r * cols + start..r * cols + start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(vec![rows, len], Cow::Owned(out), Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let rows = parts.first().map_or(0, |&p| self.shape(p)[0]);
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: vec![rows],
                    right: s.to_vec(),
                });
            }
            total += s[1];
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let c = self.shape(p)[1];
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(vec![rows, total], Cow::Owned(out), Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Row `i` of a matrix as a rank-1 tensor.
    pub fn select_row(&mut self, x: Var, i: usize) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || i >= s[0] {
            return Err(TensorError::IndexOutOfRange {
                index: i,
                size: s.first().copied().unwrap_or(0),
            });
        }
        let h = s[1];
        let out = self.value(x)[i * h..(i + 1) * h].to_vec();
        let rg = self.rg(x);
        Ok(self.push(vec![h], Cow::Owned(out), Op::SelectRow(x, i), rg))
    }

    /// Elementwise max over rows `first..=last`. Ties go to the lowest row.
    pub fn masked_max_pool(&mut self, x: Var, first: usize, last: usize) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        let rows = s.first().copied().unwrap_or(0);
        if s.len() != 2 || first > last || last >= rows {
            return Err(TensorError::RangeOutOfBounds { first, last, rows });
        }
        let h = s[1];
        let xv = self.value(x);
        let mut out = xv[first * h..(first + 1) * h].to_vec();
        let mut argmax = vec![first; h];
        for r in first + 1..=last {
            for c in 0..h {
                let v = xv[r * h + c];
                if v > out[c] {
                    out[c] = v;
                    argmax[c] = r;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![h], Cow::Owned(out), Op::MaxPoolRows { x, argmax }, rg))
    }

    /// `−weights[gold]·log softmax(logits)[gold]`, averaged over rows when
    /// `logits` is `[B×C]`.
    pub fn weighted_cross_entropy(&mut self, logits: Var, gold: &[usize], weights: &[T]) -> Result<Var, TensorError> {
        let s = self.shape(logits).to_vec();
        let (rows, classes) = rows_cols(&s);
        if s.is_empty() || s.len() > 2 || gold.len() != rows || weights.len() != classes {
            return Err(TensorError::ShapeMismatch {
                op: "weighted_cross_entropy",
                left: s,
                right: vec![gold.len(), weights.len()],
            });
        }
        if weights
            .iter()
            .any(|w| w.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater))
        {
            return Err(TensorError::NonPositiveWeight);
        }
        if let Some(&bad) = gold.iter().find(|&&g| g >= classes) {
            return Err(TensorError::InvalidClass { class: bad, classes });
        }
        let lv = self.value(logits);
        let mut probs = lv.to_vec();
        let mut total = T::zero();
        for (r, &g) in gold.iter().enumerate() {
            let row = &lv[r * classes..(r + 1) * classes];
            let lse = kernels::log_sum_exp(row);
            total += -weights[g] * (row[g] - lse);
            kernels::softmax_in_place(&mut probs[r * classes..(r + 1) * classes]);
        }
        let loss = total / T::from_usize(rows).unwrap();
        let rg = self.rg(logits);
        Ok(self.push(
            Vec::new(),
            Cow::Owned(vec![loss]),
            Op::WeightedCrossEntropy {
                logits,
                gold: gold.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar `loss`. Consumes the graph so parameter
    /// borrows end here.
    pub fn backward(self, loss: Var) -> Result<Backprop<T>, TensorError> {
        let mut nodes = self.nodes;
        if nodes[loss.0].value.len() != 1 {
            return Err(TensorError::NotScalar(nodes[loss.0].shape.clone()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            if !nodes[idx].requires_grad {
                continue;
            }
            let is_leaf = matches!(nodes[idx].op, Op::Leaf);
            if is_leaf {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            // Intermediate values are no longer needed once their gradient is consumed.
            let op = std::mem::replace(&mut nodes[idx].op, Op::Leaf);
            let out_shape = std::mem::take(&mut nodes[idx].shape);
            let out_val = std::mem::replace(&mut nodes[idx].value, Cow::Owned(Vec::new()));
            backprop_node(&nodes, &mut grads, &op, &out_shape, &out_val, &g);
        }

        let mut by_node = Vec::new();
        let mut slots = Vec::new();
        for (i, node) in nodes.iter().enumerate() {
            if !node.requires_grad || !matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = grads[i].take().unwrap_or_else(|| vec![T::zero(); node.value.len()]);
            match node.slot {
                Some(s) => slots.push((s, g)),
                None => by_node.push((i, g)),
            }
        }
        Ok(Backprop { by_node, slots })
    }
}

fn acc<'g, T: Scalar>(grads: &'g mut [Option<Vec<T>>], nodes: &[Node<'_, T>], v: Var) -> Option<&'g mut Vec<T>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
}

fn backprop_node<T: Scalar>(
    nodes: &[Node<'_, T>],
    grads: &mut [Option<Vec<T>>],
    op: &Op<T>,
    out_shape: &[usize],
    out_val: &[T],
    g: &[T],
) {
    let val = |v: Var| -> &[T] { &nodes[v.0].value };
    match op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = rows_cols(&nodes[a.0].shape);
            let n = nodes[b.0].shape[1];
            if let Some(ga) = acc(grads, nodes, *a) {
                kernels::matmul_bt_acc(g, val(*b), m, k, n, ga);
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                kernels::matmul_at_acc(val(*a), g, m, k, n, gb);
            }
        }
        Op::Transpose(x) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                // out is [c×r]; its transpose is x's layout.
                let t = kernels::transpose(g, out_shape[0], out_shape[1]);
                gx.iter_mut().zip(t).for_each(|(a, b)| *a += b);
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                if let Some(gv) = acc(grads, nodes, *v) {
                    gv.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
                }
            }
        }
        Op::AddRow(x, bias) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                gx.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
            }
            if let Some(gb) = acc(grads, nodes, *bias) {
                let n = gb.len();
                for (i, &v) in g.iter().enumerate() {
                    gb[i % n] += v;
                }
            }
        }
        Op::Mul(a, b) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((o, &gi), &bv) in ga.iter_mut().zip(g).zip(&nodes[b.0].value[..]) {
                    *o += gi * bv;
                }
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                for ((o, &gi), &av) in gb.iter_mut().zip(g).zip(&nodes[a.0].value[..]) {
                    *o += gi * av;
                }
            }
        }
        Op::Scale(x, f) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                gx.iter_mut().zip(g).for_each(|(a, &b)| *a += b * *f);
            }
        }
        Op::Sum(x) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                gx.iter_mut().for_each(|a| *a += g[0]);
            }
        }
        Op::Gelu(x) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                for ((o, &gi), &xv) in gx.iter_mut().zip(g).zip(&nodes[x.0].value[..]) {
                    *o += gi * kernels::gelu_derivative(xv);
                }
            }
        }
        Op::SoftmaxRows(x) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                let (_, cols) = rows_cols(out_shape);
                for ((gx_row, g_row), y_row) in gx.chunks_mut(cols).zip(g.chunks(cols)).zip(out_val.chunks(cols)) {
                    let dot: T = g_row.iter().zip(y_row).map(|(&a, &b)| a * b).sum();
                    for ((o, &gi), &yi) in gx_row.iter_mut().zip(g_row).zip(y_row) {
                        *o += yi * (gi - dot);
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        } => {
            let (_, cols) = rows_cols(out_shape);
            let n = T::from_usize(cols).unwrap();
            if let Some(gg) = acc(grads, nodes, *gamma) {
                for (r, g_row) in g.chunks(cols).enumerate() {
                    for c in 0..cols {
                        gg[c] += g_row[c] * xhat[r * cols + c];
                    }
                }
            }
            if let Some(gb) = acc(grads, nodes, *beta) {
                for g_row in g.chunks(cols) {
                    gb.iter_mut().zip(g_row).for_each(|(a, &b)| *a += b);
                }
            }
            let gamma_v = nodes[gamma.0].value.to_vec();
            if let Some(gx) = acc(grads, nodes, *x) {
                for (r, g_row) in g.chunks(cols).enumerate() {
                    let xh = &xhat[r * cols..(r + 1) * cols];
                    let dxhat: Vec<T> = g_row.iter().zip(&gamma_v).map(|(&a, &b)| a * b).collect();
                    let mean_d = dxhat.iter().copied().sum::<T>() / n;
                    let mean_dx = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() / n;
                    for c in 0..cols {
                        gx[r * cols + c] += inv_std[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
                    }
                }
            }
        }
        Op::GatherRows { table, ids } => {
            if let Some(gt) = acc(grads, nodes, *table) {
                let h = nodes[table.0].shape[1];
                for (r, &id) in ids.iter().enumerate() {
                    let dst = &mut gt[id * h..(id + 1) * h];
                    dst.iter_mut().zip(&g[r * h..(r + 1) * h]).for_each(|(a, &b)| *a += b);
                }
            }
        }
        Op::SliceCols { x, start } => {
            if let Some(gx) = acc(grads, nodes, *x) {
                let cols = nodes[x.0].shape[1];
                let len = out_shape[1];
                for (r, g_row) in g.chunks(len).enumerate() {
                    let dst = &mut gx[r * cols + start..r * cols + start + len];
                    dst.iter_mut().zip(g_row).for_each(|(a, &b)| *a += b);
                }
            }
        }
        Op::ConcatCols(parts) => {
            let total = out_shape[1];
            let mut offset = 0;
            for &p in parts {
                let c = nodes[p.0].shape[1];
                if let Some(gp) = acc(grads, nodes, p) {
                    for (r, g_row) in g.chunks(total).enumerate() {
                        let dst = &mut gp[r * c..(r + 1) * c];
                        dst.iter_mut()
                            .zip(&g_row[offset..offset + c])
                            .for_each(|(a, &b)| *a += b);
                    }
                }
                offset += c;
            }
        }
        Op::SelectRow(x, i) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                let h = g.len();
                gx[i * h..(i + 1) * h].iter_mut().zip(g).for_each(|(a, &b)| *a += b);
            }
        }
        Op::MaxPoolRows { x, argmax } => {
            if let Some(gx) = acc(grads, nodes, *x) {
                let h = g.len();
                for (c, &r) in argmax.iter().enumerate() {
                    gx[r * h + c] += g[c];
                }
            }
        }
        Op::WeightedCrossEntropy {
            logits,
            gold,
            weights,
            probs,
        } => {
            if let Some(gl) = acc(grads, nodes, *logits) {
                let classes = weights.len();
                let scale = g[0] / T::from_usize(gold.len()).unwrap();
                for (r, &gc) in gold.iter().enumerate() {
                    let w = weights[gc] * scale;
                    for c in 0..classes {
                        let onehot = if c == gc { T::one() } else { T::zero() };
                        gl[r * classes + c] += w * (probs[r * classes + c] - onehot);
                    }
                }
            }
        }
    }
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Backprop<T> {
    by_node: Vec<(usize, Vec<T>)>,
    slots: Vec<(usize, Vec<T>)>,
}

impl<T: Scalar> Backprop<T> {
    /// Gradient of a leaf created with [`Graph::variable`].
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.by_node.iter().find(|(i, _)| *i == v.0).map(|(_, g)| g.as_slice())
    }

    /// Gradient reported for a parameter slot.
    pub fn slot(&self, slot: usize) -> Option<&[T]> {
        self.slots.iter().find(|(s, _)| *s == slot).map(|(_, g)| g.as_slice())
    }

    /// `(slot, gradient)` pairs for every parameter leaf.
    pub fn into_slots(self) -> Vec<(usize, Vec<T>)> {
        self.slots
    }
}
