//! Minimal dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Tensors are row-major flat buffers attached to a [`Graph`]: an append-only
//! tape of operations in topological order (parents always precede children).
//! Forward values are cached on the tape; [`Tensor::backward`] walks the tape
//! in reverse, accumulating gradients into every node on the grad path.
//!
//! The op set is deliberately small: exactly what dense encoder stacks need
//! (matrix product, row-wise ops, bias add) plus the loss. No broadcasting
//! beyond row vectors, no views, no GPU.

mod backward;
mod check;

pub use check::{finite_diff_check, max_rel_err};

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::scalar::Scalar;

/// Operation recorded on the tape. Parent node ids always refer to earlier
/// tape entries.
#[derive(Debug, Clone)]
pub(crate) enum Op<T: Scalar> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    /// `a[m x n] + v[n]`, v added to every row.
    AddRow(usize, usize),
    Matmul(usize, usize),
    Transpose(usize),
    Relu(usize),
    Softmax {
        input: usize,
        axis: usize,
    },
    LayerNorm {
        input: usize,
        gain: usize,
        bias: usize,
        eps: T,
    },
    /// Mask entries are 0 or 1/(1-p), fixed at forward time.
    Dropout {
        input: usize,
        mask: Vec<T>,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
    },
    Sum(usize),
    MeanRows {
        input: usize,
        valid: Vec<bool>,
    },
    Row {
        input: usize,
        index: usize,
    },
    /// Flat concatenation of the parents' buffers, in order.
    Concat {
        parts: Vec<usize>,
    },
    /// Column-wise concatenation of matrices with equal row counts.
    ConcatCols {
        parts: Vec<usize>,
    },
    SliceCols {
        input: usize,
        start: usize,
        end: usize,
    },
    Reshape(usize),
    /// Row gather from an embedding table.
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
}

#[derive(Debug)]
pub(crate) struct Node<T: Scalar> {
    pub(crate) op: Op<T>,
    pub(crate) shape: Vec<usize>,
    pub(crate) values: Vec<T>,
    /// True for leaves flagged by the caller and for any node with a flagged
    /// ancestor; gradient buffers are only allocated along this path.
    pub(crate) requires_grad: bool,
    pub(crate) grad: Option<Vec<T>>,
}

#[derive(Debug)]
pub(crate) struct GraphInner<T: Scalar> {
    pub(crate) nodes: Vec<Node<T>>,
    pub(crate) consumed: bool,
}

/// Append-only computation tape shared by the tensors built on it.
#[derive(Debug)]
pub struct Graph<T: Scalar> {
    inner: Rc<RefCell<GraphInner<T>>>,
}

impl<T: Scalar> Clone for Graph<T> {
    fn clone(&self) -> Self {
        Graph {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to one tape node. Cheap to clone; the buffer lives on the graph.
#[derive(Debug)]
pub struct Tensor<T: Scalar> {
    graph: Graph<T>,
    id: usize,
    shape: Vec<usize>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            graph: self.graph.clone(),
            id: self.id,
            shape: self.shape.clone(),
        }
    }
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            inner: Rc::new(RefCell::new(GraphInner {
                nodes: Vec::new(),
                consumed: false,
            })),
        }
    }

    /// Number of nodes on the tape.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Insert a leaf tensor. `requires_grad` marks it for gradient
    /// accumulation during [`Tensor::backward`].
    pub fn leaf(
        &self,
        values: Vec<T>,
        shape: Vec<usize>,
        requires_grad: bool,
    ) -> Result<Tensor<T>> {
        if values.len() != numel_of(&shape) {
            return Err(Error::Shape(format!(
                "leaf buffer has {} values but shape {:?} needs {}",
                values.len(),
                shape,
                numel_of(&shape)
            )));
        }
        Ok(self.push(Op::Leaf, shape, values, requires_grad))
    }

    /// Insert a non-differentiable constant.
    pub fn constant(&self, values: Vec<T>, shape: Vec<usize>) -> Result<Tensor<T>> {
        self.leaf(values, shape, false)
    }

    pub fn scalar(&self, v: T) -> Tensor<T> {
        self.push(Op::Leaf, vec![], vec![v], false)
    }

    fn push(&self, op: Op<T>, shape: Vec<usize>, values: Vec<T>, requires_grad: bool) -> Tensor<T> {
        debug_assert_eq!(values.len(), numel_of(&shape));
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            op,
            shape: shape.clone(),
            values,
            requires_grad,
            grad: None,
        });
        Tensor {
            graph: self.clone(),
            id,
            shape,
        }
    }

    fn same_graph(&self, other: &Graph<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Flat concatenation of 1-D tensors into one 1-D tensor.
    pub fn concat(&self, parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        let mut values = Vec::new();
        let mut ids = Vec::with_capacity(parts.len());
        let mut requires_grad = false;
        for p in parts {
            if !self.same_graph(&p.graph) {
                return Err(Error::Contract("concat across graphs".into()));
            }
            if p.shape.len() != 1 {
                return Err(Error::Shape(format!(
                    "concat expects 1-D parts, got {:?}",
                    p.shape
                )));
            }
            values.extend_from_slice(&p.values_vec());
            ids.push(p.id);
            requires_grad |= p.requires_grad();
        }
        let len = values.len();
        Ok(self.push(Op::Concat { parts: ids }, vec![len], values, requires_grad))
    }

    /// Stack 1-D tensors of equal length into a `[n x d]` matrix.
    pub fn stack_rows(&self, parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let flat = self.concat(parts)?;
        let d = parts[0].shape[0];
        for p in parts {
            if p.shape[0] != d {
                return Err(Error::Shape(format!(
                    "stack_rows parts disagree on length: {} vs {}",
                    p.shape[0], d
                )));
            }
        }
        flat.reshape(vec![parts.len(), d])
    }

    /// Column-wise concatenation of `[m x n_i]` matrices.
    pub fn concat_cols(&self, parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_cols of zero tensors".into()));
        }
        let m = match parts[0].shape.as_slice() {
            [m, _] => *m,
            other => {
                return Err(Error::Shape(format!(
                    "concat_cols expects matrices, got {:?}",
                    other
                )))
            }
        };
        let mut widths = Vec::with_capacity(parts.len());
        let mut requires_grad = false;
        for p in parts {
            if !self.same_graph(&p.graph) {
                return Err(Error::Contract("concat_cols across graphs".into()));
            }
            match p.shape.as_slice() {
                [rm, n] if *rm == m => widths.push(*n),
                other => {
                    return Err(Error::Shape(format!(
                        "concat_cols part {:?} does not match {} rows",
                        other, m
                    )))
                }
            }
            requires_grad |= p.requires_grad();
        }
        let total: usize = widths.iter().sum();
        let mut values = vec![T::zero(); m * total];
        {
            let inner = self.inner.borrow();
            let mut col = 0;
            for (p, &w) in parts.iter().zip(&widths) {
                let src = &inner.nodes[p.id].values;
                for r in 0..m {
                    values[r * total + col..r * total + col + w]
                        .copy_from_slice(&src[r * w..(r + 1) * w]);
                }
                col += w;
            }
        }
        Ok(self.push(
            Op::ConcatCols {
                parts: parts.iter().map(|p| p.id).collect(),
            },
            vec![m, total],
            values,
            requires_grad,
        ))
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        numel_of(&self.shape)
    }

    pub fn graph(&self) -> &Graph<T> {
        &self.graph
    }

    /// Copy of the cached forward values.
    pub fn values_vec(&self) -> Vec<T> {
        self.graph.inner.borrow().nodes[self.id].values.clone()
    }

    /// Value of a scalar (single-element) tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.numel(), 1);
        self.graph.inner.borrow().nodes[self.id].values[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.inner.borrow().nodes[self.id].requires_grad
    }

    /// Gradient accumulated by the last `backward()`, if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.graph.inner.borrow().nodes[self.id].grad.clone()
    }

    fn unary(&self, op: Op<T>, shape: Vec<usize>, values: Vec<T>) -> Tensor<T> {
        let rg = self.requires_grad();
        self.graph.push(op, shape, values, rg)
    }

    fn check_same_graph(&self, other: &Tensor<T>) -> Result<()> {
        if !self.graph.same_graph(&other.graph) {
            return Err(Error::Contract(
                "operands belong to different graphs".into(),
            ));
        }
        Ok(())
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_elementwise(other, Op::Add(self.id, other.id), |a, b| a + b)
    }

    /// Elementwise difference; shapes must match exactly.
    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_elementwise(other, Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Elementwise (Hadamard) product; shapes must match exactly.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_elementwise(other, Op::Mul(self.id, other.id), |a, b| a * b)
    }

    fn zip_elementwise(
        &self,
        other: &Tensor<T>,
        op: Op<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        self.check_same_graph(other)?;
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "elementwise op on {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let (values, rg) = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[other.id];
            let values = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(&x, &y)| f(x, y))
                .collect();
            (values, a.requires_grad || b.requires_grad)
        };
        Ok(self.graph.push(op, self.shape.clone(), values, rg))
    }

    /// Multiply every element by a constant.
    pub fn scale(&self, c: T) -> Tensor<T> {
        let values = self.values_vec().iter().map(|&x| x * c).collect();
        self.unary(Op::Scale(self.id, c), self.shape.clone(), values)
    }

    /// Add a row vector `v[n]` to every row of `self[m x n]`.
    pub fn add_row(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_same_graph(v)?;
        let (m, n) = self.as_matrix()?;
        if v.shape != [n] {
            return Err(Error::Shape(format!(
                "add_row: matrix {:?} vs row {:?}",
                self.shape, v.shape
            )));
        }
        let (values, rg) = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id].values;
            let row = &inner.nodes[v.id].values;
            let mut out = a.clone();
            for r in 0..m {
                for (o, &b) in out[r * n..(r + 1) * n].iter_mut().zip(row.iter()) {
                    *o = *o + b;
                }
            }
            (
                out,
                inner.nodes[self.id].requires_grad || inner.nodes[v.id].requires_grad,
            )
        };
        Ok(self
            .graph
            .push(Op::AddRow(self.id, v.id), self.shape.clone(), values, rg))
    }

    fn as_matrix(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [m, n] => Ok((*m, *n)),
            other => Err(Error::Shape(format!("expected a matrix, got {:?}", other))),
        }
    }

    /// Standard matrix product `self[m x k] . other[k x n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_same_graph(other)?;
        let (m, k) = self.as_matrix()?;
        let (k2, n) = other.as_matrix()?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dimensions differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let (values, rg) = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id].values;
            let b = &inner.nodes[other.id].values;
            (
                matmul_kernel(a, b, m, k, n),
                inner.nodes[self.id].requires_grad || inner.nodes[other.id].requires_grad,
            )
        };
        Ok(self
            .graph
            .push(Op::Matmul(self.id, other.id), vec![m, n], values, rg))
    }

    pub fn transpose(&self) -> Result<Tensor<T>> {
        let (m, n) = self.as_matrix()?;
        let src = self.values_vec();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        Ok(self.unary(Op::Transpose(self.id), vec![n, m], out))
    }

    /// Elementwise max(0, x). The subgradient at exactly 0 is 0.
    pub fn relu(&self) -> Tensor<T> {
        let values = self
            .values_vec()
            .iter()
            .map(|&x| if x > T::zero() { x } else { T::zero() })
            .collect();
        self.unary(Op::Relu(self.id), self.shape.clone(), values)
    }

    /// Max-subtracted softmax along `axis`; every slice sums to 1.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        if axis >= self.shape.len() {
            return Err(Error::Shape(format!(
                "softmax axis {} invalid for shape {:?}",
                axis, self.shape
            )));
        }
        let src = self.values_vec();
        let mut out = src.clone();
        for_each_lane(&self.shape, axis, |lane| {
            softmax_lane(&src, &mut out, lane);
        });
        Ok(self.unary(
            Op::Softmax {
                input: self.id,
                axis,
            },
            self.shape.clone(),
            out,
        ))
    }

    /// Per-row mean-0/variance-1 normalization over the last dimension,
    /// followed by the affine map `gain * xhat + bias`.
    pub fn layer_norm(&self, gain: &Tensor<T>, bias: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        self.check_same_graph(gain)?;
        self.check_same_graph(bias)?;
        let d = *self
            .shape
            .last()
            .ok_or_else(|| Error::Shape("layer_norm on rank-0 tensor".into()))?;
        if gain.shape != [d] || bias.shape != [d] {
            return Err(Error::Shape(format!(
                "layer_norm: last dim {} vs gain {:?} / bias {:?}",
                d, gain.shape, bias.shape
            )));
        }
        let (values, rg) = {
            let inner = self.graph.inner.borrow();
            let x = &inner.nodes[self.id].values;
            let g = &inner.nodes[gain.id].values;
            let b = &inner.nodes[bias.id].values;
            let rows = x.len() / d;
            let mut out = vec![T::zero(); x.len()];
            for r in 0..rows {
                let row = &x[r * d..(r + 1) * d];
                let (mean, var) = mean_var(row);
                let inv = (var + eps).sqrt().recip();
                for j in 0..d {
                    out[r * d + j] = g[j] * ((row[j] - mean) * inv) + b[j];
                }
            }
            let rg = inner.nodes[self.id].requires_grad
                || inner.nodes[gain.id].requires_grad
                || inner.nodes[bias.id].requires_grad;
            (out, rg)
        };
        Ok(self.graph.push(
            Op::LayerNorm {
                input: self.id,
                gain: gain.id,
                bias: bias.id,
                eps,
            },
            self.shape.clone(),
            values,
            rg,
        ))
    }

    /// Inverted dropout: in training each element is zeroed with probability
    /// `p` and survivors are scaled by 1/(1-p); in inference this is the
    /// identity and consumes no randomness.
    pub fn dropout(&self, p: f64, training: bool, rng: &mut RngState) -> Result<Tensor<T>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Param(format!(
                "dropout probability must be in [0, 1), got {p}"
            )));
        }
        if !training || p == 0.0 {
            let values = self.values_vec();
            return Ok(self.unary(
                Op::Dropout {
                    input: self.id,
                    mask: vec![T::one(); values.len()],
                },
                self.shape.clone(),
                values,
            ));
        }
        let keep_scale = T::from_f64(1.0 / (1.0 - p));
        let src = self.values_vec();
        let mask: Vec<T> = (0..src.len())
            .map(|_| {
                if rng.next_f64() < p {
                    T::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let values = src.iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        Ok(self.unary(
            Op::Dropout {
                input: self.id,
                mask,
            },
            self.shape.clone(),
            values,
        ))
    }

    /// Mean over the batch of `-log softmax(logits)[target]`, computed in
    /// log-space. Logits must be `[batch x classes]`.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Tensor<T>> {
        let (b, c) = self.as_matrix()?;
        if targets.len() != b {
            return Err(Error::Shape(format!(
                "cross_entropy: {} logit rows vs {} targets",
                b,
                targets.len()
            )));
        }
        for (i, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(Error::Index(format!(
                    "cross_entropy target {} at row {} exceeds {} classes",
                    t, i, c
                )));
            }
        }
        let src = self.values_vec();
        let mut total = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            let row = &src[r * c..(r + 1) * c];
            total = total + log_sum_exp(row) - row[t];
        }
        let loss = total / T::from_usize(b);
        Ok(self.unary(
            Op::CrossEntropy {
                logits: self.id,
                targets: targets.to_vec(),
            },
            vec![],
            vec![loss],
        ))
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&self) -> Tensor<T> {
        let total = self
            .values_vec()
            .iter()
            .fold(T::zero(), |acc, &x| acc + x);
        self.unary(Op::Sum(self.id), vec![], vec![total])
    }

    /// Arithmetic mean over the rows of `self[l x d]` flagged valid.
    pub fn mean_rows(&self, valid: &[bool]) -> Result<Tensor<T>> {
        let (l, d) = self.as_matrix()?;
        if valid.len() != l {
            return Err(Error::Shape(format!(
                "mean_rows: {} rows vs {} validity flags",
                l,
                valid.len()
            )));
        }
        let count = valid.iter().filter(|&&v| v).count();
        if count == 0 {
            return Err(Error::Contract(
                "mean_rows requires at least one valid row".into(),
            ));
        }
        let src = self.values_vec();
        let mut out = vec![T::zero(); d];
        for (r, &ok) in valid.iter().enumerate() {
            if ok {
                for j in 0..d {
                    out[j] = out[j] + src[r * d + j];
                }
            }
        }
        let inv = T::from_usize(count).recip();
        for o in &mut out {
            *o = *o * inv;
        }
        Ok(self.unary(
            Op::MeanRows {
                input: self.id,
                valid: valid.to_vec(),
            },
            vec![d],
            out,
        ))
    }

    /// Extract row `index` of `self[l x d]` as a 1-D tensor.
    pub fn row(&self, index: usize) -> Result<Tensor<T>> {
        let (l, d) = self.as_matrix()?;
        if index >= l {
            return Err(Error::Index(format!("row {} of {} rows", index, l)));
        }
        let src = self.values_vec();
        let out = src[index * d..(index + 1) * d].to_vec();
        Ok(self.unary(
            Op::Row {
                input: self.id,
                index,
            },
            vec![d],
            out,
        ))
    }

    /// Columns `[start, end)` of `self[m x n]`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor<T>> {
        let (m, n) = self.as_matrix()?;
        if start >= end || end > n {
            return Err(Error::Shape(format!(
                "slice_cols {}..{} of {} columns",
                start, end, n
            )));
        }
        let w = end - start;
        let src = self.values_vec();
        let mut out = vec![T::zero(); m * w];
        for r in 0..m {
            out[r * w..(r + 1) * w].copy_from_slice(&src[r * n + start..r * n + end]);
        }
        Ok(self.unary(
            Op::SliceCols {
                input: self.id,
                start,
                end,
            },
            vec![m, w],
            out,
        ))
    }

    /// Reinterpret the buffer with a new shape of equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor<T>> {
        if numel_of(&shape) != self.numel() {
            return Err(Error::Shape(format!(
                "reshape {:?} -> {:?} changes element count",
                self.shape, shape
            )));
        }
        let values = self.values_vec();
        Ok(self.unary(Op::Reshape(self.id), shape, values))
    }

    /// Gather rows of an embedding table: `table[v x d]` indexed by `ids`.
    pub fn embedding(&self, ids: &[usize]) -> Result<Tensor<T>> {
        let (v, d) = self.as_matrix()?;
        for &id in ids {
            if id >= v {
                return Err(Error::Index(format!(
                    "embedding id {} exceeds table size {}",
                    id, v
                )));
            }
        }
        let src = self.values_vec();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        Ok(self.unary(
            Op::Embedding {
                table: self.id,
                ids: ids.to_vec(),
            },
            vec![ids.len(), d],
            out,
        ))
    }
}

// ── Kernels ─────────────────────────────────────────────────────────

/// C[m x n] = A[m x k] . B[k x n], ikj loop order for contiguous inner access.
pub(crate) fn matmul_kernel<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

/// C[m x k] = G[m x n] . B^T where B is [k x n] (dot products of rows).
pub(crate) fn matmul_nt_kernel<T: Scalar>(
    g: &[T],
    b: &[T],
    m: usize,
    n: usize,
    k: usize,
) -> Vec<T> {
    let mut c = vec![T::zero(); m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for (&gv, &bv) in grow.iter().zip(brow) {
                acc = acc + gv * bv;
            }
            c[i * k + p] = acc;
        }
    }
    c
}

/// C[k x n] = A^T . G where A is [m x k] and G is [m x n].
pub(crate) fn matmul_tn_kernel<T: Scalar>(
    a: &[T],
    g: &[T],
    m: usize,
    k: usize,
    n: usize,
) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &gv) in crow.iter_mut().zip(grow) {
                *cv = *cv + av * gv;
            }
        }
    }
    c
}

pub(crate) fn mean_var<T: Scalar>(row: &[T]) -> (T, T) {
    let n = T::from_usize(row.len());
    let mean = row.iter().fold(T::zero(), |acc, &x| acc + x) / n;
    let var = row
        .iter()
        .fold(T::zero(), |acc, &x| acc + (x - mean) * (x - mean))
        / n;
    (mean, var)
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let sum = row
        .iter()
        .fold(T::zero(), |acc, &x| acc + (x - max).exp());
    max + sum.ln()
}

/// Index set of one softmax lane: `base + k * stride` for `k in 0..len`.
#[derive(Clone, Copy)]
pub(crate) struct Lane {
    pub base: usize,
    pub stride: usize,
    pub len: usize,
}

impl Lane {
    pub fn at(&self, k: usize) -> usize {
        self.base + k * self.stride
    }
}

/// Visit every 1-D lane along `axis` of a row-major tensor.
pub(crate) fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(Lane)) {
    let len = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    for o in 0..outer {
        for s in 0..stride {
            f(Lane {
                base: o * len * stride + s,
                stride,
                len,
            });
        }
    }
}

fn softmax_lane<T: Scalar>(src: &[T], out: &mut [T], lane: Lane) {
    let mut max = T::neg_infinity();
    for k in 0..lane.len {
        max = max.max(src[lane.at(k)]);
    }
    let mut sum = T::zero();
    for k in 0..lane.len {
        let e = (src[lane.at(k)] - max).exp();
        out[lane.at(k)] = e;
        sum = sum + e;
    }
    let inv = sum.recip();
    for k in 0..lane.len {
        out[lane.at(k)] = out[lane.at(k)] * inv;
    }
}

#[cfg(test)]
mod tests;
