//! Reverse pass over the tape.

use super::{
    for_each_lane, matmul_nt_kernel, matmul_tn_kernel, mean_var, Node, Op, Tensor,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

impl<T: Scalar> Tensor<T> {
    /// Run reverse-mode accumulation from this scalar tensor. Gradients are
    /// stored on every node along the grad path; read them with
    /// [`Tensor::grad`]. A graph can be walked backward once; a second call
    /// is an error.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Shape(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        let mut inner = self.graph.inner.borrow_mut();
        if inner.consumed {
            return Err(Error::GraphState(
                "backward already called on this graph".into(),
            ));
        }
        inner.consumed = true;
        let nodes = &mut inner.nodes;
        nodes[self.id].grad = Some(vec![T::one()]);

        for id in (0..=self.id).rev() {
            let grad = match nodes[id].grad.take() {
                Some(g) => g,
                None => continue,
            };
            propagate(nodes, id, &grad);
            nodes[id].grad = Some(grad);
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(node: &mut Node<T>, contrib: Vec<T>) {
    match &mut node.grad {
        Some(g) => {
            for (gv, cv) in g.iter_mut().zip(contrib) {
                *gv = *gv + cv;
            }
        }
        None => node.grad = Some(contrib),
    }
}

fn add_if_needed<T: Scalar>(nodes: &mut [Node<T>], id: usize, contrib: Option<Vec<T>>) {
    if let Some(c) = contrib {
        if nodes[id].requires_grad {
            accumulate(&mut nodes[id], c);
        }
    }
}

/// Compute and deposit this node's gradient contributions to its parents.
/// Parents always have smaller ids, so `nodes[..id]` contains all of them.
fn propagate<T: Scalar>(nodes: &mut [Node<T>], id: usize, g: &[T]) {
    let (parents, rest) = nodes.split_at_mut(id);
    let node = &rest[0];
    if !node.requires_grad {
        return;
    }
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            let (a, b) = (*a, *b);
            add_if_needed(parents, a, Some(g.to_vec()));
            add_if_needed(parents, b, Some(g.to_vec()));
        }
        Op::Sub(a, b) => {
            let (a, b) = (*a, *b);
            add_if_needed(parents, a, Some(g.to_vec()));
            add_if_needed(parents, b, Some(g.iter().map(|&x| -x).collect()));
        }
        Op::Mul(a, b) => {
            let (a, b) = (*a, *b);
            let ga = if parents[a].requires_grad {
                Some(
                    g.iter()
                        .zip(&parents[b].values)
                        .map(|(&gv, &bv)| gv * bv)
                        .collect(),
                )
            } else {
                None
            };
            let gb = if parents[b].requires_grad {
                Some(
                    g.iter()
                        .zip(&parents[a].values)
                        .map(|(&gv, &av)| gv * av)
                        .collect(),
                )
            } else {
                None
            };
            add_if_needed(parents, a, ga);
            add_if_needed(parents, b, gb);
        }
        Op::Scale(a, c) => {
            let (a, c) = (*a, *c);
            add_if_needed(parents, a, Some(g.iter().map(|&x| x * c).collect()));
        }
        Op::AddRow(a, v) => {
            let (a, v) = (*a, *v);
            let n = parents[v].values.len();
            add_if_needed(parents, a, Some(g.to_vec()));
            if parents[v].requires_grad {
                let mut gv = vec![T::zero(); n];
                for chunk in g.chunks_exact(n) {
                    for (o, &x) in gv.iter_mut().zip(chunk) {
                        *o = *o + x;
                    }
                }
                add_if_needed(parents, v, Some(gv));
            }
        }
        Op::Matmul(a, b) => {
            let (a, b) = (*a, *b);
            let (m, k) = (parents[a].shape[0], parents[a].shape[1]);
            let n = parents[b].shape[1];
            let ga = if parents[a].requires_grad {
                // dA = G . B^T
                Some(matmul_nt_kernel(g, &parents[b].values, m, n, k))
            } else {
                None
            };
            let gb = if parents[b].requires_grad {
                // dB = A^T . G
                Some(matmul_tn_kernel(&parents[a].values, g, m, k, n))
            } else {
                None
            };
            add_if_needed(parents, a, ga);
            add_if_needed(parents, b, gb);
        }
        Op::Transpose(a) => {
            let a = *a;
            // node shape is [n, m]; parent is [m, n]
            let (n, m) = (node.shape[0], node.shape[1]);
            let mut ga = vec![T::zero(); m * n];
            for i in 0..n {
                for j in 0..m {
                    ga[j * n + i] = g[i * m + j];
                }
            }
            add_if_needed(parents, a, Some(ga));
        }
        Op::Relu(a) => {
            let a = *a;
            let ga = g
                .iter()
                .zip(&parents[a].values)
                .map(|(&gv, &x)| if x > T::zero() { gv } else { T::zero() })
                .collect();
            add_if_needed(parents, a, Some(ga));
        }
        Op::Softmax { input, axis } => {
            let (input, axis) = (*input, *axis);
            let s = &node.values;
            let mut ga = vec![T::zero(); s.len()];
            for_each_lane(&node.shape, axis, |lane| {
                let mut dot = T::zero();
                for k in 0..lane.len {
                    let idx = lane.at(k);
                    dot = dot + g[idx] * s[idx];
                }
                for k in 0..lane.len {
                    let idx = lane.at(k);
                    ga[idx] = s[idx] * (g[idx] - dot);
                }
            });
            add_if_needed(parents, input, Some(ga));
        }
        Op::LayerNorm {
            input,
            gain,
            bias,
            eps,
        } => {
            let (input, gain, bias, eps) = (*input, *gain, *bias, *eps);
            let d = *node.shape.last().unwrap();
            let x = &parents[input].values;
            let gn = &parents[gain].values;
            let rows = x.len() / d;
            let inv_d = T::from_usize(d).recip();

            let mut gx = vec![T::zero(); x.len()];
            let mut ggain = vec![T::zero(); d];
            let mut gbias = vec![T::zero(); d];
            for r in 0..rows {
                let row = &x[r * d..(r + 1) * d];
                let grow = &g[r * d..(r + 1) * d];
                let (mean, var) = mean_var(row);
                let inv = (var + eps).sqrt().recip();
                // dxhat, and the two row means the input gradient needs
                let mut mean_dxhat = T::zero();
                let mut mean_dxhat_xhat = T::zero();
                let mut xhat = vec![T::zero(); d];
                let mut dxhat = vec![T::zero(); d];
                for j in 0..d {
                    xhat[j] = (row[j] - mean) * inv;
                    dxhat[j] = grow[j] * gn[j];
                    ggain[j] = ggain[j] + grow[j] * xhat[j];
                    gbias[j] = gbias[j] + grow[j];
                    mean_dxhat = mean_dxhat + dxhat[j];
                    mean_dxhat_xhat = mean_dxhat_xhat + dxhat[j] * xhat[j];
                }
                mean_dxhat = mean_dxhat * inv_d;
                mean_dxhat_xhat = mean_dxhat_xhat * inv_d;
                for j in 0..d {
                    gx[r * d + j] =
                        inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                }
            }
            add_if_needed(parents, input, Some(gx));
            add_if_needed(parents, gain, Some(ggain));
            add_if_needed(parents, bias, Some(gbias));
        }
        Op::Dropout { input, mask } => {
            let input = *input;
            let ga = g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
            add_if_needed(parents, input, Some(ga));
        }
        Op::CrossEntropy { logits, targets } => {
            let logits_id = *logits;
            let b = targets.len();
            let c = parents[logits_id].shape[1];
            let x = &parents[logits_id].values;
            let scale = g[0] / T::from_usize(b);
            let mut ga = vec![T::zero(); x.len()];
            for (r, &t) in targets.iter().enumerate() {
                let row = &x[r * c..(r + 1) * c];
                let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                let sum = row
                    .iter()
                    .fold(T::zero(), |acc, &v| acc + (v - max).exp());
                for j in 0..c {
                    let p = (row[j] - max).exp() / sum;
                    let indicator = if j == t { T::one() } else { T::zero() };
                    ga[r * c + j] = (p - indicator) * scale;
                }
            }
            add_if_needed(parents, logits_id, Some(ga));
        }
        Op::Sum(a) => {
            let a = *a;
            let n = parents[a].values.len();
            add_if_needed(parents, a, Some(vec![g[0]; n]));
        }
        Op::MeanRows { input, valid } => {
            let input = *input;
            let d = node.shape[0];
            let count = valid.iter().filter(|&&v| v).count();
            let inv = T::from_usize(count).recip();
            let mut ga = vec![T::zero(); valid.len() * d];
            for (r, &ok) in valid.iter().enumerate() {
                if ok {
                    for j in 0..d {
                        ga[r * d + j] = g[j] * inv;
                    }
                }
            }
            add_if_needed(parents, input, Some(ga));
        }
        Op::Row { input, index } => {
            let (input, index) = (*input, *index);
            let d = node.shape[0];
            let l = parents[input].shape[0];
            let mut ga = vec![T::zero(); l * d];
            ga[index * d..(index + 1) * d].copy_from_slice(g);
            add_if_needed(parents, input, Some(ga));
        }
        Op::Concat { parts } => {
            let parts = parts.clone();
            let mut offset = 0;
            for pid in parts {
                let len = parents[pid].values.len();
                let contrib = g[offset..offset + len].to_vec();
                add_if_needed(parents, pid, Some(contrib));
                offset += len;
            }
        }
        Op::ConcatCols { parts } => {
            let parts = parts.clone();
            let m = node.shape[0];
            let total = node.shape[1];
            let mut col = 0;
            for pid in parts {
                let w = parents[pid].shape[1];
                let mut contrib = vec![T::zero(); m * w];
                for r in 0..m {
                    contrib[r * w..(r + 1) * w]
                        .copy_from_slice(&g[r * total + col..r * total + col + w]);
                }
                add_if_needed(parents, pid, Some(contrib));
                col += w;
            }
        }
        Op::SliceCols { input, start, end } => {
            let (input, start, end) = (*input, *start, *end);
            let (m, n) = (parents[input].shape[0], parents[input].shape[1]);
            let w = end - start;
            let mut ga = vec![T::zero(); m * n];
            for r in 0..m {
                ga[r * n + start..r * n + end].copy_from_slice(&g[r * w..(r + 1) * w]);
            }
            add_if_needed(parents, input, Some(ga));
        }
        Op::Reshape(a) => {
            let a = *a;
            add_if_needed(parents, a, Some(g.to_vec()));
        }
        Op::Embedding { table, ids } => {
            let table_id = *table;
            let ids = ids.clone();
            let d = node.shape[1];
            let v = parents[table_id].shape[0];
            let mut ga = vec![T::zero(); v * d];
            for (l, &id) in ids.iter().enumerate() {
                for j in 0..d {
                    ga[id * d + j] = ga[id * d + j] + g[l * d + j];
                }
            }
            add_if_needed(parents, table_id, Some(ga));
        }
    }
}
