//! Central-difference gradient checking.

use super::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Worst relative disagreement between two gradient vectors. The denominator
/// is floored so near-zero coordinates are compared on an absolute scale of
/// `floor * rel_err` instead of blowing up.
pub fn max_rel_err<T: Scalar>(analytic: &[T], numeric: &[T], floor: T) -> T {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(T::zero(), |m, e| m.max(e))
}

/// Compare `backward()` gradients of a scalar-valued tensor function against
/// central finite differences `(f(x+h) - f(x-h)) / 2h`, coordinate by
/// coordinate. Returns the max relative error. `f` must be deterministic
/// (run dropout in inference mode).
pub fn finite_diff_check<T, F>(f: F, x: &[T], shape: &[usize], h: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&Graph<T>, &Tensor<T>) -> Result<Tensor<T>>,
{
    let graph = Graph::new();
    let leaf = graph.leaf(x.to_vec(), shape.to_vec(), true)?;
    let loss = f(&graph, &leaf)?;
    if loss.numel() != 1 {
        return Err(Error::Shape(format!(
            "finite_diff_check needs a scalar function, got shape {:?}",
            loss.shape()
        )));
    }
    loss.backward()?;
    let analytic = leaf
        .grad()
        .ok_or_else(|| Error::GraphState("input received no gradient".into()))?;

    let eval = |vals: &[T]| -> Result<T> {
        let g = Graph::new();
        let t = g.leaf(vals.to_vec(), shape.to_vec(), false)?;
        Ok(f(&g, &t)?.item())
    };

    let mut numeric = vec![T::zero(); x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = eval(&probe)?;
        probe[i] = orig - h;
        let fm = eval(&probe)?;
        probe[i] = orig;
        numeric[i] = (fp - fm) / (h + h);
    }
    Ok(max_rel_err(&analytic, &numeric, T::FD_FLOOR))
}
