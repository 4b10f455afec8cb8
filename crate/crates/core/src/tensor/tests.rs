use super::*;
use crate::rng::RngState;

fn randn<T: Scalar>(n: usize, seed: u64) -> Vec<T> {
    let mut rng = RngState::new(seed);
    (0..n).map(|_| T::from_f64(rng.normal())).collect()
}

fn identity<T: Scalar>(n: usize) -> Vec<T> {
    let mut m = vec![T::zero(); n * n];
    for i in 0..n {
        m[i * n + i] = T::one();
    }
    m
}

#[test]
fn matmul_identity_case() {
    let g: Graph<f32> = Graph::new();
    let i2 = g.constant(identity(2), vec![2, 2]).unwrap();
    let b = g.constant(vec![3.0, 4.0, 5.0, 6.0], vec![2, 2]).unwrap();
    let out = i2.matmul(&b).unwrap();
    assert_eq!(out.values_vec(), vec![3.0, 4.0, 5.0, 6.0]);
}

#[test]
fn matmul_identity_is_exact_for_random_matrices() {
    let g: Graph<f32> = Graph::new();
    let x_vals: Vec<f32> = randn(5 * 3, 11);
    let i5 = g.constant(identity(5), vec![5, 5]).unwrap();
    let x = g.constant(x_vals.clone(), vec![5, 3]).unwrap();
    let out = i5.matmul(&x).unwrap();
    assert_eq!(out.values_vec(), x_vals);
}

#[test]
fn matmul_zero_case() {
    let g: Graph<f32> = Graph::new();
    let a = g.constant(vec![1.0, 2.0], vec![1, 2]).unwrap();
    let b = g.constant(vec![0.0, 0.0], vec![2, 1]).unwrap();
    let out = a.matmul(&b).unwrap();
    assert_eq!(out.shape(), &[1, 1]);
    assert_eq!(out.values_vec(), vec![0.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let g: Graph<f32> = Graph::new();
    let a = g.constant(vec![0.0; 6], vec![2, 3]).unwrap();
    let b = g.constant(vec![0.0; 8], vec![2, 4]).unwrap();
    let err = a.matmul(&b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[2, 4]"), "{msg}");
}

// Gradient of sum((A.B) hadamard (A.B)) is quadratic in each operand, so the
// central difference is exact up to rounding.
fn matmul_square_loss<T: Scalar>(
    g: &Graph<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    let _ = g;
    let prod = a.matmul(b)?;
    Ok(prod.mul(&prod)?.sum())
}

#[test]
fn matmul_gradient_matches_finite_differences_f32() {
    let b_vals: Vec<f32> = randn(4 * 2, 21);
    let a_vals: Vec<f32> = randn(3 * 4, 22);

    let err = finite_diff_check(
        |g, a| {
            let b = g.constant(b_vals.clone(), vec![4, 2])?;
            matmul_square_loss(g, a, &b)
        },
        &a_vals,
        &[3, 4],
        f32::FD_STEP,
    )
    .unwrap();
    assert!(err < 1e-3, "wrt lhs: {err}");

    let err = finite_diff_check(
        |g, b| {
            let a = g.constant(a_vals.clone(), vec![3, 4])?;
            matmul_square_loss(g, &a, b)
        },
        &b_vals,
        &[4, 2],
        f32::FD_STEP,
    )
    .unwrap();
    assert!(err < 1e-3, "wrt rhs: {err}");
}

#[test]
fn matmul_gradient_matches_finite_differences_f64() {
    let b_vals: Vec<f64> = randn(4 * 2, 31);
    let a_vals: Vec<f64> = randn(3 * 4, 32);
    let err = finite_diff_check(
        |g, a| {
            let b = g.constant(b_vals.clone(), vec![4, 2])?;
            matmul_square_loss(g, a, &b)
        },
        &a_vals,
        &[3, 4],
        f64::FD_STEP,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn relu_basic_and_all_negative() {
    let g: Graph<f32> = Graph::new();
    let x = g
        .leaf(vec![-1.0, 0.0, 2.0], vec![3], true)
        .unwrap();
    let y = x.relu();
    assert_eq!(y.values_vec(), vec![0.0, 0.0, 2.0]);

    let g: Graph<f32> = Graph::new();
    let x = g.leaf(vec![-3.0, -0.5, -7.1], vec![3], true).unwrap();
    let y = x.relu();
    assert_eq!(y.values_vec(), vec![0.0, 0.0, 0.0]);
    y.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 0.0]);
}

#[test]
fn relu_gradient_matches_finite_differences_away_from_kink() {
    // All coordinates well away from 0 relative to the step.
    let x: Vec<f64> = vec![-1.7, 2.3, 0.9, -0.4, 1.2, -2.8];
    let err = finite_diff_check(
        |_, t| Ok(t.relu().mul(&t.relu())?.sum()),
        &x,
        &[6],
        f64::FD_STEP,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn softmax_uniform_logits() {
    let g: Graph<f64> = Graph::new();
    let x = g.constant(vec![0.5; 7], vec![7]).unwrap();
    let s = x.softmax(0).unwrap();
    for v in s.values_vec() {
        assert!((v - 1.0 / 7.0).abs() < 1e-12, "{v}");
    }
}

#[test]
fn softmax_is_stabilized_against_overflow() {
    let g: Graph<f32> = Graph::new();
    let x = g.constant(vec![1000.0, 0.0], vec![2]).unwrap();
    let s = x.softmax(0).unwrap().values_vec();
    assert!(s.iter().all(|v| v.is_finite()));
    assert!((s[0] - 1.0).abs() < 1e-6);
    assert!(s[1] < 1e-6);
}

#[test]
fn softmax_rows_sum_to_one_and_are_positive() {
    let g: Graph<f32> = Graph::new();
    let x = g.constant(randn(5 * 7, 40), vec![5, 7]).unwrap();
    let s = x.softmax(1).unwrap().values_vec();
    for r in 0..5 {
        let row = &s[r * 7..(r + 1) * 7];
        let sum: f32 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6, "row {r} sums to {sum}");
        assert!(row.iter().all(|&v| v > 0.0));
    }
}

#[test]
fn softmax_axis_zero_normalizes_columns() {
    let g: Graph<f64> = Graph::new();
    let x = g.constant(randn(3 * 4, 41), vec![3, 4]).unwrap();
    let s = x.softmax(0).unwrap().values_vec();
    for c in 0..4 {
        let sum: f64 = (0..3).map(|r| s[r * 4 + c]).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}

#[test]
fn softmax_jacobian_matches_finite_differences() {
    let x: Vec<f64> = randn(7, 42);
    let w: Vec<f64> = randn(7, 43);
    let err = finite_diff_check(
        |g, t| {
            let w = g.constant(w.clone(), vec![7])?;
            Ok(t.softmax(0)?.mul(&w)?.sum())
        },
        &x,
        &[7],
        f64::FD_STEP,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");

    let x32: Vec<f32> = randn(7, 44);
    let w32: Vec<f32> = randn(7, 45);
    let err = finite_diff_check(
        |g, t| {
            let w = g.constant(w32.clone(), vec![7])?;
            Ok(t.softmax(0)?.mul(&w)?.sum())
        },
        &x32,
        &[7],
        f32::FD_STEP,
    )
    .unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn layer_norm_constant_row_gives_zeros() {
    let g: Graph<f64> = Graph::new();
    let x = g.constant(vec![4.2; 8], vec![8]).unwrap();
    let gain = g.constant(vec![1.0; 8], vec![8]).unwrap();
    let bias = g.constant(vec![0.0; 8], vec![8]).unwrap();
    let y = x.layer_norm(&gain, &bias, 1e-5).unwrap();
    for v in y.values_vec() {
        assert_eq!(v, 0.0);
    }
}

#[test]
fn layer_norm_zero_gain_gives_bias() {
    let g: Graph<f64> = Graph::new();
    let x = g.constant(randn(2 * 6, 50), vec![2, 6]).unwrap();
    let gain = g.constant(vec![0.0; 6], vec![6]).unwrap();
    let bias_vals: Vec<f64> = randn(6, 51);
    let bias = g.constant(bias_vals.clone(), vec![6]).unwrap();
    let y = x.layer_norm(&gain, &bias, 1e-5).unwrap().values_vec();
    for r in 0..2 {
        for j in 0..6 {
            assert_eq!(y[r * 6 + j], bias_vals[j]);
        }
    }
}

#[test]
fn layer_norm_output_statistics() {
    let g: Graph<f64> = Graph::new();
    let d = 64;
    let x = g.constant(randn(d, 52), vec![d]).unwrap();
    let gain = g.constant(vec![1.0; d], vec![d]).unwrap();
    let bias = g.constant(vec![0.0; d], vec![d]).unwrap();
    let y = x.layer_norm(&gain, &bias, 1e-10).unwrap().values_vec();
    let (mean, var) = mean_var(&y);
    assert!(mean.abs() < 1e-6, "mean {mean}");
    assert!((var - 1.0).abs() < 1e-4, "var {var}");
}

#[test]
fn layer_norm_gradient_matches_finite_differences() {
    let d = 6;
    let x: Vec<f64> = randn(2 * d, 53);
    let gain_vals: Vec<f64> = randn(d, 54);
    let bias_vals: Vec<f64> = randn(d, 55);
    let w: Vec<f64> = randn(2 * d, 56);

    // wrt input
    let err = finite_diff_check(
        |g, t| {
            let gain = g.constant(gain_vals.clone(), vec![d])?;
            let bias = g.constant(bias_vals.clone(), vec![d])?;
            let w = g.constant(w.clone(), vec![2, d])?;
            Ok(t.layer_norm(&gain, &bias, 1e-5)?.mul(&w)?.sum())
        },
        &x,
        &[2, d],
        f64::FD_STEP,
    )
    .unwrap();
    assert!(err < 1e-5, "wrt input: {err}");

    // wrt gain and bias
    let err = finite_diff_check(
        |g, gain| {
            let x = g.constant(x.clone(), vec![2, d])?;
            let bias = g.constant(bias_vals.clone(), vec![d])?;
            let w = g.constant(w.clone(), vec![2, d])?;
            Ok(x.layer_norm(gain, &bias, 1e-5)?.mul(&w)?.sum())
        },
        &gain_vals,
        &[d],
        f64::FD_STEP,
    )
    .unwrap();
    assert!(err < 1e-5, "wrt gain: {err}");
}

#[test]
fn dropout_inference_is_identity() {
    let g: Graph<f32> = Graph::new();
    let vals: Vec<f32> = randn(32, 60);
    let x = g.constant(vals.clone(), vec![32]).unwrap();
    let mut rng = RngState::new(0);
    let y = x.dropout(0.3, false, &mut rng).unwrap();
    assert_eq!(y.values_vec(), vals);
}

#[test]
fn dropout_p_zero_is_identity() {
    let g: Graph<f32> = Graph::new();
    let vals: Vec<f32> = randn(32, 61);
    let x = g.constant(vals.clone(), vec![32]).unwrap();
    let mut rng = RngState::new(0);
    let y = x.dropout(0.0, true, &mut rng).unwrap();
    assert_eq!(y.values_vec(), vals);
}

#[test]
fn dropout_rejects_p_of_one_or_more() {
    let g: Graph<f32> = Graph::new();
    let x = g.constant(vec![1.0], vec![1]).unwrap();
    let mut rng = RngState::new(0);
    assert!(matches!(
        x.dropout(1.0, true, &mut rng),
        Err(Error::Param(_))
    ));
    assert!(matches!(
        x.dropout(1.5, true, &mut rng),
        Err(Error::Param(_))
    ));
}

#[test]
fn dropout_monte_carlo_statistics() {
    let n = 100_000;
    let g: Graph<f64> = Graph::new();
    let x = g.constant(vec![1.0; n], vec![n]).unwrap();
    let mut rng = RngState::new(42);
    let y = x.dropout(0.3, true, &mut rng).unwrap().values_vec();
    let zeros = y.iter().filter(|&&v| v == 0.0).count();
    let zero_rate = zeros as f64 / n as f64;
    assert!((zero_rate - 0.3).abs() < 0.01, "zero rate {zero_rate}");
    let mean = y.iter().sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
}

#[test]
fn dropout_same_seed_same_mask() {
    let vals: Vec<f32> = randn(256, 62);
    let run = |seed: u64| {
        let g: Graph<f32> = Graph::new();
        let x = g.constant(vals.clone(), vec![256]).unwrap();
        let mut rng = RngState::new(seed);
        x.dropout(0.3, true, &mut rng).unwrap().values_vec()
    };
    assert_eq!(run(7), run(7));
    assert_ne!(run(7), run(8));
}

#[test]
fn cross_entropy_uniform_logits_is_ln_seven() {
    let g: Graph<f64> = Graph::new();
    let x = g.constant(vec![0.0; 2 * 7], vec![2, 7]).unwrap();
    let loss = x.cross_entropy(&[0, 5]).unwrap();
    assert!((loss.item() - (7.0f64).ln()).abs() < 1e-12);
}

#[test]
fn cross_entropy_dominant_correct_logit_is_near_zero() {
    let g: Graph<f64> = Graph::new();
    let mut logits = vec![0.0; 7];
    logits[3] += 1e4;
    let x = g.constant(logits, vec![1, 7]).unwrap();
    let loss = x.cross_entropy(&[3]).unwrap();
    assert!(loss.item().abs() < 1e-9, "{}", loss.item());
}

#[test]
fn cross_entropy_rejects_out_of_range_target() {
    let g: Graph<f32> = Graph::new();
    let x = g.constant(vec![0.0; 7], vec![1, 7]).unwrap();
    assert!(matches!(x.cross_entropy(&[7]), Err(Error::Index(_))));
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let logits: Vec<f64> = randn(4 * 7, 70);
    let targets = [2usize, 0, 6, 3];
    let err = finite_diff_check(
        |_, t| t.cross_entropy(&targets),
        &logits,
        &[4, 7],
        f64::FD_STEP,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");

    let logits32: Vec<f32> = randn(4 * 7, 71);
    let err = finite_diff_check(
        |_, t| t.cross_entropy(&targets),
        &logits32,
        &[4, 7],
        f32::FD_STEP,
    )
    .unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn backward_of_sum_is_ones() {
    let g: Graph<f32> = Graph::new();
    let x = g.leaf(randn(2 * 3, 80), vec![2, 3], true).unwrap();
    x.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
}

#[test]
fn backward_of_zero_scaled_input_is_zeros() {
    let g: Graph<f32> = Graph::new();
    let x = g.leaf(randn(5, 81), vec![5], true).unwrap();
    x.scale(0.0).sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.0; 5]);
}

#[test]
fn backward_twice_is_an_error() {
    let g: Graph<f32> = Graph::new();
    let x = g.leaf(vec![1.0, 2.0], vec![2], true).unwrap();
    let loss = x.sum();
    loss.backward().unwrap();
    assert!(matches!(loss.backward(), Err(Error::GraphState(_))));
}

#[test]
fn backward_of_non_scalar_is_a_shape_error() {
    let g: Graph<f32> = Graph::new();
    let x = g.leaf(vec![1.0, 2.0], vec![2], true).unwrap();
    assert!(matches!(x.relu().backward(), Err(Error::Shape(_))));
}

#[test]
fn gradient_accumulates_across_shared_use() {
    // loss = sum(x) + sum(x) => grad = 2 everywhere
    let g: Graph<f64> = Graph::new();
    let x = g.leaf(vec![1.0, -2.0, 3.0], vec![3], true).unwrap();
    let loss = x.sum().add(&x.sum()).unwrap();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 2.0, 2.0]);
}

#[test]
fn constants_receive_no_gradient() {
    let g: Graph<f32> = Graph::new();
    let x = g.leaf(vec![1.0, 2.0], vec![2], true).unwrap();
    let c = g.constant(vec![3.0, 4.0], vec![2]).unwrap();
    x.mul(&c).unwrap().sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![3.0, 4.0]);
    assert!(c.grad().is_none());
}

#[test]
fn finite_diff_check_analytic_square() {
    // f(x) = x^2 at x = 3: analytic 6, central difference exactly 6.
    let err = finite_diff_check(
        |_, t| Ok(t.mul(t)?.sum()),
        &[3.0f64],
        &[1],
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn finite_diff_check_linear_is_exact_up_to_rounding() {
    let w: Vec<f64> = randn(6, 90);
    let x: Vec<f64> = randn(6, 91);
    let err = finite_diff_check(
        |g, t| {
            let w = g.constant(w.clone(), vec![6])?;
            Ok(t.mul(&w)?.sum())
        },
        &x,
        &[6],
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn embedding_gathers_and_scatters() {
    let g: Graph<f64> = Graph::new();
    let table = g
        .leaf(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![3, 2], true)
        .unwrap();
    let seq = table.embedding(&[2, 0, 2]).unwrap();
    assert_eq!(seq.values_vec(), vec![5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
    seq.sum().backward().unwrap();
    // Row 2 gathered twice, row 0 once, row 1 never.
    assert_eq!(table.grad().unwrap(), vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
}

#[test]
fn embedding_rejects_out_of_range_id() {
    let g: Graph<f32> = Graph::new();
    let table = g.constant(vec![0.0; 6], vec![3, 2]).unwrap();
    assert!(matches!(table.embedding(&[3]), Err(Error::Index(_))));
}

#[test]
fn slice_and_concat_cols_roundtrip_with_gradients() {
    let vals: Vec<f64> = randn(3 * 4, 95);
    let g: Graph<f64> = Graph::new();
    let x = g.leaf(vals.clone(), vec![3, 4], true).unwrap();
    let left = x.slice_cols(0, 2).unwrap();
    let right = x.slice_cols(2, 4).unwrap();
    let back = g.concat_cols(&[&left, &right]).unwrap();
    assert_eq!(back.values_vec(), vals);
    back.mul(&back).unwrap().sum().backward().unwrap();
    let grad = x.grad().unwrap();
    for (gv, v) in grad.iter().zip(&vals) {
        assert!((gv - 2.0 * v).abs() < 1e-12);
    }
}

#[test]
fn mean_rows_respects_validity_mask() {
    let g: Graph<f64> = Graph::new();
    let x = g
        .leaf(vec![1.0, 2.0, 10.0, 20.0, 3.0, 4.0], vec![3, 2], true)
        .unwrap();
    let m = x.mean_rows(&[true, false, true]).unwrap();
    assert_eq!(m.values_vec(), vec![2.0, 3.0]);
    m.sum().backward().unwrap();
    assert_eq!(
        x.grad().unwrap(),
        vec![0.5, 0.5, 0.0, 0.0, 0.5, 0.5]
    );
}

#[test]
fn mean_rows_rejects_all_invalid() {
    let g: Graph<f64> = Graph::new();
    let x = g.constant(vec![0.0; 4], vec![2, 2]).unwrap();
    assert!(matches!(
        x.mean_rows(&[false, false]),
        Err(Error::Contract(_))
    ));
}

#[test]
fn row_extraction_and_gradient() {
    let g: Graph<f64> = Graph::new();
    let x = g
        .leaf(vec![1.0, 2.0, 3.0, 4.0], vec![2, 2], true)
        .unwrap();
    let r = x.row(0).unwrap();
    assert_eq!(r.values_vec(), vec![1.0, 2.0]);
    r.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 0.0, 0.0]);
}

#[test]
fn transpose_gradient_matches_finite_differences() {
    let x: Vec<f64> = randn(3 * 2, 96);
    let err = finite_diff_check(
        |_, t| {
            let tt = t.transpose()?;
            Ok(tt.mul(&tt)?.sum())
        },
        &x,
        &[3, 2],
        f64::FD_STEP,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");
}
