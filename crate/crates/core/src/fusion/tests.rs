use super::*;
use crate::tensor::Graph;

fn randn(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngState::new(seed);
    (0..n).map(|_| rng.normal()).collect()
}

fn triple(
    g: &Graph<f64>,
    t: Vec<f64>,
    a: Vec<f64>,
    v: Vec<f64>,
) -> (
    ModalityEmbedding<f64>,
    ModalityEmbedding<f64>,
    ModalityEmbedding<f64>,
) {
    let d = t.len();
    (
        ModalityEmbedding {
            vector: g.leaf(t, vec![d], true).unwrap(),
            modality: Modality::Text,
        },
        ModalityEmbedding {
            vector: g.leaf(a, vec![d], true).unwrap(),
            modality: Modality::Audio,
        },
        ModalityEmbedding {
            vector: g.leaf(v, vec![d], true).unwrap(),
            modality: Modality::Visual,
        },
    )
}

#[test]
fn concat_fuse_lays_out_text_audio_visual() {
    let g = Graph::new();
    let (t, a, v) = triple(&g, vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]);
    let fused = concat_fuse(&t, &a, &v).unwrap();
    assert_eq!(fused.vector.values_vec(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    assert_eq!(fused.mode, FusionMode::Concat);
}

#[test]
fn concat_fuse_of_zeros_is_zero_of_triple_length() {
    let g = Graph::new();
    let (t, a, v) = triple(&g, vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]);
    let fused = concat_fuse(&t, &a, &v).unwrap();
    assert_eq!(fused.fused_dim(), 12);
    assert!(fused.vector.values_vec().iter().all(|&x| x == 0.0));
}

#[test]
fn concat_fuse_dim_arithmetic() {
    let g = Graph::new();
    let (t, a, v) = triple(&g, randn(128, 1), randn(128, 2), randn(128, 3));
    let fused = concat_fuse(&t, &a, &v).unwrap();
    assert_eq!(fused.fused_dim(), 384);
}

#[test]
fn concat_fuse_slices_recover_inputs_exactly() {
    for (seed, d) in [(10u64, 2usize), (11, 64), (12, 128)] {
        let g = Graph::new();
        let (tv, av, vv) = (randn(d, seed), randn(d, seed + 100), randn(d, seed + 200));
        let (t, a, v) = triple(&g, tv.clone(), av.clone(), vv.clone());
        let fused = concat_fuse(&t, &a, &v).unwrap().vector.values_vec();
        assert_eq!(&fused[..d], tv.as_slice());
        assert_eq!(&fused[d..2 * d], av.as_slice());
        assert_eq!(&fused[2 * d..], vv.as_slice());
    }
}

#[test]
fn concat_fuse_rejects_wrong_tag_order() {
    let g = Graph::new();
    let (t, a, v) = triple(&g, vec![1.0], vec![2.0], vec![3.0]);
    assert!(matches!(concat_fuse(&a, &t, &v), Err(Error::Contract(_))));
    assert!(matches!(concat_fuse(&t, &v, &a), Err(Error::Contract(_))));
}

#[test]
fn concat_fuse_rejects_length_mismatch() {
    let g = Graph::new();
    let t = ModalityEmbedding {
        vector: g.leaf(vec![1.0, 2.0], vec![2], false).unwrap(),
        modality: Modality::Text,
    };
    let a = ModalityEmbedding {
        vector: g.leaf(vec![3.0], vec![1], false).unwrap(),
        modality: Modality::Audio,
    };
    let v = ModalityEmbedding {
        vector: g.leaf(vec![4.0, 5.0], vec![2], false).unwrap(),
        modality: Modality::Visual,
    };
    assert!(matches!(concat_fuse(&t, &a, &v), Err(Error::Shape(_))));
}

#[test]
fn concat_gradient_reaches_all_three_modalities() {
    let g = Graph::new();
    let (t, a, v) = triple(&g, randn(4, 20), randn(4, 21), randn(4, 22));
    let fused = concat_fuse(&t, &a, &v).unwrap();
    fused.vector.mul(&fused.vector).unwrap().sum().backward().unwrap();
    for emb in [&t, &a, &v] {
        let grad = emb.vector.grad().expect("modality missing gradient");
        assert!(grad.iter().any(|&x| x != 0.0));
    }
}

fn identity_attention_params(g: &Graph<f64>, d: usize) -> CrossAttentionParams<f64> {
    let eye = |g: &Graph<f64>| {
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            m[i * d + i] = 1.0;
        }
        g.constant(m, vec![d, d]).unwrap()
    };
    let zeros = |g: &Graph<f64>| g.constant(vec![0.0; d], vec![d]).unwrap();
    CrossAttentionParams {
        attn: AttentionParams {
            wq: eye(g),
            wk: eye(g),
            wv: eye(g),
            wo: eye(g),
            bq: zeros(g),
            bk: zeros(g),
            bv: zeros(g),
            bo: zeros(g),
        },
    }
}

#[test]
fn cross_attention_identical_embeddings_pass_through() {
    // With identity value/output projections and three identical inputs,
    // attention averages identical rows, so the pooled output is that vector.
    let d = 8;
    let g = Graph::new();
    let e = randn(d, 30);
    let (t, a, v) = triple(&g, e.clone(), e.clone(), e.clone());
    let params = identity_attention_params(&g, d);
    let mut rng = RngState::new(0);
    let fused =
        cross_attention_fuse(&t, &a, &v, &params, 2, 0.3, false, &mut rng).unwrap();
    assert_eq!(fused.mode, FusionMode::CrossAttention);
    let got = fused.vector.values_vec();
    for (x, y) in got.iter().zip(&e) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

fn random_cross_params(g: &Graph<f64>, d: usize, seed: u64) -> CrossAttentionParams<f64> {
    let mut store: ParamStore<f64> = ParamStore::new();
    let mut rng = RngState::new(seed);
    CrossAttentionParams::register(&mut store, "fusion", d, &mut rng).unwrap();
    let bound = store.bind(g).unwrap();
    // Leak the bound leaves into the params struct; fine for tests.
    CrossAttentionParams::bind(&bound, "fusion").unwrap()
}

#[test]
fn cross_attention_output_has_model_dim() {
    let d = 8;
    let g = Graph::new();
    let (t, a, v) = triple(&g, randn(d, 31), randn(d, 32), randn(d, 33));
    let params = random_cross_params(&g, d, 42);
    let mut rng = RngState::new(0);
    let fused =
        cross_attention_fuse(&t, &a, &v, &params, 2, 0.3, false, &mut rng).unwrap();
    assert_eq!(fused.fused_dim(), d);
    assert!(fused.vector.values_vec().iter().all(|x| x.is_finite()));
}

#[test]
fn cross_attention_is_sensitive_to_audio() {
    let d = 8;
    let run = |audio_shift: f64| {
        let g = Graph::new();
        let mut a_vals = randn(d, 35);
        for x in &mut a_vals {
            *x += audio_shift;
        }
        let (t, a, v) = triple(&g, randn(d, 34), a_vals, randn(d, 36));
        let params = random_cross_params(&g, d, 42);
        let mut rng = RngState::new(0);
        cross_attention_fuse(&t, &a, &v, &params, 2, 0.3, false, &mut rng)
            .unwrap()
            .vector
            .values_vec()
    };
    assert_ne!(run(0.0), run(0.5));
}

#[test]
fn cross_attention_gradient_reaches_all_three_modalities() {
    let d = 8;
    let g = Graph::new();
    let (t, a, v) = triple(&g, randn(d, 40), randn(d, 41), randn(d, 42));
    let params = random_cross_params(&g, d, 7);
    let mut rng = RngState::new(0);
    let fused =
        cross_attention_fuse(&t, &a, &v, &params, 2, 0.3, false, &mut rng).unwrap();
    fused.vector.mul(&fused.vector).unwrap().sum().backward().unwrap();
    for emb in [&t, &a, &v] {
        let grad = emb.vector.grad().expect("modality missing gradient");
        assert!(grad.iter().any(|&x| x != 0.0));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // Concatenation is lossless: slices of the output recover the inputs
        // bit for bit, for arbitrary finite vectors.
        #[test]
        fn concat_is_a_bijection(
            t in proptest::collection::vec(-1e6f64..1e6, 1..32),
            seed in 0u64..1000,
        ) {
            let d = t.len();
            let mut rng = RngState::new(seed);
            let a: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let g = Graph::new();
            let (te, ae, ve) = triple(&g, t.clone(), a.clone(), v.clone());
            let fused = concat_fuse(&te, &ae, &ve).unwrap().vector.values_vec();
            prop_assert_eq!(&fused[..d], t.as_slice());
            prop_assert_eq!(&fused[d..2*d], a.as_slice());
            prop_assert_eq!(&fused[2*d..], v.as_slice());
        }
    }
}
