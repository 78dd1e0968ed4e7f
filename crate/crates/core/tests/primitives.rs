//! Finite-difference checks of each differentiable building block on
//! randomized small shapes.

mod common;

use common::invariants::{interaction_model, run};
use hti::model::word_encoder::{
    attention_query, attention_query_backward, encode_words, encode_words_backward, pool_words, pool_words_backward,
};
use hti::model::{HtiModel, ModelConfig, Variant};
use hti::numerics::ops::{self, ConvGeom};
use hti::numerics::{grad_check, GradCheckOptions, ParamTape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const CASES: u32 = 24;
const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let d = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

fn tensor(v: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(&[v.len()], v).unwrap()
}

fn opts() -> GradCheckOptions {
    GradCheckOptions {
        max_coords_per_param: 64,
        seed: 1,
    }
}

fn assert_ok_report(r: &hti::numerics::GradCheckReport) -> Result<(), TestCaseError> {
    prop_assert!(r.max_relative_error <= TOL, "{r:?}");
    Ok(())
}

fn assert_ok(err: f64) -> Result<(), TestCaseError> {
    prop_assert!(err <= TOL, "relative error {err}");
    Ok(())
}

#[test]
fn masked_softmax_gradient() {
    run(CASES, (1usize..=7, any::<u64>()), |(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask: Vec<bool> = (0..n).map(|i| i == 0 || rng.random_bool(0.7)).collect();
        let c = normals(&mut rng, n);
        let mut tape = ParamTape::new();
        let x = tape.register("scores", tensor(normals(&mut rng, n)), 0);
        let r = grad_check(&mut tape, EPS, opts(), |t, g| {
            let p = ops::masked_softmax(t.value(x), &mask);
            if let Some(g) = g {
                let d = ops::masked_softmax_backward(&p, &c);
                g.get_mut(x).iter_mut().zip(d).for_each(|(a, b)| *a += b);
            }
            ops::dot(&p, &c)
        })
        .unwrap();
        assert_ok(r.max_relative_error)
    })
    .unwrap();
}

#[test]
fn affine_gradient() {
    run(CASES, (1usize..=6, 1usize..=6, any::<u64>()), |(n_in, n_out, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = normals(&mut rng, n_out);
        let mut tape = ParamTape::new();
        let x = tape.register("x", tensor(normals(&mut rng, n_in)), 0);
        let w = tape.register("w", tensor(normals(&mut rng, n_in * n_out)), 0);
        let b = tape.register("b", tensor(normals(&mut rng, n_out)), 0);
        let r = grad_check(&mut tape, EPS, opts(), |t, g| {
            let mut y = t.value(b).to_vec();
            ops::vec_mat(t.value(x), t.value(w), &mut y);
            if let Some(g) = g {
                let mut dx = vec![0.0; n_in];
                ops::vec_mat_backward(t.value(x), t.value(w), &c, Some(&mut dx), g.get_mut(w));
                ops::axpy(1.0, &dx, g.get_mut(x));
                ops::axpy(1.0, &c, g.get_mut(b));
            }
            ops::dot(&y, &c)
        })
        .unwrap();
        assert_ok(r.max_relative_error)
    })
    .unwrap();
}

#[test]
fn convolution_gradient() {
    let strat = (
        prop::sample::select(vec![1usize, 3, 5]),
        1usize..=7,
        1usize..=3,
        1usize..=3,
        any::<u64>(),
    );
    run(CASES, strat, |(kernel, len, in_dim, out_dim, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geom = ConvGeom {
            kernel,
            in_dim,
            out_dim,
        };
        let c = normals(&mut rng, len * out_dim);
        let mut tape = ParamTape::new();
        let x = tape.register("x", tensor(normals(&mut rng, len * in_dim)), 0);
        let w = tape.register("w", tensor(normals(&mut rng, geom.weight_len())), 0);
        let b = tape.register("b", tensor(normals(&mut rng, out_dim)), 0);
        let r = grad_check(&mut tape, EPS, opts(), |t, g| {
            let mut out = vec![0.0; len * out_dim];
            ops::conv1d_same(geom, t.value(x), len, t.value(w), t.value(b), &mut out, out_dim, 0);
            // relu on top, like the encoder
            let act: Vec<f64> = out.iter().map(|&v| ops::relu(v)).collect();
            if let Some(g) = g {
                let dpre: Vec<f64> = out
                    .iter()
                    .zip(&c)
                    .map(|(&o, &ci)| if o > 0.0 { ci } else { 0.0 })
                    .collect();
                let mut dx = vec![0.0; len * in_dim];
                let mut dw = vec![0.0; geom.weight_len()];
                let mut db = vec![0.0; out_dim];
                ops::conv1d_same_backward(
                    geom,
                    t.value(x),
                    len,
                    t.value(w),
                    &dpre,
                    out_dim,
                    0,
                    Some(&mut dx),
                    &mut dw,
                    &mut db,
                );
                ops::axpy(1.0, &dx, g.get_mut(x));
                ops::axpy(1.0, &dw, g.get_mut(w));
                ops::axpy(1.0, &db, g.get_mut(b));
            }
            ops::dot(&act, &c)
        })
        .unwrap();
        assert_ok(r.max_relative_error)
    })
    .unwrap();
}

#[test]
fn distance_gradient() {
    run(CASES, (1usize..=6, any::<u64>()), |(k, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = ParamTape::new();
        let a = tape.register("a", tensor(normals(&mut rng, k)), 0);
        let b = tape.register("b", tensor(normals(&mut rng, k)), 0);
        let r = grad_check(&mut tape, EPS, opts(), |t, g| {
            let d = ops::euclidean(t.value(a), t.value(b));
            if let Some(g) = g {
                let mut da = vec![0.0; k];
                let mut db = vec![0.0; k];
                ops::euclidean_backward(t.value(a), t.value(b), d, 1.0, &mut da, &mut db);
                ops::axpy(1.0, &da, g.get_mut(a));
                ops::axpy(1.0, &db, g.get_mut(b));
            }
            d
        })
        .unwrap();
        assert_ok(r.max_relative_error)
    })
    .unwrap();
}

/// Random biases keep pre-activations away from the ReLU kink, where
/// central differences see half the slope.
fn jitter_biases(model: &mut HtiModel<f64>, rng: &mut ChaCha8Rng) {
    for i in 0..model.tape.len() {
        let id = hti::numerics::ParamId(i);
        if model.tape.param(id).name.ends_with("_b") {
            let n = model.tape.value(id).len();
            let vals: Vec<f64> = normals(rng, n).iter().map(|x| 0.1 * x).collect();
            model.tape.value_mut(id).copy_from_slice(&vals);
        }
    }
}

fn encoder_model(seed: u64, variant: Variant) -> HtiModel<f64> {
    let config = ModelConfig {
        n_users: 2,
        n_items: 2,
        vocab_size: 6,
        embed_dim: 3,
        conv1_maps: 2,
        conv1_kernels: vec![3, 5],
        conv2_kernel: 5,
        latent_dim: 3,
        dropout: 0.0,
        variant,
    };
    HtiModel::new(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Embedding, both conv layers, word pooling and the pair query, with the
/// user and item factors as the inputs.
#[test]
fn word_encoder_gradient() {
    let strat = (
        1usize..=7,
        any::<u64>(),
        prop::sample::select(vec![Variant::Full, Variant::Wavg, Variant::Wmax]),
    );
    run(CASES, strat, |(len, seed, variant)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = encoder_model(seed, variant);
        jitter_biases(&mut model, &mut rng);
        let tokens: Vec<u32> = (0..len).map(|_| rng.random_range(1..=6)).collect();
        let valid = rng.random_range(1..=len);
        let padded: Vec<u32> = tokens
            .iter()
            .enumerate()
            .map(|(j, &t)| if j < valid { t } else { 0 })
            .collect();
        let mask: Vec<bool> = (0..len).map(|j| j < valid).collect();
        let c = normals(&mut rng, 3);
        let pooling = variant.word_pooling();
        let r = grad_check(&mut model, EPS, opts(), |m, g| {
            let (u, v) = (m.user_factor(0).to_vec(), m.item_factor(1).to_vec());
            let query = attention_query(m, &u, &v);
            let enc = encode_words(m, &padded, &mask);
            let pooled = pool_words(pooling, &enc.words, &enc.mask, 3, &query, false);
            if let Some(g) = g {
                let mut dwords = vec![0.0; enc.words.len()];
                let mut dquery = vec![0.0; 3];
                pool_words_backward(
                    pooling,
                    &enc.words,
                    3,
                    &query,
                    &pooled,
                    false,
                    &c,
                    &mut dwords,
                    &mut dquery,
                );
                encode_words_backward(m, &padded, &enc, &dwords, g);
                let (du, dv) = attention_query_backward(m, &u, &v, &query, &dquery, g);
                ops::axpy(1.0, &du, &mut g.get_mut(m.ids.user_factors)[..3]);
                ops::axpy(1.0, &dv, &mut g.get_mut(m.ids.item_factors)[3..6]);
            }
            ops::dot(&pooled.rep, &c)
        })
        .unwrap();
        assert_ok_report(&r)
    })
    .unwrap();
}

/// Distances, min-pooling, both attentions and the gate, with the review
/// vectors as extra inputs.
#[test]
fn interaction_gradient() {
    run(
        CASES,
        (1usize..=4, 1usize..=4, 1usize..=4, any::<u64>()),
        |(k, m, n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = interaction_model(k, seed);
            let ur = model.tape.register("user_reps", tensor(normals(&mut rng, m * k)), 0);
            let ir = model.tape.register("item_reps", tensor(normals(&mut rng, n * k)), 0);
            let umask: Vec<bool> = (0..m).map(|a| a == 0 || rng.random_bool(0.7)).collect();
            let imask: Vec<bool> = (0..n).map(|b| b == 0 || rng.random_bool(0.7)).collect();
            let (cu, ci) = (normals(&mut rng, k), normals(&mut rng, k));
            let r = grad_check(&mut model, EPS, opts(), |md, g| {
                let (user, item) = (md.tape.value(ur).to_vec(), md.tape.value(ir).to_vec());
                let t = md.interact(&user, &umask, &item, &imask);
                if let Some(g) = g {
                    let mut du = vec![0.0; m * k];
                    let mut di = vec![0.0; n * k];
                    md.interact_backward(&t, &user, &item, &cu, &ci, g, &mut du, &mut di);
                    ops::axpy(1.0, &du, g.get_mut(ur));
                    ops::axpy(1.0, &di, g.get_mut(ir));
                }
                ops::dot(&t.d_user, &cu) + ops::dot(&t.d_item, &ci)
            })
            .unwrap();
            assert_ok_report(&r)
        },
    )
    .unwrap();
}

/// `combine` and the MLP with the latent factors and review aggregates as
/// inputs.
#[test]
fn predictor_gradient() {
    run(CASES, (1usize..=5, any::<u64>()), |(k, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = interaction_model(k, seed);
        let du_id = model.tape.register("d_user", tensor(normals(&mut rng, k)), 0);
        let dv_id = model.tape.register("d_item", tensor(normals(&mut rng, k)), 0);
        jitter_biases(&mut model, &mut rng);
        let r = grad_check(&mut model, EPS, opts(), |md, g| {
            let (u, v) = (md.user_factor(0).to_vec(), md.item_factor(0).to_vec());
            let h0 = hti::model::predictor::combine(&u, md.tape.value(du_id), &v, md.tape.value(dv_id)).unwrap();
            let tr = md.predict_from_h0::<ChaCha8Rng>(h0, None);
            if let Some(g) = g {
                let dh0 = md.predict_backward(&tr, 1.0, g);
                let (dx, dy) = hti::model::predictor::combine_backward(&tr.h0, &dh0);
                ops::axpy(1.0, &dx, g.get_mut(md.ids.user_factors));
                ops::axpy(1.0, &dx, g.get_mut(du_id));
                ops::axpy(1.0, &dy, g.get_mut(md.ids.item_factors));
                ops::axpy(1.0, &dy, g.get_mut(dv_id));
            }
            tr.output
        })
        .unwrap();
        assert_ok_report(&r)
    })
    .unwrap();
}

#[test]
fn dropout_off_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mask: Vec<f64> = ops::dropout_mask(16, 0.0, &mut rng);
    assert!(mask.iter().all(|&m| m == 1.0));
}
