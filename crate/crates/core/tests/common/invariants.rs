//! Randomized invariant checks shared by the property tests and the
//! acceptance summary. Each check runs `cases` generated instances with a
//! fixed-seed runner and returns the number of cases that passed.

use std::collections::BTreeSet;

use hti::baseline::BiasModel;
use hti::corpus::synthetic::{generate, SyntheticSpec};
use hti::corpus::{ingest_reviews, ExampleBuilder, PreprocessConfig, Split};
use hti::evaluator::mae_rmse;
use hti::model::word_encoder::pool_words;
use hti::model::{HtiModel, ModelConfig, Variant, WordPooling};
use hti::numerics::ops::masked_softmax;
use hti::numerics::ParamId;
use hti::trainer::{adam_step, AdamConfig, AdamState};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const TOL: f64 = 1e-12;

pub fn run<T: Strategy>(
    cases: u32,
    strategy: T,
    test: impl Fn(T::Value) -> Result<(), TestCaseError>,
) -> Result<u32, String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())?;
    Ok(cases)
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let d = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

fn random_mask(rng: &mut ChaCha8Rng, n: usize, allow_empty: bool) -> Vec<bool> {
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    if !allow_empty && !mask.contains(&true) {
        mask[rng.random_range(0..n)] = true;
    }
    mask
}

fn check_distribution(w: &[f64], mask: &[bool], what: &str) -> Result<(), TestCaseError> {
    prop_assert!(w.iter().all(|&x| x >= 0.0), "{what}: negative weight {w:?}");
    for (x, &m) in w.iter().zip(mask) {
        prop_assert!(m || *x == 0.0, "{what}: masked entry {x}");
    }
    let s: f64 = w.iter().sum();
    if mask.contains(&true) {
        prop_assert!((s - 1.0).abs() < TOL, "{what}: sum {s}");
    } else {
        prop_assert!(s == 0.0, "{what}: all masked but sum {s}");
    }
    Ok(())
}

/// Per-coordinate bounds of the valid rows of an `rows × k` matrix.
fn hull(rows: &[f64], mask: &[bool], k: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    if !mask.contains(&true) {
        return None;
    }
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for c in 0..k {
            lo[c] = lo[c].min(rows[r * k + c]);
            hi[c] = hi[c].max(rows[r * k + c]);
        }
    }
    Some((lo, hi))
}

fn check_in_hull(v: &[f64], rows: &[f64], mask: &[bool], k: usize, what: &str) -> Result<(), TestCaseError> {
    match hull(rows, mask, k) {
        Some((lo, hi)) => {
            for c in 0..k {
                prop_assert!(
                    v[c] >= lo[c] - TOL && v[c] <= hi[c] + TOL,
                    "{what}[{c}] = {} outside [{}, {}]",
                    v[c],
                    lo[c],
                    hi[c]
                );
            }
        }
        None => prop_assert!(v.iter().all(|&x| x == 0.0), "{what} should be zero for an empty side"),
    }
    Ok(())
}

fn close(a: &[f64], b: &[f64], what: &str) -> Result<(), TestCaseError> {
    for (x, y) in a.iter().zip(b) {
        prop_assert!((x - y).abs() <= TOL * (1.0 + x.abs()), "{what}: {a:?} vs {b:?}");
    }
    Ok(())
}

/// Model whose only relevant parts are the interaction weights.
pub fn interaction_model(k: usize, seed: u64) -> HtiModel<f64> {
    let config = ModelConfig {
        n_users: 1,
        n_items: 1,
        vocab_size: 1,
        embed_dim: 1,
        conv1_maps: 1,
        conv1_kernels: vec![1],
        conv2_kernel: 1,
        latent_dim: k,
        dropout: 0.0,
        variant: Variant::Full,
    };
    HtiModel::new(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn dims() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..=6, 1usize..=5, 1usize..=5, any::<u64>())
}

pub fn softmax_normalization(cases: u32) -> Result<u32, String> {
    let strat = (1usize..=8, any::<u64>(), -20.0f64..20.0);
    run(cases, strat, |(n, seed, shift)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = normals(&mut rng, n).iter().map(|x| 5.0 * x).collect();
        let mask = random_mask(&mut rng, n, true);
        let p = masked_softmax(&scores, &mask);
        check_distribution(&p, &mask, "softmax")?;
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        close(&masked_softmax(&shifted, &mask), &p, "shift")?;
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let ps: Vec<f64> = perm.iter().map(|&i| scores[i]).collect();
        let pm: Vec<bool> = perm.iter().map(|&i| mask[i]).collect();
        let pp = masked_softmax(&ps, &pm);
        for (j, &i) in perm.iter().enumerate() {
            prop_assert!((pp[j] - p[i]).abs() < TOL);
        }
        Ok(())
    })
}

pub fn word_attention(cases: u32) -> Result<u32, String> {
    let strat = (1usize..=5, 1usize..=9, any::<u64>());
    run(cases, strat, |(k, len, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut words = normals(&mut rng, len * k);
        let mask = random_mask(&mut rng, len, true);
        for (j, &m) in mask.iter().enumerate() {
            if !m {
                words[j * k..(j + 1) * k].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let query = normals(&mut rng, k);
        for pooling in [WordPooling::Attention, WordPooling::Mean, WordPooling::Max] {
            let pooled = pool_words(pooling, &words, &mask, k, &query, false);
            prop_assert_eq!(pooled.valid, mask.contains(&true));
            if pooling != WordPooling::Max {
                check_distribution(&pooled.weights, &mask, "word attention")?;
            }
            check_in_hull(&pooled.rep, &words, &mask, k, "review rep")?;
            // reorder positions after encoding: same review vector
            let mut perm: Vec<usize> = (0..len).collect();
            perm.shuffle(&mut rng);
            let pw: Vec<f64> = perm.iter().flat_map(|&j| words[j * k..(j + 1) * k].to_vec()).collect();
            let pm: Vec<bool> = perm.iter().map(|&j| mask[j]).collect();
            let again = pool_words(pooling, &pw, &pm, k, &query, false);
            close(&again.rep, &pooled.rep, "permuted review rep")?;
        }
        Ok(())
    })
}

struct Instance {
    k: usize,
    user: Vec<f64>,
    umask: Vec<bool>,
    item: Vec<f64>,
    imask: Vec<bool>,
    model: HtiModel<f64>,
}

fn instance((k, m, n, seed): (usize, usize, usize, u64), allow_empty: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let user = normals(&mut rng, m * k);
    let item = normals(&mut rng, n * k);
    let umask = random_mask(&mut rng, m, allow_empty);
    let imask = random_mask(&mut rng, n, allow_empty);
    Instance {
        k,
        user,
        umask,
        item,
        imask,
        model: interaction_model(k, seed ^ 0x5eed),
    }
}

pub fn interaction_normalization(cases: u32) -> Result<u32, String> {
    run(cases, dims(), |d| {
        let x = instance(d, true);
        let t = x.model.interact(&x.user, &x.umask, &x.item, &x.imask);
        check_distribution(&t.initial.delta_user, &x.umask, "delta user")?;
        check_distribution(&t.initial.delta_item, &x.imask, "delta item")?;
        check_distribution(&t.user_inter.beta, &x.umask, "beta user")?;
        check_distribution(&t.item_inter.beta, &x.imask, "beta item")?;
        check_distribution(&t.effective_user_weights(), &x.umask, "effective user")?;
        check_distribution(&t.effective_item_weights(), &x.imask, "effective item")?;
        prop_assert!(t.gate_user.iter().chain(&t.gate_item).all(|&g| g > 0.0 && g < 1.0));
        Ok(())
    })
}

pub fn interaction_convex_hull(cases: u32) -> Result<u32, String> {
    run(cases, dims(), |d| {
        let x = instance(d, true);
        let k = x.k;
        let t = x.model.interact(&x.user, &x.umask, &x.item, &x.imask);
        check_in_hull(&t.initial.p, &x.user, &x.umask, k, "p")?;
        check_in_hull(&t.user_inter.s, &x.user, &x.umask, k, "s")?;
        check_in_hull(&t.d_user, &x.user, &x.umask, k, "d_user")?;
        check_in_hull(&t.initial.q, &x.item, &x.imask, k, "q")?;
        check_in_hull(&t.item_inter.s, &x.item, &x.imask, k, "t")?;
        check_in_hull(&t.d_item, &x.item, &x.imask, k, "d_item")?;
        Ok(())
    })
}

pub fn interaction_permutation(cases: u32) -> Result<u32, String> {
    run(cases, dims(), |d| {
        let x = instance(d, true);
        let k = x.k;
        let m = x.umask.len();
        let base = x.model.interact(&x.user, &x.umask, &x.item, &x.imask);
        let mut rng = ChaCha8Rng::seed_from_u64(d.3 ^ 1);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let pu: Vec<f64> = perm.iter().flat_map(|&a| x.user[a * k..(a + 1) * k].to_vec()).collect();
        let pm: Vec<bool> = perm.iter().map(|&a| x.umask[a]).collect();
        let t = x.model.interact(&pu, &pm, &x.item, &x.imask);
        close(&t.initial.p, &base.initial.p, "p")?;
        close(&t.initial.q, &base.initial.q, "q")?;
        close(&t.user_inter.s, &base.user_inter.s, "s")?;
        close(&t.item_inter.s, &base.item_inter.s, "t")?;
        close(&t.d_user, &base.d_user, "d_user")?;
        close(&t.d_item, &base.d_item, "d_item")?;
        for (new, &old) in perm.iter().enumerate() {
            prop_assert!((t.initial.delta_user[new] - base.initial.delta_user[old]).abs() < TOL);
            prop_assert!((t.user_inter.beta[new] - base.user_inter.beta[old]).abs() < TOL);
        }
        Ok(())
    })
}

pub fn delta_monotonicity(cases: u32) -> Result<u32, String> {
    run(cases, dims(), |d| {
        let x = instance(d, false);
        let t = x.model.interact(&x.user, &x.umask, &x.item, &x.imask);
        let init = &t.initial;
        for (mins, delta, mask) in [
            (&init.user_min, &init.delta_user, &x.umask),
            (&init.item_min, &init.delta_item, &x.imask),
        ] {
            for a in (0..mask.len()).filter(|&a| mask[a]) {
                for b in (0..mask.len()).filter(|&b| mask[b]) {
                    if mins[a] < mins[b] - 1e-9 {
                        prop_assert!(
                            delta[a] > delta[b],
                            "a={} < {} but delta {} <= {}",
                            mins[a],
                            mins[b],
                            delta[a],
                            delta[b]
                        );
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn pad_row_stays_zero(cases: u32) -> Result<u32, String> {
    let strat = (any::<u64>(), 1usize..=5, 1e-4f64..1.0);
    run(cases, strat, |(seed, steps, lr)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = ModelConfig {
            n_users: 2,
            n_items: 2,
            vocab_size: 5,
            embed_dim: 3,
            conv1_maps: 2,
            conv1_kernels: vec![3, 5],
            conv2_kernel: 5,
            latent_dim: 2,
            dropout: 0.0,
            variant: Variant::Full,
        };
        let mut model = HtiModel::<f64>::new(config, &mut rng).unwrap();
        let mut adam = AdamState::new(&model.tape, AdamConfig::default());
        for _ in 0..steps {
            let mut g = model.tape.new_gradients();
            for i in 0..model.tape.len() {
                let n = g.get(ParamId(i)).len();
                let vals = normals(&mut rng, n);
                g.get_mut(ParamId(i)).copy_from_slice(&vals);
            }
            adam_step(&mut model.tape, &g, &mut adam, lr);
            prop_assert!(model.pad_row().iter().all(|&x| x == 0.0));
        }
        Ok(())
    })
}

pub fn rmse_at_least_mae(cases: u32) -> Result<u32, String> {
    let strat = prop::collection::vec((-2.0f64..8.0, 1.0f64..=5.0), 1..40);
    run(cases, strat, |pairs| {
        let (p, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (mae, rmse) = mae_rmse(&p, &r);
        prop_assert!(mae >= 0.0 && rmse >= mae - TOL, "mae {mae} rmse {rmse}");
        Ok(())
    })
}

pub fn corpus_invariants(cases: u32) -> Result<u32, String> {
    let strat = (3usize..=8, 3usize..=8, 10usize..=40, any::<u64>(), 5usize..=50);
    run(cases, strat, |(users, items, ratings, seed, vocab)| {
        let spec = SyntheticSpec {
            n_users: users,
            n_items: items,
            n_ratings: ratings,
            words_per_review: 6,
            noise: 0.3,
            seed,
        };
        let config = PreprocessConfig {
            vocab_size: vocab,
            seed,
            ..Default::default()
        };
        let corpus = ingest_reviews(generate(&spec), &config).unwrap();
        let again = ingest_reviews(generate(&spec), &config).unwrap();
        prop_assert_eq!(corpus.to_json().unwrap(), again.to_json().unwrap());

        let v = corpus.vocabulary.len();
        prop_assert!(v <= vocab);
        prop_assert!(corpus.vocabulary.token(0).is_none());
        let mut seen = BTreeSet::new();
        for id in 1..=v as u32 {
            let tok = corpus.vocabulary.token(id).unwrap();
            prop_assert_eq!(corpus.vocabulary.id(tok), Some(id));
            prop_assert!(seen.insert(tok.to_string()));
        }
        let builder = ExampleBuilder::new(&corpus);
        for (idx, it) in corpus.interactions.iter().enumerate() {
            prop_assert!(it.tokens.iter().all(|&t| t >= 1 && t as usize <= v));
            let ex = builder.for_interaction(idx);
            prop_assert!(ex.excludes_target(&corpus));
            for grid in [&ex.user_reviews, &ex.item_reviews] {
                for slot in 0..grid.slots {
                    for (j, &t) in grid.review(slot).iter().enumerate() {
                        if j < grid.lengths[slot] {
                            prop_assert!(t >= 1 && t as usize <= v);
                        } else {
                            prop_assert_eq!(t, 0);
                        }
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn bias_model_improves_training_fit(cases: u32) -> Result<u32, String> {
    let strat = (3usize..=10, 3usize..=10, 10usize..=60, any::<u64>());
    run(cases, strat, |(users, items, ratings, seed)| {
        let spec = SyntheticSpec {
            n_users: users,
            n_items: items,
            n_ratings: ratings,
            words_per_review: 4,
            noise: 0.5,
            seed,
        };
        let corpus = ingest_reviews(
            generate(&spec),
            &PreprocessConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let bias = BiasModel::fit(&corpus).unwrap();
        let flat = bias.global_mean_only();
        let b = bias.evaluate(&corpus, Split::Train).unwrap();
        let f = flat.evaluate(&corpus, Split::Train).unwrap();
        prop_assert!(b.rmse <= f.rmse + TOL, "bias rmse {} > global {}", b.rmse, f.rmse);
        Ok(())
    })
}
