//! Straight-line re-derivation of the review interaction module, written
//! from the formulas with explicit index loops and no shared helpers.

use hti::HtiModel;

pub struct OracleOut {
    pub delta_user: Vec<f64>,
    pub delta_item: Vec<f64>,
    pub beta_user: Vec<f64>,
    pub beta_item: Vec<f64>,
    pub d_user: Vec<f64>,
    pub d_item: Vec<f64>,
}

fn softmax(scores: &[f64], mask: &[bool]) -> Vec<f64> {
    let mut out = vec![0.0; scores.len()];
    let mut top = f64::NEG_INFINITY;
    for i in 0..scores.len() {
        if mask[i] && scores[i] > top {
            top = scores[i];
        }
    }
    if top == f64::NEG_INFINITY {
        return out;
    }
    let mut z = 0.0;
    for i in 0..scores.len() {
        if mask[i] {
            out[i] = (scores[i] - top).exp();
            z += out[i];
        }
    }
    for x in out.iter_mut() {
        *x /= z;
    }
    out
}

/// `W` is stored input-major: `w[i * k + j]` maps input `i` to output `j`.
fn wt_x(w: &[f64], x: &[f64], k: usize, j: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..k {
        acc += w[i * k + j] * x[i];
    }
    acc
}

fn weighted(weights: &[f64], rows: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for r in 0..weights.len() {
        for c in 0..k {
            out[c] += weights[r] * rows[r * k + c];
        }
    }
    out
}

struct Side<'a> {
    guide_w: &'a [f64],
    review_w: &'a [f64],
    v: &'a [f64],
    b: &'a [f64],
}

fn intermediate(side: &Side, guide: &[f64], rows: &[f64], mask: &[bool], k: usize) -> Vec<f64> {
    let mut gamma = vec![0.0; mask.len()];
    for r in 0..mask.len() {
        let row = &rows[r * k..(r + 1) * k];
        for j in 0..k {
            let h = (wt_x(side.guide_w, guide, k, j) + wt_x(side.review_w, row, k, j) + side.b[j]).tanh();
            gamma[r] += side.v[j] * h;
        }
    }
    softmax(&gamma, mask)
}

pub fn interact(model: &HtiModel<f64>, user: &[f64], umask: &[bool], item: &[f64], imask: &[bool]) -> OracleOut {
    let k = model.k();
    let (m, n) = (umask.len(), imask.len());
    let mut a = vec![f64::INFINITY; m];
    let mut b = vec![f64::INFINITY; n];
    for x in 0..m {
        for y in 0..n {
            if !(umask[x] && imask[y]) {
                continue;
            }
            let mut sq = 0.0;
            for c in 0..k {
                let diff = user[x * k + c] - item[y * k + c];
                sq += diff * diff;
            }
            let e = sq.sqrt();
            a[x] = a[x].min(e);
            b[y] = b[y].min(e);
        }
    }
    let neg = |v: &[f64]| {
        v.iter()
            .map(|&x| if x.is_finite() { -x } else { 0.0 })
            .collect::<Vec<_>>()
    };
    let delta_user = softmax(&neg(&a), umask);
    let delta_item = softmax(&neg(&b), imask);
    let p = weighted(&delta_user, user, k);
    let q = weighted(&delta_item, item, k);

    let us = model.user_side_weights();
    let is = model.item_side_weights();
    let user_side = Side {
        guide_w: us.guide_w,
        review_w: us.review_w,
        v: us.score_v,
        b: us.bias,
    };
    let item_side = Side {
        guide_w: is.guide_w,
        review_w: is.review_w,
        v: is.score_v,
        b: is.bias,
    };
    let beta_user = intermediate(&user_side, &q, user, umask, k);
    let beta_item = intermediate(&item_side, &p, item, imask, k);
    let s = weighted(&beta_user, user, k);
    let t = weighted(&beta_item, item, k);

    let gw = model.gate_weights();
    let gate = |init: &[f64], inter: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|j| {
                let z = wt_x(gw.initial_w, init, k, j) + wt_x(gw.intermediate_w, inter, k, j) + gw.bias[j];
                let g = 1.0 / (1.0 + (-z).exp());
                g * init[j] + (1.0 - g) * inter[j]
            })
            .collect()
    };
    OracleOut {
        d_user: gate(&p, &s),
        d_item: gate(&q, &t),
        delta_user,
        delta_item,
        beta_user,
        beta_item,
    }
}

/// Largest absolute difference between the module and the oracle.
pub fn max_deviation(model: &HtiModel<f64>, user: &[f64], umask: &[bool], item: &[f64], imask: &[bool]) -> f64 {
    let t = model.interact(user, umask, item, imask);
    let o = interact(model, user, umask, item, imask);
    let pairs: [(&[f64], &[f64]); 6] = [
        (&t.d_user, &o.d_user),
        (&t.d_item, &o.d_item),
        (&t.initial.delta_user, &o.delta_user),
        (&t.initial.delta_item, &o.delta_item),
        (&t.user_inter.beta, &o.beta_user),
        (&t.item_inter.beta, &o.beta_item),
    ];
    pairs
        .iter()
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}
