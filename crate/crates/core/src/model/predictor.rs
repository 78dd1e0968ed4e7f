//! Rating head: latent factors plus aggregated review vectors, fed through
//! a ReLU MLP with a linear output; and the regularized square loss.

use rand::Rng;

use crate::error::{HtiError, Result};
use crate::numerics::ops::{self, dropout_mask, relu};
use crate::numerics::{Gradients, ParamTape};
use crate::scalar::Scalar;

use super::HtiModel;

/// `x = u + d_i`, `y = v + d_j`, `h₀ = [x; y; x ⊙ y]`.
pub fn combine<S: Scalar>(u: &[S], d_user: &[S], v: &[S], d_item: &[S]) -> Result<Vec<S>> {
    let k = u.len();
    if d_user.len() != k || v.len() != k || d_item.len() != k {
        return Err(HtiError::config(format!(
            "combine: widths {} {} {} {} differ",
            k,
            d_user.len(),
            v.len(),
            d_item.len()
        )));
    }
    let x: Vec<S> = u.iter().zip(d_user).map(|(&a, &b)| a + b).collect();
    let y: Vec<S> = v.iter().zip(d_item).map(|(&a, &b)| a + b).collect();
    let xy: Vec<S> = x.iter().zip(&y).map(|(&a, &b)| a * b).collect();
    Ok([x, y, xy].concat())
}

/// Backward of [`combine`] given `dh0`; returns `(dx, dy)` which are also
/// the gradients for both `u`/`d_i` and `v`/`d_j`.
pub fn combine_backward<S: Scalar>(h0: &[S], dh0: &[S]) -> (Vec<S>, Vec<S>) {
    let k = h0.len() / 3;
    let (x, y) = (&h0[..k], &h0[k..2 * k]);
    let dx = (0..k).map(|c| dh0[c] + dh0[2 * k + c] * y[c]).collect();
    let dy = (0..k).map(|c| dh0[k + c] + dh0[2 * k + c] * x[c]).collect();
    (dx, dy)
}

/// Activations of one MLP pass.
#[derive(Debug, Clone)]
pub struct MlpTrace<S> {
    pub h0: Vec<S>,
    /// Post-ReLU, post-dropout output of each hidden layer.
    pub hidden: Vec<Vec<S>>,
    /// Inverted-dropout multipliers per hidden layer (all ones in eval).
    pub masks: Vec<Vec<S>>,
    pub output: S,
}

impl<S: Scalar> HtiModel<S> {
    /// MLP forward. Dropout is applied after each hidden ReLU when `rng`
    /// is given; the output layer is affine.
    pub fn predict_from_h0<R: Rng + ?Sized>(&self, h0: Vec<S>, mut rng: Option<&mut R>) -> MlpTrace<S> {
        let layers = &self.ids.mlp;
        let mut hidden = Vec::with_capacity(layers.len() - 1);
        let mut masks = Vec::with_capacity(layers.len() - 1);
        let mut input = h0.clone();
        for (l, &(w, b)) in layers.iter().enumerate() {
            let mut out = self.p(b).to_vec();
            ops::vec_mat(&input, self.p(w), &mut out);
            if l + 1 == layers.len() {
                return MlpTrace {
                    h0,
                    hidden,
                    masks,
                    output: out[0],
                };
            }
            let mask: Vec<S> = match rng.as_deref_mut() {
                Some(r) => dropout_mask(out.len(), self.config.dropout, r),
                None => vec![S::one(); out.len()],
            };
            for (o, &m) in out.iter_mut().zip(&mask) {
                *o = relu(*o) * m;
            }
            hidden.push(out.clone());
            masks.push(mask);
            input = out;
        }
        unreachable!("mlp has an output layer")
    }

    /// Backward of the MLP given `d output`; returns `dh0`.
    pub fn predict_backward(&self, trace: &MlpTrace<S>, dout: S, grads: &mut Gradients<S>) -> Vec<S> {
        let layers = &self.ids.mlp;
        let mut dy = vec![dout];
        for l in (0..layers.len()).rev() {
            let (w, b) = layers[l];
            let input = if l == 0 { &trace.h0 } else { &trace.hidden[l - 1] };
            ops::axpy(S::one(), &dy, grads.get_mut(b));
            let mut dx = vec![S::zero(); input.len()];
            ops::vec_mat_backward(input, self.p(w), &dy, Some(&mut dx), grads.get_mut(w));
            if l > 0 {
                // through dropout and relu of hidden layer l-1
                let (h, m) = (&trace.hidden[l - 1], &trace.masks[l - 1]);
                for c in 0..dx.len() {
                    dx[c] = if h[c] > S::zero() { dx[c] * m[c] } else { S::zero() };
                }
            }
            dy = dx;
        }
        dy
    }
}

/// `mean((r − r̂)²) + λ Σ‖θ‖²` for paired predictions and targets.
pub fn loss<S: Scalar>(predictions: &[S], targets: &[S], tape: &ParamTape<S>, lambda: S) -> Result<S> {
    if let Some(bad) = predictions.iter().position(|p| !p.is_finite()) {
        return Err(HtiError::numerical(format!(
            "non-finite prediction {} at batch position {bad}",
            predictions[bad]
        )));
    }
    let n = S::from_usize(predictions.len().max(1)).unwrap();
    let sse: S = predictions.iter().zip(targets).map(|(&p, &r)| (r - p) * (r - p)).sum();
    let reg = if lambda == S::zero() {
        S::zero()
    } else {
        lambda * tape.l2()
    };
    Ok(sse / n + reg)
}
