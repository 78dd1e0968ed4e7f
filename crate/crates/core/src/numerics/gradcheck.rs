use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HtiError, Result};
use crate::numerics::{Gradients, ParamId, ParamTape};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Coordinates sampled per parameter tensor; tensors at or below this
    /// size are checked exhaustively.
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            max_coords_per_param: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
}

/// Compares analytic gradients with central finite differences.
///
/// `subject` is anything owning a [`ParamTape`] (the tape itself or a
/// model). `loss_fn(subject, grads)` must be deterministic and, when
/// `grads` is `Some`, accumulate ∂loss/∂θ into it. The error per
/// coordinate is `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<S, T, F>(subject: &mut T, eps: S, opts: GradCheckOptions, mut loss_fn: F) -> Result<GradCheckReport>
where
    S: Scalar,
    T: AsMut<ParamTape<S>>,
    F: FnMut(&T, Option<&mut Gradients<S>>) -> S,
{
    let mut grads = subject.as_mut().new_gradients();
    let base = loss_fn(subject, Some(&mut grads));
    if !base.is_finite() {
        return Err(HtiError::numerical(format!("non-finite loss {base} in grad_check")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coords_checked: 0,
    };
    let two_eps = eps + eps;
    for pi in 0..subject.as_mut().len() {
        let id = ParamId(pi);
        let (frozen, total) = {
            let p = subject.as_mut().param(id);
            (p.frozen_prefix, p.value.len())
        };
        let free = total - frozen;
        let coords: Vec<usize> = if free <= opts.max_coords_per_param {
            (frozen..total).collect()
        } else {
            sample(&mut rng, free, opts.max_coords_per_param)
                .into_iter()
                .map(|c| c + frozen)
                .collect()
        };
        for c in coords {
            let orig = subject.as_mut().value(id)[c];
            subject.as_mut().value_mut(id)[c] = orig + eps;
            let plus = loss_fn(subject, None);
            subject.as_mut().value_mut(id)[c] = orig - eps;
            let minus = loss_fn(subject, None);
            subject.as_mut().value_mut(id)[c] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(HtiError::numerical("non-finite loss during perturbation"));
            }
            let numeric = ((plus - minus) / two_eps).as_f64();
            let analytic = grads.get(id).data()[c].as_f64();
            let err = (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs());
            report.coords_checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_param = subject.as_mut().param(id).name.clone();
                report.worst_index = c;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
