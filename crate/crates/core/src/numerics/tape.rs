use crate::error::{HtiError, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

/// Index of a parameter inside a [`ParamTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param<S> {
    pub name: String,
    pub value: Tensor<S>,
    /// Leading flat elements excluded from updates, regularization and
    /// gradient checks (the padding row of the embedding matrix).
    pub frozen_prefix: usize,
}

impl<S: Scalar> Param<S> {
    pub fn trainable(&self) -> &[S] {
        &self.value.data()[self.frozen_prefix..]
    }
}

/// One gradient buffer per parameter, shaped like the parameter.
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [S] {
        self.tensors[id.0].data_mut()
    }

    /// Mutable access to two distinct buffers at once.
    pub fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut [S], &mut [S]) {
        assert_ne!(a, b);
        if a.0 < b.0 {
            let (l, r) = self.tensors.split_at_mut(b.0);
            (l[a.0].data_mut(), r[0].data_mut())
        } else {
            let (l, r) = self.tensors.split_at_mut(a.0);
            (r[0].data_mut(), l[b.0].data_mut())
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<S>> {
        self.tensors.iter()
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::fill_zero);
    }

    pub fn add(&mut self, other: &Gradients<S>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.axpy(S::one(), b);
        }
    }

    pub fn scale(&mut self, factor: S) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn global_norm(&self) -> S {
        self.tensors.iter().map(Tensor::sq_norm).sum::<S>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

impl<S> AsMut<ParamTape<S>> for ParamTape<S> {
    fn as_mut(&mut self) -> &mut ParamTape<S> {
        self
    }
}

/// Ordered registry of named learnable tensors with accumulated gradients.
#[derive(Debug, Clone, Default)]
pub struct ParamTape<S> {
    params: Vec<Param<S>>,
    grads: Vec<Tensor<S>>,
}

impl<S: Scalar> ParamTape<S> {
    pub fn new() -> Self {
        ParamTape {
            params: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn register(&mut self, name: &str, value: Tensor<S>, frozen_prefix: usize) -> ParamId {
        debug_assert!(self.params.iter().all(|p| p.name != name), "duplicate parameter {name}");
        self.grads.push(Tensor::zeros(value.shape()));
        self.params.push(Param {
            name: name.to_string(),
            value,
            frozen_prefix,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Param<S>] {
        &self.params
    }

    pub fn param(&self, id: ParamId) -> &Param<S> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[S] {
        self.params[id.0].value.data()
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [S] {
        self.params[id.0].value.data_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn grad(&self, id: ParamId) -> &[S] {
        self.grads[id.0].data()
    }

    pub fn grads(&self) -> &[Tensor<S>] {
        &self.grads
    }

    /// Fresh zeroed buffer matching every parameter's shape.
    pub fn new_gradients(&self) -> Gradients<S> {
        Gradients {
            tensors: self.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(Tensor::fill_zero);
    }

    /// Replaces the accumulated gradients, clearing frozen coordinates.
    pub fn set_grads(&mut self, grads: Gradients<S>) {
        self.grads = grads.tensors;
        for (p, g) in self.params.iter().zip(self.grads.iter_mut()) {
            g.data_mut()[..p.frozen_prefix].iter_mut().for_each(|x| *x = S::zero());
        }
    }

    /// Σ‖θ‖² over trainable coordinates.
    pub fn l2(&self) -> S {
        self.params
            .iter()
            .map(|p| p.trainable().iter().map(|&x| x * x).sum::<S>())
            .sum()
    }

    /// Adds `2λθ` to a gradient buffer over trainable coordinates.
    pub fn add_l2_grad(&self, lambda: S, grads: &mut Gradients<S>) {
        if lambda == S::zero() {
            return;
        }
        let two = lambda + lambda;
        for (p, g) in self.params.iter().zip(grads.tensors.iter_mut()) {
            let gd = g.data_mut();
            for (i, &x) in p.value.data().iter().enumerate().skip(p.frozen_prefix) {
                gd[i] += two * x;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.all_finite())
    }

    /// Total number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len() - p.frozen_prefix).sum()
    }

    /// Copies values from another tape with the same layout.
    pub fn copy_values_from(&mut self, other: &ParamTape<S>) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(HtiError::format("parameter count mismatch"));
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(HtiError::format(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
            a.value = b.value.clone();
        }
        Ok(())
    }
}
