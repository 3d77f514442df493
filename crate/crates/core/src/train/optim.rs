use crate::autograd::{Gradients, Tensor};
use crate::error::{Error, Result};
use crate::nets::{Bound, ParamStore};

/// Adaptive-moment optimizer over one parameter store.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f32) -> Self {
        let zeros: Vec<Tensor> = store.tensors().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
        Self { lr, beta1: 0.0, beta2: 0.99, eps: 1e-8, m: zeros.clone(), v: zeros, t: 0 }
    }

    /// Applies one update from the gradients of `bound`'s leaves. Missing
    /// gradients count as zero; non-finite gradients abort the update.
    pub fn step(&mut self, store: &mut ParamStore, bound: &Bound, grads: &mut Gradients) -> Result<()> {
        let taken: Vec<Option<Tensor>> = bound.ids().iter().map(|&id| grads.take(id)).collect();
        if taken.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, (param, g)) in store.tensors_mut().iter_mut().zip(taken).enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((p, &gi), mi), vi) in param.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *p -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
