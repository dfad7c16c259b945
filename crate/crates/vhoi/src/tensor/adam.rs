//! Adam optimizer (bias-corrected first/second moments).

use ndarray::ArrayD;
use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::Real;

pub struct Adam<S: Real> {
    /// Parameters this optimizer is allowed to update; everything else in
    /// the store is frozen by construction.
    trainable: Vec<ParamId>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: HashMap<ParamId, ArrayD<S>>,
    v: HashMap<ParamId, ArrayD<S>>,
}

impl<S: Real> Adam<S> {
    pub fn new(trainable: Vec<ParamId>, lr: f64) -> Self {
        Self {
            trainable,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn trainable(&self) -> &[ParamId] {
        &self.trainable
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Applies one update from accumulated gradients. Gradients for ids not
    /// in the trainable set are ignored.
    pub fn step(&mut self, store: &mut ParamStore<S>, grads: &HashMap<ParamId, ArrayD<S>>) {
        self.step += 1;
        let b1 = S::from_f64(self.beta1);
        let b2 = S::from_f64(self.beta2);
        let one = S::one();
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let lr_t = S::from_f64(self.lr * bc2.sqrt() / bc1);
        let eps = S::from_f64(self.eps);

        for &id in &self.trainable {
            let Some(g) = grads.get(&id) else { continue };
            let m = self
                .m
                .entry(id)
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(id)
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| *m = b1 * *m + (one - b1) * g);
            ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| *v = b2 * *v + (one - b2) * g * g);
            let mut new = store.value(id).to_owned();
            ndarray::Zip::from(&mut new)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| *p = *p - lr_t * m / (v.sqrt() + eps));
            store.set(id, new);
        }
    }
}
