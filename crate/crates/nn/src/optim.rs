//! Adam optimizer over a [`ParamStore`].

use crate::store::{Grads, ParamStore};
use crate::Arr;

pub struct Adam {
    m: Vec<Option<Arr>>,
    v: Vec<Option<Arr>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: (0..n_params).map(|_| None).collect(),
            v: (0..n_params).map(|_| None).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update with the given learning rate. Parameters without a
    /// gradient this step are left untouched (their moments do not advance).
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for idx in 0..store.len() {
            let Some(g) = grads.by_param[idx].as_ref() else {
                continue;
            };
            let m = self.m[idx].get_or_insert_with(|| Arr::zeros(g.raw_dim()));
            let v = self.v[idx].get_or_insert_with(|| Arr::zeros(g.raw_dim()));
            ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            });
            ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| {
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            });
            let value = store.value_mut(crate::ParamId(idx));
            ndarray::Zip::from(value)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let mhat = m / bc1;
                    let vhat = v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}
