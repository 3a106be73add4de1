//! Adaptive-moment gradient descent over a flat parameter vector.

use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(len: usize, lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn set_learning_rate(&mut self, lr: T) {
        self.lr = lr;
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let b1t = T::one() - self.beta1.powi(self.t);
        let b2t = T::one() - self.beta2.powi(self.t);
        let step = self.lr * b2t.sqrt() / b1t;
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (T::one() - self.beta1) * *g;
            *v = self.beta2 * *v + (T::one() - self.beta2) * *g * *g;
            *p -= step * *m / (v.sqrt() + self.eps);
        }
    }
}
