use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::sqrt;
use crate::policy::{Gradients, QNetworkParams};

/// Root-mean-square gradient scaling:
/// `s = decay * s + (1 - decay) * g^2`, `w -= lr * g / (sqrt(s) + eps)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub eps: f64,
    pub square_avg: Vec<f64>,
}

impl RmsProp {
    pub fn new(n: usize, learning_rate: f64, decay: f64, eps: f64) -> Self {
        RmsProp { learning_rate, decay, eps, square_avg: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut QNetworkParams, grads: &Gradients) {
        let w = params.values_mut();
        debug_assert_eq!(w.len(), grads.values.len());
        for ((wi, &g), s) in w.iter_mut().zip(&grads.values).zip(&mut self.square_avg) {
            *s = self.decay * *s + (1.0 - self.decay) * g * g;
            *wi -= self.learning_rate * g / (sqrt(*s) + self.eps);
        }
    }
}
