use std::collections::HashMap;

use super::params::{Bound, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::{Gradients, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter-set optimizer with its own moment state.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    lr: f64,
    steps: u64,
    moments: HashMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            steps: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Gradients for every bound parameter, zero where none flowed.
    pub fn collect(params: &ParamSet<T>, bound: &Bound, grads: &Gradients<T>) -> Vec<(String, Tensor<T>)> {
        bound
            .iter()
            .map(|(name, var)| {
                let g = grads
                    .get(var)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(params.get(name).map(Tensor::shape).unwrap_or(&[])));
                (name.to_string(), g)
            })
            .collect()
    }

    pub fn apply(&mut self, params: &mut ParamSet<T>, grads: &[(String, Tensor<T>)]) {
        self.steps += 1;
        let lr = T::of(self.lr);
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * gv;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let n = g.numel();
                    let (m, v) = self
                        .moments
                        .entry(name.clone())
                        .or_insert_with(|| (vec![T::zero(); n], vec![T::zero(); n]));
                    let (b1, b2) = (T::of(beta1), T::of(beta2));
                    let c1 = T::one() - T::of(beta1.powi(self.steps as i32));
                    let c2 = T::one() - T::of(beta2.powi(self.steps as i32));
                    let e = T::of(eps);
                    for (((w, &gv), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = b1 * *mi + (T::one() - b1) * gv;
                        *vi = b2 * *vi + (T::one() - b2) * gv * gv;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *w -= lr * mhat / (vhat.sqrt() + e);
                    }
                }
            }
        }
    }
}
