use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

/// Adam optimizer state (Kingma & Ba) with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar = f64> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T) -> Self {
        Self { lr, beta1: T::of(0.9), beta2: T::of(0.999), eps: T::of(1e-8), step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Descends along `grads`; moment buffers are allocated on the first call.
    pub fn step(&mut self, params: &mut [&mut Array2<T>], grads: &[Array2<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch(format!("{} parameters, {} gradients", params.len(), grads.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.dim() != g.dim() {
                return Err(Error::DimensionMismatch(format!("parameter {:?} vs gradient {:?}", p.dim(), g.dim())));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Array2::zeros(p.dim())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.dim() != p.dim()) {
            return Err(Error::DimensionMismatch("parameter set changed between steps".into()));
        }

        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            Zip::from(&mut **p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
