//! Neural mutual-information estimation (MINE).
//!
//! A statistics network `T(a, b)` is trained to maximize the Donsker-Varadhan
//! bound `E_joint[T] - ln E_marginal[exp T]`. Marginal samples pair each `a`
//! with a `b` drawn from a shuffled copy of the same minibatch. The gradient
//! of the log-partition term uses an exponential moving average of
//! `E_marginal[exp T]` in the denominator; the reported value is the plain
//! DV bound averaged over the final iterations.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Nats;
use crate::autodiff::{Activation, Adam, Graph, Mlp, MlpSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MIN_MINE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub ema_rate: f64,
    pub window: usize,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100, 100],
            activation: Activation::Relu6,
            iterations: 50_000,
            batch_size: 1024,
            learning_rate: 1e-3,
            ema_rate: 0.01,
            window: 100,
        }
    }
}

impl MineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.iterations < self.window {
            return Err(Error::InvalidParameter(format!(
                "iterations {} must be at least the averaging window {}",
                self.iterations, self.window
            )));
        }
        if !(self.ema_rate > 0.0 && self.ema_rate <= 1.0) {
            return Err(Error::InvalidParameter(format!("ema_rate {} not in (0, 1]", self.ema_rate)));
        }
        if self.batch_size < 2 || !(self.learning_rate > 0.0) || self.hidden.contains(&0) {
            return Err(Error::InvalidParameter("invalid MINE batch size, learning rate or widths".into()));
        }
        Ok(())
    }
}

fn gather_rows<T: Scalar>(m: &ArrayView2<T>, idx: &[usize]) -> Array2<T> {
    m.select(Axis(0), idx)
}

/// Estimates `I(A; B)` from paired rows of `a` and `b`.
pub fn mine_estimate<T: Scalar>(a: ArrayView2<T>, b: ArrayView2<T>, cfg: &MineConfig, seed: u64) -> Result<Nats<T>> {
    cfg.validate()?;
    let n = a.nrows();
    if n != b.nrows() {
        return Err(Error::DimensionMismatch(format!("{n} samples vs {} samples", b.nrows())));
    }
    if n < MIN_MINE_SAMPLES {
        return Err(Error::InvalidParameter(format!("MINE needs at least {MIN_MINE_SAMPLES} samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = a.ncols() + b.ncols();
    let spec = MlpSpec::hidden(input, &cfg.hidden, 1, cfg.activation, Activation::Identity)?;
    let mut net = Mlp::<T>::new(spec, &mut rng)?;
    let mut adam = Adam::new(T::of(cfg.learning_rate));
    let batch = cfg.batch_size.min(n);
    let rate = T::of(cfg.ema_rate);
    let mut ema: Option<T> = None;
    let mut tail = Vec::with_capacity(cfg.window);

    for it in 0..cfg.iterations {
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng);
        let a_batch = gather_rows(&a, &idx);
        let joint = concatenate(Axis(1), &[a_batch.view(), gather_rows(&b, &idx).view()]).expect("equal row counts");
        let marginal =
            concatenate(Axis(1), &[a_batch.view(), gather_rows(&b, &shuffled).view()]).expect("equal row counts");

        let mut g = Graph::new();
        let params = net.bind(&mut g);
        let xj = g.constant(joint);
        let xm = g.constant(marginal);
        let tj = net.forward(&mut g, &params, xj)?;
        let tm = net.forward(&mut g, &params, xm)?;
        let mean_tj = g.mean(tj);
        let et = g.exp(tm);
        let mean_et = g.mean(et);

        let mean_et_value = g.scalar_value(mean_et);
        let dv = g.scalar_value(mean_tj) - mean_et_value.ln();
        if !dv.is_finite() || !mean_et_value.is_finite() {
            return Err(Error::NonFinite(format!("MINE iteration {it} (lower the learning rate)")));
        }
        let denom = match ema {
            None => mean_et_value,
            Some(prev) => (T::one() - rate) * prev + rate * mean_et_value,
        };
        ema = Some(denom);

        // loss = -(E_joint T - E_marg[e^T] / ema)
        let corrected = g.scale(mean_et, T::one() / denom);
        let loss = g.sub(corrected, mean_tj)?;
        let grads = g.backward(loss)?;
        let grads: Vec<_> = params.iter().map(|&p| grads.get(p)).collect();
        adam.step(&mut net.params_mut(), &grads)?;

        if it + cfg.window >= cfg.iterations {
            tail.push(dv);
        }
    }
    let mean = tail.iter().copied().sum::<T>() / T::of_usize(tail.len());
    Ok(Nats::new(mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(MineConfig::default().validate().is_ok());
        let bad = MineConfig { iterations: 50, ..MineConfig::default() };
        assert!(bad.validate().is_err());
        let bad = MineConfig { ema_rate: 0.0, ..MineConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn too_few_samples() {
        let a = Array2::<f64>::zeros((10, 1));
        assert!(mine_estimate(a.view(), a.view(), &MineConfig::default(), 0).is_err());
        let b = Array2::<f64>::zeros((2000, 1));
        let c = Array2::<f64>::zeros((1999, 1));
        assert!(mine_estimate(b.view(), c.view(), &MineConfig::default(), 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Array2::from_shape_fn((1000, 1), |_| rng.random::<f64>());
        let b = a.mapv(|v| v * 2.0);
        let cfg = MineConfig { iterations: 120, batch_size: 64, hidden: vec![16], ..MineConfig::default() };
        let x = mine_estimate(a.view(), b.view(), &cfg, 3).unwrap();
        let y = mine_estimate(a.view(), b.view(), &cfg, 3).unwrap();
        assert_eq!(x.get().to_bits(), y.get().to_bits());
    }
}
