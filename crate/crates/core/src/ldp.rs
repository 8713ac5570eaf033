//! Local differential privacy randomizers.
//!
//! [`LaplaceMechanism`] perturbs a truncated continuous representation,
//! [`RandomizedResponse`] perturbs a vector of discrete symbols. Both come
//! with exact (analytic or enumerated) privacy checks.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discrete::Channel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest `k^d` for which [`rr_channel`] materializes the full matrix.
pub const DEFAULT_CHANNEL_CAP: usize = 4096;

/// Slack used when testing a log ratio against a budget.
pub const LDP_TOL: f64 = 1e-9;

/// Default truncation threshold per coordinate.
pub const DEFAULT_TRUNCATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceMechanism {
    epsilon: f64,
    t: f64,
    d: usize,
}

impl LaplaceMechanism {
    pub fn new(epsilon: f64, t: f64, d: usize) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("Laplace epsilon {epsilon} must be finite and > 0")));
        }
        if !(t > 0.0) || !t.is_finite() || d == 0 {
            return Err(Error::InvalidParameter(format!("Laplace needs t > 0 and d >= 1 (t={t}, d={d})")));
        }
        Ok(Self { epsilon, t, d })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Noise scale `b = 2td / ε`.
    pub fn scale(&self) -> f64 {
        2.0 * self.t * self.d as f64 / self.epsilon
    }

    fn check_input<T: Scalar>(&self, zhat: &[T]) -> Result<()> {
        if zhat.len() != self.d {
            return Err(Error::DimensionMismatch(format!("expected {} coordinates, got {}", self.d, zhat.len())));
        }
        for (i, &v) in zhat.iter().enumerate() {
            let v = v.as_f64();
            if !v.is_finite() || v.abs() > self.t + LDP_TOL {
                return Err(Error::OutOfRange(format!(
                    "coordinate {i} = {v} outside [-{t}, {t}]; truncate before adding noise",
                    t = self.t
                )));
            }
        }
        Ok(())
    }

    /// Adds i.i.d. Laplace(0, b) noise to every coordinate.
    pub fn randomize<T: Scalar, R: Rng + ?Sized>(&self, zhat: &[T], rng: &mut R) -> Result<Vec<T>> {
        self.check_input(zhat)?;
        let b = self.scale();
        Ok(zhat.iter().map(|&v| v + T::of(sample_laplace(b, rng))).collect())
    }

    /// Adds noise in place to a row-major batch of `d`-vectors.
    pub fn randomize_rows<T: Scalar, R: Rng + ?Sized>(&self, batch: &mut Array2<T>, rng: &mut R) -> Result<()> {
        if batch.ncols() != self.d {
            return Err(Error::DimensionMismatch(format!("expected {} columns, got {}", self.d, batch.ncols())));
        }
        for row in batch.rows() {
            self.check_input(&row.to_vec())?;
        }
        let b = self.scale();
        batch.mapv_inplace(|v| v + T::of(sample_laplace(b, rng)));
        Ok(())
    }

    /// `ln p(z | x)` of the output density.
    pub fn log_density(&self, z: &[f64], x: &[f64]) -> Result<f64> {
        if z.len() != self.d || x.len() != self.d {
            return Err(Error::DimensionMismatch("log_density expects d-vectors".into()));
        }
        let b = self.scale();
        let l1: f64 = z.iter().zip(x).map(|(a, c)| (a - c).abs()).sum();
        Ok(-(self.d as f64) * (2.0 * b).ln() - l1 / b)
    }

    /// Worst case over outputs of `ln p(z|x) - ln p(z|x')`, which is `‖x - x'‖₁ / b`.
    pub fn max_log_ratio(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        self.check_input(x_prime)?;
        let l1: f64 = x.iter().zip(x_prime).map(|(a, c)| (a - c).abs()).sum();
        Ok(l1 / self.scale())
    }

    /// Largest log ratio over all admissible input pairs (`‖x - x'‖₁ = 2td`).
    pub fn worst_case_log_ratio(&self) -> f64 {
        2.0 * self.t * self.d as f64 / self.scale()
    }
}

pub(crate) fn sample_laplace<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    // inverse CDF on u in (-1/2, 1/2)
    let u: f64 = rng.random::<f64>() - 0.5;
    let tail = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
    -b * u.signum() * tail.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizedResponse {
    epsilon: f64,
    k: usize,
    d: usize,
}

impl RandomizedResponse {
    pub fn new(epsilon: f64, k: usize, d: usize) -> Result<Self> {
        if !(epsilon >= 0.0) || epsilon.is_nan() {
            return Err(Error::InvalidParameter(format!("RR epsilon {epsilon} must be >= 0")));
        }
        if k < 2 || d == 0 {
            return Err(Error::InvalidParameter(format!("RR needs k >= 2 and d >= 1 (k={k}, d={d})")));
        }
        Ok(Self { epsilon, k, d })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Per-coordinate probability of reporting the true symbol.
    pub fn keep_prob(&self) -> f64 {
        if self.epsilon.is_infinite() {
            return 1.0;
        }
        let w = (self.epsilon / self.d as f64).exp();
        w / (w + (self.k - 1) as f64)
    }

    /// Per-coordinate probability of reporting one particular other symbol.
    pub fn flip_prob(&self) -> f64 {
        (1.0 - self.keep_prob()) / (self.k - 1) as f64
    }

    /// Number of joint symbols, `k^d`.
    pub fn joint_size(&self) -> Option<usize> {
        self.k.checked_pow(u32::try_from(self.d).ok()?)
    }

    pub fn randomize<R: Rng + ?Sized>(&self, zhat: &[usize], rng: &mut R) -> Result<Vec<usize>> {
        if zhat.len() != self.d {
            return Err(Error::DimensionMismatch(format!("expected {} symbols, got {}", self.d, zhat.len())));
        }
        let keep = self.keep_prob();
        zhat.iter()
            .map(|&s| {
                if s >= self.k {
                    return Err(Error::OutOfRange(format!("symbol {s} not in [0, {})", self.k)));
                }
                Ok(self.randomize_symbol(s, keep, rng))
            })
            .collect()
    }

    pub(crate) fn randomize_symbol<R: Rng + ?Sized>(&self, s: usize, keep: f64, rng: &mut R) -> usize {
        if rng.random::<f64>() < keep {
            s
        } else {
            // uniform over the other k - 1 symbols
            let r = rng.random_range(0..self.k - 1);
            if r >= s {
                r + 1
            } else {
                r
            }
        }
    }
}

/// Exact `k^d x k^d` channel of [`RandomizedResponse`], capped at [`DEFAULT_CHANNEL_CAP`].
pub fn rr_channel<T: Scalar>(mech: &RandomizedResponse) -> Result<Channel<T>> {
    rr_channel_with_cap(mech, DEFAULT_CHANNEL_CAP)
}

/// Joint symbols are indexed with coordinate 0 as the most significant digit.
pub fn rr_channel_with_cap<T: Scalar>(mech: &RandomizedResponse, cap: usize) -> Result<Channel<T>> {
    let size = match mech.joint_size() {
        Some(n) if n <= cap => n,
        other => return Err(Error::CapExceeded { size: other.unwrap_or(usize::MAX), cap }),
    };
    let keep = T::of(mech.keep_prob());
    let flip = T::of(mech.flip_prob());
    let rows = Array2::from_shape_fn((size, size), |(a, b)| {
        let (mut a, mut b) = (a, b);
        let mut p = T::one();
        for _ in 0..mech.d {
            p *= if a % mech.k == b % mech.k { keep } else { flip };
            a /= mech.k;
            b /= mech.k;
        }
        p
    });
    Channel::new(rows)
}

/// Outcome of an exhaustive privacy check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub max_log_ratio: f64,
    pub pass: bool,
}

/// Largest `ln p(z|x) / p(z|x')` over all outputs and input pairs.
///
/// `0/0` counts as satisfied; a positive probability against a zero one is an
/// infinite ratio.
pub fn verify_ldp<T: Scalar>(ch: &Channel<T>, epsilon: f64) -> LdpReport {
    let rows = ch.rows();
    let mut worst = 0.0f64;
    for col in rows.columns() {
        let hi = col.iter().fold(T::zero(), |m, &p| m.max(p));
        let lo = col.iter().fold(T::infinity(), |m, &p| m.min(p));
        if hi <= T::zero() {
            continue;
        }
        let ratio = if lo <= T::zero() { f64::INFINITY } else { (hi.ln() - lo.ln()).as_f64() };
        worst = worst.max(ratio);
    }
    LdpReport { max_log_ratio: worst, pass: worst <= epsilon + LDP_TOL }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Lemma1Outcome {
    /// The mechanism itself is not ε-LDP, so the lemma does not apply.
    PreconditionFailed {
        mechanism_ratio: f64,
    },
    Holds {
        max_log_ratio: f64,
    },
    Violated {
        max_log_ratio: f64,
    },
}

impl Lemma1Outcome {
    pub fn holds(&self) -> bool {
        matches!(self, Self::Holds { .. })
    }
}

/// Checks that pre-composing an ε-LDP mechanism with any encoder stays ε-LDP.
pub fn check_lemma1<T: Scalar>(enc: &Channel<T>, mech: &Channel<T>, epsilon: f64) -> Result<Lemma1Outcome> {
    let pre = verify_ldp(mech, epsilon);
    if !pre.pass {
        return Ok(Lemma1Outcome::PreconditionFailed { mechanism_ratio: pre.max_log_ratio });
    }
    let composed = verify_ldp(&enc.compose(mech)?, epsilon);
    Ok(if composed.pass {
        Lemma1Outcome::Holds { max_log_ratio: composed.max_log_ratio }
    } else {
        Lemma1Outcome::Violated { max_log_ratio: composed.max_log_ratio }
    })
}
