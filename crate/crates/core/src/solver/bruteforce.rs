//! Search oracle for the constrained problem
//! `min I(S;Z)` subject to `I(U;Z) >= γ`.
//!
//! Candidates come from three sources: every deterministic map `X -> Z`,
//! random Dirichlet channels and random row-wise mixtures of deterministic
//! maps, and a final local-perturbation phase around the incumbent. Each
//! feasible candidate is slid towards a constant channel by bisection until
//! the utility constraint becomes active; along that segment `I(U;Z)` is
//! convex with minimum 0 at the constant end, hence monotone, and `I(S;Z)`
//! shrinks with it. Every channel evaluated (including bisection steps)
//! counts against the budget.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discrete::{random_channel, Channel, JointSource};
use crate::error::{Error, Result};
use crate::info::{mi_unchecked, Nats};
use crate::scalar::Scalar;

/// Largest `|X|` and `|Z|` the oracle accepts.
pub const MAX_ORACLE_CARD: usize = 4;

/// Slack on the utility constraint.
pub const CONSTRAINT_SLACK: f64 = 1e-6;

const BISECTION_STEPS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceConfig {
    /// Total number of candidate channels evaluated.
    pub budget: usize,
    /// Output alphabet size; `None` means `|X|`.
    pub z_card: Option<usize>,
    pub seed: u64,
}

impl Default for BruteForceConfig {
    fn default() -> Self {
        Self { budget: 1_000_000, z_card: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct BruteForceResult<T: Scalar = f64> {
    pub leakage: Nats<T>,
    pub utility: Nats<T>,
    pub encoder: Channel<T>,
    pub evaluated: usize,
}

struct Oracle<'a, T: Scalar> {
    p_ux: Array2<T>,
    p_sx: Array2<T>,
    gamma: T,
    evaluated: usize,
    budget: usize,
    best: Option<(T, T, Array2<T>)>,
    constants: &'a [Array1<T>],
}

impl<T: Scalar> Oracle<'_, T> {
    fn exhausted(&self) -> bool {
        self.evaluated >= self.budget
    }

    fn utility_leakage(&mut self, w: &Array2<T>) -> (T, T) {
        self.evaluated += 1;
        let uz = self.p_ux.dot(w);
        let sz = self.p_sx.dot(w);
        (mi_unchecked(uz.view()), mi_unchecked(sz.view()))
    }

    fn record(&mut self, w: &Array2<T>, utility: T, leakage: T) {
        if utility >= self.gamma && self.best.as_ref().is_none_or(|(l, _, _)| leakage < *l) {
            self.best = Some((leakage, utility, w.clone()));
        }
    }

    fn mix(w: &Array2<T>, c: &Array1<T>, lambda: T) -> Array2<T> {
        let mut out = w.mapv(|v| v * (T::one() - lambda));
        for mut row in out.rows_mut() {
            row.zip_mut_with(c, |a, &b| *a += lambda * b);
        }
        out
    }

    /// Evaluates `w` and, if feasible, its boundary mixtures with each constant.
    fn consider(&mut self, w: &Array2<T>) {
        let (u, l) = self.utility_leakage(w);
        if u < self.gamma {
            return;
        }
        self.record(w, u, l);
        for ci in 0..self.constants.len() {
            let c = self.constants[ci].clone();
            let (mut lo, mut hi) = (T::zero(), T::one());
            for _ in 0..BISECTION_STEPS {
                if self.exhausted() {
                    return;
                }
                let mid = (lo + hi) * T::of(0.5);
                let m = Self::mix(w, &c, mid);
                let (u, l) = self.utility_leakage(&m);
                if u >= self.gamma {
                    self.record(&m, u, l);
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
    }
}

fn deterministic_maps(nx: usize, nz: usize) -> Vec<Vec<usize>> {
    let total = nz.pow(nx as u32);
    (0..total)
        .map(|mut code| {
            (0..nx)
                .map(|_| {
                    let z = code % nz;
                    code /= nz;
                    z
                })
                .collect()
        })
        .collect()
}

fn one_hot<T: Scalar>(map: &[usize], nz: usize) -> Array2<T> {
    Array2::from_shape_fn((map.len(), nz), |(x, z)| if map[x] == z { T::one() } else { T::zero() })
}

/// Minimum `I(S;Z)` over searched encoders with `I(U;Z) >= γ - 1e-6`.
pub fn solve_g_bruteforce<T: Scalar>(
    src: &JointSource<T>,
    gamma: f64,
    cfg: &BruteForceConfig,
) -> Result<BruteForceResult<T>> {
    let nx = src.card_x();
    let nz = cfg.z_card.unwrap_or(nx);
    if nx > MAX_ORACLE_CARD || !(1..=MAX_ORACLE_CARD).contains(&nz) {
        return Err(Error::CapExceeded { size: nx.max(nz), cap: MAX_ORACLE_CARD });
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidParameter(format!("gamma {gamma} must be finite and >= 0")));
    }
    if cfg.budget == 0 {
        return Err(Error::InvalidParameter("zero candidate budget".into()));
    }
    let maps = deterministic_maps(nx, nz);
    let mut constants: Vec<Array1<T>> =
        (0..nz).map(|j| Array1::from_shape_fn(nz, |z| if z == j { T::one() } else { T::zero() })).collect();
    constants.push(Array1::from_elem(nz, T::one() / T::of_usize(nz)));

    let mut oracle = Oracle {
        p_ux: src.p_ux(),
        p_sx: src.p_sx(),
        gamma: T::of(gamma - CONSTRAINT_SLACK),
        evaluated: 0,
        budget: cfg.budget,
        best: None,
        constants: &constants,
    };

    // The utility ceiling is attained at a deterministic map.
    let mut ceiling = T::zero();
    for m in &maps {
        let (u, _) = oracle.utility_leakage(&one_hot(m, nz));
        ceiling = ceiling.max(u);
    }
    if ceiling < oracle.gamma {
        return Err(Error::Infeasible { gamma, best: ceiling.as_f64() });
    }
    if gamma <= CONSTRAINT_SLACK {
        let c = Channel::constant(nx, constants[nz].as_slice().expect("contiguous"))?;
        return Ok(BruteForceResult {
            leakage: Nats::new(T::zero()),
            utility: Nats::new(T::zero()),
            encoder: c,
            evaluated: oracle.evaluated,
        });
    }

    for m in &maps {
        if oracle.exhausted() {
            break;
        }
        oracle.consider(&one_hot(m, nz));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let explore_until = cfg.budget - cfg.budget / 3;
    let alphas = [0.05, 0.2, 1.0];
    while oracle.evaluated < explore_until {
        let w = if rng.random_bool(0.5) {
            random_channel::<T, _>(nx, nz, alphas[rng.random_range(0..alphas.len())], &mut rng).rows().clone()
        } else {
            // row-wise mixture of two deterministic maps
            let a = &maps[rng.random_range(0..maps.len())];
            let b = &maps[rng.random_range(0..maps.len())];
            let mut w = Array2::zeros((nx, nz));
            for x in 0..nx {
                let t = T::of(rng.random::<f64>());
                w[(x, a[x])] += t;
                w[(x, b[x])] += T::one() - t;
            }
            w
        };
        oracle.consider(&w);
    }

    // local refinement around the incumbent
    let mut step = 0.2;
    while !oracle.exhausted() {
        let Some((_, _, incumbent)) = oracle.best.clone() else { break };
        let before = oracle.best.as_ref().map(|b| b.0);
        for _ in 0..20 {
            if oracle.exhausted() {
                break;
            }
            let noise = random_channel::<T, _>(nx, nz, 0.3, &mut rng);
            let delta = T::of(step * rng.random::<f64>());
            let w = incumbent.mapv(|v| v * (T::one() - delta)) + noise.rows().mapv(|v| v * delta);
            oracle.consider(&w);
        }
        if oracle.best.as_ref().map(|b| b.0) == before {
            step = (step * 0.7).max(1e-4);
        }
    }

    let evaluated = oracle.evaluated;
    let (leakage, utility, w) = oracle.best.expect("a deterministic map meets the ceiling");
    Ok(BruteForceResult {
        leakage: Nats::new(leakage.max(T::zero())),
        utility: Nats::new(utility),
        encoder: Channel::new(w)?,
        evaluated,
    })
}
