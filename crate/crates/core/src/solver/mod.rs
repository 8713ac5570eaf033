//! Exact utility-leakage optimization on small discrete alphabets.
//!
//! [`solve_g`] maximizes `I(X;Z|S) + β I(U;Z)` over softmax-parameterized
//! encoders `p(ẑ|x)` followed by a fixed randomized-response channel. All
//! information terms are computed exactly from the induced joint and
//! differentiated through the autodiff graph. [`solve_g_bruteforce`]
//! is an independent search used as an oracle for the constrained problem
//! (minimum leakage at a utility floor).

mod bruteforce;
mod objective;
mod theory;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Adam;
use crate::discrete::{induced_joint, Channel, JointSource};
use crate::error::{Error, Result};
use crate::info::{conditional_mi, mutual_information, Nats};
use crate::ldp::{rr_channel, RandomizedResponse};
use crate::scalar::Scalar;

pub use bruteforce::{solve_g_bruteforce, BruteForceConfig, BruteForceResult, MAX_ORACLE_CARD};
pub use objective::{objective_and_gradient, Terms};
pub use theory::{check_corollary2, check_theorem1, Corollary2Report, Theorem1Report, THEOREM_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub beta: f64,
    pub restarts: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Stop a restart once the objective changes by less than this for
    /// [`SolverConfig::patience`] consecutive steps.
    pub tolerance: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { beta: 1.0, restarts: 8, iterations: 2000, learning_rate: 0.05, tolerance: 1e-7, patience: 20, seed: 0 }
    }
}

impl SolverConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self { beta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta {} must be finite and >= 0", self.beta)));
        }
        if self.restarts == 0 || self.iterations == 0 || self.patience == 0 {
            return Err(Error::InvalidParameter("restarts, iterations and patience must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("learning rate and tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder logits; the realized encoder is their row-wise softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T: Scalar = f64> {
    pub logits: Array2<T>,
}

impl<T: Scalar> EncoderParams<T> {
    pub fn random(card_x: usize, card_zhat: usize, rng: &mut ChaCha8Rng) -> Self {
        let logits = Array2::from_shape_simple_fn((card_x, card_zhat), || {
            let v: f64 = StandardNormal.sample(rng);
            T::of(v)
        });
        Self { logits }
    }

    pub fn realize(&self) -> Channel<T> {
        let mut rows = self.logits.clone();
        for mut row in rows.rows_mut() {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            row.mapv_inplace(|v| (v - max).exp());
            let total = row.sum();
            row.mapv_inplace(|v| v / total);
        }
        Channel::from_rows_unchecked(rows)
    }
}

/// One solved point of the utility-leakage tradeoff.
#[derive(Debug, Clone)]
pub struct FrontierPoint<T: Scalar = f64> {
    pub beta: f64,
    pub epsilon: f64,
    /// Utility floor this point certifies (the attained `Γ` unless set otherwise).
    pub gamma_target: f64,
    /// `I(U; Z)`
    pub gamma: Nats<T>,
    /// `I(S; Z)`
    pub omega: Nats<T>,
    /// `I(X; Z | S)`
    pub nu: Nats<T>,
    pub ixz: Nats<T>,
    pub objective: T,
    /// Encoder `p(ẑ | x)`, before the mechanism.
    pub encoder: Channel<T>,
    pub converged: bool,
}

/// Exact `(Γ, Ω, ν, I(X;Z))` of `enc` followed by `mech`.
pub fn exact_terms<T: Scalar>(src: &JointSource<T>, enc: &Channel<T>, mech: &Channel<T>) -> Result<[Nats<T>; 4]> {
    let joint = induced_joint(src, &enc.compose(mech)?)?;
    Ok([
        mutual_information(joint.joint_uz().view())?,
        mutual_information(joint.joint_sz().view())?,
        conditional_mi(joint.joint_xzs().view())?,
        mutual_information(joint.joint_xz().view())?,
    ])
}

struct RestartOutcome<T: Scalar> {
    logits: Array2<T>,
    objective: T,
    converged: bool,
}

fn run_restart<T: Scalar>(
    data: &objective::ObjectiveData<T>,
    cfg: &SolverConfig,
    mut logits: Array2<T>,
) -> Result<RestartOutcome<T>> {
    let beta = T::of(cfg.beta);
    let mut adam = Adam::new(T::of(cfg.learning_rate));
    let tol = T::of(cfg.tolerance);
    let mut previous: Option<T> = None;
    let mut calm = 0usize;
    let mut converged = false;
    for it in 0..cfg.iterations {
        let (terms, grad) = objective::evaluate(data, beta, &logits)?;
        if !terms.objective.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "solver objective at iteration {it} (learning rate {} too large?)",
                cfg.learning_rate
            )));
        }
        if let Some(prev) = previous {
            calm = if (terms.objective - prev).abs() < tol { calm + 1 } else { 0 };
            if calm >= cfg.patience {
                converged = true;
                break;
            }
        }
        previous = Some(terms.objective);
        // ascent
        adam.step(&mut [&mut logits], &[grad.mapv(|g| -g)])?;
    }
    let (terms, _) = objective::evaluate(data, beta, &logits)?;
    Ok(RestartOutcome { logits, objective: terms.objective, converged })
}

/// Maximizes `I(X;Z|S) + β I(U;Z)` for encoders composed with `mech`.
///
/// The intermediate alphabet is the mechanism's joint alphabet `k^d`.
pub fn solve_g<T: Scalar>(
    src: &JointSource<T>,
    mech: &RandomizedResponse,
    cfg: &SolverConfig,
) -> Result<FrontierPoint<T>> {
    cfg.validate()?;
    let channel = rr_channel::<T>(mech)?;
    solve_with_channel(src, &channel, mech.epsilon(), cfg)
}

/// [`solve_g`] against an arbitrary mechanism channel.
pub fn solve_with_channel<T: Scalar>(
    src: &JointSource<T>,
    channel: &Channel<T>,
    epsilon: f64,
    cfg: &SolverConfig,
) -> Result<FrontierPoint<T>> {
    cfg.validate()?;
    let data = objective::ObjectiveData::new(src, channel)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<RestartOutcome<T>> = None;
    for _ in 0..cfg.restarts {
        let init = EncoderParams::<T>::random(src.card_x(), channel.in_card(), &mut rng);
        let out = run_restart(&data, cfg, init.logits)?;
        if best.as_ref().is_none_or(|b| out.objective > b.objective) {
            best = Some(out);
        }
    }
    let best = best.expect("at least one restart");
    let encoder = EncoderParams { logits: best.logits }.realize();
    let [gamma, omega, nu, ixz] = exact_terms(src, &encoder, channel)?;
    Ok(FrontierPoint {
        beta: cfg.beta,
        epsilon,
        gamma_target: gamma.get().as_f64(),
        gamma,
        omega,
        nu,
        ixz,
        objective: nu.get() + T::of(cfg.beta) * gamma.get(),
        encoder,
        converged: best.converged,
    })
}

/// Solves one point per `β`, in parallel, returned in ascending `β` order.
///
/// Every point uses the same seed so restarts start from the same logits.
pub fn trace_frontier<T: Scalar>(
    src: &JointSource<T>,
    mech: &RandomizedResponse,
    beta_grid: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<(f64, Result<FrontierPoint<T>>)>> {
    if beta_grid.is_empty() {
        return Err(Error::InvalidParameter("empty beta grid".into()));
    }
    let mut grid = beta_grid.to_vec();
    if grid.iter().any(|b| b.is_nan()) {
        return Err(Error::InvalidParameter("NaN in beta grid".into()));
    }
    grid.sort_by(f64::total_cmp);
    let channel = rr_channel::<T>(mech)?;
    Ok(grid
        .par_iter()
        .map(|&beta| {
            let point_cfg = SolverConfig { beta, ..cfg.clone() };
            (beta, solve_with_channel(src, &channel, mech.epsilon(), &point_cfg))
        })
        .collect())
}

/// `n` log-spaced values from `10^lo` to `10^hi`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..n).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::random_source;

    fn quick(beta: f64) -> SolverConfig {
        SolverConfig { beta, restarts: 3, iterations: 600, ..SolverConfig::default() }
    }

    #[test]
    fn softmax_realization_is_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = EncoderParams::<f64>::random(3, 4, &mut rng);
        let ch = p.realize();
        for row in ch.rows().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_budget_gives_zero_information() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = random_source::<f64, _>(2, 2, 3, 1.0, &mut rng);
        let mech = RandomizedResponse::new(0.0, 3, 1).unwrap();
        let pt = solve_g(&src, &mech, &quick(1.0)).unwrap();
        assert!(pt.gamma.get() <= 1e-12 && pt.omega.get() <= 1e-12 && pt.ixz.get() <= 1e-12);
    }

    #[test]
    fn chain_rule_on_solved_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_source::<f64, _>(2, 2, 3, 1.0, &mut rng);
        let mech = RandomizedResponse::new(1.0, 3, 1).unwrap();
        let pt = solve_g(&src, &mech, &quick(0.0)).unwrap();
        assert!((pt.omega.get() - (pt.ixz.get() - pt.nu.get())).abs() < 1e-9);
        assert!(pt.ixz.get() <= 1.0 + 1e-9);
    }

    #[test]
    fn single_beta_frontier_matches_solve_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = random_source::<f64, _>(2, 2, 3, 1.0, &mut rng);
        let mech = RandomizedResponse::new(1.0, 3, 1).unwrap();
        let cfg = quick(2.0);
        let front = trace_frontier(&src, &mech, &[2.0], &cfg).unwrap();
        let direct = solve_g(&src, &mech, &cfg).unwrap();
        assert_eq!(front.len(), 1);
        let pt = front[0].1.as_ref().unwrap();
        assert_eq!(pt.gamma.get().to_bits(), direct.gamma.get().to_bits());
        assert_eq!(pt.encoder, direct.encoder);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::with_beta(-1.0).validate().is_err());
        assert!(SolverConfig { restarts: 0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn logspace_endpoints() {
        let g = logspace(-3.0, 3.0, 7);
        assert_eq!(g.len(), 7);
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[3] - 1.0).abs() < 1e-12 && (g[6] - 1e3).abs() < 1e-9);
    }
}
