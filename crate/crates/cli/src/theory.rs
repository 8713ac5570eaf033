//! `verify`, `solve` and `frontier`: the exact discrete side.

use fairldp::discrete::{induced_joint, random_channel, random_source, Channel, JointSource};
use fairldp::info::mutual_information;
use fairldp::ldp::{check_lemma1, rr_channel, verify_ldp, Lemma1Outcome, RandomizedResponse};
use fairldp::solver::{
    check_corollary2, check_theorem1, solve_with_channel, trace_frontier, BruteForceConfig, FrontierPoint,
};
use fairldp::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{announce, num, write_csv, write_json};
use crate::CliError;

/// Allowed gap between solver and oracle leakage.
const ORACLE_GAP: f64 = 0.02;
const ZERO_TOL: f64 = 1e-12;

pub fn load_source(cfg: &RunConfig) -> Result<JointSource, CliError> {
    match &cfg.source {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            Ok(JointSource::from_text(&text)?)
        }
        None => Ok(random_source(2, 2, cfg.card_x, 1.0, &mut ChaCha8Rng::seed_from_u64(cfg.seeds[0]))),
    }
}

fn rr(cfg: &RunConfig, src: &JointSource, epsilon: f64) -> Result<RandomizedResponse, CliError> {
    Ok(RandomizedResponse::new(epsilon, cfg.rr_k.unwrap_or(src.card_x()), cfg.rr_d)?)
}

/// The configured mechanism channel, or randomized response at `epsilon`.
fn mechanism(cfg: &RunConfig, src: &JointSource, epsilon: f64) -> Result<Channel, CliError> {
    match &cfg.channel {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            Ok(Channel::from_text(&text)?)
        }
        None => Ok(rr_channel(&rr(cfg, src, epsilon)?)?),
    }
}

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

fn point_json(pt: &FrontierPoint) -> serde_json::Value {
    json!({
        "beta": pt.beta,
        "epsilon": pt.epsilon,
        "gamma": pt.gamma.get(),
        "omega": pt.omega.get(),
        "nu": pt.nu.get(),
        "ixz": pt.ixz.get(),
        "objective": pt.objective,
        "converged": pt.converged,
        "encoder": pt.encoder.rows().rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
    })
}

pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let src = load_source(cfg)?;
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds[0]);

    for &eps in &cfg.epsilon {
        let mech = mechanism(cfg, &src, eps)?;
        let ldp = verify_ldp(&mech, eps);
        checks.push(Check {
            name: "verify_ldp".into(),
            pass: ldp.pass,
            detail: format!("ε = {eps}: mechanism max log-ratio {}", ldp.max_log_ratio),
        });
        let mut worst_ratio: f64 = 0.0;
        let mut worst_ixz = f64::NEG_INFINITY;
        let mut lemma1 = true;
        for _ in 0..cfg.verify_encoders {
            let enc: Channel = random_channel(src.card_x(), mech.in_card(), 0.5, &mut rng);
            match check_lemma1(&enc, &mech, eps)? {
                Lemma1Outcome::Holds { max_log_ratio } => worst_ratio = worst_ratio.max(max_log_ratio),
                Lemma1Outcome::Violated { max_log_ratio }
                | Lemma1Outcome::PreconditionFailed { mechanism_ratio: max_log_ratio } => {
                    lemma1 = false;
                    worst_ratio = worst_ratio.max(max_log_ratio);
                }
            }
            let joint = induced_joint(&src, &enc.compose(&mech)?)?;
            worst_ixz = worst_ixz.max(mutual_information(joint.joint_xz().view())?.get());
        }
        checks.push(Check {
            name: "check_lemma1".into(),
            pass: lemma1,
            detail: format!("ε = {eps}: worst composed log-ratio {worst_ratio} over {} encoders", cfg.verify_encoders),
        });
        checks.push(Check {
            name: "lemma2 I(X;Z) <= ε".into(),
            pass: worst_ixz <= eps + 1e-9,
            detail: format!("ε = {eps}: max I(X;Z) {worst_ixz}"),
        });
        for &beta in &cfg.beta {
            let pt = solve_with_channel(&src, &mech, eps, &cfg.solver_config(beta))?;
            let r = check_theorem1(&pt, pt.gamma_target);
            let failed: Vec<&str> = [
                (r.utility_in_range, "γ <= Γ <= ε"),
                (r.leakage_bound, "Ω <= ε - ν"),
                (r.ixz_bound, "Ω <= I(X;Z) <= ε"),
            ]
            .iter()
            .filter(|(ok, _)| !ok)
            .map(|(_, n)| *n)
            .collect();
            checks.push(Check {
                name: "check_theorem1".into(),
                pass: r.pass(),
                detail: format!(
                    "β = {beta}, ε = {eps}: Γ {} Ω {} ν {}{}",
                    pt.gamma.get(),
                    pt.omega.get(),
                    pt.nu.get(),
                    if failed.is_empty() { String::new() } else { format!("; violated {}", failed.join(", ")) }
                ),
            });
        }
    }

    let mut zero_budget = serde_json::Value::Null;
    if cfg.channel.is_none() {
        let pt = solve_with_channel(&src, &mechanism(cfg, &src, 0.0)?, 0.0, &cfg.solver_config(cfg.beta[0]))?;
        let (g, o) = (pt.gamma.get(), pt.omega.get());
        zero_budget = json!({ "gamma": g, "omega": o, "ixz": pt.ixz.get() });
        checks.push(Check {
            name: "corollary1".into(),
            pass: g <= ZERO_TOL && o <= ZERO_TOL && pt.ixz.get() <= ZERO_TOL,
            detail: format!("ε = 0: Γ {g} Ω {o}"),
        });

        let oracle = BruteForceConfig { budget: cfg.oracle_budget, seed: cfg.seeds[0], ..Default::default() };
        let check = match check_corollary2(&src, cfg.gamma, &oracle, &cfg.solver_config(cfg.beta[0]), &cfg.beta) {
            Ok(r) => Check {
                name: "check_corollary2".into(),
                pass: r.gap.abs() <= ORACLE_GAP,
                detail: format!(
                    "γ = {}: solver {} oracle {} gap {}",
                    r.gamma, r.solver_leakage, r.oracle_leakage, r.gap
                ),
            },
            Err(Error::Infeasible { gamma, best }) => Check {
                name: "check_corollary2".into(),
                pass: false,
                detail: format!("γ = {gamma}: no β reaches the floor at ε ≈ γ (best Γ {best})"),
            },
            Err(e) => return Err(e.into()),
        };
        checks.push(check);
    }

    let pass = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!("{} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    announce(&write_json(cfg, "verify.json", json!({ "pass": pass, "checks": checks, "zero_budget": zero_budget }))?);
    if pass {
        Ok(())
    } else {
        let mut names: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        names.dedup();
        Err(CliError::Check(names.join(", ")))
    }
}

pub fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let src = load_source(cfg)?;
    let (beta, eps) = (cfg.beta[0], cfg.epsilon[0]);
    let pt = solve_with_channel(&src, &mechanism(cfg, &src, eps)?, eps, &cfg.solver_config(beta))?;
    println!("Γ = {} Ω = {} ν = {} I(X;Z) = {}", pt.gamma.get(), pt.omega.get(), pt.nu.get(), pt.ixz.get());
    announce(&write_json(cfg, "solve.json", point_json(&pt))?);
    Ok(())
}

pub const FRONTIER_COLUMNS: [&str; 9] =
    ["beta", "epsilon", "gamma", "omega", "nu", "ixz", "objective", "converged", "error"];

pub fn frontier(cfg: &RunConfig, jobs: usize) -> Result<(), CliError> {
    if cfg.channel.is_some() {
        return Err(CliError::Config("frontier sweeps ε with randomized response; remove channel".into()));
    }
    let src = load_source(cfg)?;
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut rows = Vec::new();
    for &eps in &cfg.epsilon {
        let mech = rr(cfg, &src, eps)?;
        let points = pool.install(|| trace_frontier(&src, &mech, &cfg.beta, &cfg.solver_config(cfg.beta[0])))?;
        for (beta, pt) in points {
            rows.push(match pt {
                Ok(pt) => vec![
                    num(beta),
                    num(eps),
                    num(pt.gamma.get()),
                    num(pt.omega.get()),
                    num(pt.nu.get()),
                    num(pt.ixz.get()),
                    num(pt.objective),
                    pt.converged.to_string(),
                    String::new(),
                ],
                Err(e) => {
                    let mut row = vec![num(beta), num(eps)];
                    row.extend(std::iter::repeat_n("NaN".to_string(), 5));
                    row.push("false".into());
                    row.push(format!("\"{}\"", e.to_string().replace('"', "'")));
                    row
                }
            });
        }
    }
    announce(&write_csv(cfg, "frontier.csv", &FRONTIER_COLUMNS, &rows)?);
    Ok(())
}
