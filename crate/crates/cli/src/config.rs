//! Plain-text `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment. Grid-valued keys (`beta`,
//! `epsilon`, `seeds`, `mode`) accept a comma list or `logspace(lo, hi, n)`
//! (`10^lo ..= 10^hi`). Unknown or repeated keys are errors.

use std::collections::BTreeSet;
use std::path::PathBuf;

use fairldp::encoder::{Mode, ModelSpec, TrainConfig};
use fairldp::fairness::{DownstreamConfig, EvalConfig};
use fairldp::info::MineConfig;
use fairldp::solver::logspace;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Adult,
    Compas,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub compas_csv: Option<PathBuf>,
    pub synthetic_rows: usize,
    pub modes: Vec<Mode>,
    pub beta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub t: f64,
    pub d: usize,
    pub codebook_size: usize,
    pub code_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub mc_samples: usize,
    pub vq_lambda: f64,
    pub seeds: Vec<u64>,
    // discrete theory
    pub source: Option<PathBuf>,
    pub card_x: usize,
    pub rr_k: Option<usize>,
    pub rr_d: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub gamma: f64,
    pub oracle_budget: usize,
    pub verify_encoders: usize,
    pub channel: Option<PathBuf>,
    // evaluation
    pub attacker_epochs: usize,
    pub mine_iterations: usize,
    pub mine_batch: usize,
    // locations
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub adult_url: Option<String>,
    pub sweeps: Vec<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Adult,
            compas_csv: None,
            synthetic_rows: 8000,
            modes: vec![Mode::Continuous],
            beta: vec![1.0],
            epsilon: vec![5.0],
            t: 0.5,
            d: 2,
            codebook_size: 4,
            code_dim: 8,
            hidden: 100,
            epochs: 150,
            batch: 512,
            lr: 1e-3,
            mc_samples: 1,
            vq_lambda: 0.25,
            seeds: vec![0],
            source: None,
            card_x: 3,
            rr_k: None,
            rr_d: 1,
            restarts: 8,
            iterations: 2000,
            gamma: 0.0,
            oracle_budget: 1_000_000,
            verify_encoders: 200,
            channel: None,
            attacker_epochs: 20,
            mine_iterations: 50_000,
            mine_batch: 1024,
            out: PathBuf::from("out"),
            checkpoint: None,
            cache_dir: None,
            adult_url: None,
            sweeps: Vec::new(),
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key} = {value}: {why}"))
}

fn scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

/// `a, b, c` or `logspace(lo, hi, n)`.
pub fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    let v = value.trim();
    let grid = if let Some(args) = v.strip_prefix("logspace(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        let [lo, hi, n] = parts[..] else {
            return Err(bad(key, value, "logspace takes (lo, hi, n)"));
        };
        logspace(scalar(key, lo)?, scalar(key, hi)?, scalar(key, n)?)
    } else {
        v.split(',').map(|p| scalar(key, p.trim())).collect::<Result<_, _>>()?
    };
    if grid.is_empty() {
        return Err(bad(key, value, "empty grid"));
    }
    Ok(grid)
}

fn parse_mode(key: &str, value: &str) -> Result<Mode, CliError> {
    match value {
        "con" | "continuous" => Ok(Mode::Continuous),
        "dis" | "discrete" => Ok(Mode::Discrete),
        _ => Err(bad(key, value, "expected con or dis")),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!("line {}: {key} set twice", i + 1)));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let path = || Some(PathBuf::from(value));
        match key {
            "dataset" => {
                self.dataset = match value {
                    "adult" => DatasetKind::Adult,
                    "compas" => DatasetKind::Compas,
                    "synthetic" => DatasetKind::Synthetic,
                    _ => return Err(bad(key, value, "expected adult, compas or synthetic")),
                }
            }
            "compas_csv" => self.compas_csv = path(),
            "synthetic_rows" => self.synthetic_rows = scalar(key, value)?,
            "mode" => self.modes = value.split(',').map(|m| parse_mode(key, m.trim())).collect::<Result<_, _>>()?,
            "beta" => self.beta = parse_grid(key, value)?,
            "epsilon" => self.epsilon = parse_grid(key, value)?,
            "t" => self.t = scalar(key, value)?,
            "d" => self.d = scalar(key, value)?,
            "K" => self.codebook_size = scalar(key, value)?,
            "D" => self.code_dim = scalar(key, value)?,
            "hidden" => self.hidden = scalar(key, value)?,
            "epochs" => self.epochs = scalar(key, value)?,
            "batch" => self.batch = scalar(key, value)?,
            "lr" => self.lr = scalar(key, value)?,
            "L" => self.mc_samples = scalar(key, value)?,
            "lambda" => self.vq_lambda = scalar(key, value)?,
            "seeds" => self.seeds = value.split(',').map(|s| scalar(key, s.trim())).collect::<Result<_, _>>()?,
            "source" => self.source = path(),
            "card_x" => self.card_x = scalar(key, value)?,
            "rr_k" => self.rr_k = Some(scalar(key, value)?),
            "rr_d" => self.rr_d = scalar(key, value)?,
            "restarts" => self.restarts = scalar(key, value)?,
            "iterations" => self.iterations = scalar(key, value)?,
            "gamma" => self.gamma = scalar(key, value)?,
            "oracle_budget" => self.oracle_budget = scalar(key, value)?,
            "verify_encoders" => self.verify_encoders = scalar(key, value)?,
            "channel" => self.channel = path(),
            "attacker_epochs" => self.attacker_epochs = scalar(key, value)?,
            "mine_iterations" => self.mine_iterations = scalar(key, value)?,
            "mine_batch" => self.mine_batch = scalar(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "checkpoint" => self.checkpoint = path(),
            "cache_dir" => self.cache_dir = path(),
            "adult_url" => self.adult_url = Some(value.to_string()),
            "sweeps" => self.sweeps = value.split(',').map(|p| PathBuf::from(p.trim())).collect(),
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Training settings for one grid cell.
    pub fn train_config(&self, beta: f64, epsilon: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            beta,
            epsilon,
            t: self.t,
            mc_samples: self.mc_samples,
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            vq_lambda: self.vq_lambda,
            seed,
        }
    }

    pub fn model_spec(&self, mode: Mode, layout: fairldp::datasets::FeatureLayout) -> ModelSpec {
        let mut spec = ModelSpec::new(mode, layout);
        spec.d = self.d;
        spec.codebook_size = self.codebook_size;
        spec.code_dim = self.code_dim;
        spec.hidden = self.hidden;
        spec
    }

    /// Checks every grid cell against the library preconditions.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |e: fairldp::Error| CliError::Config(e.to_string());
        if self.seeds.is_empty() || self.modes.is_empty() {
            return Err(CliError::Config("seeds and mode need at least one entry".into()));
        }
        if self.beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(CliError::Config("beta values must be finite and >= 0".into()));
        }
        if self.epsilon.iter().any(|e| e.is_nan() || *e < 0.0) {
            return Err(CliError::Config("epsilon values must be >= 0".into()));
        }
        if self.dataset == DatasetKind::Compas && self.compas_csv.is_none() {
            return Err(CliError::Config("dataset = compas needs compas_csv".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(CliError::Config(format!("gamma {} must be finite and >= 0", self.gamma)));
        }
        if self.card_x < 2 || self.rr_d == 0 || self.rr_k.is_some_and(|k| k < 2) {
            return Err(CliError::Config("card_x and rr_k must be >= 2, rr_d >= 1".into()));
        }
        if self.attacker_epochs == 0 || self.mine_batch < 2 || self.mine_iterations == 0 || self.synthetic_rows < 10 {
            return Err(CliError::Config("evaluation budgets must be positive".into()));
        }
        self.solver_config(self.beta[0]).validate().map_err(cfg_err)?;
        self.eval_config().mine.validate().map_err(cfg_err)?;
        let layout = fairldp::datasets::FeatureLayout::all_numeric(1);
        for &mode in &self.modes {
            self.model_spec(mode, layout.clone()).validate().map_err(cfg_err)?;
            for &beta in &self.beta {
                for &eps in &self.epsilon {
                    let tc = self.train_config(beta, eps, self.seeds[0]);
                    tc.validate().map_err(cfg_err)?;
                    if mode == Mode::Continuous && eps == 0.0 {
                        return Err(CliError::Config("continuous mode needs epsilon > 0 (Laplace scale)".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solver_config(&self, beta: f64) -> fairldp::solver::SolverConfig {
        fairldp::solver::SolverConfig {
            beta,
            restarts: self.restarts,
            iterations: self.iterations,
            seed: self.seeds[0],
            ..Default::default()
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            attacker: DownstreamConfig { epochs: self.attacker_epochs, ..Default::default() },
            mine: MineConfig { iterations: self.mine_iterations, batch_size: self.mine_batch, ..Default::default() },
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}
