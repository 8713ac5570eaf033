//! Data, training, evaluation, sweep and report commands.

use std::path::PathBuf;

use fairldp::autodiff::Checkpoint;
use fairldp::datasets::{
    fetch_uci_adult, generate_synthetic, load_compas, preprocess_adult, SyntheticSpec, TabularDataset,
};
use fairldp::discrete::random_source;
use fairldp::encoder::{history_csv, train as train_model, EncoderModel, Mode, TrainConfig};
use fairldp::fairness::{evaluate_once, full_report, EvalReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use crate::config::{DatasetKind, RunConfig};
use crate::output::{announce, header_line, num, write_csv, write_json};
use crate::CliError;

pub const SWEEP_COLUMNS: [&str; 9] =
    ["beta", "epsilon", "mode", "accuracy", "delta_dp", "delta_eo", "leakage_nats", "sensitive_acc", "seed"];

const TRADEOFF_COLUMNS: [&str; 9] =
    ["mode", "epsilon", "beta", "runs", "accuracy", "delta_dp", "delta_eo", "leakage_nats", "sensitive_acc"];

fn cache_dir(cfg: &RunConfig) -> PathBuf {
    cfg.cache_dir.clone().unwrap_or_else(|| PathBuf::from("data/cache"))
}

pub fn fetch_data(cfg: &RunConfig) -> Result<(), CliError> {
    let files = fetch_uci_adult(&cache_dir(cfg), cfg.adult_url.as_deref())?;
    println!("adult train: {}\nadult test: {}", files.train.display(), files.test.display());
    Ok(())
}

/// Train and test splits for the configured dataset.
pub fn load_data(cfg: &RunConfig) -> Result<(TabularDataset, TabularDataset), CliError> {
    match cfg.dataset {
        DatasetKind::Adult => {
            let files = fetch_uci_adult(&cache_dir(cfg), cfg.adult_url.as_deref())?;
            let train = std::fs::read_to_string(&files.train)?;
            let test = std::fs::read_to_string(&files.test)?;
            Ok(preprocess_adult(&train, &test)?)
        }
        DatasetKind::Compas => {
            let path = cfg.compas_csv.as_ref().expect("validated");
            let data = load_compas(path)?;
            for w in &data.warnings {
                eprintln!("warning: {w}");
            }
            Ok((data.train, data.test))
        }
        DatasetKind::Synthetic => {
            let seed = cfg.seeds[0];
            let src = random_source(2, 2, cfg.card_x, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
            let n = cfg.synthetic_rows;
            let train = generate_synthetic(&SyntheticSpec::one_hot_means(src.clone(), 2.0, 0.5, n, seed))?;
            let test = generate_synthetic(&SyntheticSpec::one_hot_means(src, 2.0, 0.5, n.div_ceil(4), seed + 1))?;
            Ok((train.dataset, test.dataset))
        }
    }
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint.clone().unwrap_or_else(|| cfg.out.join("model.ckpt"))
}

fn fit(
    cfg: &RunConfig,
    data: &TabularDataset,
    mode: Mode,
    tc: &TrainConfig,
) -> Result<(EncoderModel, String), CliError> {
    let mut model = EncoderModel::new(cfg.model_spec(mode, data.layout()), tc.seed)?;
    let history = train_model(&mut model, data, tc)?;
    Ok((model, history_csv(&history)))
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let (train_set, _) = load_data(cfg)?;
    let tc = cfg.train_config(cfg.beta[0], cfg.epsilon[0], cfg.seeds[0]);
    let (model, history) = fit(cfg, &train_set, cfg.modes[0], &tc)?;
    let path = cfg.out.join("history.csv");
    std::fs::write(&path, header_line(cfg) + &history)?;
    announce(&path);
    let meta = json!({ "train": tc, "config_hash": cfg.hash(), "seeds": cfg.seeds, "dataset": cfg.dataset });
    let ck = checkpoint_path(cfg);
    model.to_checkpoint(meta)?.save(&ck)?;
    announce(&ck);
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let ck_path = checkpoint_path(cfg);
    if !ck_path.exists() {
        return Err(CliError::Runtime(format!("no checkpoint at {}; run `fairldp train` first", ck_path.display())));
    }
    let ck = Checkpoint::load(&ck_path)?;
    let model = EncoderModel::from_checkpoint(&ck)?;
    let tc: TrainConfig = serde_json::from_value(ck.meta["extra"]["train"].clone())
        .map_err(|e| CliError::Runtime(format!("checkpoint lacks its training settings: {e}")))?;
    let (train_set, test_set) = load_data(cfg)?;
    let report = full_report(&model, &train_set, &test_set, &tc, &cfg.eval_config(), &cfg.seeds)?;
    for (field, ms) in &report.mean_std {
        println!("{field}: {:.4} ± {:.4} (median {:.4})", ms.mean, ms.std, ms.median);
    }
    let body = json!({
        "checkpoint": ck_path,
        "mode": model.spec.mode,
        "beta": tc.beta,
        "epsilon": tc.epsilon,
        "report": report,
    });
    announce(&write_json(cfg, "report.json", body)?);
    Ok(())
}

struct Cell {
    mode: Mode,
    beta: f64,
    epsilon: f64,
    seed: u64,
}

fn run_cell(
    cfg: &RunConfig,
    train_set: &TabularDataset,
    test_set: &TabularDataset,
    cell: &Cell,
) -> Result<EvalReport, CliError> {
    let tc = cfg.train_config(cell.beta, cell.epsilon, cell.seed);
    let (model, _) = fit(cfg, train_set, cell.mode, &tc)?;
    Ok(evaluate_once(&model, train_set, test_set, &tc, &cfg.eval_config(), cell.seed)?)
}

pub fn sweep(cfg: &RunConfig, jobs: usize) -> Result<(), CliError> {
    let (train_set, test_set) = load_data(cfg)?;
    let mut cells = Vec::new();
    for &mode in &cfg.modes {
        for &beta in &cfg.beta {
            for &epsilon in &cfg.epsilon {
                for &seed in &cfg.seeds {
                    cells.push(Cell { mode, beta, epsilon, seed });
                }
            }
        }
    }
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Runtime(e.to_string()))?;
    // collect keeps grid order whatever the scheduling
    let results: Vec<_> = pool.install(|| cells.par_iter().map(|c| run_cell(cfg, &train_set, &test_set, c)).collect());

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (cell, result) in cells.iter().zip(results) {
        let key = [num(cell.beta), num(cell.epsilon), cell.mode.as_str().to_string()];
        match result {
            Ok(r) => {
                let mut row = key.to_vec();
                row.extend([r.accuracy, r.delta_dp, r.delta_eo, r.leakage_isz_nats, r.sensitive_accuracy].map(num));
                row.push(cell.seed.to_string());
                rows.push(row);
            }
            Err(e) => {
                eprintln!("cell β={} ε={} {} seed {} failed: {e}", key[0], key[1], key[2], cell.seed);
                let mut row = key.to_vec();
                row.push(cell.seed.to_string());
                row.push(format!("\"{}\"", e.to_string().replace('"', "'")));
                failures.push(row);
            }
        }
    }
    announce(&write_csv(cfg, "sweep.csv", &SWEEP_COLUMNS, &rows)?);
    if !failures.is_empty() {
        announce(&write_csv(cfg, "sweep_errors.csv", &["beta", "epsilon", "mode", "seed", "error"], &failures)?);
    }
    if rows.is_empty() {
        return Err(CliError::Runtime("every sweep cell failed".into()));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SweepRow {
    beta: f64,
    epsilon: f64,
    mode: String,
    accuracy: f64,
    delta_dp: f64,
    delta_eo: f64,
    leakage_nats: f64,
    sensitive_acc: f64,
}

fn read_sweep(path: &PathBuf) -> Result<(Option<String>, Vec<SweepRow>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let hash = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .and_then(|l| l.split_whitespace().next())
        .map(str::to_string);
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<SweepRow>, _>>()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok((hash, rows))
}

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let inputs = if cfg.sweeps.is_empty() { vec![cfg.out.join("sweep.csv")] } else { cfg.sweeps.clone() };
    let mut rows = Vec::new();
    let mut sources = Vec::new();
    for path in &inputs {
        let (hash, mut r) = read_sweep(path)?;
        sources.push(hash.unwrap_or_else(|| "unknown".into()));
        rows.append(&mut r);
    }
    if rows.is_empty() {
        return Err(CliError::Runtime("no sweep rows to report".into()));
    }
    rows.sort_by(|a, b| a.mode.cmp(&b.mode).then(a.epsilon.total_cmp(&b.epsilon)).then(a.beta.total_cmp(&b.beta)));
    let mut table = Vec::new();
    for group in rows.chunk_by(|a, b| a.mode == b.mode && a.epsilon == b.epsilon && a.beta == b.beta) {
        let n = group.len() as f64;
        let mean = |f: fn(&SweepRow) -> f64| num(group.iter().map(f).sum::<f64>() / n);
        let g = &group[0];
        table.push(vec![
            g.mode.clone(),
            num(g.epsilon),
            num(g.beta),
            group.len().to_string(),
            mean(|r| r.accuracy),
            mean(|r| r.delta_dp),
            mean(|r| r.delta_eo),
            mean(|r| r.leakage_nats),
            mean(|r| r.sensitive_acc),
        ]);
    }
    println!("{}", TRADEOFF_COLUMNS.join("\t"));
    for row in &table {
        println!("{}", row.join("\t"));
    }
    let path = write_csv(cfg, "tradeoff.csv", &TRADEOFF_COLUMNS, &table)?;
    // provenance of the merged inputs
    let text = std::fs::read_to_string(&path)?;
    let (first, rest) = text.split_once('\n').expect("header line");
    std::fs::write(&path, format!("{first}\n# sources={}\n{rest}", sources.join(",")))?;
    announce(&path);
    Ok(())
}
