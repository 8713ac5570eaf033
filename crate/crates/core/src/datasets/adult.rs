//! UCI Adult census income.
//!
//! `S` is sex (`Male` = 1) and `U` is income above 50K. The remaining 13 raw
//! attributes are kept: 6 numeric columns z-scored with training statistics
//! and 7 categorical columns one-hot encoded over the training categories.
//! A missing value (`?`) becomes its own `unknown` category, so every raw
//! record survives preprocessing.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use ndarray::Array2;

use super::{mean_std, Column, ColumnKind, Schema, Split, TabularDataset};
use crate::error::{Error, Result};

pub const DEFAULT_ADULT_URL: &str = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/";
pub const ADULT_TRAIN_RECORDS: usize = 32561;
pub const ADULT_TEST_RECORDS: usize = 16281;

const NUMERIC: [(usize, &str); 6] = [
    (0, "age"),
    (2, "fnlwgt"),
    (4, "education-num"),
    (10, "capital-gain"),
    (11, "capital-loss"),
    (12, "hours-per-week"),
];
const CATEGORICAL: [(usize, &str); 7] = [
    (1, "workclass"),
    (3, "education"),
    (5, "marital-status"),
    (6, "occupation"),
    (7, "relationship"),
    (8, "race"),
    (13, "native-country"),
];
const SEX: usize = 9;
const INCOME: usize = 14;
const FIELDS: usize = 15;
const UNKNOWN: &str = "unknown";

/// Locations of the cached raw files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdultFiles {
    pub train: PathBuf,
    pub test: PathBuf,
}

pub fn adult_paths(cache_dir: &Path) -> AdultFiles {
    let dir = cache_dir.join("adult");
    AdultFiles { train: dir.join("train.raw"), test: dir.join("test.raw") }
}

fn is_record(line: &str) -> bool {
    let t = line.trim();
    !t.is_empty() && !t.starts_with('|')
}

fn count_records(text: &str) -> usize {
    text.lines().filter(|l| is_record(l)).count()
}

fn check_count(text: &str, expected: usize, what: &str) -> Result<()> {
    let n = count_records(text);
    if n != expected {
        return Err(Error::Format(format!("adult {what}: expected {expected} records, got {n}")));
    }
    Ok(())
}

fn download(url: &str, offline_path: &Path) -> Result<String> {
    let agent: ureq::Agent =
        ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(120))).build().into();
    let network = |message: String| Error::Network {
        url: url.to_string(),
        message: format!("{message}; to work offline, place the file at {}", offline_path.display()),
    };
    let mut resp = agent.get(url).call().map_err(|e| network(e.to_string()))?;
    resp.body_mut().with_config().limit(64 * 1024 * 1024).read_to_string().map_err(|e| network(e.to_string()))
}

/// Ensures both raw files are cached, downloading whatever is missing.
///
/// Files already in the cache are only counted, never re-fetched.
pub fn fetch_uci_adult(cache_dir: &Path, url_override: Option<&str>) -> Result<AdultFiles> {
    let files = adult_paths(cache_dir);
    let base = url_override.unwrap_or(DEFAULT_ADULT_URL);
    let base = if base.ends_with('/') { base.to_string() } else { format!("{base}/") };
    for (path, remote, expected, what) in [
        (&files.train, "adult.data", ADULT_TRAIN_RECORDS, "train"),
        (&files.test, "adult.test", ADULT_TEST_RECORDS, "test"),
    ] {
        if path.exists() {
            check_count(&std::fs::read_to_string(path)?, expected, what)?;
            continue;
        }
        let text = download(&format!("{base}{remote}"), path)?;
        check_count(&text, expected, what)?;
        std::fs::create_dir_all(path.parent().expect("cache subdirectory"))?;
        let tmp = path.with_extension("part");
        std::fs::write(&tmp, &text)?;
        std::fs::rename(&tmp, path)?;
    }
    Ok(files)
}

/// One parsed raw line.
#[derive(Debug, Clone, PartialEq)]
pub struct AdultRecord {
    pub numeric: [f64; 6],
    pub categorical: [String; 7],
    pub male: bool,
    pub high_income: bool,
}

pub fn parse_adult(text: &str) -> Result<Vec<AdultRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().filter(|(_, l)| is_record(l)) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let drift = |what: String| Error::Schema(format!("adult line {}: {what}", lineno + 1));
        if fields.len() != FIELDS {
            return Err(drift(format!("{} fields, expected {FIELDS}", fields.len())));
        }
        let mut numeric = [0.0; 6];
        for (slot, &(i, name)) in numeric.iter_mut().zip(NUMERIC.iter()) {
            *slot = fields[i].parse().map_err(|_| drift(format!("{name} = {:?} is not numeric", fields[i])))?;
        }
        let categorical =
            CATEGORICAL.map(|(i, _)| if fields[i] == "?" { UNKNOWN.to_string() } else { fields[i].to_string() });
        let male = match fields[SEX] {
            "Male" => true,
            "Female" => false,
            other => return Err(drift(format!("unexpected sex {other:?}"))),
        };
        let high_income = match fields[INCOME].trim_end_matches('.') {
            ">50K" => true,
            "<=50K" => false,
            other => return Err(drift(format!("unexpected income label {other:?}"))),
        };
        out.push(AdultRecord { numeric, categorical, male, high_income });
    }
    Ok(out)
}

fn encode(records: &[AdultRecord], schema: &Schema, name: &str, split: Split) -> Result<TabularDataset> {
    let layout = schema.layout();
    let mut features = Array2::zeros((records.len(), layout.width()));
    for (r, rec) in records.iter().enumerate() {
        let mut col = 0;
        for (j, column) in schema.columns.iter().enumerate() {
            match &column.kind {
                ColumnKind::Numeric { mean, std } => {
                    features[(r, col)] = (rec.numeric[j] - mean) / std;
                    col += 1;
                }
                ColumnKind::Categorical { categories } => {
                    let value = &rec.categorical[j - NUMERIC.len()];
                    let k = categories.iter().position(|c| c == value).ok_or_else(|| {
                        Error::Schema(format!("{}: category {value:?} absent from training data", column.name))
                    })?;
                    features[(r, col + k)] = 1.0;
                    col += categories.len();
                }
            }
        }
    }
    TabularDataset::new(
        name,
        split,
        features,
        records.iter().map(|r| usize::from(r.high_income)).collect(),
        records.iter().map(|r| usize::from(r.male)).collect(),
        schema.clone(),
    )
}

/// Builds the train and test datasets from the two raw files' contents.
pub fn preprocess_adult(train_raw: &str, test_raw: &str) -> Result<(TabularDataset, TabularDataset)> {
    let train = parse_adult(train_raw)?;
    let test = parse_adult(test_raw)?;
    if train.is_empty() {
        return Err(Error::Schema("adult train file has no records".into()));
    }
    let mut columns = Vec::new();
    for (j, &(_, name)) in NUMERIC.iter().enumerate() {
        let values: Vec<f64> = train.iter().map(|r| r.numeric[j]).collect();
        let (mean, std) = mean_std(&values);
        columns.push(Column { name: name.into(), kind: ColumnKind::Numeric { mean, std } });
    }
    for (j, &(_, name)) in CATEGORICAL.iter().enumerate() {
        let categories: BTreeSet<&str> = train.iter().map(|r| r.categorical[j].as_str()).collect();
        columns.push(Column {
            name: name.into(),
            kind: ColumnKind::Categorical { categories: categories.into_iter().map(String::from).collect() },
        });
    }
    let schema = Schema { columns, u_name: "income>50K".into(), s_name: "sex=Male".into(), stats_from: Split::Train };
    Ok((encode(&train, &schema, "adult", Split::Train)?, encode(&test, &schema, "adult", Split::Test)?))
}
