//! COMPAS recidivism, loaded from a user-supplied CSV (never downloaded).
//!
//! The file needs a header row with the ten attribute columns below plus
//! `race` (the sensitive attribute, `African-American` or `1` maps to 1) and
//! `two_year_recid` (the utility label, 0/1). Columns whose values all parse
//! as numbers are z-scored, the rest are one-hot encoded. Rows are split in
//! file order.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;

use super::{mean_std, Column, ColumnKind, Schema, Split, TabularDataset};
use crate::error::{Error, Result};

pub const COMPAS_ATTRIBUTES: [&str; 10] = [
    "sex",
    "age",
    "age_cat",
    "juv_fel_count",
    "juv_misd_count",
    "juv_other_count",
    "priors_count",
    "c_charge_degree",
    "days_b_screening_arrest",
    "decile_score",
];
pub const COMPAS_TRAIN_ROWS: usize = 4320;
pub const COMPAS_TEST_ROWS: usize = 1852;
pub const COMPAS_P_U1: f64 = 0.5378;
const P_U1_TOL: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct CompasData {
    pub train: TabularDataset,
    pub test: TabularDataset,
    /// Failed statistic checks; loading continues regardless.
    pub warnings: Vec<String>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("compas CSV is missing column {name:?}")))
}

pub fn load_compas(csv_path: &Path) -> Result<CompasData> {
    let mut reader = csv::Reader::from_path(csv_path).map_err(|e| Error::Format(format!("compas CSV: {e}")))?;
    let headers = reader.headers().map_err(|e| Error::Format(format!("compas CSV: {e}")))?.clone();
    let attr_idx: Vec<usize> = COMPAS_ATTRIBUTES.iter().map(|n| column_index(&headers, n)).collect::<Result<_>>()?;
    let race = column_index(&headers, "race")?;
    let recid = column_index(&headers, "two_year_recid")?;

    let mut raw: Vec<Vec<String>> = Vec::new();
    let mut u = Vec::new();
    let mut s = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("compas CSV row {}: {e}", i + 2)))?;
        let field = |j: usize| rec.get(j).unwrap_or("").trim().to_string();
        raw.push(attr_idx.iter().map(|&j| field(j)).collect());
        s.push(usize::from(matches!(field(race).as_str(), "African-American" | "1")));
        u.push(match field(recid).as_str() {
            "1" => 1,
            "0" => 0,
            other => return Err(Error::Schema(format!("two_year_recid = {other:?} on row {}", i + 2))),
        });
    }
    let n = raw.len();
    if n < 2 {
        return Err(Error::Schema("compas CSV has fewer than two rows".into()));
    }
    let n_train = if n == COMPAS_TRAIN_ROWS + COMPAS_TEST_ROWS {
        COMPAS_TRAIN_ROWS
    } else {
        ((n as f64) * COMPAS_TRAIN_ROWS as f64 / (COMPAS_TRAIN_ROWS + COMPAS_TEST_ROWS) as f64).round() as usize
    };

    let mut warnings = Vec::new();
    if n_train != COMPAS_TRAIN_ROWS || n - n_train != COMPAS_TEST_ROWS {
        warnings.push(format!(
            "split {n_train}/{} differs from the expected {COMPAS_TRAIN_ROWS}/{COMPAS_TEST_ROWS}",
            n - n_train
        ));
    }
    let p_u1 = u.iter().sum::<usize>() as f64 / n as f64;
    if (p_u1 - COMPAS_P_U1).abs() > P_U1_TOL {
        warnings.push(format!("P(U=1) = {p_u1:.4}, expected {COMPAS_P_U1} ± {P_U1_TOL}"));
    }

    // numeric columns first, then categorical, each in attribute order
    let numeric: Vec<usize> =
        (0..COMPAS_ATTRIBUTES.len()).filter(|&j| raw.iter().all(|r| r[j].parse::<f64>().is_ok())).collect();
    let categorical: Vec<usize> = (0..COMPAS_ATTRIBUTES.len()).filter(|j| !numeric.contains(j)).collect();
    let mut columns = Vec::new();
    for &j in &numeric {
        let values: Vec<f64> = raw[..n_train].iter().map(|r| r[j].parse().expect("checked numeric")).collect();
        let (mean, std) = mean_std(&values);
        columns.push(Column { name: COMPAS_ATTRIBUTES[j].into(), kind: ColumnKind::Numeric { mean, std } });
    }
    for &j in &categorical {
        // categories from the whole file so that no test row is unrepresentable
        let cats: BTreeSet<&str> = raw.iter().map(|r| r[j].as_str()).collect();
        columns.push(Column {
            name: COMPAS_ATTRIBUTES[j].into(),
            kind: ColumnKind::Categorical { categories: cats.into_iter().map(String::from).collect() },
        });
    }
    let schema = Schema { columns, u_name: "two_year_recid".into(), s_name: "race".into(), stats_from: Split::Train };
    let width = schema.layout().width();
    let mut features = Array2::zeros((n, width));
    for (r, row) in raw.iter().enumerate() {
        let mut col = 0;
        for (c, column) in schema.columns.iter().enumerate() {
            let j = if c < numeric.len() { numeric[c] } else { categorical[c - numeric.len()] };
            match &column.kind {
                ColumnKind::Numeric { mean, std } => {
                    features[(r, col)] = (row[j].parse::<f64>().expect("checked numeric") - mean) / std;
                    col += 1;
                }
                ColumnKind::Categorical { categories } => {
                    let k = categories.iter().position(|c| c == &row[j]).expect("category collected");
                    features[(r, col + k)] = 1.0;
                    col += categories.len();
                }
            }
        }
    }
    let all = TabularDataset::new("compas", Split::Train, features, u, s, schema)?;
    let mut train = all.select(&(0..n_train).collect::<Vec<_>>());
    let mut test = all.select(&(n_train..n).collect::<Vec<_>>());
    train.split = Split::Train;
    test.split = Split::Test;
    Ok(CompasData { train, test, warnings })
}
